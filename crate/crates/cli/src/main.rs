use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use sgc_core::experiment::{
    run_experiment, AdvDiffConfig, AdvDiffReference, BurgersConfig, BurgersReference, ExperimentConfig,
    ExperimentReport, McSettings, SdeWeakConfig, SgInfoConfig,
};
use sgc_core::hermite::gauss_hermite_rule;
use sgc_core::sde::SchemeKind;
use sgc_core::sparse_grid::{build_sparse_grid, sparse_node_count, term_census, CubatureRule};
use sgc_core::spectral::MomentMode;

/// Sparse-grid collocation for weak approximation of SDEs and SPDEs.
///
/// Every experiment subcommand accepts either flags or `--config file.json`
/// (keys mirror the flags). With `--out DIR` the report is written as
/// `report.csv`, auxiliary CSVs and `metadata.json`; the table is always
/// printed to stdout. The exit code is nonzero if any row fails.
#[derive(Parser, Debug)]
#[command(name = "sgcweak", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Gauss–Hermite nodes and weights (probabilists', weight sum 1).
    ///
    /// CSV columns: node,weight (17 significant digits).
    Quad {
        #[arg(long)]
        n: usize,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Node counts and Smolyak coefficient census of A(L,d).
    ///
    /// CSV columns of the report: L,d,closed_form,built,cpu_seconds.
    SgInfo {
        #[arg(long)]
        level: Option<usize>,
        #[arg(long)]
        dim: Option<usize>,
        #[command(flatten)]
        io: Io,
    },
    /// Nodes and weights of A(L,d).
    ///
    /// CSV columns: x1..xd,weight.
    SgDump {
        #[arg(long)]
        level: usize,
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Weak expectation of a payoff of an SDE scheme endpoint.
    ///
    /// CSV columns: method,h,L,value,rho1,rho2,order,ci,cpu_seconds.
    /// `L` holds the tensor order for method=tensor and 0 for mc.
    SdeWeak(SdeWeakArgs),
    /// Moments of the stochastic Burgers equation.
    ///
    /// Report columns: mode,h,param,norm_mean,norm_second,rho1_l2,rho2_l2,
    /// rho1_max,rho2_max,order,cpu_seconds. fields.csv holds
    /// mode,h,param,x,Eu,Eu2.
    Burgers(BurgersArgs),
    /// Recursive second moments of the advection–diffusion SPDE.
    ///
    /// Report columns: n,h,norm_second,rho2,rho2_rel,order,cpu_seconds.
    /// trace.csv holds n,h,k,t,norm_second; fields.csv holds n,h,x,Eu,Eu2.
    Advdiff(AdvDiffArgs),
    /// Run any experiment from a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct Io {
    /// JSON config; overrides all other flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SdeWeakArgs {
    /// `linear(lambda,eps)` or `mcir(x0,theta1,theta2)`.
    #[arg(long)]
    model: Option<String>,
    #[arg(long, default_value = "euler")]
    scheme: SchemeKind,
    /// mean | second | x4 | cos
    #[arg(long = "f", default_value = "mean")]
    payoff: String,
    #[arg(long = "T", default_value_t = 1.0)]
    t: f64,
    #[arg(long, value_delimiter = ',')]
    h_list: Vec<f64>,
    #[arg(long = "L-list", value_delimiter = ',')]
    l_list: Vec<usize>,
    #[arg(long)]
    tensor_n: Option<usize>,
    /// Monte Carlo sample count.
    #[arg(long)]
    mc: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    io: Io,
}

#[derive(Args, Debug)]
struct BurgersArgs {
    #[arg(long, default_value_t = 1.0)]
    nu: f64,
    #[arg(long, default_value_t = 0.5)]
    sigma: f64,
    #[arg(long = "T", default_value_t = 0.5)]
    t: f64,
    /// One or more steps, comma separated.
    #[arg(long, value_delimiter = ',')]
    h: Vec<f64>,
    #[arg(long = "M", default_value_t = 100)]
    m: usize,
    /// `sgc:L` or `mc:N:seed`; repeatable.
    #[arg(long)]
    mode: Vec<MomentMode>,
    /// CSV with columns x,Eu,Eu2 on the same grid.
    #[arg(long)]
    reference: Option<String>,
    #[command(flatten)]
    io: Io,
}

#[derive(Args, Debug)]
struct AdvDiffArgs {
    #[arg(long, default_value_t = 0.2)]
    eps: f64,
    #[arg(long, default_value_t = 0.5)]
    sigma: f64,
    #[arg(long, default_value_t = 0.1)]
    beta: f64,
    #[arg(long = "T", default_value_t = 1.0)]
    t: f64,
    #[arg(long, value_delimiter = ',')]
    h: Vec<f64>,
    #[arg(long, default_value_t = 20)]
    lstar: usize,
    #[arg(long, value_delimiter = ',', default_value = "2")]
    quad_n: Vec<usize>,
    #[arg(long = "M", default_value_t = 64)]
    m: usize,
    /// CSV with columns x,Eu,Eu2; without it, beta = 0 uses the closed form.
    #[arg(long)]
    reference: Option<String>,
    #[command(flatten)]
    io: Io,
}

fn load(io: &Io) -> Result<Option<ExperimentConfig>> {
    io.config
        .as_deref()
        .map(|p| ExperimentConfig::load(p).with_context(|| format!("reading config {}", p.display())))
        .transpose()
}

fn emit(report: &ExperimentReport, out: Option<&Path>) -> Result<()> {
    print!("{}", report.table.to_pretty());
    if let Some(dir) = out {
        report
            .write_dir(dir)
            .with_context(|| format!("writing report to {}", dir.display()))?;
    }
    Ok(())
}

fn run_and_emit(config: ExperimentConfig, out: Option<&Path>) -> Result<()> {
    let report = run_experiment(&config).with_context(|| format!("{} experiment failed", config.kind()))?;
    emit(&report, out)
}

fn write_text(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Quad { n, out } => {
            let rule = gauss_hermite_rule(n)?;
            let mut csv = String::from("node,weight\n");
            for (x, w) in rule.iter() {
                csv.push_str(&format!("{x:.16e},{w:.16e}\n"));
            }
            write_text(&csv, out.as_deref())
        }
        Command::SgInfo { level, dim, io } => {
            let config = match load(&io)? {
                Some(c) => c,
                None => {
                    let (Some(level), Some(dim)) = (level, dim) else {
                        bail!("sg-info needs --level and --dim, or --config");
                    };
                    println!("A({level},{dim}) coefficient census (|i|, coefficient, terms):");
                    for (total, coef, count) in term_census(level, dim) {
                        println!("  {total:>4}  {coef:>6}  {count}");
                    }
                    if let Ok(n) = sparse_node_count(level, dim) {
                        println!("closed-form node count: {n}");
                    }
                    ExperimentConfig::SgInfo(SgInfoConfig {
                        levels: vec![level],
                        dims: vec![dim],
                        build: true,
                    })
                }
            };
            run_and_emit(config, io.out.as_deref())
        }
        Command::SgDump { level, dim, out } => {
            let rule = build_sparse_grid(level, dim)?;
            let mut csv: String = (1..=dim).map(|j| format!("x{j},")).collect();
            csv.push_str("weight\n");
            let mut node = vec![0.0; dim];
            for p in 0..rule.len() {
                rule.fill_node(p, &mut node);
                for x in &node {
                    csv.push_str(&format!("{x:.16e},"));
                }
                csv.push_str(&format!("{:.16e}\n", rule.weight(p)));
            }
            write_text(&csv, out.as_deref())
        }
        Command::SdeWeak(a) => {
            let config = match load(&a.io)? {
                Some(c) => c,
                None => ExperimentConfig::SdeWeak(SdeWeakConfig {
                    model: a.model.context("sde-weak needs --model or --config")?,
                    scheme: a.scheme,
                    payoff: a.payoff,
                    t: a.t,
                    h_list: a.h_list,
                    l_list: a.l_list,
                    tensor_n: a.tensor_n,
                    mc: a.mc.map(|samples| McSettings { samples, seed: a.seed }),
                }),
            };
            run_and_emit(config, a.io.out.as_deref())
        }
        Command::Burgers(a) => {
            let config = match load(&a.io)? {
                Some(c) => c,
                None => ExperimentConfig::Burgers(BurgersConfig {
                    nu: a.nu,
                    sigma: a.sigma,
                    t: a.t,
                    h_list: a.h,
                    m: a.m,
                    modes: if a.mode.is_empty() {
                        vec![MomentMode::Sgc { level: 2 }]
                    } else {
                        a.mode
                    },
                    reference: a.reference.map(|path| BurgersReference::File { path }),
                }),
            };
            run_and_emit(config, a.io.out.as_deref())
        }
        Command::Advdiff(a) => {
            let config = match load(&a.io)? {
                Some(c) => c,
                None => {
                    let reference = match a.reference {
                        Some(path) => Some(AdvDiffReference::File { path }),
                        None if a.beta == 0.0 => Some(AdvDiffReference::ClosedForm),
                        None => None,
                    };
                    ExperimentConfig::Advdiff(AdvDiffConfig {
                        eps: a.eps,
                        sigma: a.sigma,
                        beta: a.beta,
                        t: a.t,
                        h_list: a.h,
                        lstar: a.lstar,
                        quad_n: a.quad_n,
                        m: a.m,
                        reference,
                    })
                }
            };
            run_and_emit(config, a.io.out.as_deref())
        }
        Command::Run { config, out } => {
            let config =
                ExperimentConfig::load(&config).with_context(|| format!("reading config {}", config.display()))?;
            run_and_emit(config, out.as_deref())
        }
    }
}
