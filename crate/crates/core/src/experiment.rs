//! Config-driven experiment runner and CSV reports.
//!
//! A config is a JSON document tagged by `"experiment"`; each kind sweeps a
//! list of steps (and levels or quadrature orders), produces one report row
//! per combination, and computes observed orders between consecutive rows
//! that differ only in `h`.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::recursive::{
    advdiff_second_moment_oracle, build_cons_basis, mean_field, run_recursive_moments, second_moment_field,
    LinearSpde,
};
use crate::sde::{ModelSpec, SchemeEndpointMap, SchemeKind};
use crate::sparse_grid::{build_sparse_grid, sparse_node_count, tensor_rule};
use crate::spectral::{
    burgers_moments, field_error_norms, l2_norm, step_count, AdvDiffParams, BurgersParams, FieldMoments, MomentMode,
};
use crate::weak::{
    moment_relative_errors, weak_expectation_mc, weak_expectation_sgc, weak_expectation_tensor, Payoff, WeakTarget,
};

/// Monte Carlo settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McSettings {
    pub samples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdeWeakConfig {
    /// `linear(lambda,eps)` or `mcir(x0,theta1,theta2)`.
    pub model: String,
    pub scheme: SchemeKind,
    #[serde(default = "default_payoff")]
    pub payoff: String,
    #[serde(rename = "T")]
    pub t: f64,
    pub h_list: Vec<f64>,
    #[serde(rename = "L_list", default)]
    pub l_list: Vec<usize>,
    #[serde(default)]
    pub tensor_n: Option<usize>,
    #[serde(default)]
    pub mc: Option<McSettings>,
}

fn default_payoff() -> String {
    "mean".into()
}

/// Where Burgers reference moments come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BurgersReference {
    /// Monte Carlo with the same solver at step `h`.
    Mc { samples: usize, seed: u64, h: f64 },
    /// CSV with columns `x,Eu,Eu2`.
    File { path: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BurgersConfig {
    pub nu: f64,
    pub sigma: f64,
    #[serde(rename = "T")]
    pub t: f64,
    pub h_list: Vec<f64>,
    #[serde(rename = "M", default = "default_burgers_points")]
    pub m: usize,
    pub modes: Vec<MomentMode>,
    #[serde(default)]
    pub reference: Option<BurgersReference>,
}

fn default_burgers_points() -> usize {
    100
}

/// Reference for advection–diffusion errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AdvDiffReference {
    /// The same recursion at a fine step with the first listed quadrature order.
    SelfRef { h: f64 },
    /// `beta = 0` closed form for `u(0) = cos x`.
    ClosedForm,
    /// A known value of `||E u^2(T, .)||`.
    Norm { value: f64 },
    /// CSV with columns `x,Eu,Eu2` on the same grid.
    File { path: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdvDiffConfig {
    pub eps: f64,
    pub sigma: f64,
    pub beta: f64,
    #[serde(rename = "T")]
    pub t: f64,
    pub h_list: Vec<f64>,
    #[serde(default = "default_lstar")]
    pub lstar: usize,
    #[serde(default = "default_quad_n")]
    pub quad_n: Vec<usize>,
    #[serde(rename = "M", default = "default_advdiff_points")]
    pub m: usize,
    #[serde(default)]
    pub reference: Option<AdvDiffReference>,
}

fn default_lstar() -> usize {
    20
}

fn default_quad_n() -> Vec<usize> {
    vec![2]
}

fn default_advdiff_points() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgInfoConfig {
    pub levels: Vec<usize>,
    pub dims: Vec<usize>,
    /// Also build each grid and report the constructed count.
    #[serde(default)]
    pub build: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "kebab-case")]
pub enum ExperimentConfig {
    SdeWeak(SdeWeakConfig),
    Burgers(BurgersConfig),
    Advdiff(AdvDiffConfig),
    SgInfo(SgInfoConfig),
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ExperimentConfig::SdeWeak(_) => "sde-weak",
            ExperimentConfig::Burgers(_) => "burgers",
            ExperimentConfig::Advdiff(_) => "advdiff",
            ExperimentConfig::SgInfo(_) => "sg-info",
        }
    }

    /// Checks every field and reports all problems at once.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        match self {
            ExperimentConfig::SdeWeak(c) => {
                check_steps(c.t, &c.h_list, &mut problems);
                if let Err(e) = ModelSpec::parse(&c.model) {
                    problems.push(format!("model: {e}"));
                }
                if let Err(e) = Payoff::parse(&c.payoff) {
                    problems.push(format!("payoff: {e}"));
                }
                if c.l_list.is_empty() && c.tensor_n.is_none() && c.mc.is_none() {
                    problems.push("L_list: empty and no tensor_n or mc given".into());
                }
                if c.l_list.contains(&0) {
                    problems.push("L_list: levels must be at least 1".into());
                }
                if let Some(mc) = c.mc {
                    if mc.samples < 2 {
                        problems.push("mc.samples: need at least 2".into());
                    }
                }
            }
            ExperimentConfig::Burgers(c) => {
                check_steps(c.t, &c.h_list, &mut problems);
                if !(c.nu > 0.0) {
                    problems.push("nu: must be positive".into());
                }
                if c.modes.is_empty() {
                    problems.push("modes: empty".into());
                }
                if let Some(BurgersReference::Mc { h, .. }) = &c.reference {
                    if step_count(c.t, *h).is_err() {
                        problems.push("reference.h: T/h must be an integer".into());
                    }
                }
            }
            ExperimentConfig::Advdiff(c) => {
                check_steps(c.t, &c.h_list, &mut problems);
                if c.quad_n.is_empty() || c.quad_n.contains(&0) {
                    problems.push("quad_n: need at least one positive order".into());
                }
                if c.lstar == 0 || c.lstar > c.m / 2 {
                    problems.push(format!("lstar: must be in 1..={}", c.m / 2));
                }
                match &c.reference {
                    Some(AdvDiffReference::SelfRef { h }) if step_count(c.t, *h).is_err() => {
                        problems.push("reference.h: T/h must be an integer".into())
                    }
                    Some(AdvDiffReference::ClosedForm) if c.beta != 0.0 => {
                        problems.push("reference: closed form needs beta = 0".into())
                    }
                    _ => {}
                }
            }
            ExperimentConfig::SgInfo(c) => {
                if c.levels.is_empty() {
                    problems.push("levels: empty".into());
                }
                if c.dims.is_empty() {
                    problems.push("dims: empty".into());
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }
}

fn check_steps(t: f64, hs: &[f64], problems: &mut Vec<String>) {
    if hs.is_empty() {
        problems.push("h_list: empty".into());
        return;
    }
    if hs.iter().any(|h| !(*h > 0.0)) {
        problems.push("h_list: all steps must be positive".into());
    }
    if hs.windows(2).any(|w| w[1] >= w[0]) {
        problems.push("h_list: must be strictly decreasing".into());
    }
    for h in hs {
        if *h > 0.0 && step_count(t, *h).is_err() {
            problems.push(format!("h_list: T/h is not an integer for h={h}"));
        }
    }
}

/// A CSV cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Text(String),
    Empty,
}

impl Cell {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Num(v) => Some(*v),
            _ => None,
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Num(v as f64)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Num)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

/// A named CSV table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Table {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<Cell>> {
        let idx = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[idx].clone()).collect())
    }

    /// CSV with shortest round-trip float formatting.
    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row
                .iter()
                .map(|c| match c {
                    Cell::Num(v) => format!("{v}"),
                    Cell::Text(s) => s.clone(),
                    Cell::Empty => String::new(),
                })
                .collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(name: &str, text: &str) -> Result<Table> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty CSV".into()))?;
        let columns: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row: Vec<Cell> = line
                .split(',')
                .map(|s| {
                    let s = s.trim();
                    if s.is_empty() {
                        Cell::Empty
                    } else if let Ok(v) = s.parse::<f64>() {
                        Cell::Num(v)
                    } else {
                        Cell::Text(s.to_string())
                    }
                })
                .collect();
            if row.len() != columns.len() {
                return Err(Error::Parse(format!(
                    "CSV line {} has {} cells, header has {}",
                    i + 2,
                    row.len(),
                    columns.len()
                )));
            }
            rows.push(row);
        }
        Ok(Table {
            name: name.into(),
            columns,
            rows,
        })
    }

    /// Fixed-width text rendering for terminals.
    pub fn to_pretty(&self) -> String {
        let text: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                r.iter()
                    .map(|c| match c {
                        Cell::Num(v) if v.fract() == 0.0 && v.abs() < 1e9 => format!("{v}"),
                        Cell::Num(v) => format!("{v:.4e}"),
                        Cell::Text(s) => s.clone(),
                        Cell::Empty => "--".into(),
                    })
                    .collect()
            })
            .collect();
        let widths: Vec<usize> = (0..self.columns.len())
            .map(|j| {
                text.iter()
                    .map(|r| r[j].len())
                    .chain(std::iter::once(self.columns[j].len()))
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = String::new();
        let line = |cells: &[String], out: &mut String| {
            let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
            let _ = writeln!(out, "{}", padded.join("  "));
        };
        line(&self.columns, &mut out);
        for r in &text {
            line(r, &mut out);
        }
        out
    }
}

/// Rows plus auxiliary tables and provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub kind: String,
    pub table: Table,
    pub extra: Vec<Table>,
    pub metadata: serde_json::Value,
}

impl ExperimentReport {
    /// Writes `report.csv`, one CSV per extra table, and `metadata.json`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.csv"), self.table.to_csv())?;
        for t in &self.extra {
            std::fs::write(dir.join(format!("{}.csv", t.name)), t.to_csv())?;
        }
        std::fs::write(dir.join("metadata.json"), serde_json::to_string_pretty(&self.metadata)?)?;
        Ok(())
    }
}

/// `ln(e_{k-1}/e_k) / ln(h_{k-1}/h_k)` for consecutive entries; the first
/// entry, and any pair with a zero or missing error, has no order.
pub fn convergence_order(errors: &[f64], steps: &[f64]) -> Result<Vec<Option<f64>>> {
    if errors.len() != steps.len() || errors.len() < 2 {
        return Err(Error::Configuration(
            "convergence order needs matching error and step lists of length >= 2".into(),
        ));
    }
    let mut out = vec![None];
    for k in 1..errors.len() {
        let (e0, e1) = (errors[k - 1], errors[k]);
        out.push(if e0 > 0.0 && e1 > 0.0 && e0.is_finite() && e1.is_finite() {
            Some((e0 / e1).ln() / (steps[k - 1] / steps[k]).ln())
        } else {
            None
        });
    }
    Ok(out)
}

fn orders_or_none(errors: &[Option<f64>], steps: &[f64]) -> Vec<Option<f64>> {
    if errors.len() < 2 {
        return vec![None; errors.len()];
    }
    let e: Vec<f64> = errors.iter().map(|e| e.unwrap_or(0.0)).collect();
    convergence_order(&e, steps).unwrap_or_else(|_| vec![None; errors.len()])
}

/// Per-row seed derived from the config seed and row index.
pub fn row_seed(seed: u64, row: usize) -> u64 {
    seed ^ (row as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn row_err(row: usize) -> impl Fn(Error) -> Error {
    move |e| Error::Row {
        row,
        source: Box::new(e),
    }
}

/// Runs a validated config.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let (table, extra) = match config {
        ExperimentConfig::SdeWeak(c) => (run_sde_weak(c)?, Vec::new()),
        ExperimentConfig::Burgers(c) => run_burgers(c)?,
        ExperimentConfig::Advdiff(c) => run_advdiff(c)?,
        ExperimentConfig::SgInfo(c) => (run_sg_info(c)?, Vec::new()),
    };
    let metadata = serde_json::json!({
        "experiment": config.kind(),
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "cpu_seconds_note": "wall-clock seconds per row; environment dependent",
    });
    Ok(ExperimentReport {
        kind: config.kind().into(),
        table,
        extra,
        metadata,
    })
}

fn run_sde_weak(c: &SdeWeakConfig) -> Result<Table> {
    let spec = ModelSpec::parse(&c.model)?;
    let payoff = Payoff::parse(&c.payoff)?;
    let exact = spec.exact_moments(c.t);
    let mut table = Table::new(
        "report",
        &["method", "h", "L", "value", "rho1", "rho2", "order", "ci", "cpu_seconds"],
    );

    enum Method {
        Sgc(usize),
        Tensor(usize),
        Mc(McSettings),
    }
    let mut methods: Vec<Method> = c.l_list.iter().map(|&l| Method::Sgc(l)).collect();
    if let Some(n) = c.tensor_n {
        methods.push(Method::Tensor(n));
    }
    if let Some(mc) = c.mc {
        methods.push(Method::Mc(mc));
    }

    let mut row = 0;
    for method in &methods {
        let mut rho1s = Vec::new();
        let mut rows = Vec::new();
        for &h in &c.h_list {
            let steps = step_count(c.t, h)?;
            let map = SchemeEndpointMap::new(spec.model(), spec.x0(), 0.0, h, steps, c.scheme).map_err(row_err(row))?;
            let target = WeakTarget::with_payoffs(map, vec![Payoff::Mean, Payoff::Second, payoff.clone()]);
            let start = Instant::now();
            let (name, level, values, ci) = match method {
                Method::Sgc(l) => ("sgc", *l as f64, weak_expectation_sgc(&target, *l), None),
                Method::Tensor(n) => ("tensor", *n as f64, weak_expectation_tensor(&target, *n), None),
                Method::Mc(mc) => {
                    let est = weak_expectation_mc(&target, mc.samples, row_seed(mc.seed, row));
                    match est {
                        Ok(e) => ("mc", 0.0, Ok(e.mean), Some(e.half_width[2])),
                        Err(e) => ("mc", 0.0, Err(e), None),
                    }
                }
            };
            let values = values.map_err(row_err(row))?;
            let cpu = start.elapsed().as_secs_f64();
            let (rho1, rho2) = match exact {
                Some((m1, m2)) => {
                    let (a, b) = moment_relative_errors(m1, m2, values[0], values[1]).map_err(row_err(row))?;
                    (Some(a), Some(b))
                }
                None => (None, None),
            };
            rho1s.push(rho1);
            rows.push((name, h, level, values[2], rho1, rho2, ci, cpu));
            row += 1;
        }
        let orders = orders_or_none(&rho1s, &c.h_list);
        for ((name, h, level, value, rho1, rho2, ci, cpu), order) in rows.into_iter().zip(orders) {
            table.push(vec![
                name.into(),
                h.into(),
                level.into(),
                value.into(),
                rho1.into(),
                rho2.into(),
                order.into(),
                ci.into(),
                cpu.into(),
            ]);
        }
    }
    Ok(table)
}

/// Reads `x,Eu,Eu2` fields.
pub fn read_field_csv(path: &Path) -> Result<FieldMoments> {
    let t = Table::from_csv("reference", &std::fs::read_to_string(path)?)?;
    let col = |name: &str| -> Result<Vec<f64>> {
        t.column(name)
            .ok_or_else(|| Error::Parse(format!("reference file lacks column '{name}'")))?
            .iter()
            .map(|c| c.as_f64().ok_or_else(|| Error::Parse(format!("non-numeric entry in '{name}'"))))
            .collect()
    };
    Ok(FieldMoments {
        points: col("x")?,
        mean: col("Eu")?,
        second: col("Eu2")?,
        mean_ci: None,
        second_ci: None,
    })
}

/// `x,Eu,Eu2` (plus half-widths when present).
pub fn field_table(name: &str, f: &FieldMoments) -> Table {
    let with_ci = f.mean_ci.is_some();
    let mut t = if with_ci {
        Table::new(name, &["x", "Eu", "Eu2", "Eu_ci", "Eu2_ci"])
    } else {
        Table::new(name, &["x", "Eu", "Eu2"])
    };
    for i in 0..f.points.len() {
        let mut row = vec![f.points[i].into(), f.mean[i].into(), f.second[i].into()];
        if let (Some(a), Some(b)) = (&f.mean_ci, &f.second_ci) {
            row.push(a[i].into());
            row.push(b[i].into());
        }
        t.push(row);
    }
    t
}

fn mode_label(mode: &MomentMode) -> (String, f64) {
    match mode {
        MomentMode::Sgc { level } => ("sgc".into(), *level as f64),
        MomentMode::Mc { samples, .. } => ("mc".into(), *samples as f64),
    }
}

fn run_burgers(c: &BurgersConfig) -> Result<(Table, Vec<Table>)> {
    let params = BurgersParams::new(c.nu, c.sigma);
    let reference = match &c.reference {
        None => None,
        Some(BurgersReference::File { path }) => Some(read_field_csv(Path::new(path))?),
        Some(BurgersReference::Mc { samples, seed, h }) => Some(burgers_moments(
            params,
            c.t,
            *h,
            c.m,
            MomentMode::Mc {
                samples: *samples,
                seed: *seed,
            },
        )?),
    };
    if let Some(r) = &reference {
        if r.mean.len() != c.m {
            return Err(Error::DimensionMismatch(format!(
                "reference has {} points, config M = {}",
                r.mean.len(),
                c.m
            )));
        }
    }

    let mut table = Table::new(
        "report",
        &[
            "mode", "h", "param", "norm_mean", "norm_second", "rho1_l2", "rho2_l2", "rho1_max", "rho2_max", "order",
            "cpu_seconds",
        ],
    );
    let mut fields = Table::new("fields", &["mode", "h", "param", "x", "Eu", "Eu2"]);
    let mut row = 0;
    for mode in &c.modes {
        let mut rho1s = Vec::new();
        let mut rows = Vec::new();
        for &h in &c.h_list {
            let start = Instant::now();
            let mode_row = match *mode {
                MomentMode::Mc { samples, seed } => MomentMode::Mc {
                    samples,
                    seed: row_seed(seed, row),
                },
                m => m,
            };
            let f = burgers_moments(params, c.t, h, c.m, mode_row).map_err(row_err(row))?;
            let cpu = start.elapsed().as_secs_f64();
            let errs = reference
                .as_ref()
                .map(|r| field_error_norms(&r.mean, &r.second, &f.mean, &f.second))
                .transpose()
                .map_err(row_err(row))?;
            let (label, param) = mode_label(mode);
            for i in 0..f.points.len() {
                fields.push(vec![
                    label.as_str().into(),
                    h.into(),
                    param.into(),
                    f.points[i].into(),
                    f.mean[i].into(),
                    f.second[i].into(),
                ]);
            }
            rho1s.push(errs.map(|e| e.rho1_l2));
            rows.push((label, h, param, l2_norm(&f.mean), l2_norm(&f.second), errs, cpu));
            row += 1;
        }
        let orders = orders_or_none(&rho1s, &c.h_list);
        for ((label, h, param, n1, n2, errs, cpu), order) in rows.into_iter().zip(orders) {
            table.push(vec![
                label.as_str().into(),
                h.into(),
                param.into(),
                n1.into(),
                n2.into(),
                errs.map(|e| e.rho1_l2).into(),
                errs.map(|e| e.rho2_l2).into(),
                errs.map(|e| e.rho1_max).into(),
                errs.map(|e| e.rho2_max).into(),
                order.into(),
                cpu.into(),
            ]);
        }
    }
    let mut extra = vec![fields];
    if let Some(r) = reference {
        extra.push(field_table("reference", &r));
    }
    Ok((table, extra))
}

fn run_advdiff(c: &AdvDiffConfig) -> Result<(Table, Vec<Table>)> {
    let spde = LinearSpde::homogeneous(AdvDiffParams {
        eps: c.eps,
        sigma: c.sigma,
        beta: c.beta,
    });
    let basis = build_cons_basis(c.lstar, c.m)?;
    let initial: Vec<f64> = basis.points().iter().map(|x| x.cos()).collect();
    let run = |h: f64, n: usize| -> Result<_> {
        run_recursive_moments(&spde, &basis, h, c.t, &tensor_rule(n, 1)?, &initial)
    };
    let reference_norm = match &c.reference {
        None => None,
        Some(AdvDiffReference::Norm { value }) => Some(*value),
        Some(AdvDiffReference::File { path }) => {
            let r = read_field_csv(Path::new(path))?;
            if r.second.len() != c.m {
                return Err(Error::DimensionMismatch(format!(
                    "reference has {} points, config M = {}",
                    r.second.len(),
                    c.m
                )));
            }
            Some(l2_norm(&r.second))
        }
        Some(AdvDiffReference::ClosedForm) => Some(l2_norm(&advdiff_second_moment_oracle(
            c.eps,
            c.sigma,
            c.t,
            basis.points(),
        ))),
        Some(AdvDiffReference::SelfRef { h }) => {
            let r = run(*h, c.quad_n[0])?;
            Some(l2_norm(&second_moment_field(&r.state, &basis)))
        }
    };
    if reference_norm == Some(0.0) {
        return Err(Error::DegenerateReference("reference norm is zero".into()));
    }

    let mut table = Table::new(
        "report",
        &["n", "h", "norm_second", "rho2", "rho2_rel", "order", "cpu_seconds"],
    );
    let mut trace = Table::new("trace", &["n", "h", "k", "t", "norm_second"]);
    let mut fields = Table::new("fields", &["n", "h", "x", "Eu", "Eu2"]);
    let mut row = 0;
    for &n in &c.quad_n {
        let mut rels = Vec::new();
        let mut rows = Vec::new();
        for &h in &c.h_list {
            let start = Instant::now();
            let r = run(h, n).map_err(row_err(row))?;
            let cpu = start.elapsed().as_secs_f64();
            let second = second_moment_field(&r.state, &basis);
            let mean = mean_field(&r.state, &basis);
            let norm = l2_norm(&second);
            for (k, v) in r.second_norm_trace.iter().enumerate() {
                trace.push(vec![n.into(), h.into(), k.into(), (k as f64 * h).into(), (*v).into()]);
            }
            for i in 0..second.len() {
                fields.push(vec![
                    n.into(),
                    h.into(),
                    basis.points()[i].into(),
                    mean[i].into(),
                    second[i].into(),
                ]);
            }
            let abs = reference_norm.map(|r| (r - norm).abs());
            let rel = reference_norm.map(|r| (r - norm).abs() / r);
            rels.push(rel);
            rows.push((h, norm, abs, rel, cpu));
            row += 1;
        }
        let orders = orders_or_none(&rels, &c.h_list);
        for ((h, norm, abs, rel, cpu), order) in rows.into_iter().zip(orders) {
            table.push(vec![
                n.into(),
                h.into(),
                norm.into(),
                abs.into(),
                rel.into(),
                order.into(),
                cpu.into(),
            ]);
        }
    }
    Ok((table, vec![trace, fields]))
}

fn run_sg_info(c: &SgInfoConfig) -> Result<Table> {
    let mut table = Table::new("report", &["L", "d", "closed_form", "built", "cpu_seconds"]);
    let mut row = 0;
    for &l in &c.levels {
        for &d in &c.dims {
            let closed = sparse_node_count(l, d).ok().map(|v| v as f64);
            let start = Instant::now();
            let built = if c.build {
                Some(build_sparse_grid(l, d).map_err(row_err(row))?.weights().len() as f64)
            } else {
                None
            };
            table.push(vec![
                l.into(),
                d.into(),
                closed.into(),
                built.into(),
                start.elapsed().as_secs_f64().into(),
            ]);
            row += 1;
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table41() -> ExperimentConfig {
        ExperimentConfig::from_json(
            r#"{"experiment":"sde-weak","model":"mcir(0.1,1,0.3)","scheme":"euler",
                "T":1,"h_list":[0.5,0.25,0.125,0.0625,0.03125],"L_list":[2]}"#,
        )
        .unwrap()
    }

    #[test]
    fn orders() {
        assert_eq!(convergence_order(&[4.0, 1.0], &[2.0, 1.0]).unwrap(), vec![None, Some(2.0)]);
        let o = convergence_order(&[1e-3, 5e-4], &[2e-2, 1e-2]).unwrap();
        assert!((o[1].unwrap() - 1.0).abs() < 1e-12);
        let o = convergence_order(&[1.01e-3, 4.07e-4], &[5e-2, 2e-2]).unwrap();
        assert!((o[1].unwrap() - 1.0).abs() < 0.01);
        assert_eq!(convergence_order(&[1.0, 0.0], &[2.0, 1.0]).unwrap(), vec![None, None]);
        assert!(convergence_order(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn validation_lists_problems() {
        let bad = ExperimentConfig::from_json(
            r#"{"experiment":"sde-weak","model":"cir(1)","scheme":"euler","T":1,"h_list":[],"L_list":[2]}"#,
        )
        .unwrap();
        match bad.validate() {
            Err(Error::Validation(p)) => {
                assert!(p.iter().any(|s| s.starts_with("h_list")));
                assert!(p.iter().any(|s| s.starts_with("model")));
            }
            other => panic!("{other:?}"),
        }
        let bad = ExperimentConfig::from_json(
            r#"{"experiment":"advdiff","eps":0.2,"sigma":0.5,"beta":0.1,"T":1,"h_list":[0.1,0.3]}"#,
        )
        .unwrap();
        assert!(matches!(bad.validate(), Err(Error::Validation(_))));
        assert!(ExperimentConfig::from_json(r#"{"experiment":"nope"}"#).is_err());
    }

    #[test]
    fn mcir_table_rows() {
        let report = run_experiment(&table41()).unwrap();
        let rho1: Vec<f64> = report.table.column("rho1").unwrap().iter().map(|c| c.as_f64().unwrap()).collect();
        let published = [3.20e-1, 1.40e-1, 6.60e-2, 3.21e-2, 1.58e-2];
        for (a, b) in rho1.iter().zip(published) {
            assert!((a - b).abs() / b < 0.02, "{a} vs {b}");
        }
        let order = report.table.column("order").unwrap();
        assert_eq!(order[0], Cell::Empty);
        for (o, want) in order[1..].iter().zip([1.2, 1.1, 1.0, 1.0]) {
            assert!((o.as_f64().unwrap() - want).abs() < 0.06);
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let report = run_experiment(&table41()).unwrap();
        let csv = report.table.to_csv();
        let back = Table::from_csv("report", &csv).unwrap();
        assert_eq!(back, report.table);
    }

    #[test]
    fn rerun_is_identical_apart_from_timing() {
        let cfg = ExperimentConfig::from_json(
            r#"{"experiment":"sde-weak","model":"linear(0,1)","scheme":"euler","payoff":"x4",
                "T":1,"h_list":[0.25,0.125],"L_list":[2],"tensor_n":2,"mc":{"samples":2000,"seed":5}}"#,
        )
        .unwrap();
        let strip = |t: &Table| -> Vec<Vec<Cell>> {
            t.rows.iter().map(|r| r[..r.len() - 1].to_vec()).collect()
        };
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(strip(&a.table), strip(&b.table));
        assert_eq!(a.table.rows.len(), 6);
    }

    #[test]
    fn sg_info_counts() {
        let cfg = ExperimentConfig::SgInfo(SgInfoConfig {
            levels: vec![3],
            dims: vec![40],
            build: true,
        });
        let r = run_experiment(&cfg).unwrap();
        assert_eq!(r.table.rows[0][2], Cell::Num(3281.0));
        assert_eq!(r.table.rows[0][3], Cell::Num(3281.0));
    }

    #[test]
    fn row_errors_carry_context() {
        let cfg = ExperimentConfig::from_json(
            r#"{"experiment":"sde-weak","model":"linear(1e300,0)","scheme":"euler","T":20,"h_list":[10],"L_list":[1]}"#,
        )
        .unwrap();
        match run_experiment(&cfg) {
            Err(Error::Row { row: 0, source }) => assert!(matches!(*source, Error::Divergence { .. })),
            other => panic!("{other:?}"),
        }
    }
}
