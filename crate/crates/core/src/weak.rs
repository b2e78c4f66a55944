//! Weak expectations `E f(X_N)` of scheme endpoints by sparse-grid
//! collocation, tensor Gauss–Hermite rules, or Monte Carlo.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::sde::SchemeEndpointMap;
use crate::sparse_grid::{build_sparse_grid, integrate_vec, tensor_rule, CubatureRule, ProductRule};
use crate::sum::blocked_moments;

/// Two-sided 95% normal quantile used for Monte Carlo confidence intervals.
pub const CI_MULTIPLIER: f64 = 1.96;

/// A user-supplied payoff of the endpoint.
pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Payoff applied to the first state component.
#[derive(Clone)]
pub enum Payoff {
    Mean,
    Second,
    Fourth,
    Cos,
    Power(i32),
    Const(f64),
    Custom(ScalarFn),
}

impl Payoff {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Payoff::Mean => x[0],
            Payoff::Second => x[0] * x[0],
            Payoff::Fourth => x[0].powi(4),
            Payoff::Cos => x[0].cos(),
            Payoff::Power(p) => x[0].powi(*p),
            Payoff::Const(c) => *c,
            Payoff::Custom(f) => f(x),
        }
    }

    pub fn parse(s: &str) -> Result<Payoff> {
        match s {
            "mean" => Ok(Payoff::Mean),
            "second" => Ok(Payoff::Second),
            "x4" => Ok(Payoff::Fourth),
            "cos" => Ok(Payoff::Cos),
            other => Err(Error::Parse(format!(
                "unknown payoff '{other}': expected mean, second, x4 or cos"
            ))),
        }
    }
}

impl fmt::Debug for Payoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Payoff::Mean => write!(f, "mean"),
            Payoff::Second => write!(f, "second"),
            Payoff::Fourth => write!(f, "x4"),
            Payoff::Cos => write!(f, "cos"),
            Payoff::Power(p) => write!(f, "x^{p}"),
            Payoff::Const(c) => write!(f, "const({c})"),
            Payoff::Custom(_) => write!(f, "custom"),
        }
    }
}

/// A scheme endpoint map together with the payoffs to average.
#[derive(Debug, Clone)]
pub struct WeakTarget {
    pub map: SchemeEndpointMap,
    pub payoffs: Vec<Payoff>,
    /// Exact `(E X, E X^2)` when known.
    pub exact: Option<(f64, f64)>,
}

impl WeakTarget {
    pub fn new(map: SchemeEndpointMap, payoff: Payoff) -> Self {
        WeakTarget {
            map,
            payoffs: vec![payoff],
            exact: None,
        }
    }

    pub fn with_payoffs(map: SchemeEndpointMap, payoffs: Vec<Payoff>) -> Self {
        WeakTarget {
            map,
            payoffs,
            exact: None,
        }
    }

    pub fn with_exact(mut self, exact: Option<(f64, f64)>) -> Self {
        self.exact = exact;
        self
    }

    fn eval_into(&self, y: &[f64], out: &mut [f64]) -> Result<()> {
        let x = self.map.endpoint(y)?;
        for (o, f) in out.iter_mut().zip(&self.payoffs) {
            *o = f.eval(&x);
        }
        Ok(())
    }

    /// Averages every payoff over `rule`, whose dimension must equal the
    /// driving dimension of the map.
    pub fn integrate<R: CubatureRule + ?Sized>(&self, rule: &R) -> Result<Vec<f64>> {
        if rule.dim() != self.map.driving_dim() {
            return Err(Error::DimensionMismatch(format!(
                "rule has dimension {}, scheme needs {}",
                rule.dim(),
                self.map.driving_dim()
            )));
        }
        integrate_vec(rule, self.payoffs.len(), |y, out| self.eval_into(y, out))
    }
}

/// Sparse-grid collocation: the level-`L` Smolyak rule on the Gaussian axes,
/// times the two-point rule on any `zeta` axes.
pub fn weak_expectation_sgc(target: &WeakTarget, level: usize) -> Result<Vec<f64>> {
    let grid = build_sparse_grid(level, target.map.xi_dim())?;
    match target.map.zeta_dim() {
        0 => target.integrate(&grid),
        z => target.integrate(&ProductRule {
            outer: grid,
            inner: tensor_rule(2, z)?,
        }),
    }
}

/// Full tensor rule with `n` Gauss–Hermite points per Gaussian axis (and the
/// two-point rule on any `zeta` axes). With `n = 2` this is the exact
/// expectation of the weak scheme driven by two-point variables.
pub fn weak_expectation_tensor(target: &WeakTarget, n: usize) -> Result<Vec<f64>> {
    let xi = tensor_rule(n, target.map.xi_dim())?;
    match target.map.zeta_dim() {
        0 => target.integrate(&xi),
        z => target.integrate(&ProductRule {
            outer: xi,
            inner: tensor_rule(2, z)?,
        }),
    }
}

/// Monte Carlo estimate and 95% half-width for each payoff.
#[derive(Debug, Clone, PartialEq)]
pub struct McEstimate {
    pub samples: usize,
    pub mean: Vec<f64>,
    pub half_width: Vec<f64>,
}

/// RNG for sample `index` of a run with `seed`: an independent ChaCha
/// stream per sample, so results do not depend on scheduling.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Monte Carlo over standard normal `xi` (and fair-sign `zeta`) draws.
pub fn weak_expectation_mc(target: &WeakTarget, samples: usize, seed: u64) -> Result<McEstimate> {
    if samples < 2 {
        return Err(Error::Configuration(format!(
            "Monte Carlo needs at least 2 samples (got {samples})"
        )));
    }
    let xi_dim = target.map.xi_dim();
    let dim = target.map.driving_dim();
    let stats = blocked_moments(
        samples,
        target.payoffs.len(),
        || vec![0.0; dim],
        |y, i, out| {
            let mut rng = sample_rng(seed, i as u64);
            for (k, v) in y.iter_mut().enumerate() {
                *v = if k < xi_dim {
                    rng.sample(StandardNormal)
                } else if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                };
            }
            target.eval_into(y, out)
        },
    )?;
    let half_width = stats
        .variance
        .iter()
        .map(|v| CI_MULTIPLIER * (v / samples as f64).sqrt())
        .collect();
    Ok(McEstimate {
        samples,
        mean: stats.mean,
        half_width,
    })
}

/// Level-2 collocation error for `f(x) = x^4` on the linear model started at
/// 1: `E f(X~_N) - A(2,N) phi`, where `X~_N` is the weak Euler endpoint.
///
/// Equals `6 eps^4 h^2 sum_{i<j} q^{4N-2i-2j}` with `q = 1 + lambda h`.
pub fn sgc_defect_x4(lambda: f64, eps: f64, h: f64, steps: usize) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::Configuration(format!("step must be positive (got {h})")));
    }
    let scale = 6.0 * eps.powi(4);
    if lambda == 0.0 {
        let t = steps as f64 * h;
        return Ok(scale * (t * t / 2.0 - t * h / 2.0));
    }
    let q = 1.0 + lambda * h;
    if q == 0.0 {
        return Err(Error::SingularParameter("1 + lambda h = 0".into()));
    }
    let s2n = q.powi(2 * steps as i32);
    let denom = lambda * lambda * (2.0 + lambda * h).powi(2);
    Ok(scale * (s2n - 1.0) / denom * ((s2n + 1.0) / (1.0 + q * q) - 1.0))
}

/// Relative errors `|exact - est| / |exact|` of the first two moments.
pub fn moment_relative_errors(exact1: f64, exact2: f64, est1: f64, est2: f64) -> Result<(f64, f64)> {
    if exact1 == 0.0 || exact2 == 0.0 {
        return Err(Error::DegenerateReference(
            "exact moment is zero; relative error undefined".into(),
        ));
    }
    Ok((
        (exact1 - est1).abs() / exact1.abs(),
        (exact2 - est2).abs() / exact2.abs(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::{LinearSde, Mcir, SchemeKind};

    fn linear(lambda: f64, eps: f64, h: f64, n: usize, payoffs: Vec<Payoff>) -> WeakTarget {
        let map = SchemeEndpointMap::new(
            Arc::new(LinearSde { lambda, eps }),
            vec![1.0],
            0.0,
            h,
            n,
            SchemeKind::Euler,
        )
        .unwrap();
        WeakTarget::with_payoffs(map, payoffs)
    }

    /// `h^2 sum_{i<j} q^{4N-2i-2j}` by direct summation.
    fn defect_sum(lambda: f64, h: f64, n: usize) -> f64 {
        let q = 1.0 + lambda * h;
        let mut acc = 0.0;
        for i in 1..=n {
            for j in i + 1..=n {
                acc += q.powi((4 * n - 2 * i - 2 * j) as i32);
            }
        }
        h * h * acc
    }

    #[test]
    fn sgc_second_moment_is_exact_at_level_two() {
        let t = linear(0.0, 1.0, 0.25, 4, vec![Payoff::Second]);
        assert!((weak_expectation_sgc(&t, 2).unwrap()[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn fourth_moment_tensor_and_sgc() {
        let t = linear(0.0, 1.0, 0.25, 4, vec![Payoff::Fourth]);
        let tensor = weak_expectation_tensor(&t, 2).unwrap()[0];
        assert!((tensor - 9.5).abs() < 1e-12);
        let sgc = weak_expectation_sgc(&t, 2).unwrap()[0];
        // Brute force over the 9 level-2 nodes written as
        // sum_i E phi(zeta_i e_i) - (N-1) phi(0); X = 1 + sqrt(h) sum_j y_j.
        let phi = |y: f64| (1.0 + 0.5 * y).powi(4);
        let brute = 4.0 * 0.5 * (phi(1.0) + phi(-1.0)) - 3.0 * phi(0.0);
        assert!((sgc - brute).abs() < 1e-12);
        let defect = sgc_defect_x4(0.0, 1.0, 0.25, 4).unwrap();
        assert!((tensor - sgc - defect).abs() < 1e-12);
    }

    #[test]
    fn constant_payoff_is_reproduced() {
        let t = linear(0.3, 1.0, 0.2, 5, vec![Payoff::Const(2.5)]);
        for level in 1..=4 {
            assert!((weak_expectation_sgc(&t, level).unwrap()[0] - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn low_moments_agree_between_tensor_and_level_two() {
        let payoffs = vec![Payoff::Power(1), Payoff::Power(2), Payoff::Power(3)];
        for &(lambda, eps) in &[(0.0, 1.0), (-1.0, 0.5), (0.7, 1.3)] {
            let t = linear(lambda, eps, 0.125, 8, payoffs.clone());
            let a = weak_expectation_tensor(&t, 2).unwrap();
            let b = weak_expectation_sgc(&t, 2).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0), "{x} vs {y}");
            }
        }
    }

    #[test]
    fn deterministic_model_is_independent_of_rule_order() {
        let t = linear(-0.4, 0.0, 0.25, 4, vec![Payoff::Mean]);
        let exact = 0.9f64.powi(4);
        for n in 1..=4 {
            assert!((weak_expectation_tensor(&t, n).unwrap()[0] - exact).abs() < 1e-15);
        }
        let mc = weak_expectation_mc(&t, 100, 1).unwrap();
        assert!((mc.mean[0] - exact).abs() < 1e-15);
        assert_eq!(mc.half_width[0], 0.0);
    }

    #[test]
    fn defect_closed_form_matches_direct_sum() {
        for &(lambda, h, n) in &[(0.0, 0.25, 4), (1.0, 0.1, 10), (-2.0, 0.05, 20), (-3.0, 0.5, 6)] {
            let direct = 6.0 * 1.5f64.powi(4) * defect_sum(lambda, h, n);
            let closed = sgc_defect_x4(lambda, 1.5, h, n).unwrap();
            assert!((direct - closed).abs() <= 1e-12 * direct.abs().max(1.0), "{direct} vs {closed}");
        }
        assert_eq!(sgc_defect_x4(0.7, 0.0, 0.1, 5).unwrap(), 0.0);
        assert!(matches!(
            sgc_defect_x4(-2.0, 1.0, 0.5, 4),
            Err(Error::SingularParameter(_))
        ));
    }

    #[test]
    fn defect_is_tensor_minus_sgc() {
        for &(lambda, eps, h, n) in &[(0.0, 1.0, 0.125, 8), (1.0, 0.5, 0.1, 10), (-1.5, 2.0, 0.2, 5)] {
            let t = linear(lambda, eps, h, n, vec![Payoff::Fourth]);
            let gap = weak_expectation_tensor(&t, 2).unwrap()[0] - weak_expectation_sgc(&t, 2).unwrap()[0];
            let r = sgc_defect_x4(lambda, eps, h, n).unwrap();
            assert!((gap - r).abs() < 1e-10, "{gap} vs {r}");
        }
    }

    #[test]
    fn mc_is_reproducible() {
        let t = linear(0.0, 1.0, 0.25, 4, vec![Payoff::Second, Payoff::Fourth]);
        let a = weak_expectation_mc(&t, 5000, 42).unwrap();
        let b = weak_expectation_mc(&t, 5000, 42).unwrap();
        assert_eq!(a, b);
        let c = weak_expectation_mc(&t, 5000, 43).unwrap();
        assert_ne!(a.mean, c.mean);
        assert!(weak_expectation_mc(&t, 1, 0).is_err());
    }

    #[test]
    fn mc_covers_second_moment() {
        let t = linear(0.0, 1.0, 0.25, 4, vec![Payoff::Second]);
        let est = weak_expectation_mc(&t, 200_000, 7).unwrap();
        assert!((est.mean[0] - 2.0).abs() <= est.half_width[0], "{est:?}");
    }

    #[test]
    fn relative_errors() {
        assert_eq!(moment_relative_errors(0.5, 2.0, 0.5, 2.0).unwrap(), (0.0, 0.0));
        let (a, b) = moment_relative_errors(0.1, 1.0, 0.11, 0.9).unwrap();
        assert!((a - 0.1).abs() < 1e-12 && (b - 0.1).abs() < 1e-12);
        assert!(matches!(
            moment_relative_errors(0.0, 1.0, 0.1, 1.0),
            Err(Error::DegenerateReference(_))
        ));
    }

    #[test]
    fn mcir_euler_level_two_row() {
        let map = SchemeEndpointMap::new(
            Arc::new(Mcir { theta1: 1.0, theta2: 0.3 }),
            vec![0.1],
            0.0,
            0.5,
            2,
            SchemeKind::Euler,
        )
        .unwrap();
        let t = WeakTarget::with_payoffs(map, vec![Payoff::Mean, Payoff::Second]);
        let est = weak_expectation_sgc(&t, 2).unwrap();
        let (m1, m2) = crate::sde::mcir_exact_moments(0.1, 1.0, 0.3, 1.0).unwrap();
        let (r1, _) = moment_relative_errors(m1, m2, est[0], est[1]).unwrap();
        assert!((r1 - 0.320).abs() / 0.320 < 0.02, "{r1}");
    }

    #[test]
    fn payoff_parsing() {
        assert!(matches!(Payoff::parse("x4").unwrap(), Payoff::Fourth));
        assert!(Payoff::parse("x5").is_err());
        assert_eq!(Payoff::Cos.eval(&[0.0]), 1.0);
    }
}
