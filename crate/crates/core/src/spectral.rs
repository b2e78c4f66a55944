//! Fourier collocation in space with trapezoidal time stepping for two
//! periodic SPDEs: the stochastic Burgers equation with additive noise
//!
//! ```text
//! du + u u_x dt = nu u_xx dt + sigma cos(x) dw
//! ```
//!
//! and the linear advection–diffusion equation with multiplicative noise
//!
//! ```text
//! du = ((eps^2 + sigma^2)/2 u_xx + beta sin(x) u_x) dt + sigma u_x dw.
//! ```
//!
//! Fields are sampled at `x_m = m l / M`, `m = 1..=M`.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse_grid::{build_sparse_grid, integrate_vec, CubatureRule};
use crate::sum::blocked_moments;
use crate::weak::{sample_rng, CI_MULTIPLIER};

/// Smallest and largest supported collocation grids.
pub const MIN_POINTS: usize = 4;
pub const MAX_POINTS: usize = 512;

/// Iteration budget of the Burgers fixed-point solve.
pub const MAX_FIXED_POINT_ITERATIONS: usize = 200;

/// Largest number of time steps (= collocation dimension) allowed for
/// sparse-grid Burgers runs.
pub const MAX_SGC_DIMENSION: usize = 40;

/// Number of steps `T / h`, which must be an integer up to rounding.
pub fn step_count(t: f64, h: f64) -> Result<usize> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::Configuration(format!("step must be positive (got {h})")));
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::Configuration(format!("final time must be non-negative (got {t})")));
    }
    let n = (t / h).round();
    if (n * h - t).abs() > 1e-9 * t.max(1.0) {
        return Err(Error::Configuration(format!("T/h must be an integer (T={t}, h={h})")));
    }
    Ok(n as usize)
}

fn check_points(m: usize) -> Result<()> {
    if m % 2 == 1 || !(MIN_POINTS..=MAX_POINTS).contains(&m) {
        return Err(Error::InvalidGrid(format!(
            "point count must be even and in {MIN_POINTS}..={MAX_POINTS} (got {m})"
        )));
    }
    Ok(())
}

/// Collocation points `m l / M` for `m = 1..=M`.
pub fn grid_points(m: usize, period: f64) -> Vec<f64> {
    (1..=m).map(|k| k as f64 * period / m as f64).collect()
}

/// Periodic spectral differentiation matrix for `m` (even) points on a
/// period `period`: `D_ij = (2 pi / l) (-1)^(i-j) cot((i-j) pi / M) / 2`.
pub fn fourier_diff_matrix(m: usize, period: f64) -> Result<DMatrix<f64>> {
    check_points(m)?;
    let scale = 2.0 * PI / period;
    Ok(DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            return 0.0;
        }
        let k = i as i64 - j as i64;
        let sign = if k.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        scale * 0.5 * sign / (k as f64 * PI / m as f64).tan()
    }))
}

/// `A_h = sqrt(2 p |ln h|)`.
pub fn cutoff(h: f64, p: f64) -> f64 {
    (2.0 * p * h.ln().abs()).sqrt()
}

/// Clamps a Gaussian draw to `[-A_h, A_h]`.
pub fn clip_gaussian(xi: f64, h: f64, p: f64) -> f64 {
    let a = cutoff(h, p);
    xi.clamp(-a, a)
}

/// FFT-based differentiation on an even periodic grid. The Nyquist mode is
/// dropped by the first derivative, matching the dense matrix.
#[derive(Clone)]
pub struct FourierGrid {
    m: usize,
    period: f64,
    points: Vec<f64>,
    ik: Vec<Complex<f64>>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FourierGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FourierGrid")
            .field("m", &self.m)
            .field("period", &self.period)
            .finish()
    }
}

impl FourierGrid {
    pub fn new(m: usize, period: f64) -> Result<Self> {
        check_points(m)?;
        let mut planner = FftPlanner::new();
        let scale = 2.0 * PI / period;
        let ik = (0..m)
            .map(|k| {
                let wave = if k < m / 2 {
                    k as f64
                } else if k == m / 2 {
                    0.0
                } else {
                    k as f64 - m as f64
                };
                Complex::new(0.0, scale * wave)
            })
            .collect();
        Ok(FourierGrid {
            m,
            period,
            points: grid_points(m, period),
            ik,
            forward: planner.plan_fft_forward(m),
            inverse: planner.plan_fft_inverse(m),
        })
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Eigenvalue of `D` on Fourier index `k` (FFT ordering).
    pub fn symbol(&self, k: usize) -> Complex<f64> {
        self.ik[k]
    }

    fn to_spectrum(&self, v: &[f64], out: &mut [Complex<f64>]) {
        for (o, x) in out.iter_mut().zip(v) {
            *o = Complex::new(*x, 0.0);
        }
        self.forward.process(out);
    }

    fn spectrum_to_grid(&self, spec: &mut [Complex<f64>], out: &mut [f64]) {
        self.inverse.process(spec);
        let inv = 1.0 / self.m as f64;
        for (o, c) in out.iter_mut().zip(spec.iter()) {
            *o = c.re * inv;
        }
    }

    /// Spectral derivative of a real field.
    pub fn differentiate(&self, v: &[f64]) -> Vec<f64> {
        let mut spec = vec![Complex::new(0.0, 0.0); self.m];
        self.to_spectrum(v, &mut spec);
        for (s, ik) in spec.iter_mut().zip(&self.ik) {
            *s *= ik;
        }
        let mut out = vec![0.0; self.m];
        self.spectrum_to_grid(&mut spec, &mut out);
        out
    }
}

/// Stochastic Burgers parameters; the initial condition is
/// `u0(x) = 2 nu k sin(k x) / (a + cos(k x))` with `k = 2 pi / l`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BurgersParams {
    pub nu: f64,
    pub sigma: f64,
    #[serde(default = "default_period")]
    pub period: f64,
    #[serde(default = "default_a")]
    pub a: f64,
}

fn default_period() -> f64 {
    2.0 * PI
}

fn default_a() -> f64 {
    2.0
}

impl BurgersParams {
    pub fn new(nu: f64, sigma: f64) -> Self {
        BurgersParams {
            nu,
            sigma,
            period: default_period(),
            a: default_a(),
        }
    }

    pub fn initial_condition(&self, points: &[f64]) -> Vec<f64> {
        let k = 2.0 * PI / self.period;
        points
            .iter()
            .map(|&x| 2.0 * self.nu * k * (k * x).sin() / (self.a + (k * x).cos()))
            .collect()
    }
}

/// One trapezoidal Burgers step with fixed `h`, solved by a fixed-point
/// iteration that treats `nu D^2` implicitly (it is diagonal in Fourier
/// space) and iterates on the nonlinear term:
///
/// ```text
/// (I - h nu/2 D^2) v_new = (I + h nu/2 D^2) u - h/2 D ((v + u)/2)^2 + sigma sqrt(h) y Gamma
/// ```
///
/// starting from `v = u` and stopping once successive iterates differ by
/// less than `h^2/100` in the max norm.
#[derive(Debug, Clone)]
pub struct BurgersSolver {
    grid: FourierGrid,
    params: BurgersParams,
    h: f64,
    gamma_hat: Vec<Complex<f64>>,
    explicit: Vec<f64>,
    implicit_inv: Vec<f64>,
    tolerance: f64,
}

/// Outcome of a single step.
#[derive(Debug, Clone, PartialEq)]
pub struct BurgersStep {
    pub field: Vec<f64>,
    pub iterations: usize,
}

impl BurgersSolver {
    pub fn new(params: BurgersParams, m: usize, h: f64) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::Configuration(format!("step must be positive (got {h})")));
        }
        if !(params.nu > 0.0) {
            return Err(Error::Configuration(format!("viscosity must be positive (got {})", params.nu)));
        }
        let grid = FourierGrid::new(m, params.period)?;
        let gamma: Vec<f64> = grid.points().iter().map(|x| x.cos()).collect();
        let mut gamma_hat = vec![Complex::new(0.0, 0.0); m];
        grid.to_spectrum(&gamma, &mut gamma_hat);
        let lap: Vec<f64> = (0..m).map(|k| (grid.symbol(k) * grid.symbol(k)).re).collect();
        let explicit = lap.iter().map(|l| 1.0 + 0.5 * h * params.nu * l).collect();
        let implicit_inv = lap.iter().map(|l| 1.0 / (1.0 - 0.5 * h * params.nu * l)).collect();
        Ok(BurgersSolver {
            grid,
            params,
            h,
            gamma_hat,
            explicit,
            implicit_inv,
            tolerance: h * h / 100.0,
        })
    }

    pub fn grid(&self) -> &FourierGrid {
        &self.grid
    }

    pub fn initial_condition(&self) -> Vec<f64> {
        self.params.initial_condition(self.grid.points())
    }

    /// Advances `u` by one step with driving value `y`.
    pub fn step(&self, u: &[f64], y: f64) -> Result<BurgersStep> {
        let m = self.grid.len();
        let h = self.h;
        let mut base = vec![Complex::new(0.0, 0.0); m];
        self.grid.to_spectrum(u, &mut base);
        let noise = self.params.sigma * h.sqrt() * y;
        for ((b, e), g) in base.iter_mut().zip(&self.explicit).zip(&self.gamma_hat) {
            *b = *b * e + g * noise;
        }

        let mut v = u.to_vec();
        let mut next = vec![0.0; m];
        let mut work = vec![Complex::new(0.0, 0.0); m];
        let mut sq = vec![0.0; m];
        let mut residual = f64::INFINITY;
        for it in 1..=MAX_FIXED_POINT_ITERATIONS {
            for ((s, a), b) in sq.iter_mut().zip(&v).zip(u) {
                let w = 0.5 * (a + b);
                *s = w * w;
            }
            self.grid.to_spectrum(&sq, &mut work);
            for k in 0..m {
                work[k] = (base[k] - self.grid.symbol(k) * work[k] * (0.5 * h)) * self.implicit_inv[k];
            }
            self.grid.spectrum_to_grid(&mut work, &mut next);
            residual = next
                .iter()
                .zip(&v)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            std::mem::swap(&mut v, &mut next);
            if !residual.is_finite() {
                break;
            }
            if residual < self.tolerance {
                return Ok(BurgersStep {
                    field: v,
                    iterations: it,
                });
            }
        }
        Err(Error::FixedPointDivergence {
            iterations: MAX_FIXED_POINT_ITERATIONS,
            residual,
        })
    }

    /// Runs `y.len()` steps from the initial condition, clipping each
    /// driving value at the Gaussian cutoff.
    pub fn trajectory(&self, y: &[f64]) -> Result<Vec<f64>> {
        let mut u = self.initial_condition();
        for &yj in y {
            u = self.step(&u, clip_gaussian(yj, self.h, 1.0))?.field;
        }
        Ok(u)
    }
}

/// How moments are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MomentMode {
    Sgc { level: usize },
    Mc { samples: usize, seed: u64 },
}

impl std::str::FromStr for MomentMode {
    type Err = Error;

    /// `sgc:L` or `mc:N:seed`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::Parse(format!("mode '{s}' must be sgc:L or mc:N:seed"));
        match parts.as_slice() {
            ["sgc", l] => Ok(MomentMode::Sgc {
                level: l.parse().map_err(|_| bad())?,
            }),
            ["mc", n, seed] => Ok(MomentMode::Mc {
                samples: n.parse().map_err(|_| bad())?,
                seed: seed.parse().map_err(|_| bad())?,
            }),
            _ => Err(bad()),
        }
    }
}

/// Pointwise first and second moments on the collocation grid, with 95%
/// half-widths for Monte Carlo runs.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldMoments {
    pub points: Vec<f64>,
    pub mean: Vec<f64>,
    pub second: Vec<f64>,
    pub mean_ci: Option<Vec<f64>>,
    pub second_ci: Option<Vec<f64>>,
}

/// `E u(T, x_m)` and `E u^2(T, x_m)` for the stochastic Burgers equation.
pub fn burgers_moments(params: BurgersParams, t: f64, h: f64, m: usize, mode: MomentMode) -> Result<FieldMoments> {
    let solver = BurgersSolver::new(params, m, h)?;
    let steps = step_count(t, h)?;
    let points = solver.grid().points().to_vec();
    let integrand = |y: &[f64], out: &mut [f64]| -> Result<()> {
        let u = solver.trajectory(y)?;
        let (a, b) = out.split_at_mut(m);
        a.copy_from_slice(&u);
        for (s, v) in b.iter_mut().zip(&u) {
            *s = v * v;
        }
        Ok(())
    };
    match mode {
        MomentMode::Sgc { level } => {
            if steps > MAX_SGC_DIMENSION {
                return Err(Error::ResourceLimit {
                    projected: steps as u128,
                    cap: MAX_SGC_DIMENSION as u128,
                });
            }
            let sums = if steps == 0 {
                let mut out = vec![0.0; 2 * m];
                integrand(&[], &mut out)?;
                out
            } else {
                let grid = build_sparse_grid(level, steps)?;
                debug_assert_eq!(grid.dim(), steps);
                integrate_vec(&grid, 2 * m, integrand)?
            };
            let (mean, second) = sums.split_at(m);
            Ok(FieldMoments {
                points,
                mean: mean.to_vec(),
                second: second.to_vec(),
                mean_ci: None,
                second_ci: None,
            })
        }
        MomentMode::Mc { samples, seed } => {
            if samples < 2 {
                return Err(Error::Configuration(format!(
                    "Monte Carlo needs at least 2 samples (got {samples})"
                )));
            }
            let stats = blocked_moments(samples, 2 * m, || vec![0.0; steps], |y, i, out| {
                let mut rng = sample_rng(seed, i as u64);
                for v in y.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
                integrand(y, out)
            })?;
            let ci: Vec<f64> = stats
                .variance
                .iter()
                .map(|v| CI_MULTIPLIER * (v / samples as f64).sqrt())
                .collect();
            Ok(FieldMoments {
                points,
                mean: stats.mean[..m].to_vec(),
                second: stats.mean[m..].to_vec(),
                mean_ci: Some(ci[..m].to_vec()),
                second_ci: Some(ci[m..].to_vec()),
            })
        }
    }
}

/// Advection–diffusion coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdvDiffParams {
    pub eps: f64,
    pub sigma: f64,
    pub beta: f64,
}

/// Collocation operators of the advection–diffusion equation on `(0, 2 pi)`:
/// `A~ = (eps^2/2) D^2 + beta diag(sin x) D` (the drift with the Itô
/// correction removed) and `B = sigma D`.
#[derive(Debug, Clone)]
pub struct AdvDiffOperators {
    points: Vec<f64>,
    a_tilde: DMatrix<f64>,
    b: DMatrix<f64>,
}

impl AdvDiffOperators {
    pub fn new(params: AdvDiffParams, m: usize) -> Result<Self> {
        let d = fourier_diff_matrix(m, 2.0 * PI)?;
        let points = grid_points(m, 2.0 * PI);
        let d2 = &d * &d;
        let mut adv = d.clone();
        for (i, x) in points.iter().enumerate() {
            adv.row_mut(i).scale_mut(params.beta * x.sin());
        }
        let a_tilde = d2 * (0.5 * params.eps * params.eps) + adv;
        let b = d * params.sigma;
        Ok(AdvDiffOperators { points, a_tilde, b })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn lhs_rhs(&self, h: f64, y: f64) -> (DMatrix<f64>, DMatrix<f64>) {
        let m = self.len();
        let step = &self.a_tilde * (0.5 * h) + &self.b * (0.5 * h.sqrt() * y);
        let id = DMatrix::<f64>::identity(m, m);
        (&id - &step, id + step)
    }

    /// `(I - h/2 A~ - sqrt(h) y/2 B)^{-1} (I + h/2 A~ + sqrt(h) y/2 B)`.
    pub fn propagator(&self, h: f64, y: f64) -> Result<DMatrix<f64>> {
        let (lhs, rhs) = self.lhs_rhs(h, y);
        let sol = lhs.lu().solve(&rhs).ok_or(Error::Solver { y, h })?;
        if sol.iter().any(|v| !v.is_finite()) {
            return Err(Error::Solver { y, h });
        }
        Ok(sol)
    }

    /// One step from zero initial data with forcing `f` and noise source `g`:
    /// `(I - h/2 A~ - sqrt(h) y/2 B) u = h (f - B g / 2) + sqrt(h) y g`.
    pub fn inhomogeneous(&self, h: f64, y: f64, f: &[f64], g: &[f64]) -> Result<Vec<f64>> {
        let m = self.len();
        if f.len() != m || g.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "forcing fields must have {m} points"
            )));
        }
        let (lhs, _) = self.lhs_rhs(h, y);
        let gv = DVector::from_column_slice(g);
        let bg = &self.b * &gv;
        let rhs = DVector::from_fn(m, |i, _| h * (f[i] - 0.5 * bg[i]) + h.sqrt() * y * g[i]);
        let sol = lhs.lu().solve(&rhs).ok_or(Error::Solver { y, h })?;
        if sol.iter().any(|v| !v.is_finite()) {
            return Err(Error::Solver { y, h });
        }
        Ok(sol.iter().copied().collect())
    }
}

/// Convenience wrapper building the operators for a single propagator.
pub fn advdiff_propagator(params: AdvDiffParams, m: usize, h: f64, y: f64) -> Result<DMatrix<f64>> {
    if !(h > 0.0) {
        return Err(Error::Configuration(format!("step must be positive (got {h})")));
    }
    AdvDiffOperators::new(params, m)?.propagator(h, y)
}

/// `((2 pi / M) sum_m v_m^2)^{1/2}`.
pub fn l2_norm(v: &[f64]) -> f64 {
    (2.0 * PI / v.len() as f64 * v.iter().map(|x| x * x).sum::<f64>()).sqrt()
}

pub fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// Relative discrete-`L^2` and max-norm errors of the first two moments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldErrors {
    pub rho1_l2: f64,
    pub rho2_l2: f64,
    pub rho1_max: f64,
    pub rho2_max: f64,
}

pub fn field_error_norms(
    ref_mean: &[f64],
    ref_second: &[f64],
    est_mean: &[f64],
    est_second: &[f64],
) -> Result<FieldErrors> {
    let m = ref_mean.len();
    if [ref_second.len(), est_mean.len(), est_second.len()].iter().any(|&l| l != m) {
        return Err(Error::DimensionMismatch("fields are on different grids".into()));
    }
    let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>();
    let rel = |num: f64, den: f64| {
        if den == 0.0 {
            Err(Error::DegenerateReference("reference field has zero norm".into()))
        } else {
            Ok(num / den)
        }
    };
    let d1 = diff(ref_mean, est_mean);
    let d2 = diff(ref_second, est_second);
    Ok(FieldErrors {
        rho1_l2: rel(l2_norm(&d1), l2_norm(ref_mean))?,
        rho2_l2: rel(l2_norm(&d2), l2_norm(ref_second))?,
        rho1_max: rel(max_norm(&d1), max_norm(ref_mean))?,
        rho2_max: rel(max_norm(&d2), max_norm(ref_second))?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(m: usize, f: impl Fn(f64) -> f64) -> DVector<f64> {
        DVector::from_iterator(m, grid_points(m, 2.0 * PI).into_iter().map(f))
    }

    #[test]
    fn diff_matrix_on_trig_functions() {
        let d = fourier_diff_matrix(100, 2.0 * PI).unwrap();
        let err = (&d * sample(100, f64::sin) - sample(100, f64::cos)).amax();
        assert!(err < 1e-9, "{err}");
        let err = (&d * sample(100, |x| (3.0 * x).sin()) - sample(100, |x| 3.0 * (3.0 * x).cos())).amax();
        assert!(err < 1e-9, "{err}");
        let err = (&d * DVector::from_element(100, 1.0)).amax();
        assert!(err < 1e-10);
    }

    #[test]
    fn diff_matrix_respects_period() {
        let l = 3.0;
        let d = fourier_diff_matrix(32, l).unwrap();
        let k = 2.0 * PI / l;
        let pts = grid_points(32, l);
        let v = DVector::from_iterator(32, pts.iter().map(|x| (2.0 * k * x).sin()));
        let want = DVector::from_iterator(32, pts.iter().map(|x| 2.0 * k * (2.0 * k * x).cos()));
        assert!((&d * v - want).amax() < 1e-9);
    }

    #[test]
    fn invalid_grids() {
        assert!(matches!(fourier_diff_matrix(7, 1.0), Err(Error::InvalidGrid(_))));
        assert!(matches!(fourier_diff_matrix(2, 1.0), Err(Error::InvalidGrid(_))));
        assert!(matches!(fourier_diff_matrix(514, 1.0), Err(Error::InvalidGrid(_))));
    }

    #[test]
    fn fft_derivative_matches_matrix() {
        for m in [4, 16, 30, 100] {
            let d = fourier_diff_matrix(m, 2.0 * PI).unwrap();
            let grid = FourierGrid::new(m, 2.0 * PI).unwrap();
            let v: Vec<f64> = (0..m).map(|k| ((k * 37 % 11) as f64 - 5.0) * 0.1).collect();
            let dense = &d * DVector::from_column_slice(&v);
            let fft = grid.differentiate(&v);
            for (a, b) in dense.iter().zip(&fft) {
                assert!((a - b).abs() < 1e-12, "m={m}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn gaussian_cutoff() {
        assert_eq!(clip_gaussian(0.0, 0.1, 1.0), 0.0);
        let h = (-2.0f64).exp();
        assert!((cutoff(h, 1.0) - 2.0).abs() < 1e-15);
        assert!((clip_gaussian(3.0, h, 1.0) - 2.0).abs() < 1e-15);
        assert!((clip_gaussian(-3.0, h, 1.0) + 2.0).abs() < 1e-15);
        assert_eq!(clip_gaussian(1.5, h, 1.0), 1.5);
    }

    #[test]
    fn step_counts() {
        assert_eq!(step_count(0.5, 0.25).unwrap(), 2);
        assert_eq!(step_count(5.0, 5e-4).unwrap(), 10_000);
        assert_eq!(step_count(0.0, 0.1).unwrap(), 0);
        assert!(step_count(1.0, 0.3).is_err());
    }

    /// The same fixed-point iteration written with the dense matrix `D`.
    fn dense_step(p: BurgersParams, m: usize, h: f64, u: &[f64], y: f64) -> Vec<f64> {
        let d = fourier_diff_matrix(m, p.period).unwrap();
        let d2 = &d * &d;
        let id = DMatrix::<f64>::identity(m, m);
        let lhs = (&id - &d2 * (0.5 * h * p.nu)).lu();
        let uj = DVector::from_column_slice(u);
        let gamma = DVector::from_iterator(m, grid_points(m, p.period).into_iter().map(f64::cos));
        let base = (&id + &d2 * (0.5 * h * p.nu)) * &uj + gamma * (p.sigma * h.sqrt() * y);
        let mut v = uj.clone();
        for _ in 0..MAX_FIXED_POINT_ITERATIONS {
            let w = (&v + &uj).map(|z| 0.25 * z * z);
            let next = lhs.solve(&(&base - &d * w * (0.5 * h))).unwrap();
            let diff = (&next - &v).amax();
            v = next;
            if diff < h * h / 100.0 {
                break;
            }
        }
        v.iter().copied().collect()
    }

    #[test]
    fn burgers_fft_step_matches_dense_route() {
        let p = BurgersParams::new(0.1, 1.0);
        let solver = BurgersSolver::new(p, 32, 0.1).unwrap();
        let u0 = solver.initial_condition();
        let fast = solver.step(&u0, 0.7).unwrap().field;
        let slow = dense_step(p, 32, 0.1, &u0, 0.7);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn burgers_zero_is_a_fixed_point() {
        let solver = BurgersSolver::new(BurgersParams::new(1.0, 0.0), 16, 0.25).unwrap();
        let out = solver.step(&[0.0; 16], 1.3).unwrap();
        assert!(out.field.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn burgers_linear_part_is_exact_heat_update() {
        // At amplitude 1e-9 the quadratic term is below 1e-18, so the step
        // reduces to the trapezoidal heat update on the cos(2x) mode.
        let p = BurgersParams::new(0.3, 0.0);
        let h = 0.1;
        let solver = BurgersSolver::new(p, 32, h).unwrap();
        let amp = 1e-9;
        let u: Vec<f64> = solver.grid().points().iter().map(|x| amp * (2.0 * x).cos()).collect();
        let next = solver.step(&u, 0.0).unwrap().field;
        let g = (1.0 - 0.5 * h * p.nu * 4.0) / (1.0 + 0.5 * h * p.nu * 4.0);
        for (a, b) in next.iter().zip(&u) {
            assert!((a - g * b).abs() < 1e-10 * amp, "{a} vs {}", g * b);
        }
    }

    #[test]
    fn burgers_local_error_is_third_order() {
        // Reference: the same semi-discretization integrated by classical RK4
        // with a much smaller step.
        let p = BurgersParams::new(1.0, 0.0);
        let m = 32;
        let grid = FourierGrid::new(m, p.period).unwrap();
        let rhs = |u: &[f64]| -> Vec<f64> {
            let uxx = grid.differentiate(&grid.differentiate(u));
            let sq: Vec<f64> = u.iter().map(|v| v * v).collect();
            let flux = grid.differentiate(&sq);
            uxx.iter().zip(&flux).map(|(a, b)| p.nu * a - 0.5 * b).collect()
        };
        let rk4 = |u0: &[f64], t: f64, n: usize| {
            let dt = t / n as f64;
            let mut u = u0.to_vec();
            let axpy = |u: &[f64], k: &[f64], s: f64| u.iter().zip(k).map(|(a, b)| a + s * b).collect::<Vec<_>>();
            for _ in 0..n {
                let k1 = rhs(&u);
                let k2 = rhs(&axpy(&u, &k1, dt / 2.0));
                let k3 = rhs(&axpy(&u, &k2, dt / 2.0));
                let k4 = rhs(&axpy(&u, &k3, dt));
                for i in 0..u.len() {
                    u[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
            }
            u
        };
        let u0 = p.initial_condition(grid.points());
        let local = |h: f64| {
            let solver = BurgersSolver::new(p, m, h).unwrap();
            let one = solver.step(&u0, 0.0).unwrap().field;
            let exact = rk4(&u0, h, 2000);
            max_norm(&one.iter().zip(&exact).map(|(a, b)| a - b).collect::<Vec<_>>())
        };
        let e1 = local(0.02);
        let e2 = local(0.01);
        let order = (e1 / e2).log2();
        assert!((order - 3.0).abs() < 0.35, "local order {order} ({e1}, {e2})");
    }

    #[test]
    fn burgers_iteration_count_is_modest() {
        let p = BurgersParams::new(1.0, 0.5);
        for &h in &[0.25, 0.1, 0.05] {
            let solver = BurgersSolver::new(p, 100, h).unwrap();
            let u0 = solver.initial_condition();
            for y in [-1.7, 0.0, 1.0, 1.7] {
                assert!(solver.step(&u0, y).unwrap().iterations < 50);
            }
        }
    }

    #[test]
    fn burgers_deterministic_moments() {
        let p = BurgersParams::new(1.0, 0.0);
        let out = burgers_moments(p, 0.5, 0.25, 32, MomentMode::Sgc { level: 2 }).unwrap();
        for (m, s) in out.mean.iter().zip(&out.second) {
            assert!((m * m - s).abs() < 1e-12);
        }
        let zero = burgers_moments(p, 0.0, 0.25, 32, MomentMode::Mc { samples: 4, seed: 1 }).unwrap();
        assert_eq!(zero.mean, p.initial_condition(&grid_points(32, p.period)));
    }

    #[test]
    fn burgers_sgc_dimension_limit() {
        let p = BurgersParams::new(1.0, 0.5);
        assert!(matches!(
            burgers_moments(p, 0.5, 0.01, 16, MomentMode::Sgc { level: 2 }),
            Err(Error::ResourceLimit { projected: 50, cap: 40 })
        ));
    }

    #[test]
    fn burgers_deterministic_self_convergence() {
        let p = BurgersParams::new(1.0, 0.0);
        let mean = |h: f64| {
            let solver = BurgersSolver::new(p, 32, h).unwrap();
            solver.trajectory(&vec![0.0; step_count(0.5, h).unwrap()]).unwrap()
        };
        let reference = mean(0.5 / 256.0);
        let errs: Vec<f64> = [8.0, 16.0, 32.0, 64.0]
            .iter()
            .map(|n| {
                let v = mean(0.5 / n);
                l2_norm(&v.iter().zip(&reference).map(|(a, b)| a - b).collect::<Vec<_>>())
            })
            .collect();
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!((order - 2.0).abs() < 0.2, "order {order}: {errs:?}");
        }
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("sgc:3".parse::<MomentMode>().unwrap(), MomentMode::Sgc { level: 3 });
        assert_eq!(
            "mc:100:7".parse::<MomentMode>().unwrap(),
            MomentMode::Mc { samples: 100, seed: 7 }
        );
        assert!("mc:100".parse::<MomentMode>().is_err());
    }

    #[test]
    fn advdiff_cos_mode_eigenvalue() {
        let params = AdvDiffParams { eps: 0.2, sigma: 0.7, beta: 0.0 };
        let h = 0.1;
        let p = advdiff_propagator(params, 32, h, 0.0).unwrap();
        let c = sample(32, f64::cos);
        let g = (1.0 - 0.04 * h / 4.0) / (1.0 + 0.04 * h / 4.0);
        assert!((&p * &c - &c * g).amax() < 1e-10);
        let ones = DVector::from_element(32, 1.0);
        let p = advdiff_propagator(params, 32, 0.37, 1.4).unwrap();
        assert!((&p * &ones - &ones).amax() < 1e-10);
    }

    #[test]
    fn advdiff_translation_invariance_without_advection() {
        let params = AdvDiffParams { eps: 0.3, sigma: 0.5, beta: 0.0 };
        let m = 16;
        let p = advdiff_propagator(params, m, 0.05, 0.8).unwrap();
        for i in 0..m {
            for j in 0..m {
                assert!((p[(i, j)] - p[((i + 1) % m, (j + 1) % m)]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn advdiff_inhomogeneous_vanishes_without_sources() {
        let ops = AdvDiffOperators::new(AdvDiffParams { eps: 0.2, sigma: 0.5, beta: 0.1 }, 16).unwrap();
        let u = ops.inhomogeneous(0.1, 1.2, &[0.0; 16], &[0.0; 16]).unwrap();
        assert!(u.iter().all(|&v| v == 0.0));
    }

    proptest! {
        #[test]
        fn advdiff_propagator_is_linear(
            u in proptest::collection::vec(-1.0f64..1.0, 16),
            v in proptest::collection::vec(-1.0f64..1.0, 16),
            alpha in -3.0f64..3.0,
            y in -2.0f64..2.0,
        ) {
            let p = advdiff_propagator(AdvDiffParams { eps: 0.2, sigma: 0.5, beta: 0.1 }, 16, 0.05, y).unwrap();
            let u = DVector::from_vec(u);
            let v = DVector::from_vec(v);
            let lhs = &p * (&u * alpha + &v);
            let rhs = (&p * &u) * alpha + &p * &v;
            prop_assert!((lhs - rhs).amax() < 1e-11);
        }
    }

    #[test]
    fn error_norms() {
        let r = field_error_norms(&[1.0; 4], &[2.0; 4], &[1.0; 4], &[2.0; 4]).unwrap();
        assert_eq!(r, FieldErrors { rho1_l2: 0.0, rho2_l2: 0.0, rho1_max: 0.0, rho2_max: 0.0 });
        let r = field_error_norms(&[1.0; 4], &[1.0; 4], &[1.01; 4], &[1.01; 4]).unwrap();
        for v in [r.rho1_l2, r.rho2_l2, r.rho1_max, r.rho2_max] {
            assert!((v - 0.01).abs() < 1e-12);
        }
        assert!(matches!(
            field_error_norms(&[0.0; 4], &[1.0; 4], &[1.0; 4], &[1.0; 4]),
            Err(Error::DegenerateReference(_))
        ));
        assert!((l2_norm(&[1.0; 8]) - (2.0 * PI).sqrt()).abs() < 1e-14);
    }
}
