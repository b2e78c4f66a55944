//! Itô SDE models and the deterministic maps from driving variables to
//! scheme endpoints.
//!
//! For a model `dX = a(t,X) dt + sum_l sigma_l(t,X) dw_l` on `R^m` with `r`
//! noises, an [`SchemeEndpointMap`] fixes `x0`, `t0`, the step `h` and the
//! step count `N`. The endpoint is then an ordinary function of the driving
//! variables `y`, laid out step-major and noise-minor: `y[k*r + l]` drives
//! noise `l` on step `k + 1`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative step of the central finite differences used when a model does
/// not supply analytic derivatives.
pub const FD_RELATIVE_STEP: f64 = 1e-5;

/// Drift, diffusion and (optionally) their derivatives.
///
/// Derivative callbacks return `false` when not implemented; callers then
/// fall back to central finite differences. Matrices are row-major:
/// Jacobians are `m x m` with `out[i*m + j] = d f_i / d x_j`, Hessians are
/// `m x m x m` with `out[(i*m + j)*m + k] = d^2 f_i / dx_j dx_k`.
pub trait SdeModel: Send + Sync {
    fn state_dim(&self) -> usize;
    fn noise_dim(&self) -> usize;
    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]);
    fn diffusion(&self, l: usize, t: f64, x: &[f64], out: &mut [f64]);

    fn drift_jacobian(&self, _t: f64, _x: &[f64], _out: &mut [f64]) -> bool {
        false
    }
    fn diffusion_jacobian(&self, _l: usize, _t: f64, _x: &[f64], _out: &mut [f64]) -> bool {
        false
    }
    fn drift_dt(&self, _t: f64, _x: &[f64], _out: &mut [f64]) -> bool {
        false
    }
    fn diffusion_dt(&self, _l: usize, _t: f64, _x: &[f64], _out: &mut [f64]) -> bool {
        false
    }
    fn drift_hessian(&self, _t: f64, _x: &[f64], _out: &mut [f64]) -> bool {
        false
    }
    fn diffusion_hessian(&self, _l: usize, _t: f64, _x: &[f64], _out: &mut [f64]) -> bool {
        false
    }
}

/// `dX = lambda X dt + eps dw`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearSde {
    pub lambda: f64,
    pub eps: f64,
}

impl SdeModel for LinearSde {
    fn state_dim(&self) -> usize {
        1
    }
    fn noise_dim(&self) -> usize {
        1
    }
    fn drift(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        out[0] = self.lambda * x[0];
    }
    fn diffusion(&self, _l: usize, _t: f64, _x: &[f64], out: &mut [f64]) {
        out[0] = self.eps;
    }
    fn drift_jacobian(&self, _t: f64, _x: &[f64], out: &mut [f64]) -> bool {
        out[0] = self.lambda;
        true
    }
    fn diffusion_jacobian(&self, _l: usize, _t: f64, _x: &[f64], out: &mut [f64]) -> bool {
        out[0] = 0.0;
        true
    }
    fn drift_dt(&self, _t: f64, _x: &[f64], out: &mut [f64]) -> bool {
        out[0] = 0.0;
        true
    }
    fn diffusion_dt(&self, _l: usize, _t: f64, _x: &[f64], out: &mut [f64]) -> bool {
        out[0] = 0.0;
        true
    }
    fn drift_hessian(&self, _t: f64, _x: &[f64], out: &mut [f64]) -> bool {
        out[0] = 0.0;
        true
    }
    fn diffusion_hessian(&self, _l: usize, _t: f64, _x: &[f64], out: &mut [f64]) -> bool {
        out[0] = 0.0;
        true
    }
}

/// Modified Cox–Ingersoll–Ross: `dX = -theta1 X dt + theta2 sqrt(1 + X^2) dw`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mcir {
    pub theta1: f64,
    pub theta2: f64,
}

impl SdeModel for Mcir {
    fn state_dim(&self) -> usize {
        1
    }
    fn noise_dim(&self) -> usize {
        1
    }
    fn drift(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        out[0] = -self.theta1 * x[0];
    }
    fn diffusion(&self, _l: usize, _t: f64, x: &[f64], out: &mut [f64]) {
        out[0] = self.theta2 * (1.0 + x[0] * x[0]).sqrt();
    }
    fn drift_jacobian(&self, _t: f64, _x: &[f64], out: &mut [f64]) -> bool {
        out[0] = -self.theta1;
        true
    }
    fn diffusion_jacobian(&self, _l: usize, _t: f64, x: &[f64], out: &mut [f64]) -> bool {
        out[0] = self.theta2 * x[0] / (1.0 + x[0] * x[0]).sqrt();
        true
    }
    fn drift_dt(&self, _t: f64, _x: &[f64], out: &mut [f64]) -> bool {
        out[0] = 0.0;
        true
    }
    fn diffusion_dt(&self, _l: usize, _t: f64, _x: &[f64], out: &mut [f64]) -> bool {
        out[0] = 0.0;
        true
    }
    fn drift_hessian(&self, _t: f64, _x: &[f64], out: &mut [f64]) -> bool {
        out[0] = 0.0;
        true
    }
    fn diffusion_hessian(&self, _l: usize, _t: f64, x: &[f64], out: &mut [f64]) -> bool {
        out[0] = self.theta2 / (1.0 + x[0] * x[0]).powf(1.5);
        true
    }
}

/// Which weak scheme the endpoint map iterates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeKind {
    Euler,
    #[serde(alias = "order2")]
    SecondOrder,
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SchemeKind::Euler => write!(f, "euler"),
            SchemeKind::SecondOrder => write!(f, "order2"),
        }
    }
}

impl std::str::FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euler" => Ok(SchemeKind::Euler),
            "order2" | "second-order" | "second_order" => Ok(SchemeKind::SecondOrder),
            other => Err(Error::Parse(format!("unknown scheme '{other}'"))),
        }
    }
}

/// A scheme with fixed model, start point and time grid, viewed as a map
/// from driving variables to the endpoint `X_N`.
#[derive(Clone)]
pub struct SchemeEndpointMap {
    model: Arc<dyn SdeModel>,
    x0: Vec<f64>,
    t0: f64,
    h: f64,
    steps: usize,
    kind: SchemeKind,
    fd_fallback: bool,
}

impl fmt::Debug for SchemeEndpointMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SchemeEndpointMap")
            .field("x0", &self.x0)
            .field("t0", &self.t0)
            .field("h", &self.h)
            .field("steps", &self.steps)
            .field("kind", &self.kind)
            .finish()
    }
}

impl SchemeEndpointMap {
    pub fn new(
        model: Arc<dyn SdeModel>,
        x0: Vec<f64>,
        t0: f64,
        h: f64,
        steps: usize,
        kind: SchemeKind,
    ) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::Configuration(format!("step must be positive (got {h})")));
        }
        if x0.len() != model.state_dim() {
            return Err(Error::DimensionMismatch(format!(
                "initial state has {} components, model expects {}",
                x0.len(),
                model.state_dim()
            )));
        }
        Ok(SchemeEndpointMap {
            model,
            x0,
            t0,
            h,
            steps,
            kind,
            fd_fallback: true,
        })
    }

    /// Enables or disables the finite-difference derivative fallback.
    pub fn with_fd_fallback(mut self, enabled: bool) -> Self {
        self.fd_fallback = enabled;
        self
    }

    pub fn model(&self) -> &dyn SdeModel {
        self.model.as_ref()
    }

    pub fn kind(&self) -> SchemeKind {
        self.kind
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn step_size(&self) -> f64 {
        self.h
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    /// Number of Gaussian (`xi`) driving variables.
    pub fn xi_dim(&self) -> usize {
        self.model.noise_dim() * self.steps
    }

    /// Number of two-point (`zeta`) driving variables; nonzero only for the
    /// second-order scheme with several noises.
    pub fn zeta_dim(&self) -> usize {
        match self.kind {
            SchemeKind::SecondOrder if self.model.noise_dim() > 1 => self.xi_dim(),
            _ => 0,
        }
    }

    pub fn driving_dim(&self) -> usize {
        self.xi_dim() + self.zeta_dim()
    }

    /// Endpoint for a flat driving vector: the `xi` block followed by the
    /// `zeta` block (if any).
    pub fn endpoint(&self, y: &[f64]) -> Result<Vec<f64>> {
        match self.kind {
            SchemeKind::Euler => self.euler_endpoint(y),
            SchemeKind::SecondOrder => {
                if y.len() != self.driving_dim() {
                    return Err(self.length_error(y.len(), self.driving_dim()));
                }
                let (xi, zeta) = y.split_at(self.xi_dim());
                self.second_order_endpoint(xi, zeta)
            }
        }
    }

    fn length_error(&self, got: usize, want: usize) -> Error {
        Error::DimensionMismatch(format!("driving vector has length {got}, expected {want}"))
    }

    /// `X_{k+1} = X_k + a(t_k,X_k) h + sum_l sigma_l(t_k,X_k) sqrt(h) y_{l,k+1}`.
    pub fn euler_endpoint(&self, y: &[f64]) -> Result<Vec<f64>> {
        let r = self.model.noise_dim();
        if y.len() != r * self.steps {
            return Err(self.length_error(y.len(), r * self.steps));
        }
        let m = self.model.state_dim();
        let sqrt_h = self.h.sqrt();
        let mut x = self.x0.clone();
        let mut drift = vec![0.0; m];
        let mut sig = vec![0.0; m];
        for k in 0..self.steps {
            let t = self.t0 + k as f64 * self.h;
            self.model.drift(t, &x, &mut drift);
            let mut next: Vec<f64> = x.iter().zip(&drift).map(|(xi, ai)| xi + ai * self.h).collect();
            for l in 0..r {
                self.model.diffusion(l, t, &x, &mut sig);
                let dw = sqrt_h * y[k * r + l];
                for (n, s) in next.iter_mut().zip(&sig) {
                    *n += s * dw;
                }
            }
            if next.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence { step: k + 1 });
            }
            x = next;
        }
        Ok(x)
    }

    /// Second-order weak scheme
    ///
    /// ```text
    /// X_{k+1} = X_k + h a + sqrt(h) sum_i sigma_i xi_i + h^2/2 La
    ///         + h sum_{i,j} (Lambda_i sigma_j) eta_ij
    ///         + h^{3/2}/2 sum_i (Lambda_i a + L sigma_i) xi_i
    /// ```
    ///
    /// with `Lambda_l = sigma_l . grad`, `L = d/dt + a . grad + 1/2 sum_l
    /// sigma_l sigma_l : Hess`, and `eta_ij = xi_i xi_j / 2 - gamma_ij zeta_i
    /// zeta_j / 2` (`gamma_ij = -1` for `i < j`, else 1). With one noise,
    /// `eta_11 = (xi^2 - 1)/2` and `zeta` must be empty.
    pub fn second_order_endpoint(&self, xi: &[f64], zeta: &[f64]) -> Result<Vec<f64>> {
        let r = self.model.noise_dim();
        let m = self.model.state_dim();
        if xi.len() != r * self.steps {
            return Err(self.length_error(xi.len(), r * self.steps));
        }
        let zeta_len = if r > 1 { r * self.steps } else { 0 };
        if zeta.len() != zeta_len {
            return Err(Error::DimensionMismatch(format!(
                "zeta vector has length {}, expected {zeta_len}",
                zeta.len()
            )));
        }

        let h = self.h;
        let sqrt_h = h.sqrt();
        let h32 = h * sqrt_h;
        let mut ws = Workspace::new(m, r);
        let mut x = self.x0.clone();
        for k in 0..self.steps {
            let t = self.t0 + k as f64 * h;
            self.load_derivatives(t, &x, &mut ws)?;

            let mut next = x.clone();
            let la = ws.generator(&ws.a, &ws.a_jac, &ws.a_dt, &ws.a_hess);
            for i in 0..m {
                next[i] += h * ws.a[i] + 0.5 * h * h * la[i];
            }
            for i in 0..r {
                let xi_i = xi[k * r + i];
                let lambda_a = matvec(&ws.a_jac, &ws.sigma[i], m);
                let l_sigma = ws.generator(&ws.sigma[i], &ws.sigma_jac[i], &ws.sigma_dt[i], &ws.sigma_hess[i]);
                for c in 0..m {
                    next[c] += sqrt_h * ws.sigma[i][c] * xi_i + 0.5 * h32 * (lambda_a[c] + l_sigma[c]) * xi_i;
                }
                for j in 0..r {
                    let eta = if r == 1 {
                        0.5 * (xi_i * xi_i - 1.0)
                    } else {
                        let gamma = if i < j { -1.0 } else { 1.0 };
                        0.5 * xi_i * xi[k * r + j] - 0.5 * gamma * zeta[k * r + i] * zeta[k * r + j]
                    };
                    // Lambda_i sigma_j = J_{sigma_j} sigma_i
                    let ls = matvec(&ws.sigma_jac[j], &ws.sigma[i], m);
                    for c in 0..m {
                        next[c] += h * ls[c] * eta;
                    }
                }
            }
            if next.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence { step: k + 1 });
            }
            x = next;
        }
        Ok(x)
    }

    fn load_derivatives(&self, t: f64, x: &[f64], ws: &mut Workspace) -> Result<()> {
        let model = self.model.as_ref();
        let fd = self.fd_fallback;
        model.drift(t, x, &mut ws.a);
        let drift = |t: f64, x: &[f64], out: &mut [f64]| model.drift(t, x, out);
        derivative_or_fd(model.drift_jacobian(t, x, &mut ws.a_jac), fd, "drift jacobian", || {
            fd_jacobian(&drift, t, x, &mut ws.a_jac)
        })?;
        derivative_or_fd(model.drift_dt(t, x, &mut ws.a_dt), fd, "drift time derivative", || {
            fd_time(&drift, t, x, &mut ws.a_dt)
        })?;
        derivative_or_fd(model.drift_hessian(t, x, &mut ws.a_hess), fd, "drift hessian", || {
            fd_hessian(&drift, t, x, &mut ws.a_hess)
        })?;
        for l in 0..ws.r {
            model.diffusion(l, t, x, &mut ws.sigma[l]);
            let diff = |t: f64, x: &[f64], out: &mut [f64]| model.diffusion(l, t, x, out);
            derivative_or_fd(
                model.diffusion_jacobian(l, t, x, &mut ws.sigma_jac[l]),
                fd,
                "diffusion jacobian",
                || fd_jacobian(&diff, t, x, &mut ws.sigma_jac[l]),
            )?;
            derivative_or_fd(
                model.diffusion_dt(l, t, x, &mut ws.sigma_dt[l]),
                fd,
                "diffusion time derivative",
                || fd_time(&diff, t, x, &mut ws.sigma_dt[l]),
            )?;
            derivative_or_fd(
                model.diffusion_hessian(l, t, x, &mut ws.sigma_hess[l]),
                fd,
                "diffusion hessian",
                || fd_hessian(&diff, t, x, &mut ws.sigma_hess[l]),
            )?;
        }
        Ok(())
    }
}

fn derivative_or_fd<F: FnOnce()>(provided: bool, fd: bool, what: &str, fallback: F) -> Result<()> {
    if provided {
        return Ok(());
    }
    if !fd {
        return Err(Error::Configuration(format!(
            "model provides no {what} and the finite-difference fallback is disabled"
        )));
    }
    fallback();
    Ok(())
}

struct Workspace {
    m: usize,
    r: usize,
    a: Vec<f64>,
    a_jac: Vec<f64>,
    a_dt: Vec<f64>,
    a_hess: Vec<f64>,
    sigma: Vec<Vec<f64>>,
    sigma_jac: Vec<Vec<f64>>,
    sigma_dt: Vec<Vec<f64>>,
    sigma_hess: Vec<Vec<f64>>,
}

impl Workspace {
    fn new(m: usize, r: usize) -> Self {
        Workspace {
            m,
            r,
            a: vec![0.0; m],
            a_jac: vec![0.0; m * m],
            a_dt: vec![0.0; m],
            a_hess: vec![0.0; m * m * m],
            sigma: vec![vec![0.0; m]; r],
            sigma_jac: vec![vec![0.0; m * m]; r],
            sigma_dt: vec![vec![0.0; m]; r],
            sigma_hess: vec![vec![0.0; m * m * m]; r],
        }
    }

    /// `L g = dg/dt + J_g a + 1/2 sum_l sum_{j,k} sigma_l^j sigma_l^k d^2 g / dx_j dx_k`.
    fn generator(&self, _g: &[f64], jac: &[f64], dt: &[f64], hess: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut out = matvec(jac, &self.a, m);
        for i in 0..m {
            out[i] += dt[i];
            let mut second = 0.0;
            for s in &self.sigma {
                for j in 0..m {
                    for k in 0..m {
                        second += s[j] * s[k] * hess[(i * m + j) * m + k];
                    }
                }
            }
            out[i] += 0.5 * second;
        }
        out
    }
}

fn matvec(mat: &[f64], v: &[f64], m: usize) -> Vec<f64> {
    (0..m)
        .map(|i| (0..m).map(|j| mat[i * m + j] * v[j]).sum())
        .collect()
}

fn fd_step(x: f64) -> f64 {
    FD_RELATIVE_STEP * x.abs().max(1.0)
}

fn fd_jacobian<F: Fn(f64, &[f64], &mut [f64])>(f: &F, t: f64, x: &[f64], out: &mut [f64]) {
    let m = x.len();
    let mut xp = x.to_vec();
    let mut fp = vec![0.0; m];
    let mut fm = vec![0.0; m];
    for j in 0..m {
        let step = fd_step(x[j]);
        xp[j] = x[j] + step;
        f(t, &xp, &mut fp);
        xp[j] = x[j] - step;
        f(t, &xp, &mut fm);
        xp[j] = x[j];
        for i in 0..m {
            out[i * m + j] = (fp[i] - fm[i]) / (2.0 * step);
        }
    }
}

fn fd_time<F: Fn(f64, &[f64], &mut [f64])>(f: &F, t: f64, x: &[f64], out: &mut [f64]) {
    let m = x.len();
    let step = fd_step(t);
    let mut fp = vec![0.0; m];
    let mut fm = vec![0.0; m];
    f(t + step, x, &mut fp);
    f(t - step, x, &mut fm);
    for i in 0..m {
        out[i] = (fp[i] - fm[i]) / (2.0 * step);
    }
}

fn fd_hessian<F: Fn(f64, &[f64], &mut [f64])>(f: &F, t: f64, x: &[f64], out: &mut [f64]) {
    let m = x.len();
    let mut f0 = vec![0.0; m];
    f(t, x, &mut f0);
    let mut xp = x.to_vec();
    let mut buf = [vec![0.0; m], vec![0.0; m], vec![0.0; m], vec![0.0; m]];
    for j in 0..m {
        let hj = fd_step(x[j]);
        for k in j..m {
            let hk = fd_step(x[k]);
            if j == k {
                xp[j] = x[j] + hj;
                f(t, &xp, &mut buf[0]);
                xp[j] = x[j] - hj;
                f(t, &xp, &mut buf[1]);
                xp[j] = x[j];
                for i in 0..m {
                    out[(i * m + j) * m + j] = (buf[0][i] - 2.0 * f0[i] + buf[1][i]) / (hj * hj);
                }
            } else {
                let corners = [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)];
                for (c, (sj, sk)) in corners.iter().enumerate() {
                    xp[j] = x[j] + sj * hj;
                    xp[k] = x[k] + sk * hk;
                    f(t, &xp, &mut buf[c]);
                }
                xp[j] = x[j];
                xp[k] = x[k];
                for i in 0..m {
                    let v = (buf[0][i] - buf[1][i] - buf[2][i] + buf[3][i]) / (4.0 * hj * hk);
                    out[(i * m + j) * m + k] = v;
                    out[(i * m + k) * m + j] = v;
                }
            }
        }
    }
}

/// Exact first and second moments of the mCIR solution at time `t`.
pub fn mcir_exact_moments(x0: f64, theta1: f64, theta2: f64, t: f64) -> Result<(f64, f64)> {
    let k = theta2 * theta2 - 2.0 * theta1;
    if k == 0.0 {
        return Err(Error::DegenerateParameters(
            "theta2^2 - 2 theta1 = 0 has no closed-form second moment here".into(),
        ));
    }
    let s = theta2 * theta2 / k;
    Ok((x0 * (-theta1 * t).exp(), -s + (x0 * x0 + s) * (k * t).exp()))
}

/// Exact first and second moments of `dX = lambda X dt + eps dw`, `X(0) = x0`.
pub fn linear_exact_moments(x0: f64, lambda: f64, eps: f64, t: f64) -> (f64, f64) {
    let mean = x0 * (lambda * t).exp();
    let var = if lambda == 0.0 {
        eps * eps * t
    } else {
        eps * eps * ((2.0 * lambda * t).exp() - 1.0) / (2.0 * lambda)
    };
    (mean, mean * mean + var)
}

/// Moments `E X_N^p`, `p <= 4`, of the Euler endpoint of the linear model
/// started at 1 with Gaussian increments. The endpoint is Gaussian with mean
/// `(1+lambda h)^N` and variance `eps^2 h sum_j (1+lambda h)^{2(N-j)}`.
pub fn linear_euler_moment_oracle(lambda: f64, eps: f64, h: f64, steps: usize, p: u32) -> Result<f64> {
    let q = 1.0 + lambda * h;
    let mean = q.powi(steps as i32);
    let var: f64 = eps * eps * h * (1..=steps).map(|j| q.powi(2 * (steps - j) as i32)).sum::<f64>();
    Ok(match p {
        1 => mean,
        2 => mean * mean + var,
        3 => mean.powi(3) + 3.0 * mean * var,
        4 => mean.powi(4) + 6.0 * mean * mean * var + 3.0 * var * var,
        _ => {
            return Err(Error::Configuration(format!(
                "moment oracle supports p in 1..=4 (got {p})"
            )))
        }
    })
}

/// Named model with its initial state, as used by configs and the CLI:
/// `linear(lambda,eps)` (started at 1) or `mcir(x0,theta1,theta2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum ModelSpec {
    Linear { lambda: f64, eps: f64 },
    Mcir { x0: f64, theta1: f64, theta2: f64 },
}

impl ModelSpec {
    pub fn parse(s: &str) -> Result<ModelSpec> {
        let s = s.trim();
        let open = s
            .find('(')
            .ok_or_else(|| Error::Parse(format!("model '{s}' must look like name(a,b,..)")))?;
        if !s.ends_with(')') {
            return Err(Error::Parse(format!("model '{s}' is missing ')'")));
        }
        let name = &s[..open];
        let args: Vec<f64> = s[open + 1..s.len() - 1]
            .split(',')
            .map(|a| {
                a.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("bad model argument '{a}'")))
            })
            .collect::<Result<_>>()?;
        match (name, args.as_slice()) {
            ("linear", &[lambda, eps]) => Ok(ModelSpec::Linear { lambda, eps }),
            ("mcir", &[x0, theta1, theta2]) => Ok(ModelSpec::Mcir { x0, theta1, theta2 }),
            _ => Err(Error::Parse(format!(
                "unknown model '{s}': expected linear(lambda,eps) or mcir(x0,theta1,theta2)"
            ))),
        }
    }

    pub fn model(&self) -> Arc<dyn SdeModel> {
        match *self {
            ModelSpec::Linear { lambda, eps } => Arc::new(LinearSde { lambda, eps }),
            ModelSpec::Mcir { theta1, theta2, .. } => Arc::new(Mcir { theta1, theta2 }),
        }
    }

    pub fn x0(&self) -> Vec<f64> {
        match *self {
            ModelSpec::Linear { .. } => vec![1.0],
            ModelSpec::Mcir { x0, .. } => vec![x0],
        }
    }

    /// Exact `(E X(t), E X(t)^2)` when known in closed form.
    pub fn exact_moments(&self, t: f64) -> Option<(f64, f64)> {
        match *self {
            ModelSpec::Linear { lambda, eps } => Some(linear_exact_moments(1.0, lambda, eps, t)),
            ModelSpec::Mcir { x0, theta1, theta2 } => mcir_exact_moments(x0, theta1, theta2, t).ok(),
        }
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelSpec::Linear { lambda, eps } => write!(f, "linear({lambda},{eps})"),
            ModelSpec::Mcir { x0, theta1, theta2 } => write!(f, "mcir({x0},{theta1},{theta2})"),
        }
    }
}
