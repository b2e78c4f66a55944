//! Recursive computation of the first two moments of a linear SPDE solution
//! in a truncated trigonometric basis.
//!
//! Each trapezoidal step is linear in the previous coefficients,
//! `c^k = q_O + Q_H c^{k-1}`, with `(q_O, Q_H)` depending only on the step's
//! noise value. Because the coefficients are time independent, the needed
//! expectations over the noise are computed once by quadrature, and the mean
//! vector `M` and second-moment matrix `C = E[c c^T]` are then propagated
//! without sampling.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::spectral::{clip_gaussian, grid_points, l2_norm, step_count, AdvDiffOperators, AdvDiffParams};
use crate::sparse_grid::CubatureRule;

/// Largest truncation for which the fourth-order tensor is stored densely.
pub const MAX_DENSE_LSTAR: usize = 32;

/// Trigonometric orthonormal basis of `L^2(0, 2 pi)`:
/// `e_1 = 1/sqrt(2 pi)`, `e_{2j} = cos(jx)/sqrt(pi)`, `e_{2j+1} = sin(jx)/sqrt(pi)`,
/// sampled on `M` collocation points.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsBasis {
    lstar: usize,
    points: Vec<f64>,
    /// `values[(m, l)] = e_l(x_m)`.
    values: DMatrix<f64>,
}

pub fn build_cons_basis(lstar: usize, m: usize) -> Result<ConsBasis> {
    if lstar == 0 {
        return Err(Error::Configuration("basis truncation must be at least 1".into()));
    }
    if lstar > m / 2 {
        return Err(Error::Aliasing { lstar, points: m });
    }
    let points = grid_points(m, 2.0 * PI);
    let values = DMatrix::from_fn(m, lstar, |i, l| basis_function(l, points[i]));
    Ok(ConsBasis { lstar, points, values })
}

/// `e_{l+1}(x)` (zero-based `l`).
fn basis_function(l: usize, x: f64) -> f64 {
    if l == 0 {
        return 1.0 / (2.0 * PI).sqrt();
    }
    let j = l.div_ceil(2) as f64;
    if l % 2 == 1 {
        (j * x).cos() / PI.sqrt()
    } else {
        (j * x).sin() / PI.sqrt()
    }
}

impl ConsBasis {
    pub fn lstar(&self) -> usize {
        self.lstar
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    fn quad_weight(&self) -> f64 {
        2.0 * PI / self.points.len() as f64
    }

    /// Discrete inner products `(v, e_l) = (2 pi / M) sum_m v(x_m) e_l(x_m)`.
    pub fn project(&self, field: &[f64]) -> DVector<f64> {
        self.values.tr_mul(&DVector::from_column_slice(field)) * self.quad_weight()
    }

    /// `sum_l c_l e_l(x_m)`.
    pub fn evaluate(&self, coeffs: &DVector<f64>) -> Vec<f64> {
        (&self.values * coeffs).iter().copied().collect()
    }

    /// `(2 pi / M) E^T E`, the identity for alias-free truncations.
    pub fn gram(&self) -> DMatrix<f64> {
        self.values.tr_mul(&self.values) * self.quad_weight()
    }
}

/// A linear SPDE with one noise: the advection–diffusion operators plus
/// optional forcing `f` and noise source `g` sampled on the grid.
#[derive(Debug, Clone)]
pub struct LinearSpde {
    pub params: AdvDiffParams,
    pub forcing: Option<Vec<f64>>,
    pub noise_source: Option<Vec<f64>>,
}

impl LinearSpde {
    pub fn homogeneous(params: AdvDiffParams) -> Self {
        LinearSpde {
            params,
            forcing: None,
            noise_source: None,
        }
    }

    fn is_homogeneous(&self) -> bool {
        self.forcing.is_none() && self.noise_source.is_none()
    }
}

/// One-step coefficient maps at every quadrature node.
#[derive(Debug, Clone)]
pub struct PropagatorTensors {
    /// `q_h[p][(i, l)] = (u_H(e_l; y_p), e_i)`.
    pub q_h: Vec<DMatrix<f64>>,
    /// `q_o[p][i] = (u_O(y_p), e_i)`.
    pub q_o: Vec<DVector<f64>>,
    pub weights: Vec<f64>,
}

/// Solves one trapezoidal step from each basis function (and from zero
/// data with the sources) at every node of a one-dimensional rule. Nodes
/// beyond the Gaussian cutoff `sqrt(2 |ln h|)` are clipped.
pub fn one_step_propagators<R: CubatureRule + ?Sized>(
    spde: &LinearSpde,
    basis: &ConsBasis,
    h: f64,
    rule: &R,
) -> Result<PropagatorTensors> {
    if rule.dim() != 1 {
        return Err(Error::DimensionMismatch(format!(
            "single-noise problem needs a one-dimensional rule (got dimension {})",
            rule.dim()
        )));
    }
    let m = basis.points().len();
    let ops = AdvDiffOperators::new(spde.params, m)?;
    let zeros = vec![0.0; m];
    let f = spde.forcing.as_deref().unwrap_or(&zeros);
    let g = spde.noise_source.as_deref().unwrap_or(&zeros);
    let w = basis.quad_weight();
    let mut q_h = Vec::with_capacity(rule.len());
    let mut q_o = Vec::with_capacity(rule.len());
    let mut weights = Vec::with_capacity(rule.len());
    for p in 0..rule.len() {
        let y = clip_gaussian(rule.node(p)[0], h, 1.0);
        let prop = ops.propagator(h, y)?;
        q_h.push(basis.values().tr_mul(&(&prop * basis.values())) * w);
        if spde.is_homogeneous() {
            q_o.push(DVector::zeros(basis.lstar()));
        } else {
            q_o.push(basis.project(&ops.inhomogeneous(h, y, f, g)?));
        }
        weights.push(rule.weight(p));
    }
    Ok(PropagatorTensors { q_h, q_o, weights })
}

/// Quadrature expectations of products of the one-step maps.
#[derive(Debug, Clone)]
pub struct ExpectationTensors {
    pub eqo: DVector<f64>,
    pub eqh: DMatrix<f64>,
    pub eqoqo: DMatrix<f64>,
    /// `eqoqh[l][(i, j)] = E[q_O,i q_H,jl]`.
    pub eqoqh: Vec<DMatrix<f64>>,
    /// `E[q_H,il q_H,jp]` at row `i*l* + j`, column `l*l* + p`: the map
    /// `vec(C) -> vec(E[Q C Q^T])` for row-major `vec`.
    pub eqhqh: DMatrix<f64>,
}

pub fn expectation_tensors(props: &PropagatorTensors) -> Result<ExpectationTensors> {
    let n = props
        .q_h
        .first()
        .map(|q| q.nrows())
        .ok_or_else(|| Error::Configuration("empty quadrature rule".into()))?;
    if n > MAX_DENSE_LSTAR {
        return Err(Error::ResourceLimit {
            projected: n as u128,
            cap: MAX_DENSE_LSTAR as u128,
        });
    }
    let mut t = ExpectationTensors {
        eqo: DVector::zeros(n),
        eqh: DMatrix::zeros(n, n),
        eqoqo: DMatrix::zeros(n, n),
        eqoqh: vec![DMatrix::zeros(n, n); n],
        eqhqh: DMatrix::zeros(n * n, n * n),
    };
    for ((qh, qo), &w) in props.q_h.iter().zip(&props.q_o).zip(&props.weights) {
        t.eqo.axpy(w, qo, 1.0);
        t.eqh += qh * w;
        t.eqoqo += qo * qo.transpose() * w;
        for l in 0..n {
            t.eqoqh[l] += qo * qh.column(l).transpose() * w;
        }
        t.eqhqh += qh.kronecker(qh) * w;
    }
    Ok(t)
}

/// Mean coefficients and second-moment matrix after `k` steps.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentState {
    pub k: usize,
    pub mean: DVector<f64>,
    pub second: DMatrix<f64>,
}

impl MomentState {
    /// Deterministic initial coefficients: `C = M M^T`.
    pub fn deterministic(mean: DVector<f64>) -> Self {
        let second = &mean * mean.transpose();
        MomentState { k: 0, mean, second }
    }
}

/// `M' = E q_O + E Q_H M`,
/// `C'_ij = E[q_O,i q_O,j] + sum_l M_l (E[q_O,i q_H,jl] + E[q_O,j q_H,il])
///        + sum_{l,p} C_lp E[q_H,il q_H,jp]`, then symmetrized.
pub fn recursion_step(state: &MomentState, t: &ExpectationTensors) -> Result<MomentState> {
    let n = t.eqo.len();
    if state.mean.len() != n || state.second.nrows() != n || state.second.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "state has dimension {}, tensors {n}",
            state.mean.len()
        )));
    }
    let mean = &t.eqo + &t.eqh * &state.mean;

    // Row-major vec(C) is the column-major storage of C^T = C.
    let vec_c = DVector::from_iterator(n * n, state.second.transpose().iter().copied());
    let propagated = &t.eqhqh * vec_c;
    let mut second = DMatrix::from_row_slice(n, n, propagated.as_slice()) + &t.eqoqo;
    for (l, cross) in t.eqoqh.iter().enumerate() {
        let ml = state.mean[l];
        if ml != 0.0 {
            second += (cross + cross.transpose()) * ml;
        }
    }
    let second = (&second + second.transpose()) * 0.5;
    Ok(MomentState {
        k: state.k + 1,
        mean,
        second,
    })
}

/// Final state and the per-step trace of `||E u^2(t_k, .)||`.
#[derive(Debug, Clone)]
pub struct RecursiveRun {
    pub state: MomentState,
    pub second_norm_trace: Vec<f64>,
}

/// Builds the expectation tensors once and applies [`recursion_step`]
/// `T/h` times, starting from the projection of `initial`.
pub fn run_recursive_moments<R: CubatureRule + ?Sized>(
    spde: &LinearSpde,
    basis: &ConsBasis,
    h: f64,
    t: f64,
    rule: &R,
    initial: &[f64],
) -> Result<RecursiveRun> {
    let steps = step_count(t, h)?;
    if initial.len() != basis.points().len() {
        return Err(Error::DimensionMismatch(format!(
            "initial field has {} points, basis grid has {}",
            initial.len(),
            basis.points().len()
        )));
    }
    let mut state = MomentState::deterministic(basis.project(initial));
    let mut trace = vec![l2_norm(&second_moment_field(&state, basis))];
    if steps == 0 {
        return Ok(RecursiveRun {
            state,
            second_norm_trace: trace,
        });
    }
    let tensors = expectation_tensors(&one_step_propagators(spde, basis, h, rule)?)?;
    for _ in 0..steps {
        state = recursion_step(&state, &tensors)?;
        trace.push(l2_norm(&second_moment_field(&state, basis)));
    }
    Ok(RecursiveRun {
        state,
        second_norm_trace: trace,
    })
}

/// `E u(x_m) = sum_i M_i e_i(x_m)`.
pub fn mean_field(state: &MomentState, basis: &ConsBasis) -> Vec<f64> {
    basis.evaluate(&state.mean)
}

/// `E u^2(x_m) = sum_{i,j} C_ij e_i(x_m) e_j(x_m)`.
pub fn second_moment_field(state: &MomentState, basis: &ConsBasis) -> Vec<f64> {
    let e = basis.values();
    let ec = e * &state.second;
    (0..e.nrows())
        .map(|m| ec.row(m).dot(&e.row(m)))
        .collect()
}

/// Closed-form second moment for `beta = 0` and `u(0) = cos x`:
/// `u = exp(-eps^2 t/2) cos(x + sigma w(t))`, so
/// `E u^2 = exp(-eps^2 t) (1/2 + exp(-2 sigma^2 t) cos(2x) / 2)`.
pub fn advdiff_second_moment_oracle(eps: f64, sigma: f64, t: f64, points: &[f64]) -> Vec<f64> {
    let decay = (-eps * eps * t).exp();
    let osc = (-2.0 * sigma * sigma * t).exp();
    points
        .iter()
        .map(|x| decay * (0.5 + 0.5 * osc * (2.0 * x).cos()))
        .collect()
}

/// Closed-form mean for `beta = 0` and `u(0) = cos x`.
pub fn advdiff_mean_oracle(eps: f64, sigma: f64, t: f64, points: &[f64]) -> Vec<f64> {
    let decay = (-(eps * eps + sigma * sigma) * t / 2.0).exp();
    points.iter().map(|x| decay * x.cos()).collect()
}
