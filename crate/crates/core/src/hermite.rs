//! One-dimensional Gauss–Hermite quadrature for the standard Gaussian measure.
//!
//! All rules here integrate against the probability density
//! `exp(-y^2/2) / sqrt(2*pi)`, so weights sum to one and the n-point rule is
//! exact for polynomials of degree up to `2n - 1`.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Largest supported rule order.
pub const MAX_ORDER: usize = 64;

/// An n-point Gauss–Hermite rule (probabilists' convention).
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule1D {
    order: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule1D {
    pub fn order(&self) -> usize {
        self.order
    }

    /// Nodes in strictly ascending order.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }

    /// Applies the rule to `f`, combining mirrored nodes first so that odd
    /// integrands cancel exactly.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        let n = self.len();
        let mut acc = if n % 2 == 1 {
            self.weights[n / 2] * f(self.nodes[n / 2])
        } else {
            0.0
        };
        for k in (0..n / 2).rev() {
            let j = n - 1 - k;
            acc += self.weights[k] * (f(self.nodes[k]) + f(self.nodes[j]));
        }
        acc
    }
}

/// Builds the n-point probabilists' Gauss–Hermite rule.
///
/// Nodes come from the eigenvalues of the Jacobi matrix of the Hermite
/// recurrence (zero diagonal, off-diagonal `sqrt(k)`), refined by one Newton
/// step on the orthonormal three-term recurrence. Weights use
/// `1 / (n p_{n-1}(y)^2)` with `p_k = He_k / sqrt(k!)`, which equals
/// `n! / (n^2 He_{n-1}(y)^2)`. Nodes and weights are then symmetrized and the
/// weights renormalized to sum to one.
pub fn gauss_hermite_rule(n: usize) -> Result<QuadratureRule1D> {
    if n == 0 || n > MAX_ORDER {
        return Err(Error::InvalidOrder(n));
    }
    if n == 1 {
        return Ok(QuadratureRule1D {
            order: 1,
            nodes: vec![0.0],
            weights: vec![1.0],
        });
    }

    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = (k as f64).sqrt();
        jacobi[(k - 1, k)] = b;
        jacobi[(k, k - 1)] = b;
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut nodes: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    nodes.sort_by(|a, b| a.total_cmp(b));

    let mut weights = vec![0.0; n];
    for (y, w) in nodes.iter_mut().zip(weights.iter_mut()) {
        let (pn, pn1) = orthonormal_hermite(n, *y);
        // He_n' = n He_{n-1}  =>  p_n' = sqrt(n) p_{n-1}
        *y -= pn / ((n as f64).sqrt() * pn1);
        let (_, pn1) = orthonormal_hermite(n, *y);
        *w = 1.0 / (n as f64 * pn1 * pn1);
    }

    for k in 0..n / 2 {
        let j = n - 1 - k;
        let y = 0.5 * (nodes[j] - nodes[k]);
        nodes[k] = -y;
        nodes[j] = y;
        let w = 0.5 * (weights[k] + weights[j]);
        weights[k] = w;
        weights[j] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }

    Ok(QuadratureRule1D {
        order: n,
        nodes,
        weights,
    })
}

/// Returns `(p_n(y), p_{n-1}(y))` for the orthonormal Hermite polynomials.
fn orthonormal_hermite(n: usize, y: f64) -> (f64, f64) {
    let mut prev = 0.0;
    let mut cur = 1.0;
    for k in 0..n {
        let next = (y * cur - (k as f64).sqrt() * prev) / ((k + 1) as f64).sqrt();
        prev = cur;
        cur = next;
    }
    (cur, prev)
}

/// `E[Y^p]` for a standard normal `Y`: `(p-1)!!` for even `p`, zero for odd `p`.
pub fn gaussian_moment(p: u32) -> f64 {
    if p % 2 == 1 {
        return 0.0;
    }
    let mut acc = 1.0;
    let mut k = p as i64 - 1;
    while k > 1 {
        acc *= k as f64;
        k -= 2;
    }
    acc
}
