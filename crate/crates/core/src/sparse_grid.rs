//! Smolyak sparse grids and tensor-product rules over the standard Gaussian
//! measure on `R^d`.
//!
//! The Smolyak rule of level `L` in dimension `d` is the signed combination
//!
//! ```text
//! A(L,d) = sum_{L <= |i| <= L+d-1} (-1)^(L+d-1-|i|) binom(d-1, |i|-L) Q_{i_1} x ... x Q_{i_d}
//! ```
//!
//! where `Q_n` is the n-point Gauss–Hermite rule. It integrates polynomials of
//! total degree up to `2L - 1` exactly.
//!
//! Nodes of a level-`L` grid have at most `L - 1` nonzero coordinates, so
//! [`SparseGridRule`] stores only the nonzero entries of each node.

use std::cmp::Ordering;
use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::hermite::{gauss_hermite_rule, QuadratureRule1D};
use crate::sum::blocked_sum;

/// Default upper bound on the number of nodes a rule may have.
pub const DEFAULT_NODE_CAP: u128 = 2_000_000;

/// Coordinates closer than this are treated as the same node when merging.
pub const MERGE_TOLERANCE: f64 = 1e-12;

/// A quadrature rule over `R^d` that can be integrated node by node.
pub trait CubatureRule: Sync {
    fn dim(&self) -> usize;
    fn len(&self) -> usize;
    fn weight(&self, p: usize) -> f64;
    /// Writes node `p` into `out` (length `dim()`).
    fn fill_node(&self, p: usize, out: &mut [f64]);

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn node(&self, p: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.fill_node(p, &mut out);
        out
    }
}

/// One term of the Smolyak combination rule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiIndexTerm {
    pub index: Vec<usize>,
    pub coefficient: i64,
}

impl MultiIndexTerm {
    pub fn total(&self) -> usize {
        self.index.iter().sum()
    }
}

fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for j in 0..k {
        acc = acc * (n - j) as u128 / (j + 1) as u128;
    }
    acc
}

fn combination_coefficient(level: usize, dim: usize, total: usize) -> i64 {
    let k = total - level;
    let sign = if (level + dim - 1 - total).is_multiple_of(2) { 1 } else { -1 };
    sign * binomial(dim as u64 - 1, k as u64) as i64
}

/// Calls `visit(support, coefficient)` for every Smolyak term, where `support`
/// lists `(axis, order)` for the axes with order >= 2 in increasing axis order.
/// Terms are visited in lexicographic order of their dense multi-index.
fn for_each_term<F: FnMut(&[(usize, usize)], i64)>(level: usize, dim: usize, mut visit: F) {
    let max_excess = level - 1;
    let min_excess = level.saturating_sub(dim);
    let mut support: Vec<(usize, usize)> = Vec::new();

    #[allow(clippy::too_many_arguments)]
    fn recurse<F: FnMut(&[(usize, usize)], i64)>(
        axis: usize,
        used: usize,
        level: usize,
        dim: usize,
        min_excess: usize,
        max_excess: usize,
        support: &mut Vec<(usize, usize)>,
        visit: &mut F,
    ) {
        if axis == dim {
            if used >= min_excess {
                visit(support, combination_coefficient(level, dim, dim + used));
            }
            return;
        }
        for e in 0..=(max_excess - used) {
            if e > 0 {
                support.push((axis, e + 1));
            }
            recurse(axis + 1, used + e, level, dim, min_excess, max_excess, support, visit);
            if e > 0 {
                support.pop();
            }
        }
    }

    recurse(0, 0, level, dim, min_excess, max_excess, &mut support, &mut visit);
}

/// Enumerates the terms of `A(L,d)` with their combination coefficients, in
/// lexicographic order of the multi-index.
pub fn smolyak_terms(level: usize, dim: usize) -> Vec<MultiIndexTerm> {
    assert!(level >= 1 && dim >= 1, "level and dimension must be positive");
    let mut terms = Vec::new();
    for_each_term(level, dim, |support, coefficient| {
        let mut index = vec![1; dim];
        for &(axis, order) in support {
            index[axis] = order;
        }
        terms.push(MultiIndexTerm { index, coefficient });
    });
    terms
}

/// Number of terms of `A(L,d)` grouped by `|i|`: `(|i|, coefficient, count)`.
pub fn term_census(level: usize, dim: usize) -> Vec<(usize, i64, u128)> {
    let lo = level.max(dim);
    let hi = level + dim - 1;
    (lo..=hi)
        .map(|total| {
            let excess = (total - dim) as u64;
            let count = binomial(dim as u64 + excess - 1, excess);
            (total, combination_coefficient(level, dim, total), count)
        })
        .collect()
}

/// Exact number of distinct nodes of `A(L,d)`, computed combinatorially.
///
/// A node is fixed by the axes where it is nonzero, the rule order used on
/// each such axis and a nonzero node of that rule. It belongs to the grid when
/// some term of the combination uses those orders on its support and odd
/// orders (which contain zero) elsewhere.
pub fn distinct_node_count(level: usize, dim: usize) -> u128 {
    let budget = level - 1;
    let nonzero = |order: usize| (order - order % 2) as u128;
    let max_support = dim.min(budget);
    // ways[s][e]: ordered choices over s axes with total excess exactly e
    let mut ways = vec![vec![0u128; budget + 1]; max_support + 1];
    ways[0][0] = 1;
    for s in 1..=max_support {
        for e in 1..=budget {
            ways[s][e] = (1..=e).map(|x| nonzero(x + 1) * ways[s - 1][e - x]).sum();
        }
    }
    let mut count = 0u128;
    for (s, row) in ways.iter().enumerate() {
        for (e, &w) in row.iter().enumerate() {
            if w == 0 {
                continue;
            }
            let feasible = if s < dim {
                dim >= 2 || (budget - e).is_multiple_of(2)
            } else {
                e + dim >= level
            };
            if feasible {
                count += binomial(dim as u64, s as u64) * w;
            }
        }
    }
    count
}

/// Closed-form node counts for `L <= 5`, `L <= d`.
pub fn sparse_node_count(level: usize, dim: usize) -> Result<u128> {
    if level == 0 || level > 5 || level > dim {
        return Err(Error::UnsupportedLevel { level, dim });
    }
    let d = dim as u128;
    Ok(match level {
        1 => 1,
        2 => 2 * d + 1,
        3 => 2 * d * d + 2 * d + 1,
        4 => (4 * d * d * d + 6 * d * d + 14 * d) / 3 + 1,
        _ => (2 * d * d * d * d + 4 * d * d * d + 22 * d * d + 8 * d) / 3 + 1,
    })
}

/// A Smolyak rule with merged, lexicographically sorted nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGridRule {
    dim: usize,
    level: usize,
    offsets: Vec<usize>,
    entries: Vec<(u32, f64)>,
    weights: Vec<f64>,
    premerge_weight_sum: f64,
}

impl SparseGridRule {
    pub fn level(&self) -> usize {
        self.level
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Nonzero coordinates of node `p` as `(axis, value)`, by increasing axis.
    pub fn nonzeros(&self, p: usize) -> &[(u32, f64)] {
        &self.entries[self.offsets[p]..self.offsets[p + 1]]
    }

    /// Sum of the signed weights before coincident nodes were merged.
    pub fn premerge_weight_sum(&self) -> f64 {
        self.premerge_weight_sum
    }
}

impl CubatureRule for SparseGridRule {
    fn dim(&self) -> usize {
        self.dim
    }

    fn len(&self) -> usize {
        self.weights.len()
    }

    fn weight(&self, p: usize) -> f64 {
        self.weights[p]
    }

    fn fill_node(&self, p: usize, out: &mut [f64]) {
        out.fill(0.0);
        for &(axis, y) in self.nonzeros(p) {
            out[axis as usize] = y;
        }
    }
}

fn compare_sparse(a: &[(u32, f64)], b: &[(u32, f64)]) -> Ordering {
    let (mut i, mut j) = (0, 0);
    loop {
        let axis = match (a.get(i), b.get(j)) {
            (None, None) => return Ordering::Equal,
            (Some(x), None) => x.0,
            (None, Some(y)) => y.0,
            (Some(x), Some(y)) => x.0.min(y.0),
        };
        let va = match a.get(i) {
            Some(&(ax, v)) if ax == axis => {
                i += 1;
                v
            }
            _ => 0.0,
        };
        let vb = match b.get(j) {
            Some(&(ax, v)) if ax == axis => {
                j += 1;
                v
            }
            _ => 0.0,
        };
        match va.total_cmp(&vb) {
            Ordering::Equal => continue,
            other => return other,
        }
    }
}

struct PendingNode {
    entries: Vec<(u32, f64)>,
    outer: f64,
    center: Option<Ratio>,
    center_approx: f64,
}

/// Exact rational with overflow reported as `None`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Ratio {
    num: i128,
    den: i128,
}

fn gcd(mut a: i128, mut b: i128) -> i128 {
    a = a.abs();
    b = b.abs();
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl Ratio {
    fn from_int(n: i128) -> Option<Ratio> {
        Some(Ratio { num: n, den: 1 })
    }

    fn new(num: i128, den: i128) -> Ratio {
        let g = gcd(num, den).max(1);
        Ratio {
            num: num / g,
            den: den / g,
        }
    }

    fn mul(self, other: Ratio) -> Option<Ratio> {
        let g1 = gcd(self.num, other.den).max(1);
        let g2 = gcd(other.num, self.den).max(1);
        let num = (self.num / g1).checked_mul(other.num / g2)?;
        let den = (self.den / g2).checked_mul(other.den / g1)?;
        Some(Ratio::new(num, den))
    }

    fn add(self, other: Ratio) -> Option<Ratio> {
        let g = gcd(self.den, other.den).max(1);
        let den = (self.den / g).checked_mul(other.den)?;
        let num = self
            .num
            .checked_mul(other.den / g)?
            .checked_add(other.num.checked_mul(self.den / g)?)?;
        Some(Ratio::new(num, den))
    }

    fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

/// Weight of the zero node of the odd-order rule `Q_n`: `(n-1)!! / n!!`.
fn center_weight(order: usize) -> Option<Ratio> {
    let mut num: i128 = 1;
    let mut den: i128 = 1;
    let mut k = order as i128 - 1;
    while k > 0 {
        num = num.checked_mul(k)?;
        den = den.checked_mul(k + 1)?;
        k -= 2;
    }
    Some(Ratio::new(num, den))
}

fn quantize(y: f64) -> i64 {
    (y / MERGE_TOLERANCE).round() as i64
}

/// Builds `A(L,d)` with the default node cap.
pub fn build_sparse_grid(level: usize, dim: usize) -> Result<SparseGridRule> {
    build_sparse_grid_with_cap(level, dim, DEFAULT_NODE_CAP)
}

/// Builds `A(L,d)`: every term is expanded as a tensor of Gauss–Hermite rules,
/// weights are scaled by the term coefficient and coincident nodes are merged
/// by summing their weights.
pub fn build_sparse_grid_with_cap(level: usize, dim: usize, cap: u128) -> Result<SparseGridRule> {
    if level == 0 || dim == 0 {
        return Err(Error::Configuration(format!(
            "sparse grid needs level >= 1 and dimension >= 1 (got L={level}, d={dim})"
        )));
    }
    let projected = distinct_node_count(level, dim);
    if projected > cap {
        return Err(Error::ResourceLimit { projected, cap });
    }

    let rules: Vec<QuadratureRule1D> = (1..=level)
        .map(gauss_hermite_rule)
        .collect::<Result<_>>()?;

    // Every contribution to a merged node shares the weight product over the
    // node's nonzero coordinates; only `coefficient * prod center weights`
    // differs. That factor is accumulated exactly as a rational so the heavy
    // cancellation between large combination coefficients costs no precision.
    let mut merged: HashMap<Vec<(u32, i64)>, usize> = HashMap::with_capacity(projected as usize);
    let mut nodes: Vec<PendingNode> = Vec::with_capacity(projected as usize);
    let mut premerge = Vec::new();

    for_each_term(level, dim, |support, coefficient| {
        let mut cursor = vec![0usize; support.len()];
        loop {
            let mut outer = 1.0;
            let mut center = Ratio::from_int(coefficient as i128);
            let mut center_approx = coefficient as f64;
            let mut entries = Vec::with_capacity(support.len());
            for (&(axis, order), &k) in support.iter().zip(&cursor) {
                let rule = &rules[order - 1];
                let y = rule.nodes()[k];
                if y != 0.0 {
                    outer *= rule.weights()[k];
                    entries.push((axis as u32, y));
                } else {
                    center = center.and_then(|c| c.mul(center_weight(order)?));
                    center_approx *= rule.weights()[k];
                }
            }
            premerge.push(outer * center_approx);
            let key: Vec<(u32, i64)> = entries.iter().map(|&(a, y)| (a, quantize(y))).collect();
            match merged.get(&key) {
                Some(&slot) => {
                    let node = &mut nodes[slot];
                    node.center = match (node.center, center) {
                        (Some(a), Some(b)) => a.add(b),
                        _ => None,
                    };
                    node.center_approx += center_approx;
                }
                None => {
                    merged.insert(key, nodes.len());
                    nodes.push(PendingNode {
                        entries,
                        outer,
                        center,
                        center_approx,
                    });
                }
            }
            // advance the mixed-radix cursor over the support axes
            let mut pos = support.len();
            loop {
                if pos == 0 {
                    return;
                }
                pos -= 1;
                cursor[pos] += 1;
                if cursor[pos] < support[pos].1 {
                    break;
                }
                cursor[pos] = 0;
            }
        }
    });
    drop(merged);

    nodes.sort_by(|a, b| compare_sparse(&a.entries, &b.entries));
    let mut offsets = Vec::with_capacity(nodes.len() + 1);
    let mut entries = Vec::new();
    let mut weights = Vec::with_capacity(nodes.len());
    offsets.push(0);
    for node in nodes {
        let center = node.center.map_or(node.center_approx, Ratio::to_f64);
        weights.push(node.outer * center);
        entries.extend(node.entries);
        offsets.push(entries.len());
    }

    Ok(SparseGridRule {
        dim,
        level,
        offsets,
        entries,
        weights,
        premerge_weight_sum: crate::sum::pairwise_sum(&premerge),
    })
}

/// Full tensor-product rule `Q_n^{x d}`; nodes are generated on demand.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorRule {
    rule: QuadratureRule1D,
    dim: usize,
    len: usize,
}

/// Builds `Q_n^{x d}` with the default node cap.
pub fn tensor_rule(n: usize, dim: usize) -> Result<TensorRule> {
    tensor_rule_with_cap(n, dim, DEFAULT_NODE_CAP)
}

pub fn tensor_rule_with_cap(n: usize, dim: usize, cap: u128) -> Result<TensorRule> {
    let rule = gauss_hermite_rule(n)?;
    let projected = (n as u128).checked_pow(dim as u32).unwrap_or(u128::MAX);
    if projected > cap {
        return Err(Error::ResourceLimit { projected, cap });
    }
    Ok(TensorRule {
        rule,
        dim,
        len: projected as usize,
    })
}

impl TensorRule {
    pub fn order(&self) -> usize {
        self.rule.order()
    }
}

impl CubatureRule for TensorRule {
    fn dim(&self) -> usize {
        self.dim
    }

    fn len(&self) -> usize {
        self.len
    }

    fn weight(&self, mut p: usize) -> f64 {
        let n = self.rule.len();
        let mut w = 1.0;
        for _ in 0..self.dim {
            w *= self.rule.weights()[p % n];
            p /= n;
        }
        w
    }

    fn fill_node(&self, mut p: usize, out: &mut [f64]) {
        // axis 0 is the most significant digit, giving lexicographic order
        let n = self.rule.len();
        for slot in out.iter_mut().rev() {
            *slot = self.rule.nodes()[p % n];
            p /= n;
        }
    }
}

/// Product of two rules: coordinates of `outer` followed by those of `inner`.
#[derive(Debug, Clone)]
pub struct ProductRule<A, B> {
    pub outer: A,
    pub inner: B,
}

impl<A: CubatureRule, B: CubatureRule> CubatureRule for ProductRule<A, B> {
    fn dim(&self) -> usize {
        self.outer.dim() + self.inner.dim()
    }

    fn len(&self) -> usize {
        self.outer.len() * self.inner.len()
    }

    fn weight(&self, p: usize) -> f64 {
        let m = self.inner.len();
        self.outer.weight(p / m) * self.inner.weight(p % m)
    }

    fn fill_node(&self, p: usize, out: &mut [f64]) {
        let m = self.inner.len();
        let (a, b) = out.split_at_mut(self.outer.dim());
        self.outer.fill_node(p / m, a);
        self.inner.fill_node(p % m, b);
    }
}

/// Integrates a vector-valued integrand: `eval(y, out)` writes `width` values.
/// Nodes are visited in rule order and reduced with the fixed block/pairwise
/// tree of [`crate::sum`], independent of the worker count.
pub fn integrate_vec<R, F>(rule: &R, width: usize, eval: F) -> Result<Vec<f64>>
where
    R: CubatureRule + ?Sized,
    F: Fn(&[f64], &mut [f64]) -> Result<()> + Sync + Send,
{
    let dim = rule.dim();
    blocked_sum(
        rule.len(),
        width,
        || vec![0.0; dim],
        |buf, p, out| {
            rule.fill_node(p, buf);
            eval(buf, out)?;
            if out.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteIntegrand { node: p });
            }
            let w = rule.weight(p);
            for v in out.iter_mut() {
                *v *= w;
            }
            Ok(())
        },
    )
}

/// `sum_p W_p phi(y_p)` over the rule's nodes.
pub fn sg_integrate<R, F>(rule: &R, phi: F) -> Result<f64>
where
    R: CubatureRule + ?Sized,
    F: Fn(&[f64]) -> f64 + Sync + Send,
{
    integrate_vec(rule, 1, |y, out| {
        out[0] = phi(y);
        Ok(())
    })
    .map(|v| v[0])
}

/// Level-2 rule written as an expectation over the two-point law:
/// `sum_i E phi(0,..,zeta_i,..,0) - (d-1) phi(0)`, using `2d + 1` evaluations.
pub fn level2_probabilistic_form<F: Fn(&[f64]) -> f64>(phi: F, dim: usize) -> Result<f64> {
    let mut y = vec![0.0; dim];
    let center = phi(&y);
    if !center.is_finite() {
        return Err(Error::NonFiniteIntegrand { node: 0 });
    }
    let mut acc = -((dim - 1) as f64) * center;
    for i in 0..dim {
        y[i] = 1.0;
        let plus = phi(&y);
        y[i] = -1.0;
        let minus = phi(&y);
        y[i] = 0.0;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFiniteIntegrand { node: 2 * i + 1 });
        }
        acc += 0.5 * (plus + minus);
    }
    Ok(acc)
}
