//! Deterministic reductions.
//!
//! Items are split into fixed blocks of [`BLOCK`] consecutive indices. Blocks
//! may be evaluated by any number of rayon workers, but every reduction
//! follows the same tree: pairwise inside a block, then pairwise across block
//! results in index order. Output is therefore bit-identical for any thread
//! count.

use rayon::prelude::*;

use crate::error::Result;

/// Number of consecutive items reduced together before combining blocks.
pub const BLOCK: usize = 1024;

const LEAF: usize = 8;

/// Pairwise (cascade) summation of `xs`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= LEAF {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Pairwise summation of a strided component: `xs[start + k*stride]`.
fn pairwise_sum_strided(xs: &[f64], start: usize, stride: usize, len: usize) -> f64 {
    if len <= LEAF {
        return (0..len).map(|k| xs[start + k * stride]).sum();
    }
    let mid = len / 2;
    pairwise_sum_strided(xs, start, stride, mid)
        + pairwise_sum_strided(xs, start + mid * stride, stride, len - mid)
}

/// Evaluates `eval(scratch, i, out)` for every `i < count`, each producing
/// `width` values, and returns the per-component sums.
///
/// The first error in index order is returned if any evaluation fails.
pub fn blocked_sum<S, I, F>(count: usize, width: usize, init: I, eval: F) -> Result<Vec<f64>>
where
    I: Fn() -> S + Sync + Send,
    F: Fn(&mut S, usize, &mut [f64]) -> Result<()> + Sync + Send,
{
    let blocks = count.div_ceil(BLOCK);
    let partials: Vec<Result<Vec<f64>>> = (0..blocks)
        .into_par_iter()
        .map_init(&init, |scratch, b| {
            let lo = b * BLOCK;
            let hi = (lo + BLOCK).min(count);
            let len = hi - lo;
            let mut vals = vec![0.0; len * width];
            for (k, i) in (lo..hi).enumerate() {
                eval(scratch, i, &mut vals[k * width..(k + 1) * width])?;
            }
            Ok((0..width)
                .map(|c| pairwise_sum_strided(&vals, c, width, len))
                .collect())
        })
        .collect();
    let mut sums = Vec::with_capacity(blocks * width);
    for p in partials {
        sums.extend(p?);
    }
    Ok((0..width)
        .map(|c| pairwise_sum_strided(&sums, c, width, blocks))
        .collect())
}

/// Sample mean and unbiased variance per component.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMoments {
    pub count: usize,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

/// Sample count, mean and sum of squared deviations for one block.
type BlockPartial = (usize, Vec<f64>, Vec<f64>);

/// Like [`blocked_sum`] but returns sample means and variances, combining
/// block statistics in index order with the parallel-variance update.
pub fn blocked_moments<S, I, F>(count: usize, width: usize, init: I, eval: F) -> Result<SampleMoments>
where
    I: Fn() -> S + Sync + Send,
    F: Fn(&mut S, usize, &mut [f64]) -> Result<()> + Sync + Send,
{
    let blocks = count.div_ceil(BLOCK);
    let partials: Vec<Result<BlockPartial>> = (0..blocks)
        .into_par_iter()
        .map_init(&init, |scratch, b| {
            let lo = b * BLOCK;
            let hi = (lo + BLOCK).min(count);
            let len = hi - lo;
            let mut vals = vec![0.0; len * width];
            for (k, i) in (lo..hi).enumerate() {
                eval(scratch, i, &mut vals[k * width..(k + 1) * width])?;
            }
            let mut mean = Vec::with_capacity(width);
            let mut m2 = Vec::with_capacity(width);
            let mut dev = vec![0.0; len];
            for c in 0..width {
                let mu = pairwise_sum_strided(&vals, c, width, len) / len as f64;
                for (k, d) in dev.iter_mut().enumerate() {
                    let x = vals[k * width + c] - mu;
                    *d = x * x;
                }
                mean.push(mu);
                m2.push(pairwise_sum(&dev));
            }
            Ok((len, mean, m2))
        })
        .collect();

    let mut n = 0usize;
    let mut mean = vec![0.0; width];
    let mut m2 = vec![0.0; width];
    for p in partials {
        let (nb, mb, m2b) = p?;
        let total = n + nb;
        for c in 0..width {
            let delta = mb[c] - mean[c];
            mean[c] += delta * nb as f64 / total as f64;
            m2[c] += m2b[c] + delta * delta * (n as f64) * (nb as f64) / total as f64;
        }
        n = total;
    }
    let variance = if n > 1 {
        m2.iter().map(|v| v / (n - 1) as f64).collect()
    } else {
        vec![0.0; width]
    };
    Ok(SampleMoments {
        count: n,
        mean,
        variance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_exact_integers() {
        let xs: Vec<f64> = (1..=10_000).map(|k| k as f64).collect();
        assert_eq!(pairwise_sum(&xs), 50_005_000.0);
    }

    #[test]
    fn blocked_sum_components() {
        let s = blocked_sum(
            3000,
            2,
            || (),
            |_, i, out| {
                out[0] = 1.0;
                out[1] = i as f64;
                Ok(())
            },
        )
        .unwrap();
        assert_eq!(s, vec![3000.0, (2999.0 * 3000.0) / 2.0]);
    }

    #[test]
    fn blocked_moments_match_two_pass() {
        let xs: Vec<f64> = (0..5000).map(|k| ((k * 7919) % 1000) as f64 * 0.01).collect();
        let m = blocked_moments(xs.len(), 1, || (), |_, i, out| {
            out[0] = xs[i];
            Ok(())
        })
        .unwrap();
        let mu = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        assert!((m.mean[0] - mu).abs() < 1e-12);
        assert!((m.variance[0] - var).abs() < 1e-10);
    }

    #[test]
    fn thread_count_does_not_change_bits() {
        let f = |_: &mut (), i: usize, out: &mut [f64]| {
            out[0] = ((i as f64) * 0.37).sin() * 1e3;
            Ok(())
        };
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| blocked_sum(100_000, 1, || (), f).unwrap());
        let b = four.install(|| blocked_sum(100_000, 1, || (), f).unwrap());
        assert_eq!(a[0].to_bits(), b[0].to_bits());
    }
}
