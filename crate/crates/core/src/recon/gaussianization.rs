//! Latent Gaussianization penalty.
//!
//! Mapped styles end in a leaky-ReLU, so their marginals are skewed. Undoing
//! the activation (negative side multiplied by `1 / 0.2 = 5`) gives
//! approximately Gaussian coordinates `v`; the penalty is the diagonal
//! Mahalanobis distance of every block of `v` from the empirical moments.

use crate::generator::latent::sample_z;
use crate::generator::mapping::{MappingNetwork, LEAKY_SLOPE};
use crate::grad::Differentiable;
use crate::seeds;
use crate::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianizationStats {
    pub mean: Vec<f64>,
    /// Diagonal covariance.
    pub var: Vec<f64>,
    /// Multiplier applied to negative style values.
    pub slope: f64,
}

impl GaussianizationStats {
    /// Monte-Carlo moments of the un-activated mapping output.
    pub fn estimate(mapping: &MappingNetwork, samples: usize, seed: u64) -> Self {
        let k = mapping.k;
        let slope = 1.0 / LEAKY_SLOPE;
        let mut sum = vec![0.0; k];
        let mut sq = vec![0.0; k];
        for s in 0..samples {
            let z = sample_z(k, seeds::derive_seed(seed, "z", s as u64));
            let u = mapping.forward(&z.values);
            for j in 0..k {
                let v = unleak(u[j], slope);
                sum[j] += v;
                sq[j] += v * v;
            }
        }
        let n = samples as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let var = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| (q / n - m * m).max(1e-12))
            .collect();
        Self { mean, var, slope }
    }

    pub fn style_dim(&self) -> usize {
        self.mean.len()
    }
}

#[inline]
fn unleak(u: f64, slope: f64) -> f64 {
    if u >= 0.0 {
        u
    } else {
        slope * u
    }
}

/// `phi(w)` and its gradient.
pub fn gaussianization_penalty(w: &[f64], stats: &GaussianizationStats) -> (f64, Vec<f64>) {
    let k = stats.style_dim();
    debug_assert_eq!(w.len() % k, 0);
    let mut value = 0.0;
    let mut grad = vec![0.0; w.len()];
    for (i, (&wi, gi)) in w.iter().zip(grad.iter_mut()).enumerate() {
        let j = i % k;
        let d = unleak(wi, stats.slope) - stats.mean[j];
        value += d * d / stats.var[j];
        let dv = if wi >= 0.0 { 1.0 } else { stats.slope };
        *gi = 2.0 * d / stats.var[j] * dv;
    }
    (value, grad)
}

/// Penalty as a scalar [`Differentiable`].
pub struct PenaltyOp<'a> {
    pub stats: &'a GaussianizationStats,
    pub len: usize,
}

impl Differentiable for PenaltyOp<'_> {
    fn input_len(&self) -> usize {
        self.len
    }
    fn output_len(&self) -> usize {
        1
    }
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(vec![gaussianization_penalty(x, self.stats).0])
    }
    fn vjp(&self, x: &[f64], c: &[f64]) -> Result<Vec<f64>> {
        Ok(gaussianization_penalty(x, self.stats).1.into_iter().map(|g| g * c[0]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grad::finite_difference_check;

    fn stats() -> GaussianizationStats {
        GaussianizationStats {
            mean: vec![0.3, 0.0, 1.2, 0.05],
            var: vec![0.5, 1.0, 2.0, 0.1],
            slope: 5.0,
        }
    }

    #[test]
    fn zero_at_the_mean() {
        let s = stats();
        let w: Vec<f64> = (0..12).map(|i| s.mean[i % 4]).collect();
        let (v, g) = gaussianization_penalty(&w, &s);
        assert_eq!(v, 0.0);
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn negative_side_is_stretched() {
        let s = GaussianizationStats {
            mean: vec![0.0],
            var: vec![1.0],
            slope: 5.0,
        };
        assert_eq!(gaussianization_penalty(&[-0.2, 0.0], &s).0, 1.0);
        assert_eq!(gaussianization_penalty(&[1.0, 0.0], &s).0, 1.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let s = stats();
        let op = PenaltyOp { stats: &s, len: 16 };
        for seed in 0..5u64 {
            let mut rng = seeds::rng(seed);
            let w: Vec<f64> = (0..16)
                .map(|_| rand_distr::Distribution::<f64>::sample(&rand_distr::StandardNormal, &mut rng))
                .collect();
            let r = finite_difference_check(&op, &w, 8, 1e-4, seed).unwrap();
            assert!(r.max_relative_error <= 1e-6, "{r:?}");
        }
    }

    #[test]
    fn invariant_under_block_permutation() {
        let s = stats();
        let w: Vec<f64> = (0..12).map(|i| (i as f64 * 0.77).sin()).collect();
        let mut p = w[8..12].to_vec();
        p.extend_from_slice(&w[0..8]);
        let a = gaussianization_penalty(&w, &s).0;
        let b = gaussianization_penalty(&p, &s).0;
        assert!((a - b).abs() <= 1e-12 * a);
    }

    #[test]
    fn estimated_moments_are_positive() {
        let net = MappingNetwork::from_seed(8, 3);
        let st = GaussianizationStats::estimate(&net, 2000, 1);
        assert_eq!(st.mean.len(), 8);
        assert!(st.var.iter().all(|&v| v > 0.0));
        assert_eq!(st.slope, 5.0);
    }
}
