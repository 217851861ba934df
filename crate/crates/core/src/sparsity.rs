//! Sparsifying operators: orthonormal multilevel 2-D Haar wavelets, forward
//! finite differences (the anisotropic TV analysis operator) and the diagonal
//! reweighting used by weighted l1 penalties.

use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::{Error, Result};
use crate::tensor::RealGrid;

/// Orthonormal Haar transform over a fixed power-of-two grid.
///
/// Coefficients are flattened as: coarsest LL, then for each level from
/// coarse to fine the LH, HL and HH bands, each row-major. The first letter
/// names the filter along the width, the second along the height.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Haar2d {
    height: usize,
    width: usize,
    levels: usize,
}

/// Largest level count [`Haar2d`] accepts for a grid.
pub fn max_levels(height: usize, width: usize) -> usize {
    height.min(width).trailing_zeros() as usize
}

/// Level count actually used when a solver asks for `requested` levels.
pub fn effective_levels(requested: usize, height: usize, width: usize) -> usize {
    requested.min(max_levels(height, width).saturating_sub(1)).max(1)
}

impl Haar2d {
    pub fn new(height: usize, width: usize, levels: usize) -> Result<Self> {
        if !height.is_power_of_two() || !width.is_power_of_two() {
            return Err(Error::parameter(format!(
                "Haar transform needs power-of-two dims, got {height}x{width}"
            )));
        }
        if levels == 0 || levels > max_levels(height, width) {
            return Err(Error::parameter(format!(
                "{levels} levels is outside 1..={} for a {height}x{width} grid",
                max_levels(height, width)
            )));
        }
        Ok(Self {
            height,
            width,
            levels,
        })
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Analysis `Psi f`, flattened.
    pub fn forward(&self, f: &[f64]) -> Vec<f64> {
        assert_eq!(f.len(), self.len());
        let mut a = f.to_vec();
        let (mut h, mut w) = (self.height, self.width);
        let mut tmp = vec![0.0; h.max(w)];
        for _ in 0..self.levels {
            for i in 0..h {
                let row = &mut a[i * self.width..i * self.width + w];
                for j in 0..w / 2 {
                    let (x, y) = (row[2 * j], row[2 * j + 1]);
                    tmp[j] = (x + y) * FRAC_1_SQRT_2;
                    tmp[w / 2 + j] = (x - y) * FRAC_1_SQRT_2;
                }
                row.copy_from_slice(&tmp[..w]);
            }
            for j in 0..w {
                for i in 0..h / 2 {
                    let (x, y) = (a[2 * i * self.width + j], a[(2 * i + 1) * self.width + j]);
                    tmp[i] = (x + y) * FRAC_1_SQRT_2;
                    tmp[h / 2 + i] = (x - y) * FRAC_1_SQRT_2;
                }
                for i in 0..h {
                    a[i * self.width + j] = tmp[i];
                }
            }
            h /= 2;
            w /= 2;
        }
        self.flatten(&a)
    }

    /// Synthesis `Psi^T c` (= `Psi^{-1} c`).
    pub fn inverse(&self, c: &[f64]) -> Vec<f64> {
        assert_eq!(c.len(), self.len());
        let mut a = self.unflatten(c);
        let mut tmp = vec![0.0; self.height.max(self.width)];
        for level in (0..self.levels).rev() {
            let h = self.height >> level;
            let w = self.width >> level;
            for j in 0..w {
                for i in 0..h / 2 {
                    let (s, d) = (a[i * self.width + j], a[(h / 2 + i) * self.width + j]);
                    tmp[2 * i] = (s + d) * FRAC_1_SQRT_2;
                    tmp[2 * i + 1] = (s - d) * FRAC_1_SQRT_2;
                }
                for i in 0..h {
                    a[i * self.width + j] = tmp[i];
                }
            }
            for i in 0..h {
                let row = &mut a[i * self.width..i * self.width + w];
                for j in 0..w / 2 {
                    let (s, d) = (row[j], row[w / 2 + j]);
                    tmp[2 * j] = (s + d) * FRAC_1_SQRT_2;
                    tmp[2 * j + 1] = (s - d) * FRAC_1_SQRT_2;
                }
                row.copy_from_slice(&tmp[..w]);
            }
        }
        a
    }

    /// (row offset, col offset, rows, cols) of every band in flatten order.
    fn bands(&self) -> Vec<(usize, usize, usize, usize)> {
        let (hc, wc) = (self.height >> self.levels, self.width >> self.levels);
        let mut out = vec![(0, 0, hc, wc)];
        for level in (1..=self.levels).rev() {
            let (bh, bw) = (self.height >> level, self.width >> level);
            out.push((bh, 0, bh, bw)); // LH: low along width, high along height
            out.push((0, bw, bh, bw)); // HL
            out.push((bh, bw, bh, bw)); // HH
        }
        out
    }

    fn flatten(&self, a: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(a.len());
        for (r0, c0, rows, cols) in self.bands() {
            for i in r0..r0 + rows {
                out.extend_from_slice(&a[i * self.width + c0..i * self.width + c0 + cols]);
            }
        }
        out
    }

    fn unflatten(&self, c: &[f64]) -> Vec<f64> {
        let mut a = vec![0.0; c.len()];
        let mut k = 0;
        for (r0, c0, rows, cols) in self.bands() {
            for i in r0..r0 + rows {
                a[i * self.width + c0..i * self.width + c0 + cols].copy_from_slice(&c[k..k + cols]);
                k += cols;
            }
        }
        a
    }
}

/// Haar coefficients of an image, in the canonical flattened order.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveletCoeffs {
    pub levels: usize,
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl WaveletCoeffs {
    /// Length of the coarsest LL band at the head of `values`.
    pub fn approximation_len(&self) -> usize {
        (self.height >> self.levels) * (self.width >> self.levels)
    }

    pub fn detail(&self) -> &[f64] {
        &self.values[self.approximation_len()..]
    }
}

pub fn dwt2(f: &RealGrid, levels: usize) -> Result<WaveletCoeffs> {
    let t = Haar2d::new(f.height(), f.width(), levels)?;
    Ok(WaveletCoeffs {
        levels,
        height: f.height(),
        width: f.width(),
        values: t.forward(f.data()),
    })
}

pub fn idwt2(c: &WaveletCoeffs) -> Result<RealGrid> {
    let t = Haar2d::new(c.height, c.width, c.levels)?;
    if c.values.len() != t.len() {
        return Err(Error::contract("coefficient count does not match grid size"));
    }
    RealGrid::new(c.height, c.width, t.inverse(&c.values))
}

/// Forward differences without wraparound.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffField {
    pub height: usize,
    pub width: usize,
    /// `height x (width - 1)`
    pub dx: Vec<f64>,
    /// `(height - 1) x width`
    pub dy: Vec<f64>,
}

impl DiffField {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            dx: vec![0.0; height * (width - 1)],
            dy: vec![0.0; (height - 1) * width],
        }
    }

    pub fn l1(&self) -> f64 {
        self.dx.iter().chain(&self.dy).map(|v| v.abs()).sum()
    }

    pub fn dot(&self, other: &DiffField) -> f64 {
        crate::tensor::dot(&self.dx, &other.dx) + crate::tensor::dot(&self.dy, &other.dy)
    }
}

pub fn finite_diff(f: &RealGrid) -> DiffField {
    let (h, w) = f.dims();
    let mut d = DiffField::zeros(h, w);
    finite_diff_into(f.data(), h, w, &mut d);
    d
}

pub(crate) fn finite_diff_into(f: &[f64], h: usize, w: usize, d: &mut DiffField) {
    for i in 0..h {
        for j in 0..w - 1 {
            d.dx[i * (w - 1) + j] = f[i * w + j + 1] - f[i * w + j];
        }
    }
    for i in 0..h - 1 {
        for j in 0..w {
            d.dy[i * w + j] = f[(i + 1) * w + j] - f[i * w + j];
        }
    }
}

/// `Phi^T d`, the negative divergence.
pub fn finite_diff_adjoint(d: &DiffField) -> Result<RealGrid> {
    let (h, w) = (d.height, d.width);
    if d.dx.len() != h * (w - 1) || d.dy.len() != (h - 1) * w {
        return Err(Error::contract("difference field has inconsistent band shapes"));
    }
    let mut out = vec![0.0; h * w];
    finite_diff_adjoint_add(d, &mut out);
    RealGrid::new(h, w, out)
}

/// `out += Phi^T d`
pub(crate) fn finite_diff_adjoint_add(d: &DiffField, out: &mut [f64]) {
    let (h, w) = (d.height, d.width);
    for i in 0..h {
        for j in 0..w - 1 {
            let v = d.dx[i * (w - 1) + j];
            out[i * w + j] -= v;
            out[i * w + j + 1] += v;
        }
    }
    for i in 0..h - 1 {
        for j in 0..w {
            let v = d.dy[i * w + j];
            out[i * w + j] -= v;
            out[(i + 1) * w + j] += v;
        }
    }
}

/// Anisotropic total variation `||dx||_1 + ||dy||_1`.
pub fn tv_seminorm(f: &RealGrid) -> f64 {
    finite_diff(f).l1()
}

/// Diagonal of the reweighting matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightDiag {
    pub weights: Vec<f64>,
    pub epsilon: f64,
}

impl WeightDiag {
    pub fn identity(n: usize) -> Self {
        Self {
            weights: vec![1.0; n],
            epsilon: 1.0,
        }
    }
}

/// Scale-aware stabilizer: `1e-3 * max |c|`, floored at `1e-8`.
pub fn default_epsilon(c: &[f64]) -> f64 {
    let m = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    (1e-3 * m).max(1e-8)
}

/// `w_i = 1 / (|c_i| + epsilon)`.
pub fn update_weights(c: &[f64], epsilon: f64) -> Result<WeightDiag> {
    if !(epsilon > 0.0) {
        return Err(Error::parameter("reweighting epsilon must be positive"));
    }
    Ok(WeightDiag {
        weights: c.iter().map(|v| 1.0 / (v.abs() + epsilon)).collect(),
        epsilon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds;
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    fn random_grid(h: usize, w: usize, seed: u64) -> RealGrid {
        let mut rng = seeds::rng(seed);
        RealGrid::from_fn(h, w, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn constant_image_has_no_detail() {
        let f = RealGrid::from_fn(32, 32, |_, _| 0.4);
        for levels in 1..=5 {
            let c = dwt2(&f, levels).unwrap();
            assert!(c.detail().iter().all(|v| v.abs() < 1e-14));
            let ll: f64 = c.values[..c.approximation_len()].iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((ll - f.norm()).abs() < 1e-12);
        }
    }

    #[test]
    fn perfect_reconstruction_and_parseval_at_all_levels() {
        let f = random_grid(64, 64, 1);
        for levels in 1..=max_levels(64, 64) {
            let c = dwt2(&f, levels).unwrap();
            let cn = c.values.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((cn - f.norm()).abs() <= 1e-12 * f.norm());
            let back = idwt2(&c).unwrap();
            for (a, b) in back.data().iter().zip(f.data()) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn non_square_grids_work() {
        let f = random_grid(16, 64, 2);
        let c = dwt2(&f, 4).unwrap();
        let back = idwt2(&c).unwrap();
        assert!(back.data().iter().zip(f.data()).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn illegal_wavelet_parameters() {
        assert!(matches!(dwt2(&RealGrid::zeros(48, 64), 2), Err(Error::Parameter(_))));
        assert!(dwt2(&RealGrid::zeros(64, 64), 7).is_err());
        assert!(dwt2(&RealGrid::zeros(64, 64), 0).is_err());
    }

    #[test]
    fn level_clamp() {
        assert_eq!(effective_levels(7, 64, 64), 5);
        assert_eq!(effective_levels(7, 256, 256), 7);
        assert_eq!(effective_levels(3, 64, 64), 3);
    }

    #[test]
    fn flatten_order_puts_coarse_first() {
        // one-level transform of a single impulse at (0, 1) on a 2x2 grid
        let f = RealGrid::new(2, 2, vec![0.0, 1.0, 0.0, 0.0]).unwrap();
        let c = dwt2(&f, 1).unwrap().values;
        // LL, LH (height-high), HL (width-high), HH
        assert!((c[0] - 0.5).abs() < 1e-15);
        assert!((c[1] - 0.5).abs() < 1e-15);
        assert!((c[2] + 0.5).abs() < 1e-15);
        assert!((c[3] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn diff_of_constant_is_zero() {
        let d = finite_diff(&RealGrid::from_fn(8, 5, |_, _| 3.0));
        assert_eq!(d.l1(), 0.0);
        assert_eq!(d.dx.len(), 8 * 4);
        assert_eq!(d.dy.len(), 7 * 5);
    }

    #[test]
    fn vertical_step_tv() {
        let (h, a) = (12, 0.75);
        let f = RealGrid::from_fn(h, 10, |_, j| if j >= 4 { a } else { 0.0 });
        assert!((finite_diff(&f).l1() - a * h as f64).abs() < 1e-12);
        assert!((tv_seminorm(&f) - a * h as f64).abs() < 1e-12);
        assert_eq!(tv_seminorm(&RealGrid::from_fn(4, 4, |_, _| 1.0)), 0.0);
    }

    #[test]
    fn diff_adjoint_identity() {
        for seed in 0..5 {
            let f = random_grid(20, 13, seed);
            let d = finite_diff(&random_grid(20, 13, 100 + seed));
            let lhs = finite_diff(&f).dot(&d);
            let rhs = f.dot(&finite_diff_adjoint(&d).unwrap());
            assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
        }
    }

    #[test]
    fn weights_examples() {
        let w = update_weights(&[0.0; 5], 0.01).unwrap();
        assert!(w.weights.iter().all(|&v| v == 100.0));
        let eps = 0.25;
        let w = update_weights(&[1.0 - eps, -(1.0 - eps)], eps).unwrap();
        assert_eq!(w.weights, vec![1.0, 1.0]);
        assert!(update_weights(&[1.0], 0.0).is_err());
        assert_eq!(default_epsilon(&[0.0; 3]), 1e-8);
        assert!((default_epsilon(&[-2.0, 1.0]) - 2e-3).abs() < 1e-18);
    }

    proptest! {
        #[test]
        fn tv_is_absolutely_homogeneous(c in -5.0f64..5.0, seed in 0u64..1000) {
            let f = random_grid(9, 7, seed);
            let scaled = RealGrid::new(9, 7, f.data().iter().map(|v| c * v).collect()).unwrap();
            prop_assert!((tv_seminorm(&scaled) - c.abs() * tv_seminorm(&f)).abs() <= 1e-12 * (1.0 + tv_seminorm(&f)));
        }

        #[test]
        fn weights_bounded_and_antitone(
            c in proptest::collection::vec(-10.0f64..10.0, 1..64),
            eps in 1e-6f64..1.0,
        ) {
            let w = update_weights(&c, eps).unwrap();
            let mut pairs: Vec<(f64, f64)> = c.iter().map(|v| v.abs()).zip(w.weights.iter().copied()).collect();
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            for p in &pairs {
                prop_assert!(p.1 > 0.0 && p.1 <= 1.0 / eps);
            }
            for win in pairs.windows(2) {
                prop_assert!(win[1].1 <= win[0].1);
            }
        }

        #[test]
        fn haar_inverse_is_adjoint(seed in 0u64..500, levels in 1usize..=4) {
            let t = Haar2d::new(16, 32, levels).unwrap();
            let f = random_grid(16, 32, seed);
            let c = random_grid(16, 32, seed + 7);
            let lhs = crate::tensor::dot(&t.forward(f.data()), c.data());
            let rhs = crate::tensor::dot(f.data(), &t.inverse(c.data()));
            prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
        }
    }
}
