//! Image-quality metrics: RMSE and Gaussian-windowed SSIM.

use crate::error::{Error, Result};
use crate::tensor::RealGrid;

pub fn mse(a: &RealGrid, b: &RealGrid) -> Result<f64> {
    a.ensure_same_dims(b)?;
    Ok(a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64)
}

pub fn rmse(a: &RealGrid, b: &RealGrid) -> Result<f64> {
    Ok(mse(a, b)?.sqrt())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SsimParams {
    /// Odd window width.
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
}

impl SsimParams {
    pub fn with_range(dynamic_range: f64) -> Self {
        Self {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            dynamic_range,
        }
    }

    /// Range taken from the reference image, `max - min`.
    pub fn for_reference(truth: &RealGrid) -> Self {
        let (lo, hi) = truth.min_max();
        Self::with_range(hi - lo)
    }

    fn kernel(&self) -> Vec<f64> {
        let r = (self.window / 2) as isize;
        let k: Vec<f64> = (-r..=r)
            .map(|i| (-(i * i) as f64 / (2.0 * self.sigma * self.sigma)).exp())
            .collect();
        let s: f64 = k.iter().sum();
        k.into_iter().map(|v| v / s).collect()
    }
}

/// Separable filter evaluated only where the window fits ("valid" region).
fn filter_valid(data: &[f64], h: usize, w: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (vh, vw) = (h - n + 1, w - n + 1);
    let mut rows = vec![0.0; h * vw];
    for i in 0..h {
        for j in 0..vw {
            rows[i * vw + j] = (0..n).map(|t| k[t] * data[i * w + j + t]).sum();
        }
    }
    let mut out = vec![0.0; vh * vw];
    for i in 0..vh {
        for j in 0..vw {
            out[i * vw + j] = (0..n).map(|t| k[t] * rows[(i + t) * vw + j]).sum();
        }
    }
    out
}

/// Mean structural similarity over the valid region.
pub fn ssim(a: &RealGrid, b: &RealGrid, params: &SsimParams) -> Result<f64> {
    a.ensure_same_dims(b)?;
    if params.window % 2 == 0 || params.window == 0 {
        return Err(Error::parameter("SSIM window size must be odd"));
    }
    if !(params.dynamic_range > 0.0) {
        return Err(Error::parameter(format!(
            "SSIM dynamic range must be positive, got {}",
            params.dynamic_range
        )));
    }
    let (h, w) = a.dims();
    if h < params.window || w < params.window {
        return Err(Error::parameter(format!(
            "{h}x{w} image is smaller than the {0}x{0} SSIM window",
            params.window
        )));
    }
    let k = params.kernel();
    let c1 = (params.k1 * params.dynamic_range).powi(2);
    let c2 = (params.k2 * params.dynamic_range).powi(2);
    let prod = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| p * q).collect() };
    let (ad, bd) = (a.data(), b.data());
    let mu_a = filter_valid(ad, h, w, &k);
    let mu_b = filter_valid(bd, h, w, &k);
    let aa = filter_valid(&prod(ad, ad), h, w, &k);
    let bb = filter_valid(&prod(bd, bd), h, w, &k);
    let ab = filter_valid(&prod(ad, bd), h, w, &k);
    let mut total = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = aa[i] - ma * ma;
        let vb = bb[i] - mb * mb;
        let cov = ab[i] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    Ok(total / mu_a.len() as f64)
}
