//! The measurement model `g = H f + n`: a column-line Cartesian sampling mask
//! applied after a unitary 2-D DFT, with complex Gaussian noise scaled to an
//! exact SNR.

use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rand::seq::index;
use rand_distr::{Distribution, Normal};
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds;
use crate::sidecar;
use crate::tensor::{complex_norm2, RealGrid, Tensor};

pub const DEFAULT_CENTER_FRACTION: f64 = 0.08;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingMask {
    pub height: usize,
    pub width: usize,
    /// Sorted ascending.
    pub kept_columns: Vec<usize>,
    pub center_fraction: f64,
    pub seed: u64,
    pub target_r: f64,
}

/// Columns of the always-sampled low-frequency band.
pub fn center_band(width: usize, center_fraction: f64) -> std::ops::Range<usize> {
    let b = (center_fraction * width as f64).ceil() as usize;
    let b = b.min(width);
    let start = (width / 2).saturating_sub(b / 2);
    let start = start.min(width - b);
    start..start + b
}

pub fn generate_cartesian_mask(
    height: usize,
    width: usize,
    r: f64,
    center_fraction: f64,
    seed: u64,
) -> Result<SamplingMask> {
    if height == 0 || width == 0 {
        return Err(Error::parameter("mask dimensions must be positive"));
    }
    if !(r >= 1.0) || !r.is_finite() {
        return Err(Error::parameter(format!("undersampling ratio must be >= 1, got {r}")));
    }
    if !(0.0..=1.0).contains(&center_fraction) {
        return Err(Error::parameter(format!(
            "center fraction must lie in [0, 1], got {center_fraction}"
        )));
    }
    let budget = (width as f64 / r).ceil() as usize;
    let band = center_band(width, center_fraction);
    if band.len() > budget {
        return Err(Error::parameter(format!(
            "center band of {} columns exceeds the budget of {} columns at R = {r}",
            band.len(),
            budget
        )));
    }
    let mut kept: Vec<usize> = band.clone().collect();
    let rest: Vec<usize> = (0..width).filter(|c| !band.contains(c)).collect();
    let mut rng = seeds::rng(seed);
    let extra = budget - band.len();
    for i in index::sample(&mut rng, rest.len(), extra) {
        kept.push(rest[i]);
    }
    kept.sort_unstable();
    Ok(SamplingMask {
        height,
        width,
        kept_columns: kept,
        center_fraction,
        seed,
        target_r: r,
    })
}

impl SamplingMask {
    pub fn full(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            kept_columns: (0..width).collect(),
            center_fraction: 1.0,
            seed: 0,
            target_r: 1.0,
        }
    }

    /// Number of complex samples `m`.
    pub fn sample_count(&self) -> usize {
        self.height * self.kept_columns.len()
    }

    /// 0/1 indicator grid of sampled k-space locations.
    pub fn indicator(&self) -> RealGrid {
        let mut keep = vec![false; self.width];
        for &c in &self.kept_columns {
            keep[c] = true;
        }
        RealGrid::from_fn(self.height, self.width, |_, j| if keep[j] { 1.0 } else { 0.0 })
    }

    /// Rebuild a mask from its indicator grid plus sidecar metadata.
    pub fn from_indicator(grid: &RealGrid, meta: &MaskSidecar) -> Result<Self> {
        let (h, w) = grid.dims();
        let mut kept = Vec::new();
        for j in 0..w {
            let col: Vec<f64> = (0..h).map(|i| grid.get(i, j)).collect();
            if col.iter().all(|&v| v == 1.0) {
                kept.push(j);
            } else if col.iter().any(|&v| v != 0.0) {
                return Err(Error::parse(format!("mask column {j} is not a full line of 0s or 1s")));
            }
        }
        if kept.is_empty() {
            return Err(Error::parse("mask keeps no columns"));
        }
        Ok(Self {
            height: h,
            width: w,
            kept_columns: kept,
            center_fraction: meta.center_fraction,
            seed: meta.seed,
            target_r: meta.r,
        })
    }

    /// Writes the 0/1 indicator as a real tensor plus a TOML sidecar.
    pub fn write(&self, path: &Path) -> Result<()> {
        self.indicator().to_tensor().write(path)?;
        sidecar::write_toml(&sidecar::sidecar_path(path), &self.sidecar())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let meta: MaskSidecar = sidecar::read_toml(&sidecar::sidecar_path(path))?;
        let grid = RealGrid::from_tensor(&Tensor::read(path)?).map_err(|e| e.at_path(path))?;
        Self::from_indicator(&grid, &meta).map_err(|e| e.at_path(path))
    }

    pub fn sidecar(&self) -> MaskSidecar {
        MaskSidecar {
            r: self.target_r,
            center_fraction: self.center_fraction,
            seed: self.seed,
        }
    }
}

/// Text header stored next to a serialized mask.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskSidecar {
    #[serde(rename = "R")]
    pub r: f64,
    pub center_fraction: f64,
    #[serde(with = "sidecar::seed_string")]
    pub seed: u64,
}

/// Sampled k-space values `g` together with the mask that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct KSpaceMeasurement {
    pub mask: SamplingMask,
    pub values: Vec<Complex64>,
    pub snr_db: f64,
    pub noise_seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSidecar {
    /// File name of the mask tensor, relative to the measurement.
    pub mask: String,
    pub snr_db: f64,
    #[serde(with = "sidecar::seed_string")]
    pub noise_seed: u64,
}

impl KSpaceMeasurement {
    pub fn new(mask: SamplingMask, values: Vec<Complex64>, snr_db: f64, noise_seed: u64) -> Result<Self> {
        if values.len() != mask.sample_count() {
            return Err(Error::contract(format!(
                "measurement has {} values, mask samples {}",
                values.len(),
                mask.sample_count()
            )));
        }
        if values.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::contract("non-finite measurement value"));
        }
        Ok(Self {
            mask,
            values,
            snr_db,
            noise_seed,
        })
    }

    pub fn energy(&self) -> f64 {
        self.values.iter().map(|c| c.norm_sqr()).sum()
    }

    /// Writes the samples as a complex `[height, kept columns]` tensor, the
    /// mask next to it as `<stem>_mask.tnsr`, and a sidecar for each.
    pub fn write(&self, path: &Path) -> Result<()> {
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::parameter(format!("bad measurement path {}", path.display())))?;
        let mask_name = format!("{stem}_mask.tnsr");
        self.mask.write(&path.with_file_name(&mask_name))?;
        Tensor::complex(
            vec![self.mask.height as u32, self.mask.kept_columns.len() as u32],
            self.values.clone(),
        )
        .write(path)?;
        let meta = MeasurementSidecar {
            mask: mask_name,
            snr_db: self.snr_db,
            noise_seed: self.noise_seed,
        };
        sidecar::write_toml(&sidecar::sidecar_path(path), &meta)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let meta: MeasurementSidecar = sidecar::read_toml(&sidecar::sidecar_path(path))?;
        let mask = SamplingMask::read(&path.with_file_name(&meta.mask))?;
        let t = Tensor::read(path)?;
        let values = t.as_complex().map_err(|e| e.at_path(path))?.to_vec();
        Self::new(mask, values, meta.snr_db, meta.noise_seed)
    }
}

/// FFT bin stored at centered position `i` of an axis of length `n`: DC sits at
/// `n / 2`.
fn centered_bin(i: usize, n: usize) -> usize {
    (i + n - n / 2) % n
}

/// Unitary 2-D DFT restricted to a set of k-space columns, in centered
/// k-space coordinates (DC at row `h / 2`, column `w / 2`). Holds the FFT
/// plans so repeated applications inside an iterative solver do not re-plan.
#[derive(Clone)]
pub struct MaskedFourier {
    mask: SamplingMask,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
    scale: f64,
}

impl std::fmt::Debug for MaskedFourier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MaskedFourier").field("mask", &self.mask).finish()
    }
}

impl MaskedFourier {
    pub fn new(mask: SamplingMask) -> Self {
        let mut planner = FftPlanner::new();
        let row_fwd = planner.plan_fft_forward(mask.width);
        let row_inv = planner.plan_fft_inverse(mask.width);
        let col_fwd = planner.plan_fft_forward(mask.height);
        let col_inv = planner.plan_fft_inverse(mask.height);
        let scale = 1.0 / ((mask.height * mask.width) as f64).sqrt();
        Self {
            mask,
            row_fwd,
            row_inv,
            col_fwd,
            col_inv,
            scale,
        }
    }

    pub fn mask(&self) -> &SamplingMask {
        &self.mask
    }

    pub fn sample_count(&self) -> usize {
        self.mask.sample_count()
    }

    /// `H f`: samples ordered row-major over rows, then kept-column order.
    pub fn forward(&self, f: &RealGrid) -> Result<Vec<Complex64>> {
        let (h, w) = (self.mask.height, self.mask.width);
        if f.dims() != (h, w) {
            return Err(Error::contract(format!(
                "image dims {:?} do not match mask dims {:?}",
                f.dims(),
                (h, w)
            )));
        }
        let mut buf: Vec<Complex64> = f.data().iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.row_fwd.process(&mut buf);
        let cols = &self.mask.kept_columns;
        let mut col = vec![Complex64::default(); h];
        let mut out = vec![Complex64::default(); h * cols.len()];
        for (ci, &c) in cols.iter().enumerate() {
            let c = centered_bin(c, w);
            for i in 0..h {
                col[i] = buf[i * w + c];
            }
            self.col_fwd.process(&mut col);
            for i in 0..h {
                out[i * cols.len() + ci] = col[centered_bin(i, h)] * self.scale;
            }
        }
        Ok(out)
    }

    /// `H^H v`: zero-fill, inverse unitary DFT, real part.
    pub fn adjoint(&self, v: &[Complex64]) -> Result<RealGrid> {
        let (h, w) = (self.mask.height, self.mask.width);
        let cols = &self.mask.kept_columns;
        if v.len() != h * cols.len() {
            return Err(Error::contract(format!(
                "sample vector has length {}, mask expects {}",
                v.len(),
                h * cols.len()
            )));
        }
        let mut buf = vec![Complex64::default(); h * w];
        let mut col = vec![Complex64::default(); h];
        for (ci, &c) in cols.iter().enumerate() {
            for i in 0..h {
                col[centered_bin(i, h)] = v[i * cols.len() + ci];
            }
            self.col_inv.process(&mut col);
            let c = centered_bin(c, w);
            for i in 0..h {
                buf[i * w + c] = col[i];
            }
        }
        self.row_inv.process(&mut buf);
        let data = buf.iter().map(|c| c.re * self.scale).collect();
        RealGrid::new(h, w, data)
    }

    /// `2 H^H (H f - g)`, the gradient of `||g - H f||^2`, and the residual energy.
    pub fn fidelity_gradient(&self, f: &RealGrid, g: &[Complex64]) -> Result<(f64, RealGrid)> {
        let mut r = self.forward(f)?;
        if r.len() != g.len() {
            return Err(Error::contract("measurement length does not match operator"));
        }
        let mut energy = 0.0;
        for (ri, gi) in r.iter_mut().zip(g) {
            *ri -= gi;
            energy += ri.norm_sqr();
        }
        let mut grad = self.adjoint(&r)?;
        grad.data_mut().iter_mut().for_each(|x| *x *= 2.0);
        Ok((energy, grad))
    }

    /// `(I + t H^H H)^{-1} rhs`. Every row of k-space is sampled, so `H^H H`
    /// is diagonal in horizontal frequency with entries in {0, 1/2, 1} (the
    /// mean of the mask at `+k` and `-k`) and the solve is a per-row filter.
    pub fn solve_normal_shifted(&self, rhs: &RealGrid, t: f64) -> Result<RealGrid> {
        let (h, w) = (self.mask.height, self.mask.width);
        if rhs.dims() != (h, w) {
            return Err(Error::contract("right-hand side dims do not match the mask"));
        }
        let mut kept = vec![0.0; w];
        for &c in &self.mask.kept_columns {
            kept[centered_bin(c, w)] = 1.0;
        }
        let gain: Vec<f64> = (0..w)
            .map(|j| 1.0 / (w as f64 * (1.0 + t * 0.5 * (kept[j] + kept[(w - j) % w]))))
            .collect();
        let mut buf: Vec<Complex64> = rhs.data().iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.row_fwd.process(&mut buf);
        for row in buf.chunks_mut(w) {
            for (v, g) in row.iter_mut().zip(&gain) {
                *v *= g;
            }
        }
        self.row_inv.process(&mut buf);
        RealGrid::new(h, w, buf.iter().map(|c| c.re).collect())
    }

    pub fn fidelity(&self, f: &RealGrid, g: &[Complex64]) -> Result<f64> {
        let r = self.forward(f)?;
        Ok(r.iter().zip(g).map(|(a, b)| (a - b).norm_sqr()).sum())
    }
}

pub fn forward(f: &RealGrid, mask: &SamplingMask) -> Result<Vec<Complex64>> {
    MaskedFourier::new(mask.clone()).forward(f)
}

pub fn adjoint(v: &[Complex64], mask: &SamplingMask) -> Result<RealGrid> {
    MaskedFourier::new(mask.clone()).adjoint(v)
}

/// Add circular complex Gaussian noise rescaled so the SNR equals `snr_db`.
pub fn add_noise(clean: &[Complex64], snr_db: f64, seed: u64) -> Result<Vec<Complex64>> {
    if snr_db == f64::INFINITY {
        return Ok(clean.to_vec());
    }
    if !snr_db.is_finite() {
        return Err(Error::parameter(format!("SNR must be finite or +inf, got {snr_db}")));
    }
    let signal = complex_norm2(clean);
    if signal == 0.0 {
        return Err(Error::parameter("cannot add noise at a finite SNR to an all-zero signal"));
    }
    let mut rng = seeds::rng(seed);
    let normal = Normal::new(0.0, std::f64::consts::FRAC_1_SQRT_2).expect("valid normal");
    let noise: Vec<Complex64> = clean
        .iter()
        .map(|_| Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng)))
        .collect();
    let target = signal * 10f64.powf(-snr_db / 20.0);
    let scale = target / complex_norm2(&noise);
    Ok(clean.iter().zip(&noise).map(|(c, n)| c + n * scale).collect())
}

pub fn measure_snr(clean: &[Complex64], noisy: &[Complex64]) -> f64 {
    let err: f64 = clean
        .iter()
        .zip(noisy)
        .map(|(a, b)| (b - a).norm_sqr())
        .sum::<f64>()
        .sqrt();
    if err == 0.0 {
        return f64::INFINITY;
    }
    20.0 * (complex_norm2(clean) / err).log10()
}

/// Mask, forward projection and noise in one step.
pub fn simulate_measurement(
    f: &RealGrid,
    r: f64,
    center_fraction: f64,
    snr_db: f64,
    mask_seed: u64,
    noise_seed: u64,
) -> Result<KSpaceMeasurement> {
    let mask = generate_cartesian_mask(f.height(), f.width(), r, center_fraction, mask_seed)?;
    let clean = forward(f, &mask)?;
    let values = add_noise(&clean, snr_db, noise_seed)?;
    KSpaceMeasurement::new(mask, values, snr_db, noise_seed)
}
