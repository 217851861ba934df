use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::DEFAULT_CENTER_FRACTION;
use crate::recon::{AdamConfig, LatentSpace, Method, PrimalDualConfig};
use crate::sidecar;

/// Which prior image a prior-based method is given.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorKind {
    #[default]
    Aligned,
    Misaligned,
}

/// Where PICGM's prior latent comes from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorLatentSource {
    /// The latent the prior image was synthesized from.
    #[default]
    Oracle,
    /// Unconstrained W+ inversion of the prior image.
    Invert,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub method: Method,
    #[serde(rename = "R")]
    pub r: f64,
    pub snr_db: f64,
    pub center_fraction: f64,
    /// Fixed weights used by `reconstruct` and `run-suite`.
    pub lambda: f64,
    pub alpha: f64,
    pub lambda_phi: f64,
    pub lambda_grid: Vec<f64>,
    pub alpha_grid: Vec<f64>,
    pub lambda_phi_grid: Vec<f64>,
    pub p1: usize,
    pub p2: usize,
    pub pd: PrimalDualConfig,
    pub adam: AdamConfig,
    pub wavelet_levels: usize,
    pub reweight: bool,
    pub latent_space: LatentSpace,
    pub prior: PriorKind,
    pub prior_latent: PriorLatentSource,
    /// Master seed of measurement and optimizer streams.
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Wall times make CSVs differ between runs, so they are opt-in.
    pub record_timing: bool,
}

/// `n >= 2` points log-spaced from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.log10(), hi.log10());
    (0..n)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64))
        .collect()
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            method: Method::Picgm,
            r: 4.0,
            snr_db: 20.0,
            center_fraction: DEFAULT_CENTER_FRACTION,
            lambda: 1e-2,
            alpha: 0.5,
            lambda_phi: 0.0,
            lambda_grid: log_grid(1e-4, 1e1, 7),
            alpha_grid: vec![0.1, 0.3, 0.5, 0.7, 0.9],
            lambda_phi_grid: vec![0.0, 1e-3, 1e-2, 1e-1],
            p1: 8,
            p2: 17,
            pd: PrimalDualConfig::default(),
            adam: AdamConfig::default(),
            wavelet_levels: 7,
            reweight: true,
            latent_space: LatentSpace::WPlus,
            prior: PriorKind::Aligned,
            prior_latent: PriorLatentSource::Oracle,
            seed: 1,
            output_dir: PathBuf::from("results"),
            record_timing: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            path: None,
            line: e.span().map(|s| sidecar::line_of(text, s.start)),
            message: e.message().to_string(),
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        sidecar::read_toml(path)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::parameter(format!("cannot serialize config: {e}")))
    }

    /// Set `key` (dotted for nested tables, e.g. `adam.iters`) from its text
    /// form. The value is read as a TOML literal, or as a bare string when it
    /// is not one.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let mut root = toml::Value::try_from(&*self).map_err(|e| Error::parameter(format!("cannot serialize config: {e}")))?;
        let parsed = toml::from_str::<toml::Table>(&format!("v = {value}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(value.to_string()));
        let mut slot = &mut root;
        for part in key.split('.') {
            slot = slot
                .as_table_mut()
                .and_then(|t| t.get_mut(part))
                .ok_or_else(|| Error::parameter(format!("unknown config key '{key}'")))?;
        }
        // integers are accepted where a float is expected
        *slot = match (&*slot, parsed) {
            (toml::Value::Float(_), toml::Value::Integer(i)) => toml::Value::Float(i as f64),
            (_, v) => v,
        };
        *self = root
            .try_into()
            .map_err(|e: toml::de::Error| Error::parameter(format!("bad value for '{key}': {}", e.message())))?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r >= 1.0 && self.r.is_finite()) {
            return Err(Error::parameter(format!("R must be >= 1, got {}", self.r)));
        }
        // TOML integers are signed
        if self.seed > i64::MAX as u64 || self.adam.seed > i64::MAX as u64 {
            return Err(Error::parameter(format!("seeds must be <= {}", i64::MAX)));
        }
        if self.snr_db.is_nan() {
            return Err(Error::parameter("snr_db is NaN"));
        }
        if !(self.lambda >= 0.0 && self.lambda_phi >= 0.0) {
            return Err(Error::parameter("lambda and lambda_phi must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::parameter(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        self.pd.validate()?;
        self.adam.validate()
    }

    pub fn validate_grids(&self) -> Result<()> {
        let check = |name: &str, g: &[f64]| {
            if g.is_empty() {
                Err(Error::parameter(format!("{name} is empty")))
            } else if g.iter().any(|v| !(*v >= 0.0)) {
                Err(Error::parameter(format!("{name} has a negative or NaN entry")))
            } else {
                Ok(())
            }
        };
        match self.method {
            Method::PlsTv => check("lambda_grid", &self.lambda_grid),
            Method::Wpiccs => {
                check("lambda_grid", &self.lambda_grid)?;
                check("alpha_grid", &self.alpha_grid)?;
                if self.alpha_grid.iter().any(|a| *a > 1.0) {
                    return Err(Error::parameter("alpha_grid entries must lie in [0, 1]"));
                }
                Ok(())
            }
            Method::Csgm | Method::Picgm => check("lambda_phi_grid", &self.lambda_phi_grid),
        }
    }
}
