use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::ExtendedLatent;
use crate::recon::adam::TraceEntry;
use crate::tensor::{RealGrid, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "pls-tv")]
    PlsTv,
    #[serde(rename = "csgm")]
    Csgm,
    #[serde(rename = "picgm")]
    Picgm,
    #[serde(rename = "wpiccs")]
    Wpiccs,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::PlsTv, Method::Csgm, Method::Wpiccs, Method::Picgm];

    pub fn name(self) -> &'static str {
        match self {
            Method::PlsTv => "pls-tv",
            Method::Csgm => "csgm",
            Method::Picgm => "picgm",
            Method::Wpiccs => "wpiccs",
        }
    }

    pub fn uses_prior(self) -> bool {
        matches!(self, Method::Picgm | Method::Wpiccs)
    }

    pub fn is_latent(self) -> bool {
        matches!(self, Method::Csgm | Method::Picgm)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::parameter(format!("unknown method '{s}' (expected pls-tv, csgm, picgm or wpiccs)")))
    }
}

#[derive(Clone, Debug)]
pub struct ReconResult {
    pub method: Method,
    pub image: RealGrid,
    pub latent: Option<ExtendedLatent>,
    /// One entry per iterate, `iterations + 1` in total.
    pub trace: Vec<TraceEntry>,
    pub data_fidelity: f64,
    pub wall_time: Duration,
    pub seeds: Vec<u64>,
    /// Flattened `key = value` echo of the configuration that produced this.
    pub config: Vec<(String, String)>,
}

impl ReconResult {
    pub fn iterations(&self) -> usize {
        self.trace.len().saturating_sub(1)
    }

    pub fn trace_csv(&self) -> String {
        let mut s = String::from("iteration,objective,data_fidelity,penalty\n");
        for (i, t) in self.trace.iter().enumerate() {
            s.push_str(&format!("{i},{},{},{}\n", t.objective, t.data_fidelity, t.penalty));
        }
        s
    }

    pub fn config_text(&self) -> String {
        let mut s = format!("method = \"{}\"\n", self.method);
        s.push_str(&format!(
            "seeds = [{}]\n",
            self.seeds.iter().map(|v| format!("\"{v}\"")).collect::<Vec<_>>().join(", ")
        ));
        for (k, v) in &self.config {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }

    /// Writes `image.tnsr`, `latent.tnsr` (latent methods), `trace.csv` and `config.toml`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.image.to_tensor().write(dir.join("image.tnsr"))?;
        if let Some(w) = &self.latent {
            Tensor::real(
                vec![w.layers() as u32, w.style_dim() as u32],
                w.values().to_vec(),
            )
            .write(dir.join("latent.tnsr"))?;
        }
        let p = dir.join("trace.csv");
        fs::write(&p, self.trace_csv()).map_err(|e| Error::io(&p, e))?;
        let p = dir.join("config.toml");
        fs::write(&p, self.config_text()).map_err(|e| Error::io(&p, e))
    }
}

pub(crate) fn echo<T: fmt::Debug>(key: &str, value: T) -> (String, String) {
    (key.to_string(), format!("{value:?}"))
}
