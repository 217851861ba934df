use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::phantom::CONTRAST_BLOCK;
use crate::generator::{style_mix, ExtendedLatent, Generator, GeneratorParams};
use crate::seeds::{self, derive_seed};
use crate::sidecar;
use crate::tensor::{RealGrid, Tensor};

pub const DEFAULT_DELTA: f64 = 0.3;
/// Validation images are drawn from this stream, never from the dataset's
/// master seed.
pub const DEFAULT_VALIDATION_SEED: u64 = 0x5eed_0f_7a11d;
pub const VALIDATION_ID: &str = "validation";

const MISALIGNMENT_NOTE: &str = "misaligned priors add iid uniform(-delta, delta) offsets to every latent \
coordinate outside the contrast block; this stands in for a prior taken from a neighbouring slice, which \
a 2-D phantom family cannot express";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub count: usize,
    #[serde(with = "sidecar::seed_string")]
    pub master_seed: u64,
    /// Misalignment magnitude; `0` stores no misaligned priors.
    pub delta: f64,
    #[serde(with = "sidecar::seed_string")]
    pub validation_seed: u64,
}

impl DatasetSpec {
    pub fn new(count: usize, master_seed: u64, delta: f64) -> Self {
        Self {
            count,
            master_seed,
            delta,
            validation_seed: DEFAULT_VALIDATION_SEED,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::parameter("dataset count must be >= 1"));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::parameter(format!("misalignment delta must be >= 0, got {}", self.delta)));
        }
        if self.validation_seed == self.master_seed {
            return Err(Error::parameter("validation seed must differ from the master seed"));
        }
        Ok(())
    }
}

/// One truth image with its paired prior.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    pub truth: RealGrid,
    pub truth_latent: ExtendedLatent,
    /// Same latent as the truth except for the contrast block.
    pub prior: RealGrid,
    pub prior_latent: ExtendedLatent,
    pub misaligned: Option<(RealGrid, ExtendedLatent)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub spec: DatasetSpec,
    pub validation: Sample,
    pub test: Vec<Sample>,
}

#[derive(Serialize, Deserialize)]
struct DatasetHeader {
    #[serde(flatten)]
    spec: DatasetSpec,
    generator: String,
    misalignment_model: String,
}

fn make_sample<G: Generator + ?Sized>(gen: &G, id: String, seed: u64, delta: f64) -> Result<Sample> {
    let k = gen.style_dim();
    let truth_latent = gen.sample_mixed_latent(derive_seed(seed, "truth", 0))?;
    let other = gen.sample_mixed_latent(derive_seed(seed, "contrast", 0))?;
    let prior_latent = style_mix(&truth_latent, &other, k, 2 * k + 1)?;
    let misaligned = if delta > 0.0 {
        let contrast = CONTRAST_BLOCK * k..(CONTRAST_BLOCK + 1) * k;
        let mut rng = seeds::rng(derive_seed(seed, "misalign", 0));
        let mut w = prior_latent.clone();
        for (i, v) in w.values_mut().iter_mut().enumerate() {
            if !contrast.contains(&i) {
                *v += rng.random_range(-delta..=delta);
            }
        }
        Some((gen.synthesize(&w)?, w))
    } else {
        None
    };
    Ok(Sample {
        id,
        truth: gen.synthesize(&truth_latent)?,
        truth_latent,
        prior: gen.synthesize(&prior_latent)?,
        prior_latent,
        misaligned,
    })
}

pub fn test_id(i: usize) -> String {
    format!("{i:04}")
}

/// Deterministic paired-contrast dataset: `spec.count` test samples plus
/// one validation sample from the reserved stream.
pub fn gen_dataset<G: Generator + ?Sized>(spec: &DatasetSpec, gen: &G) -> Result<Dataset> {
    spec.validate()?;
    let validation = make_sample(
        gen,
        VALIDATION_ID.to_string(),
        derive_seed(spec.validation_seed, "validation", 0),
        spec.delta,
    )?;
    let test = (0..spec.count)
        .map(|i| make_sample(gen, test_id(i), derive_seed(spec.master_seed, "sample", i as u64), spec.delta))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        spec: spec.clone(),
        validation,
        test,
    })
}

pub fn latent_tensor(w: &ExtendedLatent) -> Tensor {
    Tensor::real(vec![w.layers() as u32, w.style_dim() as u32], w.values().to_vec())
}

pub fn read_latent(path: &Path) -> Result<ExtendedLatent> {
    let t = Tensor::read(path)?;
    if t.dims.len() != 2 {
        return Err(Error::parse("latent tensor must be 2-D").at_path(path));
    }
    let values = t.as_real().map_err(|e| e.at_path(path))?.to_vec();
    ExtendedLatent::new(t.dims[1] as usize, values).map_err(|e| Error::Parse {
        path: Some(path.to_path_buf()),
        line: None,
        message: e.to_string(),
    })
}

fn read_grid(path: &Path) -> Result<RealGrid> {
    RealGrid::from_tensor(&Tensor::read(path)?).map_err(|e| e.at_path(path))
}

impl Sample {
    fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.truth.to_tensor().write(dir.join("truth.tnsr"))?;
        latent_tensor(&self.truth_latent).write(dir.join("truth_latent.tnsr"))?;
        self.prior.to_tensor().write(dir.join("prior.tnsr"))?;
        latent_tensor(&self.prior_latent).write(dir.join("prior_latent.tnsr"))?;
        if let Some((f, w)) = &self.misaligned {
            f.to_tensor().write(dir.join("misaligned_prior.tnsr"))?;
            latent_tensor(w).write(dir.join("misaligned_prior_latent.tnsr"))?;
        }
        Ok(())
    }

    fn read(dir: &Path, id: String, misaligned: bool) -> Result<Self> {
        let misaligned = if misaligned {
            Some((
                read_grid(&dir.join("misaligned_prior.tnsr"))?,
                read_latent(&dir.join("misaligned_prior_latent.tnsr"))?,
            ))
        } else {
            None
        };
        Ok(Self {
            id,
            truth: read_grid(&dir.join("truth.tnsr"))?,
            truth_latent: read_latent(&dir.join("truth_latent.tnsr"))?,
            prior: read_grid(&dir.join("prior.tnsr"))?,
            prior_latent: read_latent(&dir.join("prior_latent.tnsr"))?,
            misaligned,
        })
    }
}

impl Dataset {
    /// Layout: `dataset.toml`, `generator.sgen`, then one directory per sample.
    pub fn write(&self, dir: &Path, gen: &GeneratorParams) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        gen.write(dir.join("generator.sgen"))?;
        let header = DatasetHeader {
            spec: self.spec.clone(),
            generator: "generator.sgen".into(),
            misalignment_model: MISALIGNMENT_NOTE.into(),
        };
        sidecar::write_toml(&dir.join("dataset.toml"), &header)?;
        self.validation.write(&dir.join(&self.validation.id))?;
        for s in &self.test {
            s.write(&dir.join(&s.id))?;
        }
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<(Self, GeneratorParams)> {
        let header: DatasetHeader = sidecar::read_toml(&dir.join("dataset.toml"))?;
        header.spec.validate()?;
        let gen = GeneratorParams::read(dir.join(&header.generator))?;
        let mis = header.spec.delta > 0.0;
        let validation = Sample::read(&dir.join(VALIDATION_ID), VALIDATION_ID.into(), mis)?;
        let test = (0..header.spec.count)
            .map(|i| Sample::read(&dir.join(test_id(i)), test_id(i), mis))
            .collect::<Result<Vec<_>>>()?;
        Ok((
            Self {
                spec: header.spec,
                validation,
                test,
            },
            gen,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_gen() -> GeneratorParams {
        GeneratorParams::new(8, 4, 32, 32, 5).unwrap()
    }

    #[test]
    fn aligned_prior_differs_only_in_contrast_block() {
        let gen = small_gen();
        let d = gen_dataset(&DatasetSpec::new(3, 11, 0.0), &gen).unwrap();
        assert_eq!(d.test.len(), 3);
        for s in d.test.iter().chain([&d.validation]) {
            assert!(s.misaligned.is_none());
            for b in [0, 2, 3] {
                assert_eq!(s.prior_latent.block(b), s.truth_latent.block(b));
            }
            assert_ne!(s.prior_latent.block(1), s.truth_latent.block(1));
        }
    }

    #[test]
    fn misalignment_stays_within_delta() {
        let gen = small_gen();
        let d = gen_dataset(&DatasetSpec::new(4, 12, 0.5), &gen).unwrap();
        for s in &d.test {
            let (_, w) = s.misaligned.as_ref().unwrap();
            let diffs: Vec<f64> = (0..32)
                .filter(|i| !(8..16).contains(i))
                .map(|i| (w.values()[i] - s.truth_latent.values()[i]).abs())
                .collect();
            let worst = diffs.iter().cloned().fold(0.0, f64::max);
            assert!(worst <= 0.5 && worst > 0.0);
            assert_eq!(w.block(1), s.prior_latent.block(1));
        }
    }

    #[test]
    fn default_sized_dataset_has_twenty_samples() {
        let d = gen_dataset(&DatasetSpec::new(20, 1, 0.0), &small_gen()).unwrap();
        assert_eq!(d.test.len(), 20);
        let ids: Vec<&str> = d.test.iter().map(|s| s.id.as_str()).collect();
        assert!(!ids.contains(&VALIDATION_ID));
        assert_ne!(d.validation.truth, d.test[0].truth);
    }

    #[test]
    fn generation_is_deterministic_and_round_trips() {
        let gen = small_gen();
        let spec = DatasetSpec::new(2, 13, 0.3);
        let a = gen_dataset(&spec, &gen).unwrap();
        assert_eq!(a, gen_dataset(&spec, &gen).unwrap());
        let dir = tempfile::tempdir().unwrap();
        a.write(dir.path(), &gen).unwrap();
        let (b, g2) = Dataset::read(dir.path()).unwrap();
        assert_eq!(b, a);
        assert_eq!(g2, gen);
    }

    #[test]
    fn invalid_specs() {
        assert!(matches!(DatasetSpec::new(0, 1, 0.0).validate(), Err(Error::Parameter(_))));
        assert!(DatasetSpec::new(1, 1, -0.1).validate().is_err());
        let mut s = DatasetSpec::new(1, 1, 0.0);
        s.validation_seed = 1;
        assert!(s.validate().is_err());
    }
}
