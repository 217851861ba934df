use std::cmp::Ordering;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::config::{ExperimentConfig, PriorKind, PriorLatentSource};
use crate::experiment::dataset::{latent_tensor, Dataset, Sample, VALIDATION_ID};
use crate::experiment::pgm::write_pgm16;
use crate::generator::{invert, ExtendedLatent, Generator, StyleConstraint};
use crate::imaging::{simulate_measurement, KSpaceMeasurement};
use crate::metrics::{mse, rmse, ssim, SsimParams};
use crate::recon::{csgm, picgm, pls_tv, wpiccs, AdamConfig, Method, ReconResult, WpiccsOptions};
use crate::seeds::derive_seed;
use crate::sidecar;
use crate::tensor::RealGrid;

pub const SCHEMA_VERSION: u32 = 1;
pub const METRICS_HEADER: [&str; 10] = [
    "schema_version",
    "image_id",
    "method",
    "R",
    "snr_db",
    "rmse",
    "ssim",
    "wall_time_s",
    "seed",
    "status",
];

/// Regularization weights of one run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tuning {
    pub lambda: f64,
    pub alpha: f64,
    pub lambda_phi: f64,
}

impl Tuning {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        Self {
            lambda: cfg.lambda,
            alpha: cfg.alpha,
            lambda_phi: cfg.lambda_phi,
        }
    }

    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        cfg.lambda = self.lambda;
        cfg.alpha = self.alpha;
        cfg.lambda_phi = self.lambda_phi;
    }

    pub fn read(path: &Path) -> Result<Self> {
        sidecar::read_toml(path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        sidecar::write_toml(path, self)
    }
}

/// Per-image seed; measurement and optimizer streams derive from it.
pub fn image_seed(master: u64, id: &str) -> u64 {
    derive_seed(master, &format!("image/{id}"), 0)
}

/// Measurement of `truth` under the sampling settings of `cfg`. Every method
/// sees the same measurement of a given image.
pub fn measure(cfg: &ExperimentConfig, seed: u64, truth: &RealGrid) -> Result<KSpaceMeasurement> {
    let tag = cfg.r.to_bits();
    simulate_measurement(
        truth,
        cfg.r,
        cfg.center_fraction,
        cfg.snr_db,
        derive_seed(seed, "mask", tag),
        derive_seed(seed, "noise", tag ^ cfg.snr_db.to_bits()),
    )
}

fn adam_with_seed(cfg: &ExperimentConfig, seed: u64) -> AdamConfig {
    AdamConfig {
        seed,
        ..cfg.adam.clone()
    }
}

/// Runs `cfg.method` on one measurement. `prior` is needed by the prior-based
/// methods only.
pub fn reconstruct<G: Generator + ?Sized>(
    cfg: &ExperimentConfig,
    tuning: &Tuning,
    gen: &G,
    g: &KSpaceMeasurement,
    prior: Option<(&RealGrid, &ExtendedLatent)>,
    seed: u64,
) -> Result<ReconResult> {
    let need_prior = || prior.ok_or_else(|| Error::parameter(format!("{} needs a prior image", cfg.method)));
    match cfg.method {
        Method::PlsTv => pls_tv(g, tuning.lambda, &cfg.pd),
        Method::Wpiccs => {
            let opts = WpiccsOptions {
                levels: cfg.wavelet_levels,
                reweight: cfg.reweight,
            };
            wpiccs(g, need_prior()?.0, tuning.lambda, tuning.alpha, &cfg.pd, &opts)
        }
        Method::Csgm => csgm(g, gen, tuning.lambda_phi, &adam_with_seed(cfg, derive_seed(seed, "adam", 0)), cfg.latent_space),
        Method::Picgm => {
            let (f_pi, w) = need_prior()?;
            let w_pi = match cfg.prior_latent {
                PriorLatentSource::Oracle => w.clone(),
                PriorLatentSource::Invert => {
                    invert(gen, f_pi, None, 0.0, &adam_with_seed(cfg, derive_seed(seed, "invert", 0)))?.latent
                }
            };
            let c = StyleConstraint::new(cfg.p1, cfg.p2, w_pi)?;
            picgm(g, gen, &c, tuning.lambda_phi, &adam_with_seed(cfg, derive_seed(seed, "adam", 0)))
        }
    }
}

fn prior_of<'a>(cfg: &ExperimentConfig, s: &'a Sample) -> Result<(&'a RealGrid, &'a ExtendedLatent)> {
    match cfg.prior {
        PriorKind::Aligned => Ok((&s.prior, &s.prior_latent)),
        PriorKind::Misaligned => s
            .misaligned
            .as_ref()
            .map(|(f, w)| (f, w))
            .ok_or_else(|| Error::parameter("dataset has no misaligned priors (generated with delta = 0)")),
    }
}

/// One evaluated grid point; `mse` is `None` when the run failed.
#[derive(Clone, Debug, PartialEq)]
pub struct GridPoint {
    pub tuning: Tuning,
    pub mse: Option<f64>,
    pub status: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridReport {
    pub method: Method,
    pub points: Vec<GridPoint>,
    pub best: Tuning,
    pub best_mse: f64,
}

/// Grid points of `cfg.method` in grid order. Weights a method does not use
/// keep their configured values.
pub fn grid_points(cfg: &ExperimentConfig) -> Vec<Tuning> {
    let base = Tuning::from_config(cfg);
    match cfg.method {
        Method::PlsTv => cfg.lambda_grid.iter().map(|&lambda| Tuning { lambda, ..base }).collect(),
        Method::Wpiccs => cfg
            .lambda_grid
            .iter()
            .flat_map(|&lambda| cfg.alpha_grid.iter().map(move |&alpha| Tuning { lambda, alpha, ..base }))
            .collect(),
        Method::Csgm | Method::Picgm => cfg
            .lambda_phi_grid
            .iter()
            .map(|&lambda_phi| Tuning { lambda_phi, ..base })
            .collect(),
    }
}

/// `(penalty weight, alpha)` in tie-break order for `method`.
fn tie_key(method: Method, t: &Tuning) -> (f64, f64) {
    match method {
        Method::PlsTv => (t.lambda, 0.0),
        Method::Wpiccs => (t.lambda, t.alpha),
        Method::Csgm | Method::Picgm => (t.lambda_phi, 0.0),
    }
}

/// Lowest MSE; ties go to the smaller weight, then the smaller alpha.
pub fn select_best(method: Method, points: &[GridPoint]) -> Option<(Tuning, f64)> {
    points
        .iter()
        .filter_map(|p| p.mse.map(|m| (p.tuning, m)))
        .min_by(|a, b| {
            let (ka, kb) = (tie_key(method, &a.0), tie_key(method, &b.0));
            a.1.total_cmp(&b.1)
                .then(ka.0.total_cmp(&kb.0))
                .then(ka.1.total_cmp(&kb.1))
        })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl GridReport {
    pub fn csv(&self, r: f64, snr_db: f64) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["method", "R", "snr_db", "lambda", "alpha", "lambda_phi", "mse", "status"])
            .expect("in-memory write");
        for p in &self.points {
            let t = &p.tuning;
            let (lambda, alpha, lambda_phi) = match self.method {
                Method::PlsTv => (Some(t.lambda), None, None),
                Method::Wpiccs => (Some(t.lambda), Some(t.alpha), None),
                Method::Csgm | Method::Picgm => (None, None, Some(t.lambda_phi)),
            };
            w.write_record([
                self.method.name().to_string(),
                r.to_string(),
                snr_db.to_string(),
                opt(lambda),
                opt(alpha),
                opt(lambda_phi),
                opt(p.mse),
                p.status.clone(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
    }
}

fn status_of(e: &Error) -> String {
    let kind = match e {
        Error::Numerical { .. } => "numerical",
        Error::Parameter(_) | Error::Contract(_) => "parameter",
        Error::Io { .. } | Error::Parse { .. } => "io",
    };
    format!("failed-{kind}: {e}")
}

/// Runs every grid point of `cfg.method` on the validation sample and picks
/// the lowest-MSE configuration. Writes `grid.csv` under `out` when given.
pub fn grid_search<G: Generator + ?Sized>(
    cfg: &ExperimentConfig,
    gen: &G,
    validation: &Sample,
    out: Option<&Path>,
) -> Result<GridReport> {
    cfg.validate()?;
    cfg.validate_grids()?;
    let seed = image_seed(cfg.seed, &validation.id);
    let g = measure(cfg, seed, &validation.truth)?;
    let prior = if cfg.method.uses_prior() { Some(prior_of(cfg, validation)?) } else { None };
    let points: Vec<GridPoint> = grid_points(cfg)
        .into_iter()
        .map(|tuning| match reconstruct(cfg, &tuning, gen, &g, prior, seed).and_then(|r| mse(&r.image, &validation.truth)) {
            Ok(m) if m.is_finite() => GridPoint {
                tuning,
                mse: Some(m),
                status: "ok".into(),
            },
            Ok(_) => GridPoint {
                tuning,
                mse: None,
                status: "failed-numerical: non-finite mse".into(),
            },
            Err(e) => GridPoint {
                tuning,
                mse: None,
                status: status_of(&e),
            },
        })
        .collect();
    let (best, best_mse) = select_best(cfg.method, &points).ok_or_else(|| Error::Numerical {
        iteration: 0,
        message: format!("every grid point of {} failed", cfg.method),
        trace: Vec::new(),
    })?;
    let report = GridReport {
        method: cfg.method,
        points,
        best,
        best_mse,
    };
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let p = dir.join("grid.csv");
        fs::write(&p, report.csv(cfg.r, cfg.snr_db)).map_err(|e| Error::io(&p, e))?;
        best.write(&dir.join("tuning.toml"))?;
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub image_id: String,
    pub method: Method,
    pub r: f64,
    pub snr_db: f64,
    pub rmse: Option<f64>,
    pub ssim: Option<f64>,
    pub wall_time_s: Option<f64>,
    pub seed: u64,
    pub status: String,
}

impl MetricsRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(METRICS_HEADER).expect("in-memory write");
    for r in rows {
        w.write_record([
            SCHEMA_VERSION.to_string(),
            r.image_id.clone(),
            r.method.name().to_string(),
            r.r.to_string(),
            r.snr_db.to_string(),
            opt(r.rmse),
            opt(r.ssim),
            opt(r.wall_time_s),
            r.seed.to_string(),
            r.status.clone(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

/// Directory name of a suite run, e.g. `picgm_R4_snr20` or
/// `wpiccs_R8_snr20_misaligned`.
pub fn run_name(cfg: &ExperimentConfig) -> String {
    let mut s = format!("{}_R{}_snr{}", cfg.method, cfg.r, cfg.snr_db);
    if cfg.method.uses_prior() && cfg.prior == PriorKind::Misaligned {
        s.push_str("_misaligned");
    }
    s
}

#[derive(Clone, Debug)]
pub struct SuiteOutput {
    pub rows: Vec<MetricsRow>,
    pub dir: PathBuf,
    pub csv_path: PathBuf,
}

fn save_artifacts(dir: &Path, g: &KSpaceMeasurement, truth: &RealGrid, r: &ReconResult) -> Result<()> {
    r.save(dir)?;
    g.write(&dir.join("measurement.tnsr"))?;
    write_pgm16(&dir.join("recon.pgm"), &r.image)?;
    let diff = RealGrid::new(
        truth.height(),
        truth.width(),
        r.image.data().iter().zip(truth.data()).map(|(a, b)| (a - b).abs()).collect(),
    )?;
    write_pgm16(&dir.join("diff.pgm"), &diff)
}

/// Reconstructs every test sample with `tuning`. Writes per-image artifacts
/// and `metrics.csv` to `cfg.output_dir/<run_name>/`. Failures of single
/// images are recorded in the status column; I/O errors abort.
pub fn run_suite<G: Generator + ?Sized>(
    cfg: &ExperimentConfig,
    tuning: &Tuning,
    gen: &G,
    dataset: &Dataset,
) -> Result<SuiteOutput> {
    cfg.validate()?;
    if dataset.test.iter().any(|s| s.id == VALIDATION_ID || s.id == dataset.validation.id) {
        return Err(Error::contract("the validation image appears in the test set"));
    }
    let dir = cfg.output_dir.join(run_name(cfg));
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let rows = dataset
        .test
        .par_iter()
        .map(|s| -> Result<MetricsRow> {
            let seed = image_seed(cfg.seed, &s.id);
            let mut row = MetricsRow {
                image_id: s.id.clone(),
                method: cfg.method,
                r: cfg.r,
                snr_db: cfg.snr_db,
                rmse: None,
                ssim: None,
                wall_time_s: None,
                seed,
                status: "ok".into(),
            };
            let attempt = (|| {
                let g = measure(cfg, seed, &s.truth)?;
                let prior = if cfg.method.uses_prior() { Some(prior_of(cfg, s)?) } else { None };
                let r = reconstruct(cfg, tuning, gen, &g, prior, seed)?;
                Ok::<_, Error>((g, r))
            })();
            match attempt {
                Ok((g, r)) => {
                    row.rmse = Some(rmse(&r.image, &s.truth)?);
                    row.ssim = Some(ssim(&r.image, &s.truth, &SsimParams::for_reference(&s.truth))?);
                    if cfg.record_timing {
                        row.wall_time_s = Some(r.wall_time.as_secs_f64());
                    }
                    save_artifacts(&dir.join(&s.id), &g, &s.truth, &r)?;
                }
                Err(e @ Error::Io { .. }) => return Err(e),
                Err(e) => row.status = status_of(&e),
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    if rows.iter().any(|r| r.image_id == dataset.validation.id) {
        return Err(Error::contract("validation image id leaked into the test metrics"));
    }
    tuning.write(&dir.join("tuning.toml"))?;
    let csv_path = dir.join("metrics.csv");
    fs::write(&csv_path, metrics_csv(&rows)).map_err(|e| Error::io(&csv_path, e))?;
    Ok(SuiteOutput { rows, dir, csv_path })
}

/// Grid search on the validation sample followed by the test-set suite, both
/// written under `cfg.output_dir/<run_name>/`.
pub fn tune_and_run<G: Generator + ?Sized>(
    cfg: &ExperimentConfig,
    gen: &G,
    dataset: &Dataset,
) -> Result<(GridReport, SuiteOutput)> {
    let grid = grid_search(cfg, gen, &dataset.validation, Some(&cfg.output_dir.join(run_name(cfg))))?;
    let suite = run_suite(cfg, &grid.best, gen, dataset)?;
    Ok((grid, suite))
}

/// Writes a latent as a `[layers, style_dim]` tensor.
pub fn write_latent(path: &Path, w: &ExtendedLatent) -> Result<()> {
    latent_tensor(w).write(path)
}

pub(crate) fn order_rows(a: &MetricsRow, b: &MetricsRow) -> Ordering {
    a.method
        .cmp(&b.method)
        .then(a.r.total_cmp(&b.r))
        .then(a.snr_db.total_cmp(&b.snr_db))
}
