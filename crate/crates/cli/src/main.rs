//! Command-line harness for the reconstruction experiments.
//!
//! Every key of the experiment config can be set on the command line as
//! `--key=value` (dotted for nested tables, e.g. `--adam.iters=300`); these
//! are applied after `--config`.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use styleprior_core::experiment::dataset::{DEFAULT_DELTA, DEFAULT_VALIDATION_SEED};
use styleprior_core::experiment::{
    self, gen_dataset, grid_search, report, run_suite, self_check, Dataset, DatasetSpec, ExperimentConfig, Tuning,
};
use styleprior_core::imaging::{generate_cartesian_mask, simulate_measurement};
use styleprior_core::seeds::derive_seed;
use styleprior_core::tensor::Tensor;
use styleprior_core::{Error, GeneratorParams, KSpaceMeasurement, RealGrid, Result};

#[derive(Parser)]
#[command(name = "styleprior", version, about = "Prior-image-constrained MR reconstruction experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML experiment config; keys missing from the file keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed of measurement and optimizer streams.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Phantom datasets.
    Phantom {
        #[command(subcommand)]
        action: PhantomAction,
    },
    /// Sampling masks.
    Mask {
        #[command(subcommand)]
        action: MaskAction,
    },
    /// Simulate a k-space measurement of an image tensor.
    Simulate {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Tune the configured method on the dataset's validation image.
    GridSearch {
        #[arg(long)]
        dataset: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Reconstruct one measurement with the configured method.
    Reconstruct {
        #[arg(long)]
        measurement: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Generator file; the default generator is used when absent.
        #[arg(long)]
        generator: Option<PathBuf>,
        #[arg(long)]
        prior_image: Option<PathBuf>,
        #[arg(long)]
        prior_latent: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Reconstruct every test image of a dataset and write metrics.
    RunSuite {
        #[arg(long)]
        dataset: PathBuf,
        /// Weights from a previous grid search (`tuning.toml`).
        #[arg(long, conflicts_with = "tune")]
        tuning: Option<PathBuf>,
        /// Grid-search on the validation image first.
        #[arg(long)]
        tune: bool,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Summarize metrics CSVs.
    Report {
        #[arg(required = true)]
        csv: Vec<PathBuf>,
        /// Where to write the aggregate CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-read every file under a directory.
    SelfCheck { dir: PathBuf },
}

#[derive(Subcommand)]
enum PhantomAction {
    /// Generate a paired-contrast dataset.
    Gen {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        count: usize,
        #[arg(long, default_value_t = DEFAULT_DELTA)]
        delta: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_VALIDATION_SEED)]
        validation_seed: u64,
        #[arg(long)]
        generator: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum MaskAction {
    /// Generate a column-line Cartesian mask.
    Gen {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 64)]
        height: usize,
        #[arg(long, default_value_t = 64)]
        width: usize,
        #[arg(long = "R", default_value_t = 4.0)]
        r: f64,
        #[arg(long, default_value_t = styleprior_core::imaging::DEFAULT_CENTER_FRACTION)]
        center_fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

const CONFIG_COMMANDS: [&str; 4] = ["simulate", "grid-search", "reconstruct", "run-suite"];

/// Splits `--key=value` arguments naming config keys off the argument list of
/// the commands that take a config.
fn split_overrides(args: Vec<String>) -> (Vec<String>, Vec<(String, String)>) {
    if !args.get(1).is_some_and(|c| CONFIG_COMMANDS.contains(&c.as_str())) {
        return (args, Vec::new());
    }
    let keys = config_keys();
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    for a in args {
        if let Some((k, v)) = a.strip_prefix("--").and_then(|s| s.split_once('=')) {
            if keys.iter().any(|key| key == k) {
                overrides.push((k.to_string(), v.to_string()));
                continue;
            }
        }
        rest.push(a);
    }
    (rest, overrides)
}

fn config_keys() -> Vec<String> {
    fn walk(prefix: &str, t: &toml::Table, out: &mut Vec<String>) {
        for (k, v) in t {
            let name = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
            if let toml::Value::Table(inner) = v {
                walk(&name, inner, out);
            } else {
                out.push(name);
            }
        }
    }
    let root = toml::Table::try_from(ExperimentConfig::default()).expect("default config serializes");
    let mut out = Vec::new();
    walk("", &root, &mut out);
    out
}

fn load_config(args: &ConfigArgs, overrides: &[(String, String)]) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(p) => ExperimentConfig::read(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    for (k, v) in overrides {
        cfg.set(k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn read_grid(path: &Path) -> Result<RealGrid> {
    RealGrid::from_tensor(&Tensor::read(path)?).map_err(|e| e.at_path(path))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn run(cli: Cli, overrides: &[(String, String)]) -> Result<()> {
    match cli.command {
        Command::Phantom {
            action:
                PhantomAction::Gen {
                    out,
                    count,
                    delta,
                    seed,
                    validation_seed,
                    generator,
                },
        } => {
            let gen = match generator {
                Some(p) => GeneratorParams::read(p)?,
                None => GeneratorParams::default(),
            };
            let spec = DatasetSpec {
                count,
                master_seed: seed,
                delta,
                validation_seed,
            };
            gen_dataset(&spec, &gen)?.write(&out, &gen)?;
            println!("wrote {count} test samples and 1 validation sample to {}", out.display());
        }
        Command::Mask {
            action:
                MaskAction::Gen {
                    out,
                    height,
                    width,
                    r,
                    center_fraction,
                    seed,
                },
        } => {
            let m = generate_cartesian_mask(height, width, r, center_fraction, seed)?;
            m.write(&out)?;
            println!("{} of {width} columns kept", m.kept_columns.len());
        }
        Command::Simulate { image, out, cfg } => {
            let cfg = load_config(&cfg, overrides)?;
            let f = read_grid(&image)?;
            let g = simulate_measurement(
                &f,
                cfg.r,
                cfg.center_fraction,
                cfg.snr_db,
                derive_seed(cfg.seed, "mask", 0),
                derive_seed(cfg.seed, "noise", 0),
            )?;
            g.write(&out)?;
            println!("{} samples written to {}", g.values.len(), out.display());
        }
        Command::GridSearch { dataset, cfg } => {
            let cfg = load_config(&cfg, overrides)?;
            let (d, gen) = Dataset::read(&dataset)?;
            let dir = cfg.output_dir.join(experiment::runner::run_name(&cfg));
            let rep = grid_search(&cfg, &gen, &d.validation, Some(&dir))?;
            let failed = rep.points.iter().filter(|p| p.mse.is_none()).count();
            println!(
                "{}: best lambda = {}, alpha = {}, lambda_phi = {} (mse {:.6e}); {} points, {failed} failed; written to {}",
                cfg.method,
                rep.best.lambda,
                rep.best.alpha,
                rep.best.lambda_phi,
                rep.best_mse,
                rep.points.len(),
                dir.display()
            );
        }
        Command::Reconstruct {
            measurement,
            out,
            generator,
            prior_image,
            prior_latent,
            cfg,
        } => {
            let cfg = load_config(&cfg, overrides)?;
            let g = KSpaceMeasurement::read(&measurement)?;
            let gen = match generator {
                Some(p) => GeneratorParams::read(p)?,
                None => GeneratorParams::default(),
            };
            let prior = match (prior_image, prior_latent) {
                (Some(fi), Some(wi)) => Some((read_grid(&fi)?, experiment::dataset::read_latent(&wi)?)),
                (None, None) => None,
                _ => return Err(Error::Parameter("--prior-image and --prior-latent go together".into())),
            };
            let r = experiment::reconstruct(
                &cfg,
                &Tuning::from_config(&cfg),
                &gen,
                &g,
                prior.as_ref().map(|(f, w)| (f, w)),
                cfg.seed,
            )?;
            r.save(&out)?;
            experiment::pgm::write_pgm16(&out.join("recon.pgm"), &r.image)?;
            println!("{} iterations, data fidelity {:.6e}; written to {}", r.iterations(), r.data_fidelity, out.display());
        }
        Command::RunSuite {
            dataset,
            tuning,
            tune,
            cfg,
        } => {
            let cfg = load_config(&cfg, overrides)?;
            let (d, gen) = Dataset::read(&dataset)?;
            let out = if tune {
                experiment::tune_and_run(&cfg, &gen, &d)?.1
            } else {
                let t = match tuning {
                    Some(p) => Tuning::read(&p)?,
                    None => Tuning::from_config(&cfg),
                };
                run_suite(&cfg, &t, &gen, &d)?
            };
            let failed = out.rows.iter().filter(|r| !r.is_ok()).count();
            println!("{} images, {failed} failed; metrics in {}", out.rows.len(), out.csv_path.display());
        }
        Command::Report { csv, out } => {
            let paths: Vec<&Path> = csv.iter().map(PathBuf::as_path).collect();
            let (_, table, agg) = report(&paths)?;
            print!("{table}");
            if let Some(p) = out {
                write_text(&p, &agg)?;
            }
        }
        Command::SelfCheck { dir } => {
            let rep = self_check(&dir)?;
            for (kind, n) in &rep.checked {
                println!("{kind:<12} {n}");
            }
            for p in &rep.skipped {
                println!("skipped {}", p.display());
            }
            println!("{} files re-read", rep.total());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let (args, overrides) = split_overrides(std::env::args().collect());
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli, &overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
