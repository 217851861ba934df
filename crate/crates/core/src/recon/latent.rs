//! Reconstruction in the generator's latent space: unconstrained (CSGM) and
//! prior-style-constrained (PICGM).

use std::ops::Range;
use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::{broadcast, sample_z, ExtendedLatent, Generator, LatentZ, StyleConstraint};
use crate::imaging::{KSpaceMeasurement, MaskedFourier};
use crate::recon::adam::{minimize, AdamConfig, Evaluation, TraceEntry};
use crate::recon::gaussianization::gaussianization_penalty;
use crate::recon::result::{echo, Method, ReconResult};
use crate::seeds;
use crate::tensor::RealGrid;

/// Where CSGM searches.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LatentSpace {
    /// Independent style blocks (W+).
    #[default]
    WPlus,
    /// Input noise `z`, broadcast through the mapping network.
    Z,
}

impl LatentSpace {
    pub fn name(self) -> &'static str {
        match self {
            LatentSpace::WPlus => "w-plus",
            LatentSpace::Z => "z",
        }
    }
}

impl std::str::FromStr for LatentSpace {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "w-plus" => Ok(LatentSpace::WPlus),
            "z" => Ok(LatentSpace::Z),
            _ => Err(Error::parameter(format!("unknown latent space '{s}' (expected w-plus or z)"))),
        }
    }
}

/// Seed of restart `r` derived from the run seed.
pub fn restart_seed(seed: u64, restart: usize) -> u64 {
    seeds::derive_seed(seed, "restart", restart as u64)
}

pub(crate) struct LatentRun {
    pub latent: ExtendedLatent,
    pub image: RealGrid,
    pub trace: Vec<TraceEntry>,
    pub data_fidelity: f64,
}

/// Objective `D(G(w)) + lambda_phi phi(w)` for a W+ latent, where `data`
/// returns the image-space fidelity and its gradient.
pub(crate) fn evaluate_latent<G, D>(
    gen: &G,
    w: &ExtendedLatent,
    lambda_phi: f64,
    data: &D,
) -> Result<(Evaluation, RealGrid)>
where
    G: Generator + ?Sized,
    D: Fn(&RealGrid) -> Result<(f64, RealGrid)>,
{
    let image = gen.synthesize(w)?;
    let (fid, img_grad) = data(&image)?;
    let mut grad = gen.synthesize_vjp(w, &img_grad)?;
    let mut penalty = 0.0;
    if lambda_phi != 0.0 {
        let (phi, phi_grad) = gaussianization_penalty(w.values(), gen.gaussianization_stats());
        penalty = lambda_phi * phi;
        for (g, p) in grad.iter_mut().zip(phi_grad) {
            *g += lambda_phi * p;
        }
    }
    Ok((
        Evaluation {
            data_fidelity: fid,
            penalty,
            grad,
        },
        image,
    ))
}

/// Adam over the coordinates `free` of `start`; every other coordinate keeps
/// its value from `start` bit for bit.
pub(crate) fn optimize_free_block<G, D>(
    gen: &G,
    start: &ExtendedLatent,
    free: Range<usize>,
    lambda_phi: f64,
    adam: &AdamConfig,
    data: &D,
) -> Result<LatentRun>
where
    G: Generator + ?Sized,
    D: Fn(&RealGrid) -> Result<(f64, RealGrid)>,
{
    let x0 = start.values()[free.clone()].to_vec();
    let assemble = |x: &[f64]| {
        let mut w = start.clone();
        w.values_mut()[free.clone()].copy_from_slice(x);
        w
    };
    let run = minimize(x0, adam, |x| {
        let w = assemble(x);
        let (mut e, _) = evaluate_latent(gen, &w, lambda_phi, data)?;
        e.grad = e.grad[free.clone()].to_vec();
        Ok(e)
    })?;
    let latent = assemble(&run.x);
    let image = gen.synthesize(&latent)?;
    let data_fidelity = run.trace.last().map(|t| t.data_fidelity).unwrap_or(f64::NAN);
    Ok(LatentRun {
        latent,
        image,
        trace: run.trace,
        data_fidelity,
    })
}

/// Adam over `z`, with `w = broadcast(map(z))`.
fn optimize_z<G, D>(gen: &G, z0: LatentZ, lambda_phi: f64, adam: &AdamConfig, data: &D) -> Result<LatentRun>
where
    G: Generator + ?Sized,
    D: Fn(&RealGrid) -> Result<(f64, RealGrid)>,
{
    let k = gen.style_dim();
    let to_w = |z: &[f64]| -> Result<(LatentZ, ExtendedLatent)> {
        let z = LatentZ {
            values: z.to_vec(),
            seed: z0.seed,
        };
        let w = broadcast(&gen.map_to_style(&z)?, gen.layers())?;
        Ok((z, w))
    };
    let run = minimize(z0.values.clone(), adam, |x| {
        let (z, w) = to_w(x)?;
        let (mut e, _) = evaluate_latent(gen, &w, lambda_phi, data)?;
        let mut block_sum = vec![0.0; k];
        for (i, g) in e.grad.iter().enumerate() {
            block_sum[i % k] += g;
        }
        e.grad = gen.map_to_style_vjp(&z, &block_sum)?;
        Ok(e)
    })?;
    let (_, latent) = to_w(&run.x)?;
    let image = gen.synthesize(&latent)?;
    let data_fidelity = run.trace.last().map(|t| t.data_fidelity).unwrap_or(f64::NAN);
    Ok(LatentRun {
        latent,
        image,
        trace: run.trace,
        data_fidelity,
    })
}

/// Lowest data fidelity wins; ties go to the lowest restart index.
pub(crate) fn best_run(runs: Vec<Result<LatentRun>>) -> Result<(usize, LatentRun)> {
    let mut best: Option<(usize, LatentRun)> = None;
    let mut first_err = None;
    for (r, run) in runs.into_iter().enumerate() {
        match run {
            Ok(run) => {
                let better = match &best {
                    None => true,
                    Some((_, b)) => run.data_fidelity < b.data_fidelity,
                };
                if better {
                    best = Some((r, run));
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    match (best, first_err) {
        (Some(b), _) => Ok(b),
        (None, Some(e)) => Err(e),
        (None, None) => Err(Error::parameter("no restarts were run")),
    }
}

fn measurement_fidelity<'a>(op: &'a MaskedFourier, g: &[Complex64]) -> impl Fn(&RealGrid) -> Result<(f64, RealGrid)> + 'a {
    let g = g.to_vec();
    move |f: &RealGrid| op.fidelity_gradient(f, &g)
}

fn check_dims<G: Generator + ?Sized>(gen: &G, g: &KSpaceMeasurement) -> Result<()> {
    if (g.mask.height, g.mask.width) != gen.image_dims() {
        return Err(Error::contract(format!(
            "measurement grid {}x{} does not match generator output {:?}",
            g.mask.height,
            g.mask.width,
            gen.image_dims()
        )));
    }
    Ok(())
}

fn latent_echo(adam: &AdamConfig, lambda_phi: f64) -> Vec<(String, String)> {
    vec![
        echo("lambda_phi", lambda_phi),
        echo("adam_step", adam.step),
        echo("adam_beta1", adam.beta1),
        echo("adam_beta2", adam.beta2),
        echo("adam_iters", adam.iters),
        echo("adam_restarts", adam.restarts),
        echo("adam_seed", adam.seed.to_string()),
        echo("adam_epsilon", adam.epsilon),
        echo("adam_final_step_fraction", adam.final_step_fraction),
    ]
}

/// Compressed sensing with the generator as the only prior: minimize
/// `||g - H G(w)||^2 + lambda_phi phi(w)` over all of W+ (or over `z`), from
/// `adam.restarts` mapped random starts.
pub fn csgm<G: Generator + ?Sized>(
    g: &KSpaceMeasurement,
    gen: &G,
    lambda_phi: f64,
    adam: &AdamConfig,
    space: LatentSpace,
) -> Result<ReconResult> {
    adam.validate()?;
    check_dims(gen, g)?;
    let start = Instant::now();
    let op = MaskedFourier::new(g.mask.clone());
    let data = measurement_fidelity(&op, &g.values);
    let seeds: Vec<u64> = (0..adam.restarts).map(|r| restart_seed(adam.seed, r)).collect();
    let runs = seeds
        .iter()
        .map(|&s| match space {
            LatentSpace::WPlus => {
                let w0 = gen.sample_latent(s)?;
                optimize_free_block(gen, &w0, 0..gen.latent_dim(), lambda_phi, adam, &data)
            }
            LatentSpace::Z => optimize_z(gen, sample_z(gen.style_dim(), s), lambda_phi, adam, &data),
        })
        .collect();
    let (_, best) = best_run(runs)?;
    let mut config = latent_echo(adam, lambda_phi);
    config.push(echo("latent_space", space.name()));
    Ok(ReconResult {
        method: Method::Csgm,
        image: best.image,
        latent: Some(best.latent),
        trace: best.trace,
        data_fidelity: best.data_fidelity,
        wall_time: start.elapsed(),
        seeds,
        config,
    })
}

/// Prior-image-constrained reconstruction in W+: minimize
/// `||g - H G(w)||^2 + lambda_phi phi(w)` with the head `1..=p1` and tail
/// `p2..=K` of `w` held at the prior latent.
///
/// Restart 0 starts the free block at the prior's values; later restarts start
/// it at the matching block of a mapped random sample.
pub fn picgm<G: Generator + ?Sized>(
    g: &KSpaceMeasurement,
    gen: &G,
    constraint: &StyleConstraint,
    lambda_phi: f64,
    adam: &AdamConfig,
) -> Result<ReconResult> {
    adam.validate()?;
    check_dims(gen, g)?;
    let w_pi = constraint.prior_latent();
    if w_pi.style_dim() != gen.style_dim() || w_pi.layers() != gen.layers() {
        return Err(Error::contract("prior latent shape does not match the generator"));
    }
    let start = Instant::now();
    let op = MaskedFourier::new(g.mask.clone());
    let data = measurement_fidelity(&op, &g.values);
    let free = constraint.free_range();
    let seeds: Vec<u64> = (0..adam.restarts).map(|r| restart_seed(adam.seed, r)).collect();
    let runs = seeds
        .iter()
        .enumerate()
        .map(|(r, &s)| {
            let init = if r == 0 {
                w_pi.clone()
            } else {
                let sample = gen.sample_latent(s)?;
                constraint.assemble(&sample.values()[free.clone()])
            };
            optimize_free_block(gen, &init, free.clone(), lambda_phi, adam, &data)
        })
        .collect();
    let (_, best) = best_run(runs)?;
    let mut config = latent_echo(adam, lambda_phi);
    config.push(echo("p1", constraint.p1()));
    config.push(echo("p2", constraint.p2()));
    Ok(ReconResult {
        method: Method::Picgm,
        image: best.image,
        latent: Some(best.latent),
        trace: best.trace,
        data_fidelity: best.data_fidelity,
        wall_time: start.elapsed(),
        seeds,
        config,
    })
}
