//! Projection of an image onto the generator's range by latent search.

use crate::error::{Error, Result};
use crate::generator::{ExtendedLatent, Generator, StyleConstraint};
use crate::recon::adam::AdamConfig;
use crate::recon::latent::{best_run, optimize_free_block, restart_seed};
use crate::tensor::RealGrid;

#[derive(Clone, Debug)]
pub struct InversionResult {
    pub latent: ExtendedLatent,
    /// `||G(w) - target|| / ||target||`.
    pub residual: f64,
    pub restart: usize,
}

/// Minimize `||target - G(w)||^2 + lambda_phi phi(w)` over W+, or over the
/// free block of `constraint` when given. Each restart starts from
/// `broadcast(map_to_style(sample_z))`; the lowest residual wins.
pub fn invert<G: Generator + ?Sized>(
    gen: &G,
    target: &RealGrid,
    constraint: Option<&StyleConstraint>,
    lambda_phi: f64,
    adam: &AdamConfig,
) -> Result<InversionResult> {
    adam.validate()?;
    if target.dims() != gen.image_dims() {
        return Err(Error::contract(format!(
            "target dims {:?} do not match generator output {:?}",
            target.dims(),
            gen.image_dims()
        )));
    }
    let data = |f: &RealGrid| -> Result<(f64, RealGrid)> {
        let mut energy = 0.0;
        let grad: Vec<f64> = f
            .data()
            .iter()
            .zip(target.data())
            .map(|(a, b)| {
                let r = a - b;
                energy += r * r;
                2.0 * r
            })
            .collect();
        Ok((energy, RealGrid::new(f.height(), f.width(), grad)?))
    };
    let runs = (0..adam.restarts)
        .map(|r| {
            let sample = gen.sample_latent(restart_seed(adam.seed, r))?;
            match constraint {
                None => optimize_free_block(gen, &sample, 0..gen.latent_dim(), lambda_phi, adam, &data),
                Some(c) => {
                    let free = c.free_range();
                    let init = c.assemble(&sample.values()[free.clone()]);
                    optimize_free_block(gen, &init, free, lambda_phi, adam, &data)
                }
            }
        })
        .collect();
    let (restart, best) = best_run(runs)?;
    let residual = best.data_fidelity.sqrt() / target.norm();
    Ok(InversionResult {
        latent: best.latent,
        residual,
        restart,
    })
}
