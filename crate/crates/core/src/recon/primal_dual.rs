//! Analysis-l1 baselines solved by a primal-dual iteration (Chambolle-Pock)
//! with an exact proximal step on the fidelity `||g - H f||^2` and one dual
//! block per l1 term, clipped to its weighted box.
//!
//! ```text
//! f+    = (I + 2 tau H^H H)^{-1} (f - tau (Phi^T y_tv + Psi^T y_wav) + 2 tau H^H g)
//! y_tv  = clip(y_tv + sigma Phi (2 f+ - f), lambda_tv)
//! y_wav = clip(y_wav + sigma (Psi (2 f+ - f) - Psi f_pi), lambda_wav * W)
//! ```
//!
//! Steps satisfy `tau sigma ||K||^2 = 1` for the stacked analysis operator
//! `K`. The primal step shrinks as `1 / lambda`: the dual boxes grow with
//! `lambda`, and a fixed split leaves the duals lagging and the objective
//! oscillating at large weights.

use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{KSpaceMeasurement, MaskedFourier};
use crate::recon::adam::TraceEntry;
use crate::recon::result::{echo, Method, ReconResult};
use crate::sparsity::{
    default_epsilon, effective_levels, finite_diff_adjoint_add, finite_diff_into, update_weights, DiffField, Haar2d,
    WeightDiag,
};
use crate::tensor::RealGrid;

/// Upper bound of `||Phi||^2` for 2-D forward differences.
const DIFF_NORM_SQ: f64 = 8.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrimalDualConfig {
    /// Upper bound on the primal step.
    pub primal_step: f64,
    /// The primal step is `min(primal_step, step_balance / lambda)`.
    pub step_balance: f64,
    pub iters: usize,
    /// WPICCS recomputes its weights every this many iterations.
    pub reweight_period: usize,
}

impl Default for PrimalDualConfig {
    fn default() -> Self {
        Self {
            primal_step: 1.0,
            step_balance: 1e-3,
            iters: 500,
            reweight_period: 100,
        }
    }
}

impl PrimalDualConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.primal_step > 0.0 && self.primal_step.is_finite())
            || !(self.step_balance > 0.0 && self.step_balance.is_finite())
            || self.reweight_period == 0
        {
            return Err(Error::parameter(format!("invalid primal-dual configuration {self:?}")));
        }
        Ok(())
    }

    /// `(tau, sigma)` for penalty weight `lambda` and an analysis operator
    /// with `||K||^2 <= op_norm_sq`.
    pub fn effective_steps(&self, lambda: f64, op_norm_sq: f64) -> (f64, f64) {
        let tau = if lambda > 0.0 {
            self.primal_step.min(self.step_balance / lambda)
        } else {
            self.primal_step
        };
        (tau, 1.0 / (tau * op_norm_sq))
    }
}

/// Prior-difference wavelet block of the WPICCS penalty.
struct WaveletBlock<'a> {
    haar: Haar2d,
    prior_coeffs: Vec<f64>,
    prior: &'a RealGrid,
    bound: f64,
}

struct Problem<'a> {
    op: MaskedFourier,
    lambda: f64,
    g: &'a [Complex64],
    tv_bound: f64,
    /// Multiplies the TV l1 norm in the reported objective.
    tv_weight: f64,
    wavelet: Option<WaveletBlock<'a>>,
    reweight_period: Option<usize>,
}

struct PdOutput {
    image: RealGrid,
    trace: Vec<TraceEntry>,
}

fn weighted_l1(c: &[f64], w: &WeightDiag) -> f64 {
    c.iter().zip(&w.weights).map(|(v, wi)| wi * v.abs()).sum()
}

fn solve(p: &Problem, cfg: &PrimalDualConfig) -> Result<PdOutput> {
    let (h, w) = (p.op.mask().height, p.op.mask().width);
    let n = h * w;
    let op_norm_sq = DIFF_NORM_SQ + if p.wavelet.is_some() { 1.0 } else { 0.0 };
    let (tau, sigma) = cfg.effective_steps(p.lambda, op_norm_sq);

    let hg = p.op.adjoint(p.g)?;
    let mut f = hg.clone();
    let mut y_tv = DiffField::zeros(h, w);
    let mut d = DiffField::zeros(h, w);
    let mut y_wav = vec![0.0; if p.wavelet.is_some() { n } else { 0 }];
    let mut weights = p.wavelet.as_ref().map(|_| WeightDiag::identity(n));
    let mut trace = Vec::with_capacity(cfg.iters + 1);
    let mut fbar = vec![0.0; n];

    let record = |f: &RealGrid, fid: f64, weights: &Option<WeightDiag>, d: &mut DiffField| -> TraceEntry {
        finite_diff_into(f.data(), h, w, d);
        let mut penalty = p.tv_weight * d.l1();
        if let (Some(wb), Some(wd)) = (&p.wavelet, weights) {
            let diff: Vec<f64> = f.data().iter().zip(wb.prior.data()).map(|(a, b)| a - b).collect();
            penalty += wb.bound * weighted_l1(&wb.haar.forward(&diff), wd);
        }
        TraceEntry {
            objective: fid + penalty,
            data_fidelity: fid,
            penalty,
        }
    };

    for it in 0..=cfg.iters {
        if let (Some(period), Some(wb)) = (p.reweight_period, &p.wavelet) {
            if it > 0 && it % period == 0 && it < cfg.iters {
                let diff: Vec<f64> = f.data().iter().zip(wb.prior.data()).map(|(a, b)| a - b).collect();
                let c = wb.haar.forward(&diff);
                weights = Some(update_weights(&c, default_epsilon(&c))?);
            }
        }
        let fid = p.op.fidelity(&f, p.g)?;
        let entry = record(&f, fid, &weights, &mut d);
        trace.push(entry);
        if !entry.objective.is_finite() {
            return Err(Error::Numerical {
                iteration: it,
                message: "primal-dual objective diverged".into(),
                trace: trace.iter().map(|t| t.objective).collect(),
            });
        }
        if it == cfg.iters {
            break;
        }

        // primal step: exact prox of the fidelity
        let mut kty = vec![0.0; n];
        finite_diff_adjoint_add(&y_tv, &mut kty);
        if let Some(wb) = &p.wavelet {
            for (s, v) in kty.iter_mut().zip(wb.haar.inverse(&y_wav)) {
                *s += v;
            }
        }
        let rhs: Vec<f64> = f
            .data()
            .iter()
            .zip(&kty)
            .zip(hg.data())
            .map(|((fi, k), b)| fi - tau * k + 2.0 * tau * b)
            .collect();
        let f_new = p.op.solve_normal_shifted(&RealGrid::new(h, w, rhs)?, 2.0 * tau)?;
        for ((b, new), old) in fbar.iter_mut().zip(f_new.data()).zip(f.data()) {
            *b = 2.0 * new - old;
        }
        f = f_new;

        // dual steps
        finite_diff_into(&fbar, h, w, &mut d);
        for (y, k) in y_tv.dx.iter_mut().chain(y_tv.dy.iter_mut()).zip(d.dx.iter().chain(&d.dy)) {
            *y = (*y + sigma * k).clamp(-p.tv_bound, p.tv_bound);
        }
        if let (Some(wb), Some(wd)) = (&p.wavelet, &weights) {
            let c = wb.haar.forward(&fbar);
            for i in 0..n {
                let b = wb.bound * wd.weights[i];
                y_wav[i] = (y_wav[i] + sigma * (c[i] - wb.prior_coeffs[i])).clamp(-b, b);
            }
        }
    }
    Ok(PdOutput { image: f, trace })
}

fn pd_echo(cfg: &PrimalDualConfig, lambda: f64) -> Vec<(String, String)> {
    vec![
        echo("lambda", lambda),
        echo("primal_step", cfg.primal_step),
        echo("step_balance", cfg.step_balance),
        echo("pd_iters", cfg.iters),
        echo("reweight_period", cfg.reweight_period),
    ]
}

/// Penalized least squares with anisotropic TV: `||g - H f||^2 + lambda TV(f)`.
pub fn pls_tv(g: &KSpaceMeasurement, lambda: f64, cfg: &PrimalDualConfig) -> Result<ReconResult> {
    if !(lambda >= 0.0) {
        return Err(Error::parameter(format!("lambda must be >= 0, got {lambda}")));
    }
    cfg.validate()?;
    let start = Instant::now();
    let problem = Problem {
        op: MaskedFourier::new(g.mask.clone()),
        lambda,
        g: &g.values,
        tv_bound: lambda,
        tv_weight: lambda,
        wavelet: None,
        reweight_period: None,
    };
    let out = solve(&problem, cfg)?;
    Ok(finish(Method::PlsTv, out, start, pd_echo(cfg, lambda)))
}

fn finish(method: Method, out: PdOutput, start: Instant, config: Vec<(String, String)>) -> ReconResult {
    let data_fidelity = out.trace.last().map(|t| t.data_fidelity).unwrap_or(f64::NAN);
    ReconResult {
        method,
        image: out.image,
        latent: None,
        trace: out.trace,
        data_fidelity,
        wall_time: start.elapsed(),
        seeds: Vec::new(),
        config,
    }
}

/// Options for [`wpiccs`] beyond the penalty weights.
#[derive(Clone, Debug, PartialEq)]
pub struct WpiccsOptions {
    /// Requested wavelet levels, clamped to the grid.
    pub levels: usize,
    /// Recompute `W` every `reweight_period` iterations; off keeps `W = I`.
    pub reweight: bool,
}

impl Default for WpiccsOptions {
    fn default() -> Self {
        Self {
            levels: 7,
            reweight: true,
        }
    }
}

/// Weighted prior-image-constrained compressed sensing:
/// `||g - H f||^2 + lambda (alpha ||W Psi (f - f_pi)||_1 + (1 - alpha) ||Phi f||_1)`.
pub fn wpiccs(
    g: &KSpaceMeasurement,
    f_pi: &RealGrid,
    lambda: f64,
    alpha: f64,
    cfg: &PrimalDualConfig,
    opts: &WpiccsOptions,
) -> Result<ReconResult> {
    if !(lambda >= 0.0) {
        return Err(Error::parameter(format!("lambda must be >= 0, got {lambda}")));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::parameter(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    cfg.validate()?;
    if f_pi.dims() != (g.mask.height, g.mask.width) {
        return Err(Error::contract("prior image dims do not match the measurement"));
    }
    let start = Instant::now();
    let mut config = pd_echo(cfg, lambda);
    config.push(echo("alpha", alpha));
    if alpha == 0.0 {
        // the wavelet term vanishes and the problem is exactly PLS-TV
        let mut r = pls_tv(g, lambda, cfg)?;
        r.method = Method::Wpiccs;
        r.config = config;
        return Ok(r);
    }
    let levels = effective_levels(opts.levels, f_pi.height(), f_pi.width());
    let haar = Haar2d::new(f_pi.height(), f_pi.width(), levels)?;
    config.push(echo("wavelet_levels", levels));
    config.push(echo("reweight", opts.reweight));
    let problem = Problem {
        op: MaskedFourier::new(g.mask.clone()),
        lambda,
        g: &g.values,
        tv_bound: lambda * (1.0 - alpha),
        tv_weight: lambda * (1.0 - alpha),
        wavelet: Some(WaveletBlock {
            prior_coeffs: haar.forward(f_pi.data()),
            haar,
            prior: f_pi,
            bound: lambda * alpha,
        }),
        reweight_period: opts.reweight.then_some(cfg.reweight_period),
    };
    let out = solve(&problem, cfg)?;
    Ok(finish(Method::Wpiccs, out, start, config))
}
