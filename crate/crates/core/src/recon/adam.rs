//! Adam with an exponentially decaying step, plus the coordinate-reset
//! projection used for affine equality constraints.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub step: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub iters: usize,
    pub restarts: usize,
    pub seed: u64,
    pub epsilon: f64,
    /// Step size at the last iteration relative to `step`; the step decays
    /// geometrically in between. `1.0` keeps it constant.
    pub final_step_fraction: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            step: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            iters: 1500,
            restarts: 3,
            seed: 0,
            epsilon: 1e-8,
            final_step_fraction: 0.01,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.step > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && self.beta1 > 0.0
            && (0.0..1.0).contains(&self.beta2)
            && self.beta2 > 0.0
            && self.restarts >= 1
            && self.epsilon > 0.0
            && self.final_step_fraction > 0.0
            && self.final_step_fraction <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::parameter(format!("invalid Adam configuration {self:?}")))
        }
    }

    pub fn step_at(&self, t: usize) -> f64 {
        if self.iters <= 1 {
            return self.step;
        }
        self.step * self.final_step_fraction.powf(t as f64 / (self.iters - 1) as f64)
    }
}

#[derive(Clone, Debug)]
pub struct Adam {
    cfg: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: usize,
}

impl Adam {
    pub fn new(cfg: &AdamConfig, n: usize) -> Self {
        Self {
            cfg: cfg.clone(),
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn iteration(&self) -> usize {
        self.t
    }

    pub fn step(&mut self, x: &mut [f64], grad: &[f64]) {
        let lr = self.cfg.step_at(self.t);
        self.t += 1;
        let (b1, b2) = (self.cfg.beta1, self.cfg.beta2);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        for i in 0..x.len() {
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * grad[i];
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * grad[i] * grad[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            x[i] -= lr * mh / (vh.sqrt() + self.cfg.epsilon);
        }
    }

    /// Full-vector step followed by projection onto `{x : x_i = anchor_i, i constrained}`;
    /// moments on constrained coordinates are zeroed.
    pub fn step_projected(&mut self, x: &mut [f64], grad: &[f64], constrained: &[bool], anchor: &[f64]) {
        self.step(x, grad);
        for i in 0..x.len() {
            if constrained[i] {
                x[i] = anchor[i];
                self.m[i] = 0.0;
                self.v[i] = 0.0;
            }
        }
    }
}

/// Objective value split into its parts, with a gradient.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub data_fidelity: f64,
    pub penalty: f64,
    pub grad: Vec<f64>,
}

impl Evaluation {
    pub fn objective(&self) -> f64 {
        self.data_fidelity + self.penalty
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceEntry {
    pub objective: f64,
    pub data_fidelity: f64,
    pub penalty: f64,
}

pub struct AdamRun {
    pub x: Vec<f64>,
    pub trace: Vec<TraceEntry>,
}

/// Run `cfg.iters` Adam steps from `x0`. The trace holds the objective at
/// every iterate including the first and last (`iters + 1` entries).
pub fn minimize<F>(x0: Vec<f64>, cfg: &AdamConfig, mut eval: F) -> Result<AdamRun>
where
    F: FnMut(&[f64]) -> Result<Evaluation>,
{
    let mut x = x0;
    let mut opt = Adam::new(cfg, x.len());
    let mut trace = Vec::with_capacity(cfg.iters + 1);
    for it in 0..=cfg.iters {
        let e = eval(&x)?;
        let entry = TraceEntry {
            objective: e.objective(),
            data_fidelity: e.data_fidelity,
            penalty: e.penalty,
        };
        trace.push(entry);
        if !entry.objective.is_finite() || e.grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numerical {
                iteration: it,
                message: "non-finite latent objective or gradient".into(),
                trace: trace.iter().map(|t| t.objective).collect(),
            });
        }
        if it < cfg.iters {
            opt.step(&mut x, &e.grad);
        }
    }
    Ok(AdamRun { x, trace })
}
