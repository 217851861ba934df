//! Fixed-weight mapping network `z -> u`: RMS normalization followed by three
//! dense layers (two hidden, width `k`), each with a leaky-ReLU.

use rand_distr::{Distribution, Normal};

use crate::seeds;

pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    /// Row-major `out x in`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MappingNetwork {
    pub k: usize,
    pub layers: Vec<Dense>,
}

#[inline]
fn leaky(x: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        LEAKY_SLOPE * x
    }
}

fn rms(z: &[f64]) -> f64 {
    (z.iter().map(|v| v * v).sum::<f64>() / z.len() as f64).sqrt()
}

impl MappingNetwork {
    /// He-style initialization for leaky-ReLU layers, frozen from `seed`.
    pub fn from_seed(k: usize, seed: u64) -> Self {
        let mut rng = seeds::rng(seed);
        let std = (2.0 / ((1.0 + LEAKY_SLOPE * LEAKY_SLOPE) * k as f64)).sqrt();
        let wdist = Normal::new(0.0, std).expect("valid normal");
        let bdist = Normal::new(0.0, 0.1).expect("valid normal");
        let layers = (0..3)
            .map(|_| Dense {
                weights: (0..k * k).map(|_| wdist.sample(&mut rng)).collect(),
                bias: (0..k).map(|_| bdist.sample(&mut rng)).collect(),
            })
            .collect();
        Self { k, layers }
    }

    /// Output together with every layer's pre-activation.
    fn forward_trace(&self, z: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let r = rms(z);
        let mut x: Vec<f64> = if r > 0.0 { z.iter().map(|v| v / r).collect() } else { vec![0.0; z.len()] };
        let mut pre = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let p: Vec<f64> = (0..self.k)
                .map(|o| layer.bias[o] + crate::tensor::dot(&layer.weights[o * self.k..(o + 1) * self.k], &x))
                .collect();
            x = p.iter().map(|&v| leaky(v)).collect();
            pre.push(p);
        }
        (x, pre)
    }

    pub fn forward(&self, z: &[f64]) -> Vec<f64> {
        self.forward_trace(z).0
    }

    /// `J(z)^T cot`.
    pub fn vjp(&self, z: &[f64], cot: &[f64]) -> Vec<f64> {
        let (_, pre) = self.forward_trace(z);
        let mut g = cot.to_vec();
        for (li, layer) in self.layers.iter().enumerate().rev() {
            for (gi, &p) in g.iter_mut().zip(&pre[li]) {
                if p < 0.0 {
                    *gi *= LEAKY_SLOPE;
                }
            }
            let mut gin = vec![0.0; self.k];
            for o in 0..self.k {
                let row = &layer.weights[o * self.k..(o + 1) * self.k];
                for (gi, w) in gin.iter_mut().zip(row) {
                    *gi += g[o] * w;
                }
            }
            g = gin;
        }
        let r = rms(z);
        if r == 0.0 {
            return vec![0.0; z.len()];
        }
        let n = z.len() as f64;
        let zg = crate::tensor::dot(z, &g);
        z.iter().zip(&g).map(|(zi, gi)| gi / r - zi * zg / (n * r * r * r)).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.len() * (self.k * self.k + self.k)
    }
}
