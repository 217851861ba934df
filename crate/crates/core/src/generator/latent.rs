//! Latent-space types: `z` samples, per-layer style blocks, the extended
//! (W+) latent made of `L` stacked blocks, and style-mixing constraints.

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::seeds;

#[derive(Clone, Debug, PartialEq)]
pub struct LatentZ {
    pub values: Vec<f64>,
    pub seed: u64,
}

/// `k` iid standard normal draws.
pub fn sample_z(k: usize, seed: u64) -> LatentZ {
    let mut rng = seeds::rng(seed);
    LatentZ {
        values: (0..k).map(|_| StandardNormal.sample(&mut rng)).collect(),
        seed,
    }
}

/// One `k`-dimensional style vector.
#[derive(Clone, Debug, PartialEq)]
pub struct StyleBlock(pub Vec<f64>);

/// `L` style blocks of length `k`, stored flat (`K = k L`).
#[derive(Clone, Debug, PartialEq)]
pub struct ExtendedLatent {
    k: usize,
    values: Vec<f64>,
}

impl ExtendedLatent {
    pub fn new(k: usize, values: Vec<f64>) -> Result<Self> {
        if k == 0 || values.len() % k != 0 || values.len() / k < 2 {
            return Err(Error::contract(format!(
                "extended latent of length {} is not at least two blocks of {k}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract("non-finite latent coordinate"));
        }
        Ok(Self { k, values })
    }

    pub fn from_blocks(blocks: &[StyleBlock]) -> Result<Self> {
        let k = blocks.first().map(|b| b.0.len()).unwrap_or(0);
        if blocks.iter().any(|b| b.0.len() != k) {
            return Err(Error::contract("style blocks have different lengths"));
        }
        Self::new(k, blocks.iter().flat_map(|b| b.0.iter().copied()).collect())
    }

    pub fn style_dim(&self) -> usize {
        self.k
    }

    pub fn layers(&self) -> usize {
        self.values.len() / self.k
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Block `i` (0-based).
    pub fn block(&self, i: usize) -> &[f64] {
        &self.values[i * self.k..(i + 1) * self.k]
    }

    pub fn block_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.k..(i + 1) * self.k]
    }
}

/// `L` copies of `u`.
pub fn broadcast(u: &StyleBlock, layers: usize) -> Result<ExtendedLatent> {
    let mut v = Vec::with_capacity(u.0.len() * layers);
    for _ in 0..layers {
        v.extend_from_slice(&u.0);
    }
    ExtendedLatent::new(u.0.len(), v)
}

/// Equality constraints `w[1..=p1] = w_pi[1..=p1]`, `w[p2..=K] = w_pi[p2..=K]`
/// (1-based, inclusive). Only `p1 + 1 ..= p2 - 1` is free.
#[derive(Clone, Debug, PartialEq)]
pub struct StyleConstraint {
    p1: usize,
    p2: usize,
    w_pi: ExtendedLatent,
}

impl StyleConstraint {
    pub fn new(p1: usize, p2: usize, w_pi: ExtendedLatent) -> Result<Self> {
        validate_mix_indices(w_pi.style_dim(), w_pi.len(), p1, p2)?;
        Ok(Self { p1, p2, w_pi })
    }

    /// The constraint that frees exactly block `b` (0-based), i.e.
    /// `p1 = b k`, `p2 = (b + 1) k + 1`.
    pub fn free_block(block: usize, w_pi: ExtendedLatent) -> Result<Self> {
        let k = w_pi.style_dim();
        Self::new(block * k, (block + 1) * k + 1, w_pi)
    }

    pub fn p1(&self) -> usize {
        self.p1
    }

    pub fn p2(&self) -> usize {
        self.p2
    }

    pub fn prior_latent(&self) -> &ExtendedLatent {
        &self.w_pi
    }

    /// 0-based half-open range of free coordinates.
    pub fn free_range(&self) -> std::ops::Range<usize> {
        self.p1..self.p2 - 1
    }

    pub fn is_constrained(&self, i: usize) -> bool {
        !self.free_range().contains(&i)
    }

    /// Prior latent with its free coordinates replaced by `free`.
    pub fn assemble(&self, free: &[f64]) -> ExtendedLatent {
        debug_assert_eq!(free.len(), self.free_range().len());
        let mut w = self.w_pi.clone();
        w.values[self.free_range()].copy_from_slice(free);
        w
    }
}

/// `p1` and `p2 - 1` must sit on block boundaries with a non-empty free set
/// between them and a non-empty constrained head and tail.
fn validate_mix_indices(k: usize, big_k: usize, p1: usize, p2: usize) -> Result<()> {
    let ok = p1 >= 1
        && p1 % k == 0
        && p2 >= 1
        && (p2 - 1) % k == 0
        && p1 < p2 - 1
        && p2 <= big_k;
    if ok {
        Ok(())
    } else {
        Err(Error::parameter(format!(
            "invalid style split p1 = {p1}, p2 = {p2} for k = {k}, K = {big_k}: need p1 and p2 - 1 \
             to be multiples of k with 1 <= p1 < p2 - 1 and p2 <= K"
        )))
    }
}

/// Coordinates `1..=p1` and `p2..=K` from `a`, the rest from `b` (1-based).
pub fn style_mix(a: &ExtendedLatent, b: &ExtendedLatent, p1: usize, p2: usize) -> Result<ExtendedLatent> {
    if a.len() != b.len() || a.style_dim() != b.style_dim() {
        return Err(Error::contract("style_mix operands have different shapes"));
    }
    validate_mix_indices(a.style_dim(), a.len(), p1, p2)?;
    let mut out = a.clone();
    out.values[p1..p2 - 1].copy_from_slice(&b.values[p1..p2 - 1]);
    Ok(out)
}
