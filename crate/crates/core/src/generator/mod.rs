//! Style-based generator: mapping network, W+ latents and the phantom
//! synthesis function behind the [`Generator`] contract.

pub mod invert;
pub mod latent;
pub mod mapping;
pub mod phantom;

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grad::Differentiable;
use crate::recon::gaussianization::GaussianizationStats;
use crate::seeds;
use crate::tensor::RealGrid;

pub use invert::{invert, InversionResult};
pub use latent::{broadcast, sample_z, style_mix, ExtendedLatent, LatentZ, StyleBlock, StyleConstraint};
pub use mapping::MappingNetwork;
pub use phantom::SlotRange;

/// What a reconstructor needs from a generator. A learned network can be
/// substituted by implementing this trait.
pub trait Generator: Sync {
    fn style_dim(&self) -> usize;
    fn layers(&self) -> usize;
    fn image_dims(&self) -> (usize, usize);

    fn latent_dim(&self) -> usize {
        self.style_dim() * self.layers()
    }

    /// `G(w)`.
    fn synthesize(&self, w: &ExtendedLatent) -> Result<RealGrid>;

    /// `J_G(w)^T cot`.
    fn synthesize_vjp(&self, w: &ExtendedLatent, cot: &RealGrid) -> Result<Vec<f64>>;

    fn map_to_style(&self, z: &LatentZ) -> Result<StyleBlock>;

    /// `J_map(z)^T cot`.
    fn map_to_style_vjp(&self, z: &LatentZ, cot: &[f64]) -> Result<Vec<f64>>;

    fn gaussianization_stats(&self) -> &GaussianizationStats;

    /// `broadcast(map_to_style(sample_z(seed)))`, the conventional sample.
    fn sample_latent(&self, seed: u64) -> Result<ExtendedLatent> {
        let z = sample_z(self.style_dim(), seed);
        broadcast(&self.map_to_style(&z)?, self.layers())
    }

    /// A W+ latent whose blocks come from independent mapped samples.
    fn sample_mixed_latent(&self, seed: u64) -> Result<ExtendedLatent> {
        let blocks = (0..self.layers())
            .map(|l| self.map_to_style(&sample_z(self.style_dim(), seeds::derive_seed(seed, "layer", l as u64))))
            .collect::<Result<Vec<_>>>()?;
        ExtendedLatent::from_blocks(&blocks)
    }
}

pub const DEFAULT_STYLE_DIM: usize = 8;
pub const DEFAULT_LAYERS: usize = 4;
pub const DEFAULT_IMAGE_SIZE: usize = 64;
pub const DEFAULT_TAU: f64 = 0.02;
pub const DEFAULT_MASTER_SEED: u64 = 20_210_301;
/// Mapping samples used to estimate the Gaussianization statistics.
pub const STATS_SAMPLES: usize = 10_000;

/// Frozen parameters of the procedural style generator.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorParams {
    pub k: usize,
    pub layers: usize,
    pub height: usize,
    pub width: usize,
    pub master_seed: u64,
    /// Edge sharpness of the soft region indicators.
    pub tau: f64,
    pub mapping: MappingNetwork,
    pub ranges: Vec<SlotRange>,
    pub stats: GaussianizationStats,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        Self::new(DEFAULT_STYLE_DIM, DEFAULT_LAYERS, DEFAULT_IMAGE_SIZE, DEFAULT_IMAGE_SIZE, DEFAULT_MASTER_SEED)
            .expect("default generator shape is valid")
    }
}

impl GeneratorParams {
    pub fn new(k: usize, layers: usize, height: usize, width: usize, master_seed: u64) -> Result<Self> {
        if k < 4 || layers < 4 {
            return Err(Error::parameter(format!("generator needs k >= 4 and L >= 4, got k = {k}, L = {layers}")));
        }
        if height == 0 || width == 0 {
            return Err(Error::parameter("generator image dims must be positive"));
        }
        let mapping = MappingNetwork::from_seed(k, seeds::derive_seed(master_seed, "mapping", 0));
        let stats = GaussianizationStats::estimate(&mapping, STATS_SAMPLES, seeds::derive_seed(master_seed, "stats", 0));
        Ok(Self {
            k,
            layers,
            height,
            width,
            master_seed,
            tau: DEFAULT_TAU,
            mapping,
            ranges: phantom::default_ranges(),
            stats,
        })
    }

    fn check_latent(&self, w: &ExtendedLatent) -> Result<()> {
        if w.style_dim() != self.k || w.layers() != self.layers {
            return Err(Error::contract(format!(
                "latent has {} blocks of {}, generator expects {} of {}",
                w.layers(),
                w.style_dim(),
                self.layers,
                self.k
            )));
        }
        Ok(())
    }

    pub fn decode(&self, w: &ExtendedLatent) -> Result<phantom::Decoded> {
        self.check_latent(w)?;
        Ok(phantom::decode(&self.ranges, w.values(), self.k, self.layers))
    }

    /// Soft indicators (head, inner, inclusion 1, inclusion 2) of `G(w)`.
    pub fn region_masks(&self, w: &ExtendedLatent) -> Result<[Vec<f64>; 4]> {
        let d = self.decode(w)?;
        Ok(phantom::region_masks(&d.p, self.tau, self.height, self.width))
    }

    /// Physical boundary parameters: everything in the geometry and structure blocks.
    pub fn boundary_parameters(&self, w: &ExtendedLatent) -> Result<Vec<f64>> {
        let d = self.decode(w)?;
        let geo = phantom::GEOMETRY_BLOCK * phantom::SLOTS;
        let st = phantom::STRUCTURE_BLOCK * phantom::SLOTS;
        Ok(d.p[geo..geo + phantom::SLOTS]
            .iter()
            .chain(&d.p[st..st + phantom::SLOTS])
            .copied()
            .collect())
    }

    const MAGIC: &'static [u8; 4] = b"SGEN";
    const VERSION: u32 = 1;

    /// `SGEN` layout, little-endian: magic, u32 version, u32 k, u32 L, u32 height,
    /// u32 width, u64 master seed, f64 tau, mapping weights and biases (three
    /// layers, f64), u32 slot count, (mid, half) f64 pairs, then the
    /// Gaussianization mean, variance (k f64 each) and slope (f64).
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(Self::MAGIC);
        out.extend_from_slice(&Self::VERSION.to_le_bytes());
        for v in [self.k, self.layers, self.height, self.width] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out.extend_from_slice(&self.master_seed.to_le_bytes());
        let mut put = |x: f64| out.extend_from_slice(&x.to_le_bytes());
        put(self.tau);
        for layer in &self.mapping.layers {
            layer.weights.iter().for_each(|&x| put(x));
            layer.bias.iter().for_each(|&x| put(x));
        }
        out.extend_from_slice(&(self.ranges.len() as u32).to_le_bytes());
        let mut put = |x: f64| out.extend_from_slice(&x.to_le_bytes());
        for r in &self.ranges {
            put(r.mid);
            put(r.half);
        }
        self.stats.mean.iter().for_each(|&x| put(x));
        self.stats.var.iter().for_each(|&x| put(x));
        put(self.stats.slope);
        out
    }

    pub fn decode_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(4)? != Self::MAGIC {
            return Err(Error::parse("missing SGEN magic"));
        }
        let version = cur.u32()?;
        if version != Self::VERSION {
            return Err(Error::parse(format!("unsupported SGEN version {version}")));
        }
        let k = cur.u32()? as usize;
        let layers = cur.u32()? as usize;
        let height = cur.u32()? as usize;
        let width = cur.u32()? as usize;
        let master_seed = cur.u64()?;
        let tau = cur.f64()?;
        let mut dense = Vec::new();
        for _ in 0..3 {
            let weights = cur.f64s(k * k)?;
            let bias = cur.f64s(k)?;
            dense.push(mapping::Dense { weights, bias });
        }
        let nslots = cur.u32()? as usize;
        if nslots != phantom::PARAM_COUNT {
            return Err(Error::parse(format!("SGEN range table has {nslots} slots")));
        }
        let ranges = (0..nslots)
            .map(|_| Ok(SlotRange { mid: cur.f64()?, half: cur.f64()? }))
            .collect::<Result<Vec<_>>>()?;
        let mean = cur.f64s(k)?;
        let var = cur.f64s(k)?;
        let slope = cur.f64()?;
        if cur.pos != bytes.len() {
            return Err(Error::parse("trailing bytes after SGEN payload"));
        }
        Ok(Self {
            k,
            layers,
            height,
            width,
            master_seed,
            tau,
            mapping: MappingNetwork { k, layers: dense },
            ranges,
            stats: GaussianizationStats { mean, var, slope },
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode_bytes(&bytes).map_err(|e| e.at_path(path))
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::parse("truncated SGEN file"));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }
}

impl Generator for GeneratorParams {
    fn style_dim(&self) -> usize {
        self.k
    }

    fn layers(&self) -> usize {
        self.layers
    }

    fn image_dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    fn synthesize(&self, w: &ExtendedLatent) -> Result<RealGrid> {
        let d = self.decode(w)?;
        RealGrid::new(self.height, self.width, phantom::render(&d.p, self.tau, self.height, self.width))
    }

    fn synthesize_vjp(&self, w: &ExtendedLatent, cot: &RealGrid) -> Result<Vec<f64>> {
        if cot.dims() != (self.height, self.width) {
            return Err(Error::contract("cotangent dims do not match generator output"));
        }
        let d = self.decode(w)?;
        let gp = phantom::render_vjp(&d.p, self.tau, self.height, self.width, cot.data());
        let mut g = vec![0.0; w.len()];
        for s in 0..phantom::PARAM_COUNT {
            if let Some(i) = d.index[s] {
                g[i] += gp[s] * d.dp[s];
            }
        }
        Ok(g)
    }

    fn map_to_style(&self, z: &LatentZ) -> Result<StyleBlock> {
        if z.values.len() != self.k {
            return Err(Error::contract(format!("z has length {}, expected {}", z.values.len(), self.k)));
        }
        Ok(StyleBlock(self.mapping.forward(&z.values)))
    }

    fn map_to_style_vjp(&self, z: &LatentZ, cot: &[f64]) -> Result<Vec<f64>> {
        if z.values.len() != self.k || cot.len() != self.k {
            return Err(Error::contract("mapping VJP shape mismatch"));
        }
        Ok(self.mapping.vjp(&z.values, cot))
    }

    fn gaussianization_stats(&self) -> &GaussianizationStats {
        &self.stats
    }
}

/// `w -> G(w)` as a flat [`Differentiable`].
pub struct SynthesisOp<'a, G: Generator + ?Sized>(pub &'a G);

impl<G: Generator + ?Sized> Differentiable for SynthesisOp<'_, G> {
    fn input_len(&self) -> usize {
        self.0.latent_dim()
    }
    fn output_len(&self) -> usize {
        let (h, w) = self.0.image_dims();
        h * w
    }
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        let w = ExtendedLatent::new(self.0.style_dim(), x.to_vec())?;
        Ok(self.0.synthesize(&w)?.into_data())
    }
    fn vjp(&self, x: &[f64], c: &[f64]) -> Result<Vec<f64>> {
        let w = ExtendedLatent::new(self.0.style_dim(), x.to_vec())?;
        let (h, wd) = self.0.image_dims();
        self.0.synthesize_vjp(&w, &RealGrid::new(h, wd, c.to_vec())?)
    }
}

#[cfg(test)]
mod tests;
