//! Compressed-sensing reconstruction with a prior image, constrained in the
//! style latent space of a generator, plus the sparsity and generative
//! baselines it is compared against.
//!
//! The measurement model is a masked unitary Fourier transform
//! ([`imaging`]). Four reconstructors live in [`recon`]: PLS-TV, CSGM,
//! WPICCS and PICGM. [`experiment`] drives the full simulation protocol:
//! dataset generation, grid search on a validation image, test-set
//! reconstruction and reporting.

pub mod error;
pub mod experiment;
pub mod generator;
pub mod grad;
pub mod imaging;
pub mod metrics;
pub mod recon;
pub mod seeds;
pub mod sidecar;
pub mod sparsity;
pub mod tensor;

pub use error::{Error, Result};
pub use generator::{ExtendedLatent, Generator, GeneratorParams, StyleConstraint};
pub use imaging::{KSpaceMeasurement, SamplingMask};
pub use recon::{AdamConfig, Method, PrimalDualConfig, ReconResult};
pub use tensor::{ComplexGrid, RealGrid, Tensor};
