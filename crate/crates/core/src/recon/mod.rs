//! The four reconstruction methods and their shared optimizers.

pub mod adam;
pub mod gaussianization;
pub mod latent;
pub mod primal_dual;
pub mod result;

pub use adam::{AdamConfig, TraceEntry};
pub use gaussianization::{gaussianization_penalty, GaussianizationStats};
pub use latent::{csgm, picgm, LatentSpace};
pub use primal_dual::{pls_tv, wpiccs, PrimalDualConfig, WpiccsOptions};
pub use result::{Method, ReconResult};

#[cfg(test)]
mod tests;
