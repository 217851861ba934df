//! Fixtures shared by the benchmarks.

use styleprior_core::imaging::simulate_measurement;
use styleprior_core::{ExtendedLatent, Generator, GeneratorParams, KSpaceMeasurement, RealGrid};

pub struct Fixture {
    pub gen: GeneratorParams,
    pub latent: ExtendedLatent,
    pub image: RealGrid,
    pub measurement: KSpaceMeasurement,
}

/// Default 64x64 generator, one phantom and its R = 4, 20 dB measurement.
pub fn fixture() -> Fixture {
    let gen = GeneratorParams::default();
    let latent = gen.sample_mixed_latent(1).expect("default generator samples");
    let image = gen.synthesize(&latent).expect("default generator synthesizes");
    let measurement = simulate_measurement(&image, 4.0, 0.08, 20.0, 2, 3).expect("valid sampling settings");
    Fixture {
        gen,
        latent,
        image,
        measurement,
    }
}
