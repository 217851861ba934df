use super::adam::Adam;
use super::latent::restart_seed;
use super::*;
use crate::generator::{style_mix, ExtendedLatent, Generator, GeneratorParams, StyleConstraint};
use crate::imaging::{simulate_measurement, KSpaceMeasurement, MaskedFourier};
use crate::sparsity::tv_seminorm;
use crate::tensor::{RealGrid, Tensor};
use crate::Error;

fn relative(a: &RealGrid, b: &RealGrid) -> f64 {
    let num: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    num / b.norm()
}

fn phantom(seed: u64) -> (GeneratorParams, ExtendedLatent, RealGrid) {
    let gen = GeneratorParams::default();
    let w = gen.sample_mixed_latent(seed).unwrap();
    let f = gen.synthesize(&w).unwrap();
    (gen, w, f)
}

fn full_noiseless(f: &RealGrid) -> KSpaceMeasurement {
    simulate_measurement(f, 1.0, 0.08, f64::INFINITY, 0, 0).unwrap()
}

/// Largest increase between samples taken every 10 iterations after iteration 100.
fn worst_increase(trace: &[TraceEntry]) -> f64 {
    (100..trace.len())
        .step_by(10)
        .zip((110..trace.len()).step_by(10))
        .map(|(a, b)| trace[b].objective - trace[a].objective)
        .fold(f64::NEG_INFINITY, f64::max)
}

fn short_adam(iters: usize) -> AdamConfig {
    AdamConfig {
        iters,
        restarts: 2,
        seed: 11,
        ..Default::default()
    }
}

#[test]
fn pls_tv_without_penalty_inverts_full_sampling() {
    let (_, _, f) = phantom(1);
    let g = full_noiseless(&f);
    let r = pls_tv(&g, 0.0, &PrimalDualConfig::default()).unwrap();
    assert!(relative(&r.image, &f) <= 1e-6);
    assert!(r.data_fidelity <= 1e-10 * g.energy());
    assert_eq!(r.trace.len(), 501);
}

#[test]
fn pls_tv_with_dominant_penalty_flattens() {
    let (_, _, f) = phantom(2);
    let g = full_noiseless(&f);
    // the default step balance is tuned for moderate weights and converges slowly here
    let cfg = PrimalDualConfig {
        iters: 8000,
        step_balance: 1e-2,
        ..Default::default()
    };
    let r = pls_tv(&g, 1e4, &cfg).unwrap();
    assert!(tv_seminorm(&r.image) <= 1e-3 * tv_seminorm(&f), "tv {}", tv_seminorm(&r.image));
}

#[test]
fn wpiccs_without_prior_term_is_pls_tv() {
    let (gen, _, f) = phantom(3);
    let prior = gen.synthesize(&gen.sample_mixed_latent(33).unwrap()).unwrap();
    let g = simulate_measurement(&f, 4.0, 0.08, 20.0, 1, 2).unwrap();
    let cfg = PrimalDualConfig {
        iters: 200,
        ..Default::default()
    };
    let a = pls_tv(&g, 0.05, &cfg).unwrap();
    let b = wpiccs(&g, &prior, 0.05, 0.0, &cfg, &WpiccsOptions::default()).unwrap();
    assert_eq!(a.image.data(), b.image.data());
    assert_eq!(a.trace, b.trace);
    assert_eq!(b.method, Method::Wpiccs);
}

#[test]
fn wpiccs_pure_prior_term_keeps_a_consistent_prior() {
    let (_, _, f) = phantom(4);
    let g = full_noiseless(&f);
    let r = wpiccs(&g, &f, 0.1, 1.0, &PrimalDualConfig::default(), &WpiccsOptions::default()).unwrap();
    assert!(relative(&r.image, &f) <= 1e-6);
}

#[test]
fn wpiccs_without_penalty_inverts_full_sampling() {
    let (gen, _, f) = phantom(5);
    let prior = gen.synthesize(&gen.sample_mixed_latent(55).unwrap()).unwrap();
    let g = full_noiseless(&f);
    let r = wpiccs(&g, &prior, 0.0, 0.5, &PrimalDualConfig::default(), &WpiccsOptions::default()).unwrap();
    assert!(r.data_fidelity <= 1e-10 * g.energy());
}

#[test]
fn primal_dual_objectives_settle_monotonically() {
    let (gen, _, f) = phantom(6);
    let prior = gen.synthesize(&gen.sample_mixed_latent(66).unwrap()).unwrap();
    let frozen = WpiccsOptions {
        reweight: false,
        ..Default::default()
    };
    for r in [4.0, 8.0] {
        let g = simulate_measurement(&f, r, 0.08, 20.0, 3, 4).unwrap();
        for lambda in [1e-3, 1e-1, 1e1] {
            let cfg = PrimalDualConfig::default();
            let tv = pls_tv(&g, lambda, &cfg).unwrap();
            assert!(worst_increase(&tv.trace) <= 1e-9, "pls-tv R={r} lambda={lambda}");
            for alpha in [0.3, 0.9] {
                let wp = wpiccs(&g, &prior, lambda, alpha, &cfg, &frozen).unwrap();
                assert!(worst_increase(&wp.trace) <= 1e-9, "wpiccs R={r} lambda={lambda} alpha={alpha}");
            }
        }
    }
}

#[test]
fn primal_dual_argument_checks() {
    let (_, _, f) = phantom(7);
    let g = full_noiseless(&f);
    let cfg = PrimalDualConfig::default();
    assert!(matches!(pls_tv(&g, -1.0, &cfg), Err(Error::Parameter(_))));
    assert!(matches!(
        wpiccs(&g, &f, 1.0, 1.5, &cfg, &WpiccsOptions::default()),
        Err(Error::Parameter(_))
    ));
    assert!(wpiccs(&g, &RealGrid::zeros(8, 8), 1.0, 0.5, &cfg, &WpiccsOptions::default()).is_err());
    let bad = PrimalDualConfig {
        step_balance: 0.0,
        ..Default::default()
    };
    assert!(pls_tv(&g, 1.0, &bad).is_err());
}

#[test]
fn picgm_starting_at_the_truth_stays_there() {
    let (gen, w, f) = phantom(8);
    let g = full_noiseless(&f);
    let c = StyleConstraint::free_block(1, w).unwrap();
    let r = picgm(&g, &gen, &c, 0.0, &short_adam(100)).unwrap();
    assert!(relative(&r.image, &f) <= 1e-6);
    assert!(r.trace[0].objective <= 1e-20);
}

#[test]
fn picgm_holds_constrained_coordinates_bitwise() {
    let (gen, w_pi, f) = phantom(9);
    let g = simulate_measurement(&f, 4.0, 0.08, 20.0, 5, 6).unwrap();
    for (p1, p2) in [(8, 17), (8, 25), (16, 25)] {
        let c = StyleConstraint::new(p1, p2, w_pi.clone()).unwrap();
        let r = picgm(&g, &gen, &c, 1e-2, &short_adam(40)).unwrap();
        let w = r.latent.unwrap();
        for i in 0..32 {
            if c.is_constrained(i) {
                assert_eq!(w.values()[i].to_bits(), w_pi.values()[i].to_bits(), "coordinate {i}");
            }
        }
        assert_eq!(r.image.data(), gen.synthesize(&w).unwrap().data());
    }
}

#[test]
fn picgm_recovers_a_swapped_contrast_block() {
    let gen = GeneratorParams::default();
    let w_pi = gen.sample_mixed_latent(100).unwrap();
    let w_true = style_mix(&w_pi, &gen.sample_mixed_latent(101).unwrap(), 8, 17).unwrap();
    let f = gen.synthesize(&w_true).unwrap();
    let g = simulate_measurement(&f, 4.0, 0.08, 20.0, 7, 8).unwrap();
    let c = StyleConstraint::new(8, 17, w_pi).unwrap();
    let r = picgm(&g, &gen, &c, 0.0, &AdamConfig::default()).unwrap();
    let err = relative(&r.image, &f);
    assert!(err <= 0.05, "relative error {err}");
    assert!(r.trace.last().unwrap().objective <= r.trace[0].objective);
}

#[test]
fn free_block_adam_equals_projected_adam() {
    let gen = GeneratorParams::default();
    let w_pi = gen.sample_mixed_latent(200).unwrap();
    let f = gen.synthesize(&style_mix(&w_pi, &gen.sample_mixed_latent(201).unwrap(), 8, 17).unwrap()).unwrap();
    let g = simulate_measurement(&f, 4.0, 0.08, 20.0, 1, 1).unwrap();
    let c = StyleConstraint::new(8, 17, w_pi.clone()).unwrap();
    let adam = AdamConfig {
        iters: 50,
        restarts: 1,
        ..Default::default()
    };
    let lambda_phi = 1e-2;
    let free = picgm(&g, &gen, &c, lambda_phi, &adam).unwrap();

    let op = MaskedFourier::new(g.mask.clone());
    let constrained: Vec<bool> = (0..32).map(|i| c.is_constrained(i)).collect();
    let mut x = w_pi.values().to_vec();
    let mut opt = Adam::new(&adam, 32);
    let mut objectives = Vec::new();
    for it in 0..=adam.iters {
        let w = ExtendedLatent::new(8, x.clone()).unwrap();
        let img = gen.synthesize(&w).unwrap();
        let (fid, img_grad) = op.fidelity_gradient(&img, &g.values).unwrap();
        let mut grad = gen.synthesize_vjp(&w, &img_grad).unwrap();
        let (phi, phi_grad) = gaussianization_penalty(&x, gen.gaussianization_stats());
        for (a, b) in grad.iter_mut().zip(&phi_grad) {
            *a += lambda_phi * b;
        }
        objectives.push(fid + lambda_phi * phi);
        if it < adam.iters {
            opt.step_projected(&mut x, &grad, &constrained, w_pi.values());
        }
    }
    let got = free.latent.unwrap();
    for (a, b) in got.values().iter().zip(&x) {
        assert!((a - b).abs() <= 1e-12);
    }
    for (t, o) in free.trace.iter().zip(&objectives) {
        assert!((t.objective - o).abs() <= 1e-12 * o.max(1.0));
    }
}

#[test]
fn csgm_without_iterations_returns_the_best_start() {
    let (gen, _, f) = phantom(10);
    let g = simulate_measurement(&f, 4.0, 0.08, 20.0, 1, 1).unwrap();
    let adam = short_adam(0);
    let r = csgm(&g, &gen, 0.0, &adam, LatentSpace::WPlus).unwrap();
    let w = r.latent.unwrap();
    let starts: Vec<ExtendedLatent> = (0..2).map(|i| gen.sample_latent(restart_seed(11, i)).unwrap()).collect();
    assert!(starts.contains(&w));
    assert_eq!(r.image.data(), gen.synthesize(&w).unwrap().data());
    assert_eq!(r.trace.len(), 1);
}

#[test]
fn csgm_recovers_in_range_truth_from_full_data() {
    let (gen, _, f) = phantom(6001);
    let g = full_noiseless(&f);
    let r = csgm(&g, &gen, 0.0, &AdamConfig::default(), LatentSpace::WPlus).unwrap();
    let err = relative(&r.image, &f);
    assert!(err <= 1e-3, "relative error {err}");
    assert!(r.trace.last().unwrap().objective <= r.trace[0].objective);
}

#[test]
fn csgm_in_z_space_stays_broadcast() {
    let (gen, _, f) = phantom(12);
    let g = simulate_measurement(&f, 4.0, 0.08, 20.0, 1, 1).unwrap();
    let r = csgm(&g, &gen, 0.0, &short_adam(30), LatentSpace::Z).unwrap();
    let w = r.latent.unwrap();
    for l in 1..4 {
        assert_eq!(w.block(l), w.block(0));
    }
    assert!(r.trace.last().unwrap().objective <= r.trace[0].objective);
}

#[test]
fn reconstructions_are_deterministic() {
    let (gen, w, f) = phantom(13);
    let prior = gen.synthesize(&gen.sample_mixed_latent(130).unwrap()).unwrap();
    let g = simulate_measurement(&f, 4.0, 0.08, 20.0, 9, 9).unwrap();
    let c = StyleConstraint::free_block(1, w).unwrap();
    let cfg = PrimalDualConfig {
        iters: 150,
        ..Default::default()
    };
    let run = || -> Vec<ReconResult> {
        vec![
            pls_tv(&g, 0.01, &cfg).unwrap(),
            wpiccs(&g, &prior, 0.01, 0.5, &cfg, &WpiccsOptions::default()).unwrap(),
            csgm(&g, &gen, 1e-3, &short_adam(25), LatentSpace::WPlus).unwrap(),
            picgm(&g, &gen, &c, 1e-3, &short_adam(25)).unwrap(),
        ]
    };
    for (a, b) in run().iter().zip(&run()) {
        assert_eq!(a.image.data(), b.image.data(), "{}", a.method);
        assert_eq!(a.latent, b.latent);
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.seeds, b.seeds);
        assert_eq!(a.config, b.config);
    }
}

#[test]
fn latent_method_argument_checks() {
    let (gen, w, f) = phantom(14);
    let g = full_noiseless(&f);
    let bad = AdamConfig {
        restarts: 0,
        ..Default::default()
    };
    assert!(matches!(csgm(&g, &gen, 0.0, &bad, LatentSpace::WPlus), Err(Error::Parameter(_))));
    let small = simulate_measurement(&RealGrid::zeros(8, 8), 1.0, 0.0, f64::INFINITY, 0, 0).unwrap();
    let c = StyleConstraint::free_block(1, w).unwrap();
    assert!(matches!(picgm(&small, &gen, &c, 0.0, &short_adam(1)), Err(Error::Contract(_))));
    assert!(matches!(StyleConstraint::new(8, 8, gen.sample_latent(0).unwrap()), Err(Error::Parameter(_))));
}

#[test]
fn results_save_to_disk() {
    let (gen, w, f) = phantom(15);
    let g = simulate_measurement(&f, 4.0, 0.08, 20.0, 1, 1).unwrap();
    let c = StyleConstraint::free_block(1, w).unwrap();
    let r = picgm(&g, &gen, &c, 0.0, &short_adam(5)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    r.save(dir.path()).unwrap();
    let img = Tensor::read(dir.path().join("image.tnsr")).unwrap();
    assert_eq!(RealGrid::from_tensor(&img).unwrap().data(), r.image.data());
    let lat = Tensor::read(dir.path().join("latent.tnsr")).unwrap();
    assert_eq!(lat.as_real().unwrap(), r.latent.as_ref().unwrap().values());
    let trace = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(trace.starts_with("iteration,objective,data_fidelity,penalty\n"));
    assert_eq!(trace.lines().count(), r.trace.len() + 1);
    let config = std::fs::read_to_string(dir.path().join("config.toml")).unwrap();
    assert!(config.contains("method = \"picgm\""));
}

#[test]
fn method_names_round_trip() {
    for m in Method::ALL {
        assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
    }
    assert!("fista".parse::<Method>().is_err());
    assert!(Method::Picgm.uses_prior() && Method::Wpiccs.uses_prior());
    assert!(!Method::PlsTv.is_latent() && Method::Csgm.is_latent());
}
