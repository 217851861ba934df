use super::*;
use crate::grad::finite_difference_check;
use crate::recon::adam::AdamConfig;
use crate::recon::latent::restart_seed;

fn gen() -> GeneratorParams {
    GeneratorParams::default()
}

fn relative(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den
}

#[test]
fn synthesis_gradient_matches_finite_differences() {
    let g = gen();
    for s in 0..5 {
        let w = g.sample_mixed_latent(900 + s).unwrap();
        let report = finite_difference_check(&SynthesisOp(&g), w.values(), 8, 1e-4, s).unwrap();
        assert!(report.max_relative_error <= 1e-5, "latent {s}: {}", report.max_relative_error);
    }
}

#[test]
fn zero_cotangent_gives_zero_gradient() {
    let g = gen();
    let w = g.sample_mixed_latent(1).unwrap();
    let grad = g.synthesize_vjp(&w, &RealGrid::zeros(64, 64)).unwrap();
    assert_eq!(grad.len(), 32);
    assert!(grad.iter().all(|&v| v == 0.0));
}

#[test]
fn every_block_receives_gradient() {
    let g = gen();
    let w = g.sample_mixed_latent(2).unwrap();
    let cot = RealGrid::from_fn(64, 64, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
    let grad = g.synthesize_vjp(&w, &cot).unwrap();
    for b in 0..4 {
        assert!(grad[b * 8..(b + 1) * 8].iter().any(|&v| v != 0.0), "block {b}");
    }
}

#[test]
fn synthesis_is_deterministic_and_bounded() {
    let g = gen();
    let w = g.sample_mixed_latent(3).unwrap();
    let a = g.synthesize(&w).unwrap();
    let b = gen().synthesize(&w).unwrap();
    assert_eq!(a.data(), b.data());
    let (lo, hi) = a.min_max();
    assert!(lo > 0.0 && hi < 1.0);
}

#[test]
fn latent_shape_is_checked() {
    let g = gen();
    let w = ExtendedLatent::new(8, vec![0.0; 24]).unwrap();
    assert!(matches!(g.synthesize(&w), Err(Error::Contract(_))));
    let cot = RealGrid::zeros(32, 32);
    let w = g.sample_latent(0).unwrap();
    assert!(g.synthesize_vjp(&w, &cot).is_err());
}

#[test]
fn contrast_block_leaves_boundaries_in_place() {
    let g = gen();
    for s in 0..5 {
        let w = g.sample_mixed_latent(10 + s).unwrap();
        let other = g.sample_mixed_latent(20 + s).unwrap();
        let mixed = style_mix(&w, &other, 8, 17).unwrap();
        assert_eq!(g.boundary_parameters(&w).unwrap(), g.boundary_parameters(&mixed).unwrap());
        let ma = g.region_masks(&w).unwrap();
        let mb = g.region_masks(&mixed).unwrap();
        for (a, b) in ma.iter().zip(&mb) {
            let worst = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            assert!(worst <= 1e-12);
        }
        let ia = g.synthesize(&w).unwrap();
        let ib = g.synthesize(&mixed).unwrap();
        assert!(relative(ia.data(), ib.data()) > 1e-3, "contrast swap must change intensities");
    }
}

#[test]
fn geometry_block_moves_boundaries() {
    let g = gen();
    let w = g.sample_mixed_latent(30).unwrap();
    let mut moved = w.clone();
    moved.block_mut(0)[0] += 0.5;
    assert_ne!(g.boundary_parameters(&w).unwrap(), g.boundary_parameters(&moved).unwrap());
}

#[test]
fn zero_texture_amplitude_removes_texture() {
    let g = gen();
    let mut a = g.sample_mixed_latent(40).unwrap();
    a.block_mut(3)[0] = 0.0;
    a.block_mut(3)[4] = 0.0;
    let mut b = a.clone();
    for i in [1, 2, 3, 5, 6, 7] {
        b.block_mut(3)[i] += 0.7;
    }
    assert_eq!(g.synthesize(&a).unwrap().data(), g.synthesize(&b).unwrap().data());
}

#[test]
fn sample_latent_is_a_broadcast() {
    let g = gen();
    let w = g.sample_latent(5).unwrap();
    for l in 1..4 {
        assert_eq!(w.block(l), w.block(0));
    }
    let u = g.map_to_style(&sample_z(8, 5)).unwrap();
    assert_eq!(w.block(2), &u.0[..]);
    let mixed = g.sample_mixed_latent(5).unwrap();
    assert_ne!(mixed.block(0), mixed.block(1));
}

#[test]
fn generator_file_round_trip() {
    let g = gen();
    let bytes = g.encode();
    assert_eq!(&bytes[..4], b"SGEN");
    let back = GeneratorParams::decode_bytes(&bytes).unwrap();
    assert_eq!(back, g);
    let w = g.sample_mixed_latent(6).unwrap();
    assert_eq!(back.synthesize(&w).unwrap().data(), g.synthesize(&w).unwrap().data());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("gen.sgen");
    g.write(&path).unwrap();
    assert_eq!(GeneratorParams::read(&path).unwrap(), g);
}

#[test]
fn generator_file_rejects_damage() {
    let bytes = gen().encode();
    assert!(matches!(GeneratorParams::decode_bytes(&bytes[..bytes.len() - 3]), Err(Error::Parse { .. })));
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(GeneratorParams::decode_bytes(&bad), Err(Error::Parse { .. })));
    let mut bad = bytes.clone();
    bad[4] = 9;
    assert!(GeneratorParams::decode_bytes(&bad).is_err());
    let mut long = bytes;
    long.push(0);
    assert!(GeneratorParams::decode_bytes(&long).is_err());
}

#[test]
fn small_shapes_are_rejected() {
    assert!(matches!(GeneratorParams::new(3, 4, 64, 64, 0), Err(Error::Parameter(_))));
    assert!(matches!(GeneratorParams::new(8, 3, 64, 64, 0), Err(Error::Parameter(_))));
}

#[test]
fn larger_style_dims_leave_extra_coordinates_inert() {
    let g = GeneratorParams::new(10, 5, 32, 32, 1).unwrap();
    let w = g.sample_mixed_latent(7).unwrap();
    let cot = RealGrid::from_fn(32, 32, |i, j| (i as f64 - j as f64) / 32.0);
    let grad = g.synthesize_vjp(&w, &cot).unwrap();
    assert_eq!(grad.len(), 50);
    for b in 0..5 {
        assert_eq!(&grad[b * 10 + 8..b * 10 + 10], &[0.0, 0.0]);
    }
    assert!(grad[40..50].iter().all(|&v| v == 0.0));
    let report = finite_difference_check(&SynthesisOp(&g), w.values(), 4, 1e-4, 0).unwrap();
    assert!(report.max_relative_error <= 1e-5);
}

#[test]
fn inversion_without_iterations_returns_best_start() {
    let g = gen();
    let target = g.synthesize(&g.sample_mixed_latent(50).unwrap()).unwrap();
    let adam = AdamConfig {
        iters: 0,
        restarts: 3,
        seed: 4,
        ..Default::default()
    };
    let res = invert(&g, &target, None, 0.0, &adam).unwrap();
    let start = g.sample_latent(restart_seed(4, res.restart)).unwrap();
    assert_eq!(res.latent, start);
    for r in 0..3 {
        let other = g.synthesize(&g.sample_latent(restart_seed(4, r)).unwrap()).unwrap();
        let resid = relative(other.data(), target.data());
        assert!(res.residual <= resid + 1e-15);
    }
}

#[test]
fn constrained_inversion_recovers_contrast_block() {
    let g = gen();
    let w_pi = g.sample_mixed_latent(60).unwrap();
    let w_star = style_mix(&w_pi, &g.sample_mixed_latent(61).unwrap(), 8, 17).unwrap();
    let target = g.synthesize(&w_star).unwrap();
    let c = StyleConstraint::new(8, 17, w_pi.clone()).unwrap();
    let adam = AdamConfig {
        iters: 800,
        ..Default::default()
    };
    let res = invert(&g, &target, Some(&c), 0.0, &adam).unwrap();
    assert!(res.residual <= 1e-3, "residual {}", res.residual);
    let block_err = relative(res.latent.block(1), w_star.block(1));
    assert!(block_err <= 1e-3, "contrast block error {block_err}");
    assert_eq!(res.latent.block(0), w_pi.block(0));
    assert_eq!(res.latent.block(2), w_pi.block(2));
    assert_eq!(res.latent.block(3), w_pi.block(3));
}

#[test]
fn inversion_checks_target_shape() {
    let g = gen();
    let err = invert(&g, &RealGrid::zeros(8, 8), None, 0.0, &AdamConfig::default()).unwrap_err();
    assert!(matches!(err, Error::Contract(_)));
}
