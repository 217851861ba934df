use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use styleprior_bench::fixture;
use styleprior_core::generator::StyleConstraint;
use styleprior_core::imaging::MaskedFourier;
use styleprior_core::recon::{picgm, pls_tv, wpiccs, WpiccsOptions};
use styleprior_core::sparsity::{dwt2, finite_diff, idwt2};
use styleprior_core::{AdamConfig, Generator, PrimalDualConfig};

fn imaging(c: &mut Criterion) {
    let f = fixture();
    let op = MaskedFourier::new(f.measurement.mask.clone());
    c.bench_function("forward", |b| b.iter(|| op.forward(black_box(&f.image)).unwrap()));
    let v = f.measurement.values.clone();
    c.bench_function("adjoint", |b| b.iter(|| op.adjoint(black_box(&v)).unwrap()));
    c.bench_function("normal_solve", |b| b.iter(|| op.solve_normal_shifted(black_box(&f.image), 0.5).unwrap()));
}

fn sparsity(c: &mut Criterion) {
    let f = fixture();
    c.bench_function("dwt2", |b| b.iter(|| dwt2(black_box(&f.image), 6).unwrap()));
    let coeffs = dwt2(&f.image, 6).unwrap();
    c.bench_function("idwt2", |b| b.iter(|| idwt2(black_box(&coeffs)).unwrap()));
    c.bench_function("finite_diff", |b| b.iter(|| finite_diff(black_box(&f.image))));
}

fn generator(c: &mut Criterion) {
    let f = fixture();
    c.bench_function("synthesize", |b| b.iter(|| f.gen.synthesize(black_box(&f.latent)).unwrap()));
    c.bench_function("synthesize_vjp", |b| {
        b.iter(|| f.gen.synthesize_vjp(black_box(&f.latent), &f.image).unwrap())
    });
}

fn solvers(c: &mut Criterion) {
    let f = fixture();
    let pd = PrimalDualConfig {
        iters: 20,
        ..Default::default()
    };
    c.bench_function("pls_tv_20_iters", |b| b.iter(|| pls_tv(black_box(&f.measurement), 0.01, &pd).unwrap()));
    let prior = f.gen.synthesize(&f.gen.sample_mixed_latent(2).unwrap()).unwrap();
    let opts = WpiccsOptions::default();
    c.bench_function("wpiccs_20_iters", |b| {
        b.iter(|| wpiccs(black_box(&f.measurement), &prior, 0.01, 0.5, &pd, &opts).unwrap())
    });
    let adam = AdamConfig {
        iters: 20,
        restarts: 1,
        ..Default::default()
    };
    let constraint = StyleConstraint::new(8, 17, f.latent.clone()).unwrap();
    c.bench_function("picgm_20_iters", |b| {
        b.iter(|| picgm(black_box(&f.measurement), &f.gen, &constraint, 0.0, &adam).unwrap())
    });
}

criterion_group!(benches, imaging, sparsity, generator, solvers);
criterion_main!(benches);
