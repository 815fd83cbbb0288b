use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use shear_core::experiments::evolve_cloud;
use shear_core::hopf::RsThetaSystem;
use shear_core::projective::psi_hat_heun_step;
use shear_core::quadrature::{find_c0, psi};
use shear_core::sde::Stepper;
use shear_core::{HopfParams, NoiseStream, QuadratureConfig, ShearModel, SimplifiedParams};

fn quadrature(c: &mut Criterion) {
    let cfg = QuadratureConfig::default();
    c.bench_function("psi(4)", |b| b.iter(|| psi(black_box(4.0), &cfg).unwrap()));
    c.bench_function("find_c0", |b| b.iter(|| find_c0(&cfg).unwrap()));
}

fn steps(c: &mut Criterion) {
    let sys = RsThetaSystem::new(ShearModel::figure_two(), 0.25).unwrap();
    let mut stepper = Stepper::for_sde(&sys);
    let mut x = [0.01, 0.0, 0.3];
    let dw = [0.01, -0.02];
    c.bench_function("heun step rs-theta", |b| {
        b.iter(|| {
            stepper.step(&sys, 0.0, &mut x, 1e-3, black_box(&dw)).unwrap();
            x = [0.01, 0.0, 0.3];
        })
    });
    let p = SimplifiedParams::new(1.0, 1.0, 2.0).unwrap();
    c.bench_function("psi_hat heun step", |b| {
        b.iter(|| psi_hat_heun_step(&p, black_box(0.7), 1e-3, black_box(0.03)))
    });
}

fn cloud(c: &mut Criterion) {
    let p = HopfParams::new(1.0, 1.0, 1.0, -10.0, 1.0).unwrap();
    let noise = NoiseStream::new(1, 2, 1e-3).unwrap();
    let mut group = c.benchmark_group("cloud");
    group.sample_size(10);
    group.bench_function("evolve 10k members for 1 time unit", |b| {
        b.iter(|| {
            let mut z1 = vec![1.0; 10_000];
            let mut z2 = vec![0.0; 10_000];
            evolve_cloud(&p, &mut z1, &mut z2, 1.0, &noise).unwrap();
            black_box((z1, z2))
        })
    });
    group.finish();
}

criterion_group!(benches, quadrature, steps, cloud);
criterion_main!(benches);
