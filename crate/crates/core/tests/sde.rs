use proptest::prelude::*;
use shear_core::hopf::PolarSystem;
use shear_core::sde::{evolve_ensemble_common_noise, simulate, step_count, SdeFn};
use shear_core::{Convention, Error, HopfParams, NoiseStream, Sde, Stepper};

fn linear(convention: Convention, mu: f64, sigma: f64) -> SdeFn<impl Fn(f64, &[f64], &mut [f64]), impl Fn(f64, &[f64], &mut [f64])> {
    SdeFn {
        state_dim: 1,
        noise_dim: 1,
        convention,
        drift: move |_t: f64, x: &[f64], out: &mut [f64]| out[0] = mu * x[0],
        diffusion: move |_t: f64, x: &[f64], out: &mut [f64]| out[0] = sigma * x[0],
    }
}

fn ou() -> SdeFn<impl Fn(f64, &[f64], &mut [f64]), impl Fn(f64, &[f64], &mut [f64])> {
    SdeFn {
        state_dim: 1,
        noise_dim: 1,
        convention: Convention::Ito,
        drift: |_t: f64, x: &[f64], out: &mut [f64]| out[0] = -x[0],
        diffusion: |_t: f64, _x: &[f64], out: &mut [f64]| out[0] = 1.0,
    }
}

#[test]
fn linear_ode_decay() {
    let sys = linear(Convention::Stratonovich, -1.0, 0.0);
    let mut stream = NoiseStream::new(1, 1, 1e-3).unwrap();
    let traj = simulate(&sys, &[1.0], 10.0, &mut stream, 1000).unwrap();
    let x = traj.last()[0];
    let want = (-10.0f64).exp();
    assert!((x / want - 1.0).abs() < 1e-4, "{x} vs {want}");
    // Euler–Maruyama is first order: (1 − dt)^n.
    let em = linear(Convention::Ito, -1.0, 0.0);
    let mut stream = NoiseStream::new(1, 1, 1e-3).unwrap();
    let x = simulate(&em, &[1.0], 10.0, &mut stream, 1000).unwrap().last()[0];
    assert!((x - 0.999f64.powi(10_000)).abs() < 1e-15);
}

#[test]
fn ou_stationary_variance() {
    let sys = ou();
    let n_paths = 10_000;
    let mut sum2 = 0.0;
    let mut sum4 = 0.0;
    let mut stepper = Stepper::for_sde(&sys);
    let dt = 1e-3;
    let n = step_count(10.0, dt).unwrap();
    for p in 0..n_paths {
        let mut stream = NoiseStream::new(p, 1, dt).unwrap();
        let mut x = [0.0];
        let mut dw = [0.0];
        for k in 0..n {
            stream.increment(&mut dw);
            stepper.step(&sys, k as f64 * dt, &mut x, dt, &dw).unwrap();
        }
        sum2 += x[0] * x[0];
        sum4 += x[0].powi(4);
    }
    let nf = n_paths as f64;
    let var = sum2 / nf;
    let se = ((sum4 / nf - var * var) / nf).sqrt();
    assert!((var - 0.5).abs() < 3.0 * se, "var={var} se={se}");
}

/// RMS strong error at `T = 1` of a geometric Brownian motion path against
/// the exact solution, with increments built from a fine grid of `2^10` steps.
fn gbm_strong_error(convention: Convention, k: usize, paths: u64) -> f64 {
    let (mu, sigma) = (0.5, 0.8);
    let sys = linear(convention, mu, sigma);
    let fine = 1.0 / 1024.0;
    let dt = fine * k as f64;
    let mut stepper = Stepper::for_sde(&sys);
    let mut acc = 0.0;
    for seed in 0..paths {
        let mut stream = NoiseStream::new(seed, 1, fine).unwrap();
        let mut x = [1.0];
        let mut w = 0.0;
        let mut dw = [0.0];
        for i in 0..(1024 / k) {
            stream.coarse_increment(k, &mut dw);
            w += dw[0];
            stepper.step(&sys, i as f64 * dt, &mut x, dt, &dw).unwrap();
        }
        let drift = match convention {
            Convention::Ito => mu - 0.5 * sigma * sigma,
            Convention::Stratonovich => mu,
        };
        let exact = (drift + sigma * w).exp();
        acc += (x[0] - exact).powi(2);
    }
    (acc / paths as f64).sqrt()
}

#[test]
fn heun_is_strong_order_one() {
    let e1 = gbm_strong_error(Convention::Stratonovich, 32, 400);
    let e2 = gbm_strong_error(Convention::Stratonovich, 16, 400);
    let ratio = e1 / e2;
    assert!((1.7..=2.3).contains(&ratio), "ratio {ratio} ({e1}, {e2})");
}

#[test]
fn euler_maruyama_strong_order_on_additive_noise() {
    // Additive noise makes Euler–Maruyama strong order one. Reference: the
    // same increments on a 64× finer grid.
    let sys = ou();
    let run = |k: usize, seed: u64| {
        let fine = 1.0 / 4096.0;
        let mut stream = NoiseStream::new(seed, 1, fine).unwrap();
        let mut stepper = Stepper::for_sde(&sys);
        let mut x = [1.0];
        let mut dw = [0.0];
        let dt = fine * k as f64;
        for i in 0..(4096 / k) {
            stream.coarse_increment(k, &mut dw);
            stepper.step(&sys, i as f64 * dt, &mut x, dt, &dw).unwrap();
        }
        x[0]
    };
    let (mut e1, mut e2) = (0.0, 0.0);
    for seed in 0..200 {
        let reference = run(1, seed);
        e1 += (run(128, seed) - reference).powi(2);
        e2 += (run(64, seed) - reference).powi(2);
    }
    let ratio = (e1 / e2).sqrt();
    assert!((1.7..=2.3).contains(&ratio), "ratio {ratio}");
}

#[test]
fn increment_statistics() {
    let dt = 1e-3;
    let mut s = NoiseStream::new(77, 2, dt).unwrap();
    let n = 1_000_000;
    let mut sum = [0.0; 2];
    let mut sum2 = [0.0; 2];
    let mut dw = [0.0; 2];
    for _ in 0..n {
        s.increment(&mut dw);
        for c in 0..2 {
            sum[c] += dw[c];
            sum2[c] += dw[c] * dw[c];
        }
    }
    let nf = n as f64;
    for c in 0..2 {
        let m = sum[c] / nf;
        let v = sum2[c] / nf - m * m;
        assert!(m.abs() < 4.0 * dt.sqrt() / nf.sqrt(), "mean {m}");
        assert!((v / dt - 1.0).abs() < 0.05, "var {v}");
    }
}

#[test]
fn streams_are_reproducible_and_distinct() {
    let draw = |mut s: NoiseStream| {
        let mut v = vec![0.0; 3];
        (0..100)
            .flat_map(|_| {
                s.increment(&mut v);
                v.clone()
            })
            .collect::<Vec<f64>>()
    };
    let a = NoiseStream::new(5, 3, 0.01).unwrap();
    assert_eq!(draw(a.replay()), draw(NoiseStream::new(5, 3, 0.01).unwrap()));
    assert_ne!(draw(a.replay()), draw(NoiseStream::new(6, 3, 0.01).unwrap()));
    assert_ne!(draw(a.replay()), draw(a.substream(1)));
    assert_eq!(draw(a.substream(1)), draw(NoiseStream::with_stream(5, 1, 3, 0.01).unwrap()));
    assert!(NoiseStream::new(0, 0, 0.1).is_err());
    assert!(NoiseStream::new(0, 1, 0.0).is_err());
}

#[test]
fn coarse_increment_sums_fine_increments() {
    let mut a = NoiseStream::new(3, 2, 0.01).unwrap();
    let mut b = a.replay();
    let mut coarse = [0.0; 2];
    a.coarse_increment(4, &mut coarse);
    let mut fine = [0.0; 2];
    let mut acc = [0.0; 2];
    for _ in 0..4 {
        b.increment(&mut fine);
        acc[0] += fine[0];
        acc[1] += fine[1];
    }
    assert_eq!(coarse, acc);
}

#[test]
fn simulate_is_deterministic_and_stride_keeps_endpoint() {
    let p = HopfParams::new(1.0, 1.0, 1.0, 2.0, 0.3).unwrap();
    let sys = PolarSystem { params: p };
    let run = |stride| {
        let mut s = NoiseStream::new(11, 2, 1e-3).unwrap();
        simulate(&sys, &[1.0, 0.0], 2.345, &mut s, stride).unwrap()
    };
    let a = run(1);
    let b = run(1);
    let mut ca = Vec::new();
    let mut cb = Vec::new();
    a.write_csv(&mut ca, &["r", "phi"]).unwrap();
    b.write_csv(&mut cb, &["r", "phi"]).unwrap();
    assert_eq!(ca, cb);
    let text = String::from_utf8(ca).unwrap();
    assert!(text.starts_with("t,r,phi\n"));
    let thinned = run(7);
    assert_eq!(thinned.last(), a.last());
    assert_eq!(thinned.t.last(), a.t.last());
    assert!((thinned.t[1] - 7e-3).abs() < 1e-15);
}

#[test]
fn radial_ode_converges_to_limit_cycle() {
    let p = HopfParams::new(1.0, 0.5, 1.0, 1.0, 0.0).unwrap();
    let sys = PolarSystem { params: p };
    let mut s = NoiseStream::new(0, 2, 1e-3).unwrap();
    let r = simulate(&sys, &[0.1, 0.0], 30.0, &mut s, 1000).unwrap().last()[0];
    assert!((r - 1.0).abs() < 1e-6, "{r}");
}

struct Ceiling;

impl Sde for Ceiling {
    fn state_dim(&self) -> usize {
        1
    }
    fn noise_dim(&self) -> usize {
        1
    }
    fn convention(&self) -> Convention {
        Convention::Ito
    }
    fn drift(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        out[0] = 1.0;
    }
    fn diffusion(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        out[0] = 0.1;
    }
    fn admissible(&self, x: &[f64]) -> bool {
        x[0] < 5.0
    }
}

#[test]
fn stepper_reports_region_exit_and_keeps_state() {
    let mut stepper = Stepper::for_sde(&Ceiling);
    let mut x = [4.999];
    let err = stepper.step(&Ceiling, 0.0, &mut x, 0.1, &[0.0]).unwrap_err();
    assert!(matches!(err, Error::RegionExit { .. }));
    assert_eq!(x, [4.999]);
}

#[test]
fn ensemble_members_share_noise() {
    let p = HopfParams::new(1.0, 1.0, 1.0, -3.0, 0.5).unwrap();
    let sys = PolarSystem { params: p };
    let stream = NoiseStream::new(8, 2, 1e-3).unwrap();
    let states = vec![vec![1.0, 0.3]; 300];
    let out = evolve_ensemble_common_noise(&sys, states, 1.0, &stream).unwrap();
    assert_eq!(out.n_failed(), 0);
    assert!(out.states.iter().all(|s| *s == out.states[0]));
    let mut own = stream.replay();
    let single = simulate(&sys, &[1.0, 0.3], 1.0, &mut own, 1000).unwrap();
    assert_eq!(out.states[0], single.last());
}

#[test]
fn zero_noise_ensemble_matches_member_integration() {
    let p = HopfParams::new(1.0, 1.0, 1.0, 2.0, 0.0).unwrap();
    let sys = PolarSystem { params: p };
    let stream = NoiseStream::new(1, 2, 1e-3).unwrap();
    let states: Vec<Vec<f64>> = (0..200).map(|i| vec![0.2 + 0.01 * i as f64, 0.1 * i as f64]).collect();
    let out = evolve_ensemble_common_noise(&sys, states.clone(), 2.0, &stream).unwrap();
    for (x0, x) in states.iter().zip(&out.states) {
        let mut s = NoiseStream::new(999, 2, 1e-3).unwrap();
        assert_eq!(simulate(&sys, x0, 2.0, &mut s, 1).unwrap().last(), &x[..]);
    }
}

#[test]
fn ensemble_flags_failed_members_only() {
    let stream = NoiseStream::new(2, 1, 0.01).unwrap();
    let states = vec![vec![0.0], vec![4.5], vec![1.0], vec![7.0]];
    let out = evolve_ensemble_common_noise(&Ceiling, states, 1.0, &stream).unwrap();
    let failed: Vec<bool> = out.failures.iter().map(|f| f.is_some()).collect();
    assert_eq!(failed, vec![false, true, false, true]);
    assert!(out.states[0][0] > 0.5 && out.states[2][0] > 1.5);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn uniform_draws_are_in_open_unit_interval(seed in any::<u64>(), stream in 0u64..8) {
        let mut s = NoiseStream::with_stream(seed, stream, 1, 1.0).unwrap();
        for _ in 0..256 {
            let u = s.uniform();
            prop_assert!(u > 0.0 && u < 1.0);
        }
    }

    #[test]
    fn step_count_matches_duration(n in 1usize..100_000, dt in 1e-5f64..1e-1) {
        let t = n as f64 * dt;
        prop_assert_eq!(step_count(t, dt).unwrap(), n);
    }
}
