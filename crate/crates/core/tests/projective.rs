use std::f64::consts::{PI, TAU};

use proptest::prelude::*;
use shear_core::hopf::{a_matrices, Mat2, SimplifiedVariational};
use shear_core::projective::{
    audit_grid, blended_lambda_star_terms, bounds_audit, d_psi_g2_h2, direction_of, dp_cs, dq_cs, g3_h3, g3_tilde,
    gh, gh_tilde, h2_tilde, h3_hat, p_cs, proj_coeffs, psi_hat_heun_step, psi_of, q_cs, trig_of, wrap_angle,
    BlendedConfig, CutoffChi, Interval, PsiHatSystem,
};
use shear_core::{Convention, NoiseStream, ShearModel, SimplifiedParams, Stepper};

fn random_matrices(seed: u64, n: usize) -> Vec<Mat2> {
    let mut s = NoiseStream::with_stream(seed, 3, 1, 1.0).unwrap();
    (0..n)
        .map(|_| {
            let mut m = [[0.0; 2]; 2];
            for v in m.iter_mut().flatten() {
                *v = 6.0 * s.uniform() - 3.0;
            }
            m
        })
        .collect()
}

fn angle_gap(a: f64, b: f64) -> f64 {
    wrap_angle(a - b).abs()
}

/// Two-sample Kolmogorov–Smirnov statistic.
fn ks_two_sample(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

#[test]
fn identity_and_rotation_coefficients() {
    let id = [[1.0, 0.0], [0.0, 1.0]];
    let rot = [[0.0, -1.0], [1.0, 0.0]];
    for k in 0..32 {
        let psi = -PI + TAU * k as f64 / 32.0;
        let (s, c) = psi.sin_cos();
        assert!(p_cs(&id, c, s).abs() < 1e-15);
        assert!((q_cs(&id, c, s) - 1.0).abs() < 1e-15);
        assert!(q_cs(&rot, c, s).abs() < 1e-15);
        assert!((p_cs(&rot, c, s) - 2.0).abs() < 1e-15);
    }
}

#[test]
fn coefficients_match_linear_flow() {
    // ψ and log‖v‖ after a short flow of dv = Bv, central differences.
    let h = 1e-6;
    for (k, b) in random_matrices(1, 1000).iter().enumerate() {
        let psi = -PI + TAU * ((k as f64 * 0.618_033_988_7) % 1.0);
        let v = direction_of(psi);
        let flow = |t: f64| {
            let bv = [b[0][0] * v[0] + b[0][1] * v[1], b[1][0] * v[0] + b[1][1] * v[1]];
            let b2v = [b[0][0] * bv[0] + b[0][1] * bv[1], b[1][0] * bv[0] + b[1][1] * bv[1]];
            [
                v[0] + t * bv[0] + 0.5 * t * t * b2v[0],
                v[1] + t * bv[1] + 0.5 * t * t * b2v[1],
            ]
        };
        let (vp, vm) = (flow(h), flow(-h));
        let dpsi = wrap_angle(psi_of(vp) - psi_of(vm)) / (2.0 * h);
        let dlog = (vp[0].hypot(vp[1]).ln() - vm[0].hypot(vm[1]).ln()) / (2.0 * h);
        let (s, c) = psi.sin_cos();
        let scale = 1.0 + b.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
        assert!((dpsi - p_cs(b, c, s)).abs() < 1e-6 * scale, "p: {dpsi} vs {}", p_cs(b, c, s));
        assert!((dlog - q_cs(b, c, s)).abs() < 1e-6 * scale, "q: {dlog} vs {}", q_cs(b, c, s));
    }
}

#[test]
fn angle_derivatives_match_finite_differences() {
    let h = 1e-6;
    for (k, b) in random_matrices(2, 200).iter().enumerate() {
        let psi = -3.0 + 6.0 * k as f64 / 200.0;
        let (s, c) = psi.sin_cos();
        let (sp, cp) = (psi + h).sin_cos();
        let (sm, cm) = (psi - h).sin_cos();
        let fd_p = (p_cs(b, cp, sp) - p_cs(b, cm, sm)) / (2.0 * h);
        let fd_q = (q_cs(b, cp, sp) - q_cs(b, cm, sm)) / (2.0 * h);
        let (dp, dq) = (dp_cs(b, c, s), dq_cs(b, c, s));
        assert!((fd_p - dp).abs() < 1e-6 * (1.0 + dp.abs()) * 10.0, "{fd_p} vs {dp}");
        assert!((fd_q - dq).abs() < 1e-6 * (1.0 + dq.abs()) * 10.0, "{fd_q} vs {dq}");
    }
    let m = ShearModel::new(1.0, 0.0, 1.0, -2.0, 0.7).unwrap();
    for (r, psi, eps) in [(1.0, 0.3, 0.1), (0.4, -2.0, 0.5), (2.0, 3.0, 1.0)] {
        let (dg2, dh2) = d_psi_g2_h2(&m, r, psi, eps).unwrap();
        let a = gh(&m, r, psi + h, eps).unwrap();
        let z = gh(&m, r, psi - h, eps).unwrap();
        assert!(((a.g2 - z.g2) / (2.0 * h) - dg2).abs() < 1e-6 * (1.0 + dg2.abs()));
        assert!(((a.h2 - z.h2) / (2.0 * h) - dh2).abs() < 1e-6 * (1.0 + dh2.abs()));
    }
}

fn triples(n: usize) -> Vec<(f64, f64, f64)> {
    let mut s = NoiseStream::with_stream(99, 4, 1, 1.0).unwrap();
    (0..n)
        .map(|_| {
            let r = 1e-2 + 5.0 * s.uniform();
            let psi = -PI + TAU * s.uniform();
            let eps = 1e-3 + s.uniform();
            (r, psi, eps)
        })
        .collect()
}

#[test]
fn tilde_chart_has_no_log_norm_noise() {
    let m = ShearModel::new(1.2, 0.3, 0.8, -4.0, 1.5).unwrap();
    for (r, psi, eps) in triples(1000) {
        assert!(h2_tilde(&m, r, psi, eps).unwrap().abs() < 1e-12 * (1.0 + 1.5 / r));
        let t = gh_tilde(&m, r, psi, eps).unwrap();
        assert!(t.g1.is_finite() && t.g2.is_finite() && t.h1.is_finite());
    }
}

#[test]
fn gh_agrees_with_generic_projection() {
    let m = ShearModel::new(1.2, 0.3, 0.8, -4.0, 1.5).unwrap();
    let ulps = |a: f64, b: f64| 4.0 * f64::EPSILON * a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
    for (r, psi, eps) in triples(500) {
        let g = gh(&m, r, psi, eps).unwrap();
        let (a1, a2) = a_matrices(&m, r, eps);
        let pc = proj_coeffs(&a1, &a2, psi);
        assert!((g.g1 - pc.p1).abs() <= ulps(g.g1, pc.p1));
        assert!((g.g2 - pc.p2).abs() <= ulps(g.g2, pc.p2));
        assert!((g.h1 - pc.q1).abs() <= ulps(g.h1, pc.q1));
        assert!((g.h2 - pc.q2).abs() <= ulps(g.h2, pc.q2));
    }
}

#[test]
fn log_norm_noise_in_the_shear_limit() {
    let m = ShearModel::new(1.0, 0.0, 2.0, -1.0, 0.6).unwrap();
    for (r, psi, _) in triples(200) {
        let g = gh(&m, r, psi, 0.0).unwrap();
        assert!((g.h2 - 0.5 * (0.6 / r) * psi.sin()).abs() < 1e-14 * (1.0 + 1.0 / r));
    }
}

#[test]
fn ito_drifts_carry_half_derivative_correction() {
    let m = ShearModel::new(1.0, 0.0, 1.0, -3.0, 0.9).unwrap();
    let h = 1e-6;
    for (r, psi, eps) in triples(200) {
        let g = gh(&m, r, psi, eps).unwrap();
        let (g3, h3) = g3_h3(&m, r, psi, eps).unwrap();
        let up = gh(&m, r, psi + h, eps).unwrap();
        let dn = gh(&m, r, psi - h, eps).unwrap();
        let dg2 = (up.g2 - dn.g2) / (2.0 * h);
        let dh2 = (up.h2 - dn.h2) / (2.0 * h);
        let tol = 1e-6 * (1.0 + g.g2.abs() * (1.0 + 1.0 / r));
        assert!((g3 - (g.g1 + 0.5 * g.g2 * dg2)).abs() < tol);
        assert!((h3 - (g.h1 + 0.5 * g.g2 * dh2)).abs() < tol);
        let t = gh_tilde(&m, r, psi, eps).unwrap();
        let tu = gh_tilde(&m, r, psi + h, eps).unwrap();
        let td = gh_tilde(&m, r, psi - h, eps).unwrap();
        let dg2t = (tu.g2 - td.g2) / (2.0 * h);
        assert!((g3_tilde(&m, r, psi, eps).unwrap() - (t.g1 + 0.5 * t.g2 * dg2t)).abs() < tol);
    }
    assert!(gh(&m, 0.0, 0.0, 0.1).is_err());
    assert!(gh_tilde(&m, 1.0, 0.0, 0.0).is_err());
}

#[test]
fn hat_integrand_formula() {
    // ĥ₃ = −½α̂(1+cos ψ) − ½b̂ sin ψ − ¼σ̂² cos ψ (1−cos ψ).
    let (ah, bh, sh) = (1.5, -0.7, 1.3);
    let p = SimplifiedParams::new(ah, bh, sh).unwrap();
    for k in 0..64 {
        let psi = -PI + TAU * k as f64 / 64.0;
        let (s, c) = psi.sin_cos();
        let want = -0.5 * ah * (1.0 + c) - 0.5 * bh * s - 0.25 * sh * sh * c * (1.0 - c);
        assert!((h3_hat(&p, psi) - want).abs() < 1e-14, "psi={psi}");
    }
}

#[test]
fn ito_and_stratonovich_angles_agree_in_law() {
    let p = SimplifiedParams::new(1.0, 1.0, 1.0).unwrap();
    let ito = PsiHatSystem {
        params: p,
        convention: Convention::Ito,
    };
    let strat = PsiHatSystem {
        params: p,
        convention: Convention::Stratonovich,
    };
    let dt = 2e-3;
    let n = 2500;
    let (mut a, mut b) = (Vec::new(), Vec::new());
    let (mut si, mut ss) = (Stepper::for_sde(&ito), Stepper::for_sde(&strat));
    for path in 0..10_000u64 {
        let mut noise = NoiseStream::new(path, 1, dt).unwrap();
        let mut xi = [0.0, 0.0];
        let mut xs = [0.0, 0.0];
        let mut dw = [0.0];
        for k in 0..n {
            noise.increment(&mut dw);
            let t = k as f64 * dt;
            si.step(&ito, t, &mut xi, dt, &dw).unwrap();
            ss.step(&strat, t, &mut xs, dt, &dw).unwrap();
        }
        a.push(wrap_angle(xi[0]));
        b.push(wrap_angle(xs[0]));
    }
    let d = ks_two_sample(a, b);
    assert!(d < 0.03, "KS = {d}");
}

#[test]
fn projected_tangent_follows_angle_equation() {
    let p = SimplifiedParams::new(1.0, 2.0, 1.5).unwrap();
    let var = SimplifiedVariational { params: p };
    let strat = PsiHatSystem {
        params: p,
        convention: Convention::Stratonovich,
    };
    let dt = 1e-4;
    let mut noise = NoiseStream::new(17, 1, dt).unwrap();
    let (mut sv, mut sp) = (Stepper::for_sde(&var), Stepper::for_sde(&strat));
    let psi0: f64 = 0.4;
    let mut v = direction_of(psi0);
    let mut x = [psi0, 0.0];
    let mut fast = psi0;
    let mut dw = [0.0];
    let mut log_norm = 0.0;
    let mut worst: f64 = 0.0;
    for k in 0..50_000 {
        noise.increment(&mut dw);
        let t = k as f64 * dt;
        sv.step(&var, t, &mut v, dt, &dw).unwrap();
        sp.step(&strat, t, &mut x, dt, &dw).unwrap();
        fast = psi_hat_heun_step(&p, fast, dt, dw[0]).0;
        let nrm = v[0].hypot(v[1]);
        log_norm += nrm.ln();
        v = [v[0] / nrm, v[1] / nrm];
        worst = worst.max(angle_gap(psi_of(v), x[0]));
        assert!(angle_gap(fast, x[0]) < 1e-9);
    }
    assert!(worst <= 1e-3, "angle error {worst}");
    assert!((log_norm - x[1]).abs() < 1e-2 * (1.0 + log_norm.abs()), "{log_norm} vs {}", x[1]);
}

#[test]
fn fast_step_returns_left_point_integrand() {
    let p = SimplifiedParams::new(1.0, 1.0, 2.0).unwrap();
    for k in 0..50 {
        let psi = -PI + TAU * k as f64 / 50.0;
        let (_, h3) = psi_hat_heun_step(&p, psi, 1e-3, 0.01);
        assert!((h3 - h3_hat(&p, psi)).abs() < 1e-14);
    }
}

#[test]
fn cutoff_is_lipschitz_and_bounded() {
    let r_hat = 1.7;
    let chi = CutoffChi::new(r_hat).unwrap();
    let n = 1_000_000;
    let step = 3.0 * r_hat / n as f64;
    let lip = 3.0 / r_hat;
    let mut prev = chi.chi(0.0);
    for i in 1..=n {
        let r = i as f64 * step;
        let v = chi.chi(r);
        assert!((0.0..=1.0).contains(&v));
        assert!((v - prev).abs() <= lip * step * (1.0 + 1e-9));
        prev = v;
        match chi.interval(r) {
            Interval::I1 => assert_eq!(v, 0.0),
            Interval::I2 => assert_eq!(chi.slope(r), lip),
            Interval::I3 | Interval::I4 => assert_eq!(v, 1.0),
        }
        if !chi.in_i2(r) {
            assert_eq!(chi.slope(r), 0.0);
        }
    }
    assert_eq!(chi.interval(2.0 * r_hat + 1e-9), Interval::I4);
    assert!(CutoffChi::new(0.0).is_err());
}

#[test]
fn bounds_audit_on_grid_is_finite() {
    let m = ShearModel::figure_two();
    let grid = audit_grid(40, 32, &[0.01, 0.1, 1.0]);
    assert_eq!(grid.len(), 40 * 32 * 3);
    let report = bounds_audit(&m, &grid).unwrap();
    assert!(report.all_finite());
    assert_eq!(report.n_samples, grid.len());
    assert!(report.h2.sup_ratio > 0.0 && report.h3.sup_ratio > 0.0 && report.h1_tilde.sup_ratio > 0.0);
}

#[test]
fn blended_second_term_shrinks_with_epsilon() {
    let m = ShearModel::new(1.0, 0.0, 1.0, -2.0, 1.0).unwrap();
    let run = |eps: f64| {
        let cfg = BlendedConfig {
            epsilon: eps,
            t_end: 2000.0,
            dt: 1e-3,
            burn_in: 10.0,
            renorm_interval: 1.0,
            seeds: (0..8).collect(),
        };
        blended_lambda_star_terms(&m, &cfg).unwrap()
    };
    let (small, large) = (run(0.05), run(0.2));
    assert!(small.term_mean[1].abs() <= large.term_mean[1].abs());
    for t in [&small, &large] {
        let total: f64 = t.term_mean.iter().sum();
        let tol = 4.0 * t.norm_growth_stderr + 4.0 * t.term_stderr.iter().map(|s| s * s).sum::<f64>().sqrt() + 1e-2;
        assert!((total - t.norm_growth).abs() < tol, "eps={}: {total} vs {}", t.epsilon, t.norm_growth);
    }
}

#[test]
fn blended_rejects_bad_config() {
    let m = ShearModel::figure_two();
    let mut cfg = BlendedConfig {
        epsilon: 0.0,
        t_end: 1.0,
        dt: 1e-3,
        burn_in: 0.0,
        renorm_interval: 1.0,
        seeds: vec![0],
    };
    assert!(blended_lambda_star_terms(&m, &cfg).is_err());
    cfg.epsilon = 0.5;
    cfg.seeds.clear();
    assert!(blended_lambda_star_terms(&m, &cfg).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn wrap_angle_lands_in_half_open_interval(x in -1e4f64..1e4) {
        let y = wrap_angle(x);
        prop_assert!((-PI..PI).contains(&y));
        let turns = (x - y) / TAU;
        prop_assert!((turns - turns.round()).abs() < 1e-9);
    }

    #[test]
    fn trig_of_matches_angle(x in -10.0f64..10.0, y in -10.0f64..10.0, k in 1e-3f64..1e3) {
        prop_assume!(x.hypot(y) > 1e-6);
        let psi = psi_of([x, y]);
        let (c, s) = trig_of([x, y]);
        prop_assert!((psi.cos() - c).abs() < 1e-12 && (psi.sin() - s).abs() < 1e-12);
        prop_assert!(angle_gap(psi_of([-x, -y]), psi) < 1e-12);
        prop_assert!(angle_gap(psi_of([k * x, k * y]), psi) < 1e-12);
        let d = direction_of(psi);
        prop_assert!((d[0].hypot(d[1]) - 1.0).abs() < 1e-15);
        prop_assert!(angle_gap(psi_of(d), psi) < 1e-12);
    }
}
