use proptest::prelude::*;
use shear_core::params::SimplifiedParams;
use shear_core::quadrature::{find_c0, k_norm, lambda_hat, m_density, psi, psi_grid, weight, QuadratureConfig};

/// `Ψ(ζ)` oracle: composite Simpson in `v = √u` with a fixed panel count.
/// Returns `(K, M₁)` both scaled by `exp(−1/(3ζ))`.
fn simpson_moments(zeta: f64, panels: usize) -> (f64, f64) {
    let u_max = f64::max(10.0, (6.0 * zeta * (1e10f64).ln()).cbrt() + 5.0);
    let v_max = u_max.sqrt();
    let h = v_max / panels as f64;
    let f = |v: f64| {
        let v2 = v * v;
        2.0 * (-(v2 * v2 * v2 / 6.0 - v2 / 2.0 + 1.0 / 3.0) / zeta).exp()
    };
    let (mut k, mut m) = (0.0, 0.0);
    for i in 0..=panels {
        let v = i as f64 * h;
        let c = if i == 0 || i == panels {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let fv = f(v);
        k += c * fv;
        m += c * fv * v * v;
    }
    (k * h / 3.0, m * h / 3.0)
}

fn psi_oracle(zeta: f64) -> f64 {
    let (k, m) = simpson_moments(zeta, 1_000_000);
    0.5 * (m / k - 1.0)
}

#[test]
fn weight_examples() {
    for zeta in [0.1, 1.0, 7.0] {
        let w = weight(zeta, 3f64.sqrt()).unwrap();
        assert!((w - 3f64.powf(-0.25)).abs() < 1e-15);
    }
    assert!((weight(1.0, 1.0).unwrap() - (1.0f64 / 3.0).exp()).abs() < 1e-15);
    assert!(weight(1.0, 0.0).is_err());
    assert!(weight(1.0, -1.0).is_err());
    assert!(weight(0.0, 1.0).is_err());
}

#[test]
fn density_integrates_to_one() {
    let cfg = QuadratureConfig::default();
    for zeta in [0.5, 1.0, 3.45, 10.0] {
        let k = k_norm(zeta, &cfg).unwrap();
        // ∫ m du with u = v², du = 2v dv, via Simpson.
        let u_max: f64 = 30.0;
        let n = 1_000_000;
        let h = u_max.sqrt() / n as f64;
        let mut acc = 0.0;
        for i in 1..=n {
            let v = (i as f64 - 0.5) * h;
            acc += m_density(zeta, v * v, k).unwrap() * 2.0 * v;
        }
        assert!((acc * h - 1.0).abs() < 1e-9, "zeta={zeta}: {}", acc * h);
    }
}

#[test]
fn normalisation_matches_riemann_oracle() {
    let zeta = 1.0;
    let n = 10_000_000;
    let v_max = 30f64.sqrt();
    let h = v_max / n as f64;
    let mut acc = 0.0;
    for i in 0..n {
        let v = (i as f64 + 0.5) * h;
        let v2 = v * v;
        acc += 2.0 * (-(v2 * v2 * v2 / 6.0 - v2 / 2.0) / zeta).exp();
    }
    let k = k_norm(zeta, &QuadratureConfig::default()).unwrap();
    assert!((k - acc * h).abs() < 1e-6, "{k} vs {}", acc * h);
}

#[test]
fn normalisation_is_continuous() {
    let cfg = QuadratureConfig::default();
    let k0 = k_norm(2.0, &cfg).unwrap();
    let k1 = k_norm(2.0 + 1e-6, &cfg).unwrap();
    assert!((k0 - k1).abs() < 1e-3);
}

#[test]
fn psi_matches_simpson_oracle() {
    let cfg = QuadratureConfig::default();
    for zeta in [0.05, 0.3, 1.0, 2.5, 3.45, 5.0, 10.0, 25.0, 50.0] {
        let v = psi(zeta, &cfg).unwrap();
        let o = psi_oracle(zeta);
        assert!((v.value - o).abs() < 1e-9, "zeta={zeta}: {} vs {o}", v.value);
        assert!(v.err_bound >= 0.0);
    }
}

#[test]
fn psi_frozen_values() {
    // Frozen from the Simpson oracle above.
    let cfg = QuadratureConfig::default();
    for (zeta, want) in [
        (0.5, -0.1348754811),
        (1.0, -0.1121499594),
        (2.0, -0.0617558838),
        (4.0, 0.0155832637),
        (10.0, 0.1635728491),
        (50.0, 0.5888230482),
    ] {
        assert!((psi(zeta, &cfg).unwrap().value - want).abs() < 1e-9, "zeta={zeta}");
    }
}

#[test]
fn psi_range_and_small_zeta_limit() {
    let cfg = QuadratureConfig::default();
    for z in psi_grid(100, 10.0) {
        assert!(psi(z, &cfg).unwrap().value.abs() <= 0.5);
    }
    let small = psi(0.01, &cfg).unwrap().value;
    assert!(small < 0.0 && small > -0.05, "{small}");
    assert!(psi(1.0, &cfg).unwrap().value < 0.0);
    assert!(psi(4.0, &cfg).unwrap().value > 0.0);
}

#[test]
fn c0_root_and_reciprocal() {
    let cfg = QuadratureConfig::default();
    let r = find_c0(&cfg).unwrap();
    assert!((3.40..=3.60).contains(&r.c0));
    assert!(r.psi_at_c0.abs() <= 1e-8);
    assert!(r.iterations <= 50);
    let inv = 1.0 / r.c0;
    assert!((0.28..=0.29).contains(&inv), "{inv}");
    assert!((inv - 0.2823).abs() < 1e-3);
}

#[test]
fn lambda_hat_sign_follows_c0() {
    let cfg = QuadratureConfig::default();
    let c0 = find_c0(&cfg).unwrap().c0;
    for zeta in [2.5f64, 3.0, 3.3, 3.5, 3.6, 3.8, 4.2, 5.0] {
        // α̂ = b̂ = 1, σ̂ = √ζ.
        let p = SimplifiedParams::new(1.0, 1.0, zeta.sqrt()).unwrap();
        let l = lambda_hat(&p, &cfg).unwrap();
        assert_eq!(l > 0.0, zeta > c0, "zeta={zeta} lambda={l}");
    }
}

#[test]
fn lambda_hat_scaling_identities() {
    let cfg = QuadratureConfig::default();
    let base = SimplifiedParams::new(1.3, 0.7, 1.9).unwrap();
    let l0 = lambda_hat(&base, &cfg).unwrap();
    for delta in [0.5, 2.0] {
        let d = SimplifiedParams::new(delta * 1.3, delta * 0.7, delta.sqrt() * 1.9).unwrap();
        assert!((lambda_hat(&d, &cfg).unwrap() - delta * l0).abs() < 1e-9);
    }
    let g = SimplifiedParams::new(1.3, 3.0 * 0.7, 1.9 / 3.0).unwrap();
    assert!((lambda_hat(&g, &cfg).unwrap() - l0).abs() < 1e-12);
}

#[test]
fn exactly_one_sign_change() {
    let cfg = QuadratureConfig::default();
    let vals: Vec<f64> = psi_grid(200, 10.0).iter().map(|&z| psi(z, &cfg).unwrap().value).collect();
    let changes = vals.windows(2).filter(|w| (w[0] > 0.0) != (w[1] > 0.0)).count();
    assert_eq!(changes, 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weight_is_positive(zeta in 0.05f64..50.0, u in 1e-6f64..8.0) {
        let w = weight(zeta, u).unwrap();
        prop_assert!(w > 0.0 && w.is_finite());
    }

    #[test]
    fn psi_is_finite_with_error_bound(zeta in 0.02f64..60.0) {
        let v = psi(zeta, &QuadratureConfig::default()).unwrap();
        prop_assert!(v.value.is_finite());
        prop_assert!(v.err_bound >= 0.0 && v.err_bound < 1e-8);
    }
}
