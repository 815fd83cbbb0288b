//! The density `m_ζ`, its normalisation `K_ζ`, the function `Ψ`, the
//! closed-form exponent `λ̂ = α̂ Ψ(ζ)` and the zero `C₀` of `Ψ`.
//!
//! All integrals over `u ∈ (0, ∞)` are computed after the substitution
//! `u = v²`, which turns the `u^{-1/2}` endpoint singularity into a smooth
//! integrand. Both `K_ζ` and `M₁ = ∫ u w` are scaled by `exp(-1/(3ζ))`, the
//! reciprocal of the maximum of the exponential factor, so small `ζ` does not
//! overflow; the scale cancels in `Ψ`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{zeta_of, SimplifiedParams};

/// Upper truncation of the `u`-integrals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TailCut {
    /// `U(ζ) = max(10, (6ζ ln(1/abs_tol))^{1/3} + 5)`.
    Envelope,
    /// A fixed upper limit in `u`.
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub tail_cut: TailCut,
    pub max_subdivisions: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 1e-10,
            tail_cut: TailCut::Envelope,
            max_subdivisions: 2000,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0 && self.abs_tol.is_finite()) {
            return Err(Error::domain("abs_tol", self.abs_tol, "must be > 0"));
        }
        if !(self.rel_tol > 0.0 && self.rel_tol.is_finite()) {
            return Err(Error::domain("rel_tol", self.rel_tol, "must be > 0"));
        }
        if let TailCut::Fixed(u) = self.tail_cut {
            if !(u > 0.0 && u.is_finite()) {
                return Err(Error::domain("tail_cut", u, "must be > 0"));
            }
        }
        Ok(())
    }

    /// Upper limit `U(ζ)` in the original variable `u`.
    pub fn upper_limit(&self, zeta: f64) -> f64 {
        match self.tail_cut {
            TailCut::Envelope => {
                let c = (6.0 * zeta * (1.0 / self.abs_tol).ln()).cbrt() + 5.0;
                c.max(10.0)
            }
            TailCut::Fixed(u) => u,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsiValue {
    pub zeta: f64,
    pub value: f64,
    pub err_bound: f64,
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];

const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];

const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// One 15-point Kronrod panel with its embedded 7-point Gauss rule.
/// Returns `(kronrod, |kronrod - gauss|)`.
pub fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut rk = fc * WGK[7];
    let mut rg = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        rk += WGK[j] * s;
        if j % 2 == 1 {
            rg += WG[j / 2] * s;
        }
    }
    (rk * h, ((rk - rg) * h).abs())
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Globally adaptive Gauss–Kronrod integration over `[a, b]` split at the
/// given interior breakpoints. Bisects the panel with the largest error
/// estimate until the summed estimate meets `max(abs_tol, rel_tol·|I|)`.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    breaks: &[f64],
    abs_tol: f64,
    rel_tol: f64,
    max_subdivisions: usize,
) -> Result<Integral> {
    if breaks.len() < 2 {
        return Err(Error::Contract("integrate needs at least two breakpoints".into()));
    }
    let mut heap = BinaryHeap::new();
    let mut value = 0.0;
    let mut error = 0.0;
    let mut evaluations = 0;
    for w in breaks.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::Contract("breakpoints must be strictly increasing".into()));
        }
        let (v, e) = gk15(&f, w[0], w[1]);
        evaluations += 15;
        value += v;
        error += e;
        heap.push(Panel {
            a: w[0],
            b: w[1],
            value: v,
            error: e,
        });
    }
    let mut subdivisions = 0;
    while error > abs_tol.max(rel_tol * value.abs()) {
        if subdivisions >= max_subdivisions {
            return Err(Error::Convergence {
                achieved: error,
                target: abs_tol.max(rel_tol * value.abs()),
            });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        let (v1, e1) = gk15(&f, worst.a, mid);
        let (v2, e2) = gk15(&f, mid, worst.b);
        evaluations += 30;
        value += v1 + v2 - worst.value;
        error += e1 + e2 - worst.error;
        heap.push(Panel {
            a: worst.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Panel {
            a: mid,
            b: worst.b,
            value: v2,
            error: e2,
        });
        subdivisions += 1;
    }
    if !value.is_finite() {
        return Err(Error::Convergence {
            achieved: f64::INFINITY,
            target: abs_tol,
        });
    }
    // Summation drift from the incremental updates.
    let value: f64 = heap.iter().map(|p| p.value).sum();
    let error: f64 = heap.iter().map(|p| p.error).sum();
    Ok(Integral {
        value,
        error,
        evaluations,
    })
}

fn check_zeta(zeta: f64) -> Result<()> {
    if zeta.is_finite() && zeta > 0.0 {
        Ok(())
    } else {
        Err(Error::domain("zeta", zeta, "must be finite and > 0"))
    }
}

/// Unnormalised density `w(u) = u^{-1/2} exp(-(u³/6 - u/2)/ζ)`.
pub fn weight(zeta: f64, u: f64) -> Result<f64> {
    check_zeta(zeta)?;
    if !(u > 0.0) {
        return Err(Error::domain("u", u, "must be > 0"));
    }
    Ok(u.powf(-0.5) * (-(u * u * u / 6.0 - u / 2.0) / zeta).exp())
}

/// `w(v²)·2v · exp(-1/(3ζ))`, the scaled integrand of `K` in the variable `v`.
fn scaled_k_integrand(zeta: f64, v: f64) -> f64 {
    let v2 = v * v;
    let g = v2 * v2 * v2 / 6.0 - v2 / 2.0 + 1.0 / 3.0;
    2.0 * (-g / zeta).exp()
}

/// Breakpoints in `v` that resolve the peak of width `~√ζ` at `v = 1`.
fn v_breaks(zeta: f64, v_max: f64) -> Vec<f64> {
    let width = (zeta / 4.0).sqrt();
    let mut pts = vec![0.0];
    for k in -8i32..=8 {
        let v = 1.0 + f64::from(k) * width;
        if v > 0.0 && v < v_max {
            pts.push(v);
        }
    }
    pts.push(v_max);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

struct Moments {
    k: Integral,
    m1: Integral,
}

fn scaled_moments(zeta: f64, cfg: &QuadratureConfig) -> Result<Moments> {
    check_zeta(zeta)?;
    cfg.validate()?;
    let v_max = cfg.upper_limit(zeta).sqrt();
    let breaks = v_breaks(zeta, v_max);
    let k = integrate(
        |v| scaled_k_integrand(zeta, v),
        &breaks,
        cfg.abs_tol,
        cfg.rel_tol,
        cfg.max_subdivisions,
    )?;
    let m1 = integrate(
        |v| v * v * scaled_k_integrand(zeta, v),
        &breaks,
        cfg.abs_tol,
        cfg.rel_tol,
        cfg.max_subdivisions,
    )?;
    Ok(Moments { k, m1 })
}

/// `K_ζ = ∫₀^∞ w(u) du`.
pub fn k_norm(zeta: f64, cfg: &QuadratureConfig) -> Result<f64> {
    let m = scaled_moments(zeta, cfg)?;
    Ok(m.k.value * (1.0 / (3.0 * zeta)).exp())
}

/// Normalised density `m_ζ(u) = w(u)/K_ζ`, given a precomputed `K_ζ`.
pub fn m_density(zeta: f64, u: f64, k: f64) -> Result<f64> {
    Ok(weight(zeta, u)? / k)
}

/// `Ψ(ζ) = ½(∫ u m_ζ(u) du − 1)`.
pub fn psi(zeta: f64, cfg: &QuadratureConfig) -> Result<PsiValue> {
    let m = scaled_moments(zeta, cfg)?;
    let (k, dk) = (m.k.value, m.k.error);
    let (m1, dm1) = (m.m1.value, m.m1.error);
    let ratio = m1 / k;
    Ok(PsiValue {
        zeta,
        value: 0.5 * (ratio - 1.0),
        err_bound: 0.5 * (dm1 / k + ratio * dk / k),
    })
}

/// `λ̂ = α̂ Ψ(b̂²σ̂²/α̂³)`.
pub fn lambda_hat(p: &SimplifiedParams, cfg: &QuadratureConfig) -> Result<f64> {
    let zeta = zeta_of(p);
    if zeta <= 0.0 {
        return Err(Error::domain("zeta", zeta, "degenerate: b_hat = 0 gives zeta = 0"));
    }
    Ok(p.alpha_hat * psi(zeta, cfg)?.value)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct C0Result {
    pub c0: f64,
    pub psi_at_c0: f64,
    pub bracket: [f64; 2],
    pub iterations: usize,
}

pub const C0_BRACKET: [f64; 2] = [3.0, 4.0];
const C0_MAX_ITER: usize = 50;

/// Zero of `Ψ` by bisection on `[3, 4]`.
pub fn find_c0(cfg: &QuadratureConfig) -> Result<C0Result> {
    let [mut lo, mut hi] = C0_BRACKET;
    let f_lo = psi(lo, cfg)?.value;
    let f_hi = psi(hi, cfg)?.value;
    if f_lo * f_hi >= 0.0 {
        return Err(Error::Bracket { lo, hi, f_lo, f_hi });
    }
    let lo_negative = f_lo < 0.0;
    let mut mid = 0.5 * (lo + hi);
    let mut f_mid = psi(mid, cfg)?.value;
    let mut iterations = 1;
    while iterations < C0_MAX_ITER && f_mid != 0.0 && hi - lo > 4.0 * f64::EPSILON * mid {
        if (f_mid < 0.0) == lo_negative {
            lo = mid;
        } else {
            hi = mid;
        }
        mid = 0.5 * (lo + hi);
        f_mid = psi(mid, cfg)?.value;
        iterations += 1;
    }
    Ok(C0Result {
        c0: mid,
        psi_at_c0: f_mid,
        bracket: C0_BRACKET,
        iterations,
    })
}

/// `n` evenly spaced points `z_max·k/n`, `k = 1..=n`.
pub fn psi_grid(n: usize, z_max: f64) -> Vec<f64> {
    (1..=n).map(|k| z_max * k as f64 / n as f64).collect()
}
