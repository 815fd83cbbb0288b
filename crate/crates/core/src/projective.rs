//! Projective coordinates of the tangent dynamics and the
//! Furstenberg–Khasminskii coefficient functions.
//!
//! A direction in `RP¹` is written `ψ ∈ [−π, π)`, standing for the line through
//! `(cos(ψ/2), sin(ψ/2))`. For `dv = B₁v dt + B₂v ∘dW` the angle and the log
//! norm `Λ = log‖v‖` satisfy `dψ = p₁ dt + p₂ ∘dW`, `dΛ = q₁ dt + q₂ ∘dW` with
//!
//! ```text
//! p = B₂₁(1+cos ψ) − B₁₂(1−cos ψ) + (B₂₂−B₁₁) sin ψ
//! q = ½ [B₁₁(1+cos ψ) + B₂₂(1−cos ψ) + (B₁₂+B₂₁) sin ψ]
//! ```
//!
//! Functions taking `(c, s)` expect `c = cos ψ`, `s = sin ψ`; they are used in
//! the inner loops where ψ comes from a tangent vector without any trig call.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hopf::{a_matrices, a_tilde_matrices, r_floor, Mat2, RsThetaSystem};
use crate::params::{ShearModel, SimplifiedParams};
use crate::sde::{step_count, Convention, NoiseStream, Sde, Stepper};
use crate::stationary::RadialDensity;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjCoeffs {
    pub p1: f64,
    pub p2: f64,
    pub q1: f64,
    pub q2: f64,
}

#[inline]
pub fn p_cs(b: &Mat2, c: f64, s: f64) -> f64 {
    b[1][0] * (1.0 + c) - b[0][1] * (1.0 - c) + (b[1][1] - b[0][0]) * s
}

#[inline]
pub fn q_cs(b: &Mat2, c: f64, s: f64) -> f64 {
    0.5 * (b[0][0] * (1.0 + c) + b[1][1] * (1.0 - c) + (b[0][1] + b[1][0]) * s)
}

/// `∂ψ p`.
#[inline]
pub fn dp_cs(b: &Mat2, c: f64, s: f64) -> f64 {
    -(b[1][0] + b[0][1]) * s + (b[1][1] - b[0][0]) * c
}

/// `∂ψ q`.
#[inline]
pub fn dq_cs(b: &Mat2, c: f64, s: f64) -> f64 {
    0.5 * ((b[1][1] - b[0][0]) * s + (b[0][1] + b[1][0]) * c)
}

pub fn proj_coeffs(b1: &Mat2, b2: &Mat2, psi: f64) -> ProjCoeffs {
    let (s, c) = psi.sin_cos();
    ProjCoeffs {
        p1: p_cs(b1, c, s),
        p2: p_cs(b2, c, s),
        q1: q_cs(b1, c, s),
        q2: q_cs(b2, c, s),
    }
}

/// Wraps an angle into `[−π, π)`.
pub fn wrap_angle(x: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let y = (x + PI).rem_euclid(TAU) - PI;
    if y >= PI {
        -PI
    } else {
        y
    }
}

/// `ψ` of the line through `v ≠ 0`.
pub fn psi_of(v: [f64; 2]) -> f64 {
    wrap_angle(2.0 * v[1].atan2(v[0]))
}

/// `(cos ψ, sin ψ)` of the line through `v ≠ 0`, computed without trig calls.
#[inline]
pub fn trig_of(v: [f64; 2]) -> (f64, f64) {
    let n2 = v[0] * v[0] + v[1] * v[1];
    ((v[0] * v[0] - v[1] * v[1]) / n2, 2.0 * v[0] * v[1] / n2)
}

/// Unit representative `(cos(ψ/2), sin(ψ/2))` of `ψ`.
pub fn direction_of(psi: f64) -> [f64; 2] {
    let (s, c) = (0.5 * psi).sin_cos();
    [c, s]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gh {
    pub g1: f64,
    pub g2: f64,
    pub h1: f64,
    pub h2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GhTilde {
    pub g1: f64,
    pub g2: f64,
    pub h1: f64,
}

fn check_r(r: f64) -> Result<()> {
    if r > 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(Error::domain("r", r, "must be finite and > 0"))
    }
}

#[inline]
pub fn gh_cs(m: &ShearModel, r: f64, eps: f64, c: f64, s: f64) -> Gh {
    let (a1, a2) = a_matrices(m, r, eps);
    Gh {
        g1: p_cs(&a1, c, s),
        g2: p_cs(&a2, c, s),
        h1: q_cs(&a1, c, s),
        h2: q_cs(&a2, c, s),
    }
}

/// `(g₃, h₃) = (g₁ + ½g₂∂ψg₂, h₁ + ½g₂∂ψh₂)` with analytic derivatives.
#[inline]
pub fn g3_h3_cs(m: &ShearModel, r: f64, eps: f64, c: f64, s: f64) -> (f64, f64) {
    let (a1, a2) = a_matrices(m, r, eps);
    let g2 = p_cs(&a2, c, s);
    (
        p_cs(&a1, c, s) + 0.5 * g2 * dp_cs(&a2, c, s),
        q_cs(&a1, c, s) + 0.5 * g2 * dq_cs(&a2, c, s),
    )
}

/// `g_i, h_i` of the `(s, θ)` chart.
pub fn gh(m: &ShearModel, r: f64, psi: f64, eps: f64) -> Result<Gh> {
    check_r(r)?;
    let (s, c) = psi.sin_cos();
    Ok(gh_cs(m, r, eps, c, s))
}

/// `g̃_i, h̃₁` of the `(s, ϑ)` chart; `h̃₂ ≡ 0` because `Ã₂` is antisymmetric.
pub fn gh_tilde(m: &ShearModel, r: f64, psi: f64, eps: f64) -> Result<GhTilde> {
    check_r(r)?;
    let (a1, a2) = a_tilde_matrices(m, r, eps)?;
    let (s, c) = psi.sin_cos();
    Ok(GhTilde {
        g1: p_cs(&a1, c, s),
        g2: p_cs(&a2, c, s),
        h1: q_cs(&a1, c, s),
    })
}

/// `h̃₂`, returned for checking; always zero up to rounding.
pub fn h2_tilde(m: &ShearModel, r: f64, psi: f64, eps: f64) -> Result<f64> {
    check_r(r)?;
    let (_, a2) = a_tilde_matrices(m, r, eps)?;
    let (s, c) = psi.sin_cos();
    Ok(q_cs(&a2, c, s))
}

pub fn g3_h3(m: &ShearModel, r: f64, psi: f64, eps: f64) -> Result<(f64, f64)> {
    check_r(r)?;
    let (s, c) = psi.sin_cos();
    Ok(g3_h3_cs(m, r, eps, c, s))
}

/// `g̃₃ = g̃₁ + ½g̃₂∂ψg̃₂`.
pub fn g3_tilde(m: &ShearModel, r: f64, psi: f64, eps: f64) -> Result<f64> {
    check_r(r)?;
    let (a1, a2) = a_tilde_matrices(m, r, eps)?;
    let (s, c) = psi.sin_cos();
    Ok(p_cs(&a1, c, s) + 0.5 * p_cs(&a2, c, s) * dp_cs(&a2, c, s))
}

/// `∂ψ g₂` and `∂ψ h₂`.
pub fn d_psi_g2_h2(m: &ShearModel, r: f64, psi: f64, eps: f64) -> Result<(f64, f64)> {
    check_r(r)?;
    let (_, a2) = a_matrices(m, r, eps);
    let (s, c) = psi.sin_cos();
    Ok((dp_cs(&a2, c, s), dq_cs(&a2, c, s)))
}

/// Coefficient matrices `B₁ = [[−α̂, 0], [−b̂, 0]]`, `B₂ = [[0, σ̂], [0, 0]]`.
pub fn hat_matrices(p: &SimplifiedParams) -> (Mat2, Mat2) {
    ([[-p.alpha_hat, 0.0], [-p.b_hat, 0.0]], [[0.0, p.sigma_hat], [0.0, 0.0]])
}

/// `(ĝ₁, ĝ₂, ĥ₁, ĥ₂)` and `(ĝ₃, ĥ₃)` of the simplified model.
pub fn gh_hat_cs(p: &SimplifiedParams, c: f64, s: f64) -> (Gh, f64, f64) {
    let (b1, b2) = hat_matrices(p);
    let g2 = p_cs(&b2, c, s);
    let gh = Gh {
        g1: p_cs(&b1, c, s),
        g2,
        h1: q_cs(&b1, c, s),
        h2: q_cs(&b2, c, s),
    };
    let g3 = gh.g1 + 0.5 * g2 * dp_cs(&b2, c, s);
    let h3 = gh.h1 + 0.5 * g2 * dq_cs(&b2, c, s);
    (gh, g3, h3)
}

/// `ĥ₃(ψ)`, the integrand of the Furstenberg–Khasminskii formula.
pub fn h3_hat(p: &SimplifiedParams, psi: f64) -> f64 {
    let (s, c) = psi.sin_cos();
    gh_hat_cs(p, c, s).2
}

/// Heun step of the Stratonovich `ψ̂` equation `dψ̂ = ĝ₁ dt + ĝ₂ ∘dŴ`, one
/// `sin_cos` per stage. Returns the new angle and `ĥ₃` at the old one.
#[inline]
pub fn psi_hat_heun_step(p: &SimplifiedParams, psi: f64, dt: f64, dw: f64) -> (f64, f64) {
    let (b1, b2) = hat_matrices(p);
    let (s, c) = psi.sin_cos();
    let g1 = p_cs(&b1, c, s);
    let g2 = p_cs(&b2, c, s);
    let h3 = q_cs(&b1, c, s) + 0.5 * g2 * dq_cs(&b2, c, s);
    let pred = psi + g1 * dt + g2 * dw;
    let (sp, cp) = pred.sin_cos();
    let g1p = p_cs(&b1, cp, sp);
    let g2p = p_cs(&b2, cp, sp);
    (psi + 0.5 * (g1 + g1p) * dt + 0.5 * (g2 + g2p) * dw, h3)
}

/// `χ`: 0 below `r̂/3`, 1 above `2r̂/3`, affine in between.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffChi {
    pub r_hat: f64,
}

/// The partition `I₁ = (0, r̂/3]`, `I₂ = (r̂/3, 2r̂/3]`, `I₃ = (2r̂/3, 2r̂]`,
/// `I₄ = (2r̂, ∞)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Interval {
    I1,
    I2,
    I3,
    I4,
}

impl CutoffChi {
    pub fn new(r_hat: f64) -> Result<Self> {
        check_r(r_hat)?;
        Ok(Self { r_hat })
    }

    pub fn interval(&self, r: f64) -> Interval {
        let h = self.r_hat;
        if r <= h / 3.0 {
            Interval::I1
        } else if r <= 2.0 * h / 3.0 {
            Interval::I2
        } else if r <= 2.0 * h {
            Interval::I3
        } else {
            Interval::I4
        }
    }

    #[inline]
    pub fn chi(&self, r: f64) -> f64 {
        (3.0 * r / self.r_hat - 1.0).clamp(0.0, 1.0)
    }

    /// `χ′ = 3/r̂` on `I₂`, zero elsewhere.
    #[inline]
    pub fn slope(&self, r: f64) -> f64 {
        if self.in_i2(r) {
            3.0 / self.r_hat
        } else {
            0.0
        }
    }

    #[inline]
    pub fn in_i2(&self, r: f64) -> bool {
        r > self.r_hat / 3.0 && r <= 2.0 * self.r_hat / 3.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundRatio {
    pub name: &'static str,
    pub sup_ratio: f64,
    pub argmax: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsReport {
    pub h2: BoundRatio,
    pub h3: BoundRatio,
    pub h1_tilde: BoundRatio,
    pub n_samples: usize,
}

impl BoundsReport {
    pub fn all_finite(&self) -> bool {
        [self.h2, self.h3, self.h1_tilde].iter().all(|b| b.sup_ratio.is_finite())
    }
}

/// Smallest constants `C` with `|h₂| ≤ C(1+ε⁻²r⁻¹)`, `|h₃| ≤ C(1+r²+ε⁻⁴r⁻²)`,
/// `|h̃₁| ≤ C(1+ε⁻¹r²)` over the given `(r, ψ, ε)` samples.
pub fn bounds_audit(m: &ShearModel, samples: &[(f64, f64, f64)]) -> Result<BoundsReport> {
    let mut h2 = BoundRatio {
        name: "h2",
        sup_ratio: 0.0,
        argmax: [0.0; 3],
    };
    let mut h3 = BoundRatio { name: "h3", ..h2 };
    let mut h1t = BoundRatio { name: "h1_tilde", ..h2 };
    for &(r, psi, eps) in samples {
        let g = gh(m, r, psi, eps)?;
        let (_, h3v) = g3_h3(m, r, psi, eps)?;
        let t = gh_tilde(m, r, psi, eps)?;
        let cand = [
            (&mut h2, g.h2.abs() / (1.0 + 1.0 / (eps * eps * r))),
            (&mut h3, h3v.abs() / (1.0 + r * r + 1.0 / (eps.powi(4) * r * r))),
            (&mut h1t, t.h1.abs() / (1.0 + r * r / eps)),
        ];
        for (b, v) in cand {
            if !v.is_finite() || v > b.sup_ratio {
                b.sup_ratio = if v.is_finite() { v } else { f64::INFINITY };
                b.argmax = [r, psi, eps];
            }
        }
    }
    Ok(BoundsReport {
        h2,
        h3,
        h1_tilde: h1t,
        n_samples: samples.len(),
    })
}

/// The grid `r ∈ [1e−3, 10]` (log-spaced), `ψ` on `n_psi` points of
/// `[−π, π)`, `ε` from the list.
pub fn audit_grid(n_r: usize, n_psi: usize, eps: &[f64]) -> Vec<(f64, f64, f64)> {
    use std::f64::consts::{PI, TAU};
    let mut out = Vec::with_capacity(n_r * n_psi * eps.len());
    for &e in eps {
        for i in 0..n_r {
            let r = 1e-3 * 1e4f64.powf(i as f64 / (n_r - 1).max(1) as f64);
            for j in 0..n_psi {
                out.push((r, -PI + TAU * j as f64 / n_psi as f64, e));
            }
        }
    }
    out
}

/// `(ψ̂, Λ̂)` of the simplified model, driven by one Brownian motion. With
/// `Convention::Ito` the drift is `(ĝ₃, ĥ₃)`, otherwise `(ĝ₁, ĥ₁)`.
#[derive(Debug, Clone, Copy)]
pub struct PsiHatSystem {
    pub params: SimplifiedParams,
    pub convention: Convention,
}

impl Sde for PsiHatSystem {
    fn state_dim(&self) -> usize {
        2
    }
    fn noise_dim(&self) -> usize {
        1
    }
    fn convention(&self) -> Convention {
        self.convention
    }
    fn drift(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        let (s, c) = x[0].sin_cos();
        let (gh, g3, h3) = gh_hat_cs(&self.params, c, s);
        if self.convention == Convention::Ito {
            out[0] = g3;
            out[1] = h3;
        } else {
            out[0] = gh.g1;
            out[1] = gh.h1;
        }
    }
    fn diffusion(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        let (s, c) = x[0].sin_cos();
        let (gh, _, _) = gh_hat_cs(&self.params, c, s);
        out[0] = gh.g2;
        out[1] = gh.h2;
    }
}

/// `(r, ψ, Λ)` of the rescaled system, driven by `(W_r, W_φ)`. With
/// `Convention::Ito` the drift is `(μ, g₃, h₃)`, otherwise `(μ, g₁, h₁)`.
#[derive(Debug, Clone, Copy)]
pub struct ProjectiveSystem {
    pub model: ShearModel,
    pub epsilon: f64,
    pub convention: Convention,
}

impl Sde for ProjectiveSystem {
    fn state_dim(&self) -> usize {
        3
    }
    fn noise_dim(&self) -> usize {
        2
    }
    fn convention(&self) -> Convention {
        self.convention
    }
    fn drift(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        let r = x[0];
        let (s, c) = x[1].sin_cos();
        out[0] = self.model.radial_drift(r, self.epsilon);
        if self.convention == Convention::Ito {
            let (g3, h3) = g3_h3_cs(&self.model, r, self.epsilon, c, s);
            out[1] = g3;
            out[2] = h3;
        } else {
            let g = gh_cs(&self.model, r, self.epsilon, c, s);
            out[1] = g.g1;
            out[2] = g.h1;
        }
    }
    fn diffusion(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        let (s, c) = x[1].sin_cos();
        let g = gh_cs(&self.model, x[0], self.epsilon, c, s);
        out.copy_from_slice(&[self.epsilon * self.model.sigma_prime, 0.0, 0.0, g.g2, 0.0, g.h2]);
    }
    fn admissible(&self, x: &[f64]) -> bool {
        x[0] > r_floor(self.model.r_hat())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlendedConfig {
    pub epsilon: f64,
    pub t_end: f64,
    pub dt: f64,
    pub burn_in: f64,
    pub renorm_interval: f64,
    pub seeds: Vec<u64>,
}

/// The five time-averaged terms and the log-norm growth of one path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlendedPath {
    pub seed: u64,
    pub terms: [f64; 5],
    pub norm_growth: f64,
    pub restarts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlendedTerms {
    pub epsilon: f64,
    pub t_end: f64,
    pub dt: f64,
    pub term_mean: [f64; 5],
    pub term_stderr: [f64; 5],
    pub norm_growth: f64,
    pub norm_growth_stderr: f64,
    pub restarts: usize,
    pub per_seed: Vec<BlendedPath>,
}

pub(crate) fn mean_stderr(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    if n < 2.0 {
        return (mean, f64::NAN);
    }
    let var = xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Single pass of the `(r, s, θ)` system accumulating
///
/// ```text
/// I   = ∫ χ h₃(r, ψ, ε) dt
/// II  = ∫ (1−χ) h̃₁(r, ψ̃, ε) dt
/// III = ∫ χ′ (Λ−Λ̃) μ(r) dt
/// IV  = ∫ χ h₂(r, ψ, ε) dW_φ
/// V   = ∫ χ′ (Λ−Λ̃) εσ′ dW_r
/// ```
///
/// with ψ from `(s, θ)`, ψ̃ from `(s, ϑ) = (s, θ/ε)` and `Λ − Λ̃ = log‖(s,θ)‖ −
/// log‖(s,ϑ)‖`. Integrands are taken at the left point except `χ′`, which uses
/// the post-step radius. Each term is divided by the accumulation time.
pub fn blended_path(m: &ShearModel, cfg: &BlendedConfig, seed: u64) -> Result<BlendedPath> {
    let eps = cfg.epsilon;
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::domain("epsilon", eps, "must be in (0, 1]"));
    }
    let sys = RsThetaSystem::new(*m, eps)?;
    let chi = CutoffChi::new(m.r_hat())?;
    let density = RadialDensity::new(m.alpha, m.a, eps * m.sigma_prime)?;
    let n_burn = if cfg.burn_in > 0.0 { step_count(cfg.burn_in, cfg.dt)? } else { 0 };
    let n = step_count(cfg.t_end, cfg.dt)?;
    let renorm_every = step_count(cfg.renorm_interval, cfg.dt)?;
    let mut noise = NoiseStream::with_stream(seed, 0, 2, cfg.dt)?;
    let mut init = noise.substream(1);
    let mut stepper = Stepper::for_sde(&sys);
    let mut x = [density.sample(&mut init), 1.0, 0.0];
    let mut dw = [0.0; 2];
    let mut restarts = 0;
    let slack = 1e-9;
    let lim = -eps.ln() + slack;
    let mut terms = [0.0; 5];
    let mut log_norm = 0.0;
    let sg_r = eps * m.sigma_prime;
    for k in 0..(n_burn + n) {
        let t = k as f64 * cfg.dt;
        noise.increment(&mut dw);
        let (r0, s0, th0) = (x[0], x[1], x[2]);
        if let Err(e) = stepper.step(&sys, t, &mut x, cfg.dt, &dw) {
            match e {
                Error::RegionExit { .. } => {
                    x[0] = density.sample(&mut init);
                    restarts += 1;
                    continue;
                }
                other => return Err(other),
            }
        }
        if k < n_burn {
            let nrm = x[1].hypot(x[2]);
            x[1] /= nrm;
            x[2] /= nrm;
            continue;
        }
        let (c, s) = trig_of([s0, th0]);
        let vt = th0 / eps;
        let (ct, st) = trig_of([s0, vt]);
        let w = chi.chi(r0);
        let (_, h3) = g3_h3_cs(m, r0, eps, c, s);
        let g = gh_cs(m, r0, eps, c, s);
        let (at1, _) = a_tilde_matrices(m, r0, eps)?;
        let h1t = q_cs(&at1, ct, st);
        let diff = s0.hypot(th0).ln() - s0.hypot(vt).ln();
        if diff.abs() > lim {
            return Err(Error::Contract(format!(
                "chart desynchronisation: |Λ−Λ̃| = {} > −log ε = {}",
                diff.abs(),
                -eps.ln()
            )));
        }
        let slope = chi.slope(x[0]);
        terms[0] += w * h3 * cfg.dt;
        terms[1] += (1.0 - w) * h1t * cfg.dt;
        terms[2] += slope * diff * m.radial_drift(r0, eps) * cfg.dt;
        terms[3] += w * g.h2 * dw[1];
        terms[4] += slope * diff * sg_r * dw[0];
        if (k + 1 - n_burn) % renorm_every == 0 || k + 1 == n_burn + n {
            let nrm = x[1].hypot(x[2]);
            log_norm += nrm.ln();
            x[1] /= nrm;
            x[2] /= nrm;
        }
    }
    let t_acc = n as f64 * cfg.dt;
    for v in terms.iter_mut() {
        *v /= t_acc;
    }
    Ok(BlendedPath {
        seed,
        terms,
        norm_growth: log_norm / t_acc,
        restarts,
    })
}

/// [`blended_path`] over every seed with mean and cross-seed standard error.
pub fn blended_lambda_star_terms(m: &ShearModel, cfg: &BlendedConfig) -> Result<BlendedTerms> {
    if cfg.seeds.is_empty() {
        return Err(Error::Config("at least one seed is required".into()));
    }
    let per_seed: Vec<BlendedPath> = cfg
        .seeds
        .par_iter()
        .map(|&s| blended_path(m, cfg, s))
        .collect::<Result<_>>()?;
    let mut term_mean = [0.0; 5];
    let mut term_stderr = [0.0; 5];
    for k in 0..5 {
        let (mu, se) = mean_stderr(per_seed.iter().map(|p| p.terms[k]));
        term_mean[k] = mu;
        term_stderr[k] = se;
    }
    let (norm_growth, norm_growth_stderr) = mean_stderr(per_seed.iter().map(|p| p.norm_growth));
    Ok(BlendedTerms {
        epsilon: cfg.epsilon,
        t_end: cfg.t_end,
        dt: cfg.dt,
        term_mean,
        term_stderr,
        norm_growth,
        norm_growth_stderr,
        restarts: per_seed.iter().map(|p| p.restarts).sum(),
        per_seed,
    })
}
