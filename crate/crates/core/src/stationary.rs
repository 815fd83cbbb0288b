//! The radial stationary density `ξ_ε`, exact sampling from it, the
//! concentration check and empirical stationary measures.
//!
//! Under `ξ_ε` the squared radius `p = r²` is a normal `N(r̂², ε²σ′²/a)`
//! truncated to `(0, ∞)`, which gives the closed-form normalisation, CDF and
//! sampler below. Everything is parameterised by the product `εσ′` (the
//! radial noise amplitude).

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hopf::RsThetaSystem;
use crate::params::{ShearModel, SimplifiedParams};
use crate::projective::{psi_hat_heun_step, psi_of, wrap_angle, CutoffChi};
use crate::quadrature::integrate;
use crate::sde::{step_count, NoiseStream, Stepper};

/// Complementary error function.
pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// Standard normal CDF.
fn norm_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// `ξ(r) = L r exp(−a(r²−r̂²)²/(2ν²))` with `ν = εσ′`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialDensity {
    pub alpha: f64,
    pub a: f64,
    /// `ν = εσ′`.
    pub noise: f64,
    pub l_norm: f64,
}

impl RadialDensity {
    pub fn new(alpha: f64, a: f64, noise: f64) -> Result<Self> {
        for (name, v) in [("alpha", alpha), ("a", a), ("noise", noise)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::domain(name, v, "must be finite and > 0"));
            }
        }
        Ok(Self {
            alpha,
            a,
            noise,
            l_norm: closed_form_normalisation(alpha, a, noise),
        })
    }

    pub fn for_model(m: &ShearModel, epsilon: f64) -> Result<Self> {
        Self::new(m.alpha, m.a, epsilon * m.sigma_prime)
    }

    pub fn r_hat(&self) -> f64 {
        (self.alpha / self.a).sqrt()
    }

    /// Mean `r̂²` of the untruncated law of `p = r²`.
    fn p_mean(&self) -> f64 {
        self.alpha / self.a
    }

    /// Standard deviation `ν/√a` of the untruncated law of `p = r²`.
    pub fn p_sd(&self) -> f64 {
        self.noise / self.a.sqrt()
    }

    fn exponent(&self, r: f64) -> f64 {
        let d = r * r - self.p_mean();
        -self.a * d * d / (2.0 * self.noise * self.noise)
    }

    pub fn xi(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        self.l_norm * r * self.exponent(r).exp()
    }

    /// `ξ′(r)`.
    pub fn xi_d1(&self, r: f64) -> f64 {
        let s2 = self.p_sd().powi(2);
        let e1 = -2.0 * r * (r * r - self.p_mean()) / s2;
        self.l_norm * self.exponent(r).exp() * (1.0 + r * e1)
    }

    /// `ξ″(r)`.
    pub fn xi_d2(&self, r: f64) -> f64 {
        let s2 = self.p_sd().powi(2);
        let m = self.p_mean();
        let e1 = -2.0 * r * (r * r - m) / s2;
        let e2 = -(6.0 * r * r - 2.0 * m) / s2;
        self.l_norm * self.exponent(r).exp() * (2.0 * e1 + r * e1 * e1 + r * e2)
    }

    /// Stationary Fokker–Planck residual `−(μξ)′ + (ν²/2)ξ″` of the Itô radius
    /// `dr = μ(r) dt + ν dW`, `μ = αr − ar³ + ν²/(2r)`.
    pub fn fokker_planck_residual(&self, r: f64) -> f64 {
        let nu2 = self.noise * self.noise;
        let mu = self.alpha * r - self.a * r * r * r + nu2 / (2.0 * r);
        let dmu = self.alpha - 3.0 * self.a * r * r - nu2 / (2.0 * r * r);
        -(dmu * self.xi(r) + mu * self.xi_d1(r)) + 0.5 * nu2 * self.xi_d2(r)
    }

    /// Argmax of `ξ`: `r² = (r̂² + √(r̂⁴ + 2ν²/a))/2`.
    pub fn mode(&self) -> f64 {
        let m = self.p_mean();
        let s2 = self.p_sd().powi(2);
        (0.5 * (m + (m * m + 2.0 * s2).sqrt())).sqrt()
    }

    fn z_lower(&self) -> f64 {
        -self.p_mean() / self.p_sd()
    }

    pub fn cdf(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        let z = (r * r - self.p_mean()) / self.p_sd();
        let z0 = self.z_lower();
        if z < 0.0 {
            (norm_cdf(z) - norm_cdf(z0)) / norm_cdf(-z0)
        } else {
            1.0 - norm_cdf(-z) / norm_cdf(-z0)
        }
    }

    /// Upper tail `1 − F(r)` without cancellation.
    pub fn sf(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 1.0;
        }
        let z = (r * r - self.p_mean()) / self.p_sd();
        norm_cdf(-z) / norm_cdf(-self.z_lower())
    }

    /// Inverse CDF on `(0, 1)`.
    pub fn quantile(&self, u: f64) -> f64 {
        let z0 = self.z_lower();
        let mass = norm_cdf(-z0);
        // Solve in whichever tail has the smaller target probability.
        let lower_target = norm_cdf(z0) + u * mass;
        let upper_target = (1.0 - u) * mass;
        let z = if lower_target <= upper_target {
            solve_standard_normal(|z| norm_cdf(z), lower_target, z0.max(-40.0), 40.0, 1.0)
        } else {
            solve_standard_normal(|z| norm_cdf(-z), upper_target, z0.max(-40.0), 40.0, -1.0)
        };
        let p = (self.p_mean() + self.p_sd() * z).max(0.0);
        p.sqrt()
    }

    /// One exact draw of `r` consuming one uniform from `stream`.
    pub fn sample(&self, stream: &mut NoiseStream) -> f64 {
        let r = self.quantile(stream.uniform());
        if r > 0.0 {
            r
        } else {
            f64::MIN_POSITIVE
        }
    }
}

/// Solves `tail(z) = target` where `tail` is monotone (`orientation = 1` for
/// increasing, `−1` for decreasing): bisection to `1e−3`, then Newton on
/// `log tail`.
fn solve_standard_normal<F: Fn(f64) -> f64>(tail: F, target: f64, mut lo: f64, mut hi: f64, orientation: f64) -> f64 {
    if target <= 0.0 {
        return if orientation > 0.0 { lo } else { hi };
    }
    let below = |z: f64| (tail(z) < target) == (orientation > 0.0);
    while hi - lo > 1e-3 {
        let mid = 0.5 * (lo + hi);
        if below(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let ln_t = target.ln();
    let mut z = 0.5 * (lo + hi);
    for _ in 0..50 {
        let f = tail(z);
        if f <= 0.0 {
            break;
        }
        let g = f.ln() - ln_t;
        let dg = orientation * norm_pdf(z) / f;
        let step = g / dg;
        z -= step;
        if step.abs() < 1e-14 * z.abs().max(1.0) {
            break;
        }
    }
    z
}

/// `2√(2a)/(√π ν erfc(−α/(ν√(2a))))`, the reciprocal of `∫₀^∞ r e^{…} dr`.
pub fn closed_form_normalisation(alpha: f64, a: f64, noise: f64) -> f64 {
    2.0 * (2.0 * a).sqrt() / (PI.sqrt() * noise * erfc(-alpha / (noise * (2.0 * a).sqrt())))
}

/// `∫₀^∞ r exp(−a(r²−r̂²)²/(2ν²)) dr` by adaptive quadrature.
pub fn normalisation_integral(alpha: f64, a: f64, noise: f64) -> Result<f64> {
    let m = alpha / a;
    let sd = noise / a.sqrt();
    let r_max = (m + 40.0 * sd).sqrt();
    let mut breaks = vec![0.0];
    for k in -8i32..=8 {
        let p = m + f64::from(k) * sd;
        if p > 0.0 && p.sqrt() < r_max {
            breaks.push(p.sqrt());
        }
    }
    breaks.push(r_max);
    breaks.dedup();
    let f = |r: f64| {
        let d = r * r - m;
        r * (-a * d * d / (2.0 * noise * noise)).exp()
    };
    Ok(integrate(f, &breaks, 1e-15, 1e-13, 5000)?.value)
}

/// Test functions for the concentration check; each vanishes near `r̂`.
pub enum TestFunction {
    /// `1_{I₂}`, the indicator of `(r̂/3, 2r̂/3]`.
    IndicatorI2,
    /// `1_{I₄}(r)·r²`, supported on `(2r̂, ∞)`.
    I4TimesR2,
    /// `(1 − χ(r))·r²`.
    OneMinusChiR2,
    Zero,
    /// A custom function together with an interval around `r̂` on which it is
    /// declared to vanish.
    Custom {
        f: Box<dyn Fn(f64) -> f64 + Send + Sync>,
        vanishes_on: (f64, f64),
    },
}

impl TestFunction {
    fn vanishing_interval(&self, r_hat: f64) -> (f64, f64) {
        match self {
            TestFunction::IndicatorI2 => (2.0 * r_hat / 3.0, 2.0 * r_hat),
            TestFunction::I4TimesR2 => (0.0, 2.0 * r_hat),
            TestFunction::OneMinusChiR2 => (2.0 * r_hat / 3.0, f64::INFINITY),
            TestFunction::Zero => (0.0, f64::INFINITY),
            TestFunction::Custom { vanishes_on, .. } => *vanishes_on,
        }
    }

    pub fn eval(&self, r: f64, chi: &CutoffChi) -> f64 {
        match self {
            TestFunction::IndicatorI2 => f64::from(u8::from(chi.in_i2(r))),
            TestFunction::I4TimesR2 => {
                if r > 2.0 * chi.r_hat {
                    r * r
                } else {
                    0.0
                }
            }
            TestFunction::OneMinusChiR2 => (1.0 - chi.chi(r)) * r * r,
            TestFunction::Zero => 0.0,
            TestFunction::Custom { f, .. } => f(r),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationResult {
    pub epsilon: f64,
    pub integral: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Compares `|∫ f ξ_ε|` with `exp(−1/ε)`.
pub fn concentration_check(m: &ShearModel, f: &TestFunction, epsilon: f64) -> Result<ConcentrationResult> {
    let d = RadialDensity::for_model(m, epsilon)?;
    let r_hat = d.r_hat();
    let (lo, hi) = f.vanishing_interval(r_hat);
    if !(lo < r_hat && r_hat < hi) {
        return Err(Error::Contract(format!(
            "test function must vanish on a neighbourhood of r_hat = {r_hat}, declared ({lo}, {hi})"
        )));
    }
    let chi = CutoffChi::new(r_hat)?;
    let probe_hi = hi.min(10.0 * r_hat);
    for k in 1..100 {
        let r = lo + (probe_hi - lo) * f64::from(k) / 100.0;
        if f.eval(r, &chi) != 0.0 {
            return Err(Error::Contract(format!("test function is non-zero at r = {r} inside ({lo}, {hi})")));
        }
    }
    let bound = (-1.0 / epsilon).exp();
    let r_max = (d.p_mean() + 60.0 * d.p_sd()).sqrt().max(3.0 * r_hat);
    let mut breaks = vec![0.0, r_hat / 3.0, 2.0 * r_hat / 3.0, r_hat, 2.0 * r_hat, r_max];
    if lo > 0.0 && lo < r_max {
        breaks.push(lo);
    }
    if hi.is_finite() && hi < r_max {
        breaks.push(hi);
    }
    breaks.retain(|&b| b <= r_max);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let integral = integrate(|r| f.eval(r, &chi) * d.xi(r), &breaks, 1e-6 * bound, 1e-8, 5000)?.value;
    Ok(ConcentrationResult {
        epsilon,
        integral,
        bound,
        holds: integral.abs() <= bound,
    })
}

/// Weighted histogram with strictly increasing edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram1D {
    pub edges: Vec<f64>,
    pub weights: Vec<f64>,
    pub total: f64,
}

impl Histogram1D {
    pub fn uniform(lo: f64, hi: f64, bins: usize) -> Self {
        let edges = (0..=bins).map(|k| lo + (hi - lo) * k as f64 / bins as f64).collect();
        Self::from_edges(edges)
    }

    pub fn log_spaced(lo: f64, hi: f64, bins: usize) -> Self {
        let (l0, l1) = (lo.ln(), hi.ln());
        let edges = (0..=bins).map(|k| (l0 + (l1 - l0) * k as f64 / bins as f64).exp()).collect();
        Self::from_edges(edges)
    }

    pub fn from_edges(edges: Vec<f64>) -> Self {
        let n = edges.len() - 1;
        Self {
            edges,
            weights: vec![0.0; n],
            total: 0.0,
        }
    }

    pub fn bins(&self) -> usize {
        self.weights.len()
    }

    pub fn bin_of(&self, x: f64) -> Option<usize> {
        let (lo, hi) = (self.edges[0], *self.edges.last().unwrap());
        if !(x >= lo && x < hi) {
            return None;
        }
        let k = self.edges.partition_point(|&e| e <= x);
        Some(k - 1)
    }

    /// Adds weight `w` at `x`; values outside the edges count towards
    /// `total` only.
    pub fn add(&mut self, x: f64, w: f64) {
        if let Some(k) = self.bin_of(x) {
            self.weights[k] += w;
        }
        self.total += w;
    }

    pub fn merge(&mut self, other: &Histogram1D) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        self.total += other.total;
    }

    /// Bin masses divided by the total weight.
    pub fn probabilities(&self) -> Vec<f64> {
        self.weights.iter().map(|w| w / self.total).collect()
    }

    pub fn total_variation(&self, other: &Histogram1D) -> f64 {
        0.5 * self
            .probabilities()
            .iter()
            .zip(other.probabilities())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }
}

/// Joint occupation histogram over `(r, ψ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram2D {
    pub r: Histogram1D,
    pub psi: Histogram1D,
    /// Row-major `r`-bin × `ψ`-bin weights.
    pub weights: Vec<f64>,
    pub total: f64,
}

impl Histogram2D {
    /// 400 log-spaced `r` bins on `[1e−3, 5r̂]` and 720 `ψ` bins on `[−π, π)`.
    pub fn standard(r_hat: f64) -> Self {
        let r = Histogram1D::log_spaced(1e-3, 5.0 * r_hat, 400);
        let psi = Histogram1D::uniform(-PI, PI, 720);
        let n = r.bins() * psi.bins();
        Self {
            r,
            psi,
            weights: vec![0.0; n],
            total: 0.0,
        }
    }

    pub fn add(&mut self, r: f64, psi: f64, w: f64) {
        let psi = wrap_angle(psi);
        if let (Some(i), Some(j)) = (self.r.bin_of(r), self.psi.bin_of(psi)) {
            self.weights[i * self.psi.bins() + j] += w;
        }
        self.r.add(r, w);
        self.psi.add(psi, w);
        self.total += w;
    }
}

pub const PSI_BINS: usize = 720;

/// Occupation histogram of `ψ̂` on `[−π, π)` after `burn_in`.
pub fn empirical_psi_hat_measure(
    p: &SimplifiedParams,
    t_end: f64,
    burn_in: f64,
    dt: f64,
    seed: u64,
) -> Result<Histogram1D> {
    if !(t_end > burn_in) {
        return Err(Error::domain("t_end", t_end, "must exceed burn_in"));
    }
    let mut noise = NoiseStream::new(seed, 1, dt)?;
    let n_burn = if burn_in > 0.0 { step_count(burn_in, dt)? } else { 0 };
    let n = step_count(t_end - burn_in, dt)?;
    let mut hist = Histogram1D::uniform(-PI, PI, PSI_BINS);
    let mut psi = 0.0;
    let mut dw = [0.0];
    for k in 0..(n_burn + n) {
        noise.increment(&mut dw);
        let (next, _) = psi_hat_heun_step(p, psi, dt, dw[0]);
        if !next.is_finite() {
            return Err(Error::NonFinite {
                t: (k + 1) as f64 * dt,
                state: vec![next],
            });
        }
        psi = wrap_angle(next);
        if k >= n_burn {
            hist.add(psi, dt);
        }
    }
    Ok(hist)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakConvergenceRow {
    pub epsilon: f64,
    /// `W₁` distance of the `r`-occupation measure to `δ_r̂`, i.e. `E|r − r̂|`.
    pub w1_r: f64,
    /// Total variation between the `ψ`-occupation histogram and the reference.
    pub tv_psi: f64,
    /// Centre of the fullest `r` bin.
    pub mode_r: f64,
    pub mean_r: f64,
    /// Standard error of `mean_r` from batch means.
    pub mean_r_stderr: f64,
    pub restarts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakConvergenceConfig {
    pub t_end: f64,
    pub burn_in: f64,
    pub dt: f64,
    pub seed: u64,
    pub batches: usize,
}

/// One `(r, ψ)` occupation run of the rescaled system at `ε`.
pub fn occupation_measure(
    m: &ShearModel,
    epsilon: f64,
    cfg: &WeakConvergenceConfig,
) -> Result<(Histogram2D, WeakConvergenceRow)> {
    let sys = RsThetaSystem::new(*m, epsilon)?;
    let density = RadialDensity::for_model(m, epsilon)?;
    let r_hat = m.r_hat();
    let mut noise = NoiseStream::with_stream(cfg.seed, 0, 2, cfg.dt)?;
    let mut init = noise.substream(1);
    let mut stepper = Stepper::new(3, 2);
    let n_burn = if cfg.burn_in > 0.0 { step_count(cfg.burn_in, cfg.dt)? } else { 0 };
    let n = step_count(cfg.t_end, cfg.dt)?;
    let batches = cfg.batches.max(2);
    let per_batch = (n / batches).max(1);
    let mut hist = Histogram2D::standard(r_hat);
    let mut x = [density.sample(&mut init), 1.0, 0.0];
    let mut dw = [0.0; 2];
    let mut restarts = 0;
    let (mut abs_dev, mut sum_r) = (0.0, 0.0);
    let mut batch_means = Vec::with_capacity(batches);
    let mut batch_sum = 0.0;
    let mut in_batch = 0usize;
    for k in 0..(n_burn + n) {
        noise.increment(&mut dw);
        if let Err(e) = stepper.step(&sys, k as f64 * cfg.dt, &mut x, cfg.dt, &dw) {
            match e {
                Error::RegionExit { .. } => {
                    x[0] = density.sample(&mut init);
                    restarts += 1;
                }
                other => return Err(other),
            }
        }
        let nrm = x[1].hypot(x[2]);
        x[1] /= nrm;
        x[2] /= nrm;
        if k < n_burn {
            continue;
        }
        let r = x[0];
        hist.add(r, psi_of([x[1], x[2]]), 1.0);
        abs_dev += (r - r_hat).abs();
        sum_r += r;
        batch_sum += r;
        in_batch += 1;
        if in_batch == per_batch {
            batch_means.push(batch_sum / per_batch as f64);
            batch_sum = 0.0;
            in_batch = 0;
        }
    }
    let nf = n as f64;
    let (_, mean_r_stderr) = crate::projective::mean_stderr(batch_means.iter().copied());
    let fullest = hist
        .r
        .weights
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let row = WeakConvergenceRow {
        epsilon,
        w1_r: abs_dev / nf,
        tv_psi: f64::NAN,
        mode_r: hist.r.centers()[fullest],
        mean_r: sum_r / nf,
        mean_r_stderr,
        restarts,
    };
    Ok((hist, row))
}

/// For each `ε`: `E|r − r̂|` of the occupation measure and the TV distance of
/// its `ψ`-marginal to `reference` (an empirical `ρ̂`).
pub fn weak_convergence_diagnostic(
    m: &ShearModel,
    eps_list: &[f64],
    cfg: &WeakConvergenceConfig,
    reference: &Histogram1D,
) -> Result<Vec<WeakConvergenceRow>> {
    use rayon::prelude::*;
    eps_list
        .par_iter()
        .map(|&eps| {
            let (hist, mut row) = occupation_measure(m, eps, cfg)?;
            row.tv_psi = hist.psi.total_variation(reference);
            Ok(row)
        })
        .collect()
}
