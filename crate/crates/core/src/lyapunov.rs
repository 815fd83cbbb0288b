//! Top Lyapunov exponent estimators and the ε-sweep.
//!
//! The norm-growth estimator follows a tangent vector, renormalises it to unit
//! length every `renorm_interval` time units and sums the logs of the discarded
//! norms. Standard errors are taken across seeds.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hopf::{CartesianSystem, PolarFrameSystem, RsThetaSystem, SimplifiedVariational, R_FLOOR_FACTOR};
use crate::params::{ShearModel, SimplifiedParams};
use crate::projective::{mean_stderr, psi_hat_heun_step, wrap_angle};
use crate::quadrature::{psi, QuadratureConfig};
use crate::sde::{step_count, NoiseStream, Sde, Stepper};
use crate::stationary::RadialDensity;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovConfig {
    pub t_end: f64,
    pub dt: f64,
    pub burn_in: f64,
    pub renorm_interval: f64,
    pub seeds: Vec<u64>,
}

impl LyapunovConfig {
    /// Burn-in 10, renormalisation every time unit, seeds `0..n_seeds`.
    pub fn new(t_end: f64, dt: f64, n_seeds: u64) -> Self {
        Self {
            t_end,
            dt,
            burn_in: 10.0,
            renorm_interval: 1.0,
            seeds: (0..n_seeds).collect(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if !(self.burn_in >= 0.0) {
            return Err(Error::domain("burn_in", self.burn_in, "must be >= 0"));
        }
        step_count(self.t_end, self.dt)?;
        step_count(self.renorm_interval, self.dt)?;
        Ok(())
    }

    fn renorm_intervals(&self) -> f64 {
        (self.t_end / self.renorm_interval).max(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovEstimate {
    pub value: f64,
    pub stderr: f64,
    pub t_end: f64,
    pub dt: f64,
    pub n_seeds: usize,
    pub renorm_interval: f64,
    /// Total `r_floor` restarts over all seeds.
    pub restarts: usize,
    /// Mean restarts per seed exceed 1% of the renormalisation intervals.
    pub flagged: bool,
    pub per_seed: Vec<f64>,
}

impl LyapunovEstimate {
    fn from_paths(cfg: &LyapunovConfig, paths: &[(f64, usize)]) -> Self {
        let (value, stderr) = mean_stderr(paths.iter().map(|p| p.0));
        let restarts: usize = paths.iter().map(|p| p.1).sum();
        let per_seed_restarts = restarts as f64 / paths.len() as f64;
        Self {
            value,
            stderr,
            t_end: cfg.t_end,
            dt: cfg.dt,
            n_seeds: paths.len(),
            renorm_interval: cfg.renorm_interval,
            restarts,
            flagged: per_seed_restarts > 0.01 * cfg.renorm_intervals(),
            per_seed: paths.iter().map(|p| p.0).collect(),
        }
    }
}

/// A system carrying a tangent vector at two fixed state indices.
pub trait TangentDynamics: Sde + Sync {
    fn tangent_indices(&self) -> [usize; 2];

    /// Initial state with tangent vector `dir`; random parts drawn from `init`.
    fn initial_state(&self, init: &mut NoiseStream, dir: [f64; 2]) -> Vec<f64>;

    /// Replaces the radius after a region exit. Returns `false` if the system
    /// has no radius to restart.
    fn restart(&self, _x: &mut [f64], _init: &mut NoiseStream) -> bool {
        false
    }
}

impl TangentDynamics for RsThetaSystem {
    fn tangent_indices(&self) -> [usize; 2] {
        [1, 2]
    }
    fn initial_state(&self, init: &mut NoiseStream, dir: [f64; 2]) -> Vec<f64> {
        vec![radial_start(&self.model, self.epsilon, init), dir[0], dir[1]]
    }
    fn restart(&self, x: &mut [f64], init: &mut NoiseStream) -> bool {
        x[0] = radial_start(&self.model, self.epsilon, init);
        true
    }
}

fn radial_start(m: &ShearModel, epsilon: f64, init: &mut NoiseStream) -> f64 {
    match RadialDensity::for_model(m, epsilon) {
        Ok(d) => d.sample(init),
        Err(_) => m.r_hat(),
    }
}

impl TangentDynamics for SimplifiedVariational {
    fn tangent_indices(&self) -> [usize; 2] {
        [0, 1]
    }
    fn initial_state(&self, _init: &mut NoiseStream, dir: [f64; 2]) -> Vec<f64> {
        dir.to_vec()
    }
}

fn hopf_radius(alpha: f64, a: f64, sigma: f64, init: &mut NoiseStream) -> f64 {
    match RadialDensity::new(alpha, a, sigma) {
        Ok(d) => d.sample(init),
        Err(_) => (alpha / a).sqrt(),
    }
}

impl TangentDynamics for CartesianSystem {
    fn tangent_indices(&self) -> [usize; 2] {
        [2, 3]
    }
    fn initial_state(&self, init: &mut NoiseStream, dir: [f64; 2]) -> Vec<f64> {
        let p = &self.params;
        let r = hopf_radius(p.alpha, p.a, p.sigma, init);
        let phi = std::f64::consts::TAU * init.uniform();
        vec![r * phi.cos(), r * phi.sin(), dir[0], dir[1]]
    }
}

impl TangentDynamics for PolarFrameSystem {
    fn tangent_indices(&self) -> [usize; 2] {
        [2, 3]
    }
    fn initial_state(&self, init: &mut NoiseStream, dir: [f64; 2]) -> Vec<f64> {
        let p = &self.params;
        let r = hopf_radius(p.alpha, p.a, p.sigma, init);
        let phi = std::f64::consts::TAU * init.uniform();
        vec![r, phi, dir[0], dir[1]]
    }
    fn restart(&self, x: &mut [f64], init: &mut NoiseStream) -> bool {
        let p = &self.params;
        x[0] = hopf_radius(p.alpha, p.a, p.sigma, init);
        true
    }
}

/// `Λ(T)/T` of one path and its restart count. The main noise is stream 0 of
/// `seed`, initial conditions and restarts draw from stream 1.
pub fn norm_growth_path<S: TangentDynamics + ?Sized>(
    sys: &S,
    cfg: &LyapunovConfig,
    seed: u64,
    dir: [f64; 2],
) -> Result<(f64, usize)> {
    if dir[0] == 0.0 && dir[1] == 0.0 {
        return Err(Error::Contract("initial tangent vector must be non-zero".into()));
    }
    let [i, j] = sys.tangent_indices();
    let mut noise = NoiseStream::with_stream(seed, 0, sys.noise_dim(), cfg.dt)?;
    let mut init = noise.substream(1);
    let mut x = sys.initial_state(&mut init, dir);
    let mut stepper = Stepper::for_sde(sys);
    let mut dw = vec![0.0; sys.noise_dim()];
    let n_burn = if cfg.burn_in > 0.0 { step_count(cfg.burn_in, cfg.dt)? } else { 0 };
    let n = step_count(cfg.t_end, cfg.dt)?;
    let every = step_count(cfg.renorm_interval, cfg.dt)?;
    let mut restarts = 0;
    let mut log_norm = 0.0;
    let mut k = 0usize;
    let total = n_burn + n;
    while k < total {
        noise.increment(&mut dw);
        match stepper.step(sys, k as f64 * cfg.dt, &mut x, cfg.dt, &dw) {
            Ok(()) => {}
            Err(Error::RegionExit { t, state }) => {
                if !sys.restart(&mut x, &mut init) {
                    return Err(Error::RegionExit { t, state });
                }
                restarts += 1;
            }
            Err(e) => return Err(e),
        }
        k += 1;
        let boundary = if k <= n_burn {
            k % every == 0 || k == n_burn
        } else {
            (k - n_burn) % every == 0 || k == total
        };
        if boundary {
            let nrm = x[i].hypot(x[j]);
            if !(nrm > 0.0 && nrm.is_finite()) {
                return Err(Error::NonFinite {
                    t: k as f64 * cfg.dt,
                    state: x.clone(),
                });
            }
            if k > n_burn {
                log_norm += nrm.ln();
            }
            x[i] /= nrm;
            x[j] /= nrm;
        }
    }
    Ok((log_norm / (n as f64 * cfg.dt), restarts))
}

/// Norm-growth estimate from tangent direction `dir` over all seeds.
pub fn le_norm_growth<S: TangentDynamics + ?Sized>(
    sys: &S,
    cfg: &LyapunovConfig,
    dir: [f64; 2],
) -> Result<LyapunovEstimate> {
    cfg.validate()?;
    let paths: Vec<(f64, usize)> = cfg
        .seeds
        .par_iter()
        .map(|&s| norm_growth_path(sys, cfg, s, dir))
        .collect::<Result<_>>()?;
    Ok(LyapunovEstimate::from_paths(cfg, &paths))
}

/// Time average of `ĥ₃(ψ̂)` along one Stratonovich `ψ̂` path after burn-in.
pub fn fk_hat_path(p: &SimplifiedParams, cfg: &LyapunovConfig, seed: u64) -> Result<f64> {
    let mut noise = NoiseStream::with_stream(seed, 0, 1, cfg.dt)?;
    let mut init = noise.substream(1);
    let mut psi = wrap_angle(std::f64::consts::TAU * init.uniform());
    let mut dw = [0.0];
    let n_burn = if cfg.burn_in > 0.0 { step_count(cfg.burn_in, cfg.dt)? } else { 0 };
    let n = step_count(cfg.t_end, cfg.dt)?;
    let mut acc = 0.0;
    for k in 0..(n_burn + n) {
        noise.increment(&mut dw);
        let (next, h3) = psi_hat_heun_step(p, psi, cfg.dt, dw[0]);
        if k >= n_burn {
            acc += h3;
        }
        if !next.is_finite() {
            return Err(Error::NonFinite {
                t: (k + 1) as f64 * cfg.dt,
                state: vec![next],
            });
        }
        psi = wrap_angle(next);
    }
    Ok(acc / n as f64)
}

/// Furstenberg–Khasminskii estimate `λ̂ ≈ (1/T)∫ ĥ₃(ψ̂_t) dt`; the martingale
/// part of `Λ̂` is dropped because `ĥ₂` is bounded.
pub fn le_fk_hat(p: &SimplifiedParams, cfg: &LyapunovConfig) -> Result<LyapunovEstimate> {
    if p.b_hat == 0.0 {
        return Err(Error::domain("b_hat", 0.0, "zeta must be > 0"));
    }
    cfg.validate()?;
    let paths: Vec<(f64, usize)> = cfg
        .seeds
        .par_iter()
        .map(|&s| fk_hat_path(p, cfg, s).map(|v| (v, 0)))
        .collect::<Result<_>>()?;
    Ok(LyapunovEstimate::from_paths(cfg, &paths))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub estimate: Option<LyapunovEstimate>,
    pub limit: f64,
    pub gap: f64,
    pub error: Option<String>,
}

impl SweepRow {
    pub fn flagged(&self) -> bool {
        self.estimate.as_ref().map_or(true, |e| e.flagged) || self.error.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub model: ShearModel,
    pub limit: f64,
    pub r_floor_factor: f64,
    pub rows: Vec<SweepRow>,
}

/// Limit value `2α Ψ(b′²σ′²/(2α²a))`.
pub fn shear_limit(m: &ShearModel, qcfg: &QuadratureConfig) -> Result<f64> {
    Ok(2.0 * m.alpha * psi(m.effective_zeta()?, qcfg)?.value)
}

/// Norm-growth estimates on the `(r, s, θ)` system for each `ε` of a
/// descending grid in `(0, 1]`, with the limit value and gaps. A failure at
/// one `ε` is recorded in its row and the sweep continues.
pub fn epsilon_sweep(m: &ShearModel, eps_grid: &[f64], cfg: &LyapunovConfig) -> Result<SweepResult> {
    if eps_grid.is_empty() {
        return Err(Error::Config("empty epsilon grid".into()));
    }
    for w in eps_grid.windows(2) {
        if !(w[1] < w[0]) {
            return Err(Error::Config("epsilon grid must be strictly descending".into()));
        }
    }
    for &e in eps_grid {
        if !(e > 0.0 && e <= 1.0) {
            return Err(Error::domain("epsilon", e, "must be in (0, 1]"));
        }
    }
    let limit = shear_limit(m, &QuadratureConfig::default())?;
    let mut rows = Vec::with_capacity(eps_grid.len());
    for &eps in eps_grid {
        let sys = RsThetaSystem::new(*m, eps)?;
        match le_norm_growth(&sys, cfg, [1.0, 0.0]) {
            Ok(est) => rows.push(SweepRow {
                epsilon: eps,
                gap: (est.value - limit).abs(),
                estimate: Some(est),
                limit,
                error: None,
            }),
            Err(e) if e.is_numerical() => rows.push(SweepRow {
                epsilon: eps,
                estimate: None,
                limit,
                gap: f64::NAN,
                error: Some(e.to_string()),
            }),
            Err(e) => return Err(e),
        }
    }
    Ok(SweepResult {
        model: *m,
        limit,
        r_floor_factor: R_FLOOR_FACTOR,
        rows,
    })
}
