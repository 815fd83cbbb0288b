//! Seeded Brownian increments and fixed-step SDE integration.
//!
//! Itô systems are stepped with Euler–Maruyama, Stratonovich systems with the
//! Heun predictor–corrector. A [`NoiseStream`] is identified by `(seed, stream)`
//! and can be replayed from the start at any time, which is how common-noise
//! ensembles are split across workers.

use std::io::{self, Write};

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Convention {
    Ito,
    Stratonovich,
}

/// Source of `N(0, dt)` increments of dimension `dim`.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    seed: u64,
    stream: u64,
    dim: usize,
    dt: f64,
    sqrt_dt: f64,
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl NoiseStream {
    pub fn new(seed: u64, dim: usize, dt: f64) -> Result<Self> {
        Self::with_stream(seed, 0, dim, dt)
    }

    pub fn with_stream(seed: u64, stream: u64, dim: usize, dt: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Contract("noise dimension must be positive".into()));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::domain("dt", dt, "must be finite and > 0"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Ok(Self {
            seed,
            stream,
            dim,
            dt,
            sqrt_dt: dt.sqrt(),
            rng,
            spare: None,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// A fresh stream at the start of the same sequence.
    pub fn replay(&self) -> Self {
        Self::with_stream(self.seed, self.stream, self.dim, self.dt).expect("validated at construction")
    }

    /// An independent stream sharing this seed.
    pub fn substream(&self, stream: u64) -> Self {
        Self::with_stream(self.seed, stream, self.dim, self.dt).expect("validated at construction")
    }

    /// Uniform on the open interval `(0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        loop {
            let u = (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
            if u > 0.0 {
                return u;
            }
        }
    }

    /// Standard normal via Box–Muller; the second variate of each pair is cached.
    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.uniform();
        let u2 = self.uniform();
        let rad = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        self.spare = Some(rad * s);
        rad * c
    }

    /// Fills `dw` (length `dim`) with one Brownian increment over `dt`.
    pub fn increment(&mut self, dw: &mut [f64]) {
        debug_assert_eq!(dw.len(), self.dim);
        for w in dw.iter_mut() {
            *w = self.sqrt_dt * self.standard_normal();
        }
    }

    /// Sum of `k` consecutive increments, i.e. one increment over `k·dt`.
    pub fn coarse_increment(&mut self, k: usize, dw: &mut [f64]) {
        dw.iter_mut().for_each(|w| *w = 0.0);
        let mut fine = vec![0.0; self.dim];
        for _ in 0..k {
            self.increment(&mut fine);
            for (w, f) in dw.iter_mut().zip(&fine) {
                *w += f;
            }
        }
    }
}

/// A fixed-step SDE `dx = f(t,x) dt + g(t,x) dW`, `g` stored row-major with
/// shape `state_dim × noise_dim`.
pub trait Sde {
    fn state_dim(&self) -> usize;
    fn noise_dim(&self) -> usize;
    fn convention(&self) -> Convention;
    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]);
    fn diffusion(&self, t: f64, x: &[f64], out: &mut [f64]);
    fn admissible(&self, _x: &[f64]) -> bool {
        true
    }
}

/// An [`Sde`] assembled from closures.
pub struct SdeFn<F, G> {
    pub state_dim: usize,
    pub noise_dim: usize,
    pub convention: Convention,
    pub drift: F,
    pub diffusion: G,
}

impl<F, G> Sde for SdeFn<F, G>
where
    F: Fn(f64, &[f64], &mut [f64]),
    G: Fn(f64, &[f64], &mut [f64]),
{
    fn state_dim(&self) -> usize {
        self.state_dim
    }
    fn noise_dim(&self) -> usize {
        self.noise_dim
    }
    fn convention(&self) -> Convention {
        self.convention
    }
    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.drift)(t, x, out)
    }
    fn diffusion(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.diffusion)(t, x, out)
    }
}

/// Scratch buffers for one integrator; reuse across steps.
#[derive(Debug, Clone)]
pub struct Stepper {
    n: usize,
    m: usize,
    f0: Vec<f64>,
    g0: Vec<f64>,
    f1: Vec<f64>,
    g1: Vec<f64>,
    xp: Vec<f64>,
}

fn apply(x: &[f64], f: &[f64], g: &[f64], dt: f64, dw: &[f64], out: &mut [f64]) {
    let m = dw.len();
    for i in 0..x.len() {
        let row = &g[i * m..(i + 1) * m];
        let noise: f64 = row.iter().zip(dw).map(|(a, b)| a * b).sum();
        out[i] = x[i] + f[i] * dt + noise;
    }
}

impl Stepper {
    pub fn new(state_dim: usize, noise_dim: usize) -> Self {
        Self {
            n: state_dim,
            m: noise_dim,
            f0: vec![0.0; state_dim],
            g0: vec![0.0; state_dim * noise_dim],
            f1: vec![0.0; state_dim],
            g1: vec![0.0; state_dim * noise_dim],
            xp: vec![0.0; state_dim],
        }
    }

    pub fn for_sde<S: Sde + ?Sized>(sde: &S) -> Self {
        Self::new(sde.state_dim(), sde.noise_dim())
    }

    /// Advances `x` from `t` to `t + dt`. On error `x` is left unchanged.
    pub fn step<S: Sde + ?Sized>(&mut self, sde: &S, t: f64, x: &mut [f64], dt: f64, dw: &[f64]) -> Result<()> {
        self.step_with(sde, sde.convention(), t, x, dt, dw)
    }

    /// As [`Stepper::step`] with the scheme chosen by `convention`.
    pub fn step_with<S: Sde + ?Sized>(
        &mut self,
        sde: &S,
        convention: Convention,
        t: f64,
        x: &mut [f64],
        dt: f64,
        dw: &[f64],
    ) -> Result<()> {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(dw.len(), self.m);
        sde.drift(t, x, &mut self.f0);
        sde.diffusion(t, x, &mut self.g0);
        apply(x, &self.f0, &self.g0, dt, dw, &mut self.xp);
        if convention == Convention::Stratonovich {
            self.check(sde, t + dt)?;
            sde.drift(t + dt, &self.xp, &mut self.f1);
            sde.diffusion(t + dt, &self.xp, &mut self.g1);
            for (a, b) in self.f0.iter_mut().zip(&self.f1) {
                *a = 0.5 * (*a + b);
            }
            for (a, b) in self.g0.iter_mut().zip(&self.g1) {
                *a = 0.5 * (*a + b);
            }
            apply(x, &self.f0, &self.g0, dt, dw, &mut self.xp);
        }
        self.check(sde, t + dt)?;
        x.copy_from_slice(&self.xp);
        Ok(())
    }

    fn check<S: Sde + ?Sized>(&self, sde: &S, t: f64) -> Result<()> {
        if self.xp.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                t,
                state: self.xp.clone(),
            });
        }
        if !sde.admissible(&self.xp) {
            return Err(Error::RegionExit {
                t,
                state: self.xp.clone(),
            });
        }
        Ok(())
    }
}

/// Number of fixed steps of size `dt` covering `duration`.
pub fn step_count(duration: f64, dt: f64) -> Result<usize> {
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(Error::domain("t_end", duration, "must be finite and > 0"));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::domain("dt", dt, "must be finite and > 0"));
    }
    Ok((duration / dt).round().max(1.0) as usize)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub x: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn last(&self) -> &[f64] {
        self.x.last().expect("trajectory holds at least the initial state")
    }

    /// CSV `t,x1,...,xn` with 17 significant digits.
    pub fn write_csv<W: Write>(&self, w: &mut W, names: &[&str]) -> io::Result<()> {
        write!(w, "t")?;
        for n in names {
            write!(w, ",{n}")?;
        }
        writeln!(w)?;
        for (t, x) in self.t.iter().zip(&self.x) {
            write!(w, "{t:.16e}")?;
            for v in x {
                write!(w, ",{v:.16e}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Integrates from `x0` at `t = 0` to `t_end`, keeping every `stride`-th
/// state plus the initial and final states.
pub fn simulate<S: Sde + ?Sized>(
    sde: &S,
    x0: &[f64],
    t_end: f64,
    stream: &mut NoiseStream,
    stride: usize,
) -> Result<Trajectory> {
    if x0.len() != sde.state_dim() || stream.dim() != sde.noise_dim() {
        return Err(Error::Contract("state or noise dimension mismatch".into()));
    }
    let dt = stream.dt();
    let n = step_count(t_end, dt)?;
    let stride = stride.max(1);
    let mut stepper = Stepper::for_sde(sde);
    let mut x = x0.to_vec();
    let mut dw = vec![0.0; sde.noise_dim()];
    let mut out = Trajectory {
        t: vec![0.0],
        x: vec![x.clone()],
    };
    for k in 0..n {
        let t = k as f64 * dt;
        stream.increment(&mut dw);
        stepper.step(sde, t, &mut x, dt, &dw)?;
        if (k + 1) % stride == 0 || k + 1 == n {
            out.t.push((k + 1) as f64 * dt);
            out.x.push(x.clone());
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    pub states: Vec<Vec<f64>>,
    /// `Some(err)` for members that failed; their state is the last good one.
    pub failures: Vec<Option<Error>>,
}

impl EnsembleResult {
    pub fn n_failed(&self) -> usize {
        self.failures.iter().filter(|f| f.is_some()).count()
    }
}

/// Evolves every member with the same increment sequence. Members are split
/// into chunks; each chunk replays `stream` from its start.
pub fn evolve_ensemble_common_noise<S: Sde + Sync + ?Sized>(
    sde: &S,
    states: Vec<Vec<f64>>,
    t_end: f64,
    stream: &NoiseStream,
) -> Result<EnsembleResult> {
    if stream.dim() != sde.noise_dim() {
        return Err(Error::Contract("noise dimension mismatch".into()));
    }
    if states.iter().any(|s| s.len() != sde.state_dim()) {
        return Err(Error::Contract("state dimension mismatch".into()));
    }
    let dt = stream.dt();
    let n = step_count(t_end, dt)?;
    let chunk = (states.len() / (4 * rayon::current_num_threads())).max(64);
    let mut failures: Vec<Option<Error>> = vec![None; states.len()];
    let mut states = states;
    states
        .par_chunks_mut(chunk)
        .zip(failures.par_chunks_mut(chunk))
        .for_each(|(xs, fails)| {
            let mut noise = stream.replay();
            let mut stepper = Stepper::for_sde(sde);
            let mut dw = vec![0.0; sde.noise_dim()];
            for (x, f) in xs.iter().zip(fails.iter_mut()) {
                if !sde.admissible(x) {
                    *f = Some(Error::RegionExit {
                        t: 0.0,
                        state: x.clone(),
                    });
                }
            }
            for k in 0..n {
                let t = k as f64 * dt;
                noise.increment(&mut dw);
                for (x, f) in xs.iter_mut().zip(fails.iter_mut()) {
                    if f.is_none() {
                        if let Err(e) = stepper.step(sde, t, x, dt, &dw) {
                            *f = Some(e);
                        }
                    }
                }
            }
        });
    Ok(EnsembleResult { states, failures })
}
