//! Figure pipelines and the record format written by the command-line tool.
//!
//! Every record starts with `#` comment lines echoing the subcommand, the
//! parameters, the seeds and a content hash of the configuration, followed by
//! a CSV header and rows of 17-significant-digit floats.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::hopf::SimplifiedVariational;
use crate::params::{fmt_real, HopfParams, SimplifiedParams};
use crate::quadrature::{psi, psi_grid, QuadratureConfig};
use crate::sde::{simulate, step_count, NoiseStream};
use crate::stationary::RadialDensity;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub subcommand: String,
    pub params: BTreeMap<String, String>,
    pub seeds: Vec<u64>,
    pub config_hash: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

/// SHA-256 of `"blob <len>\0" + text`, the way git hashes file contents.
pub fn content_hash(text: &str) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", text.len()).as_bytes());
    h.update(text.as_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

impl ExperimentRecord {
    pub fn new(subcommand: &str, params: BTreeMap<String, String>, seeds: Vec<u64>, columns: &[&str]) -> Self {
        let mut canon = format!("subcommand={subcommand}\n");
        for (k, v) in &params {
            canon.push_str(&format!("{k}={v}\n"));
        }
        let seed_list: Vec<String> = seeds.iter().map(u64::to_string).collect();
        canon.push_str(&format!("seeds={}\n", seed_list.join(",")));
        Self {
            subcommand: subcommand.to_string(),
            params,
            seeds,
            config_hash: content_hash(&canon),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn write_header<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "# subcommand: {}", self.subcommand)?;
        for (k, v) in &self.params {
            writeln!(w, "# {k} = {v}")?;
        }
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        writeln!(w, "# seed: {}", seeds.join(","))?;
        writeln!(w, "# config_hash: {}", self.config_hash)
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        self.write_header(w)?;
        writeln!(w, "{}", self.columns.join(","))?;
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| fmt_real(*v)).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("records are ASCII")
    }

    /// JSON form with rows as objects keyed by column name.
    pub fn to_json(&self) -> serde_json::Value {
        let rows: Vec<serde_json::Value> = self
            .rows
            .iter()
            .map(|r| {
                let obj: serde_json::Map<String, serde_json::Value> = self
                    .columns
                    .iter()
                    .zip(r)
                    .map(|(c, v)| (c.clone(), json_number(*v)))
                    .collect();
                serde_json::Value::Object(obj)
            })
            .collect();
        serde_json::json!({
            "subcommand": self.subcommand,
            "params": self.params,
            "seeds": self.seeds,
            "config_hash": self.config_hash,
            "columns": self.columns,
            "rows": rows,
        })
    }
}

/// Finite values as numbers, everything else as a string.
pub fn json_number(v: f64) -> serde_json::Value {
    if v.is_finite() {
        serde_json::Value::from(v)
    } else {
        serde_json::Value::from(v.to_string())
    }
}

pub fn param_map<'a>(pairs: impl IntoIterator<Item = (&'a str, String)>) -> BTreeMap<String, String> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

pub fn hopf_param_map(p: &HopfParams) -> BTreeMap<String, String> {
    param_map([
        ("alpha", fmt_real(p.alpha)),
        ("beta", fmt_real(p.beta)),
        ("a", fmt_real(p.a)),
        ("b", fmt_real(p.b)),
        ("sigma", fmt_real(p.sigma)),
    ])
}

/// `zeta,psi,err` on `n` points of `(0, z_max]`.
pub fn psi_curve(n: usize, z_max: f64, cfg: &QuadratureConfig) -> Result<ExperimentRecord> {
    if n == 0 || !(z_max > 0.0) {
        return Err(Error::Config("psi curve needs n > 0 and z_max > 0".into()));
    }
    let params = param_map([
        ("points", n.to_string()),
        ("zeta_max", fmt_real(z_max)),
        ("abs_tol", fmt_real(cfg.abs_tol)),
        ("rel_tol", fmt_real(cfg.rel_tol)),
    ]);
    let mut rec = ExperimentRecord::new("psi-curve", params, Vec::new(), &["zeta", "psi", "err"]);
    let values: Vec<_> = psi_grid(n, z_max).par_iter().map(|&z| psi(z, cfg)).collect::<Result<_>>()?;
    for v in values {
        rec.push(vec![v.zeta, v.value, v.err_bound]);
    }
    Ok(rec)
}

/// Number of sign changes in a sequence, ignoring exact zeros.
pub fn sign_changes(values: &[f64]) -> usize {
    let signs: Vec<bool> = values.iter().filter(|v| **v != 0.0).map(|v| *v > 0.0).collect();
    signs.windows(2).filter(|w| w[0] != w[1]).count()
}

/// `(ŝ, θ̂)` paths of the simplified variational system from `x0`. Every run
/// uses the same noise realisation; rows are `run,t,s,theta`.
pub fn trajectories(
    runs: &[SimplifiedParams],
    x0: [f64; 2],
    t_end: f64,
    dt: f64,
    seed: u64,
    stride: usize,
) -> Result<ExperimentRecord> {
    let mut params = param_map([
        ("s0", fmt_real(x0[0])),
        ("theta0", fmt_real(x0[1])),
        ("t_end", fmt_real(t_end)),
        ("dt", fmt_real(dt)),
        ("stride", stride.to_string()),
    ]);
    for (k, p) in runs.iter().enumerate() {
        params.insert(
            format!("run{k}"),
            format!(
                "alpha_hat={} b_hat={} sigma_hat={}",
                fmt_real(p.alpha_hat),
                fmt_real(p.b_hat),
                fmt_real(p.sigma_hat)
            ),
        );
    }
    let mut rec = ExperimentRecord::new("trajectories", params, vec![seed], &["run", "t", "s", "theta"]);
    for (k, p) in runs.iter().enumerate() {
        let sys = SimplifiedVariational { params: *p };
        let mut noise = NoiseStream::new(seed, 1, dt)?;
        let traj = simulate(&sys, &x0, t_end, &mut noise, stride)?;
        for (t, x) in traj.t.iter().zip(&traj.x) {
            rec.push(vec![k as f64, *t, x[0], x[1]]);
        }
    }
    Ok(rec)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AttractorInit {
    /// Radius from the exact radial law, angle uniform.
    Stationary,
    /// Members start on the circle `r̂` with uniform angles and are evolved
    /// with independent noise for `t0` at step `dt`.
    Burnin { t0: f64, dt: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttractorConfig {
    pub params: HopfParams,
    pub n_samples: usize,
    pub t_end: f64,
    pub dt: f64,
    pub seed: u64,
    pub init: AttractorInit,
}

impl AttractorConfig {
    /// 50,000 samples, `T = 500`, `dt = 1e−3` at `α = β = a = σ = 1`, `b = −10`.
    pub fn figure_two(seed: u64) -> Self {
        Self {
            params: HopfParams {
                alpha: 1.0,
                beta: 1.0,
                a: 1.0,
                b: -10.0,
                sigma: 1.0,
            },
            n_samples: 50_000,
            t_end: 500.0,
            dt: 1e-3,
            seed,
            init: AttractorInit::Stationary,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttractorCloud {
    pub z1: Vec<f64>,
    pub z2: Vec<f64>,
    pub failed: usize,
    pub r_hat: f64,
}

impl AttractorCloud {
    fn finite_points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.z1
            .iter()
            .zip(&self.z2)
            .map(|(&x, &y)| (x, y))
            .filter(|(x, y)| x.is_finite() && y.is_finite())
    }

    /// Diagonal of the bounding box of the finite members.
    pub fn diameter(&self) -> f64 {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for (x, y) in self.finite_points() {
            lo[0] = lo[0].min(x);
            lo[1] = lo[1].min(y);
            hi[0] = hi[0].max(x);
            hi[1] = hi[1].max(y);
        }
        if lo[0] > hi[0] {
            return 0.0;
        }
        (hi[0] - lo[0]).hypot(hi[1] - lo[1])
    }

    pub fn radii(&self) -> Vec<f64> {
        self.finite_points().map(|(x, y)| x.hypot(y)).collect()
    }

    /// Fraction of members with `|r − r̂| ≤ width·r̂`.
    pub fn fraction_near_r_hat(&self, width: f64) -> f64 {
        let r = self.radii();
        let near = r.iter().filter(|&&v| (v - self.r_hat).abs() <= width * self.r_hat).count();
        near as f64 / r.len().max(1) as f64
    }

    pub fn record(&self, cfg: &AttractorConfig) -> ExperimentRecord {
        let mut params = hopf_param_map(&cfg.params);
        params.insert("samples".into(), cfg.n_samples.to_string());
        params.insert("t_end".into(), fmt_real(cfg.t_end));
        params.insert("dt".into(), fmt_real(cfg.dt));
        params.insert("reference_radius".into(), fmt_real(self.r_hat));
        params.insert(
            "init".into(),
            match cfg.init {
                AttractorInit::Stationary => "stationary".into(),
                AttractorInit::Burnin { t0, dt } => format!("burnin t0={} dt={}", fmt_real(t0), fmt_real(dt)),
            },
        );
        params.insert("failed".into(), self.failed.to_string());
        let mut rec = ExperimentRecord::new("attractor", params, vec![cfg.seed], &["z1", "z2"]);
        for (x, y) in self.z1.iter().zip(&self.z2) {
            rec.push(vec![*x, *y]);
        }
        rec
    }
}

const CLOUD_CHUNK: usize = 2048;

#[inline]
fn euler_common(p: &HopfParams, xs: &mut [f64], ys: &mut [f64], dt: f64, dw: [f64; 2]) {
    let (al, be, a, b) = (p.alpha, p.beta, p.a, p.b);
    let (nx, ny) = (p.sigma * dw[0], p.sigma * dw[1]);
    for (x, y) in xs.iter_mut().zip(ys.iter_mut()) {
        let (x0, y0) = (*x, *y);
        let n2 = x0 * x0 + y0 * y0;
        let fx = al * x0 - be * y0 - n2 * (a * x0 - b * y0);
        let fy = be * x0 + al * y0 - n2 * (b * x0 + a * y0);
        *x = x0 + fx * dt + nx;
        *y = y0 + fy * dt + ny;
    }
}

/// Evolves the positions `(z1, z2)` under one common noise path with
/// Euler–Maruyama (exact in law to first order: the noise is additive). Each
/// chunk of members replays `noise` from its start.
pub fn evolve_cloud(p: &HopfParams, z1: &mut [f64], z2: &mut [f64], t_end: f64, noise: &NoiseStream) -> Result<()> {
    let n = step_count(t_end, noise.dt())?;
    let dt = noise.dt();
    z1.par_chunks_mut(CLOUD_CHUNK)
        .zip(z2.par_chunks_mut(CLOUD_CHUNK))
        .for_each(|(xs, ys)| {
            let mut stream = noise.replay();
            let mut dw = [0.0; 2];
            for _ in 0..n {
                stream.increment(&mut dw);
                euler_common(p, xs, ys, dt, dw);
            }
        });
    Ok(())
}

/// Draws the initial cloud, then evolves it under common noise to `t_end`.
pub fn attractor(cfg: &AttractorConfig) -> Result<AttractorCloud> {
    let p = &cfg.params;
    if cfg.n_samples == 0 {
        return Err(Error::Config("attractor needs at least one sample".into()));
    }
    let r_hat = p.r_hat();
    let mut init = NoiseStream::with_stream(cfg.seed, 1, 2, cfg.dt)?;
    let mut z1 = Vec::with_capacity(cfg.n_samples);
    let mut z2 = Vec::with_capacity(cfg.n_samples);
    match cfg.init {
        AttractorInit::Stationary => {
            let d = RadialDensity::new(p.alpha, p.a, p.sigma)?;
            for _ in 0..cfg.n_samples {
                let r = d.sample(&mut init);
                let phi = TAU * init.uniform();
                z1.push(r * phi.cos());
                z2.push(r * phi.sin());
            }
        }
        AttractorInit::Burnin { t0, dt } => {
            for _ in 0..cfg.n_samples {
                let phi = TAU * init.uniform();
                z1.push(r_hat * phi.cos());
                z2.push(r_hat * phi.sin());
            }
            let steps = step_count(t0, dt)?;
            let sq = dt.sqrt() * p.sigma;
            for _ in 0..steps {
                for (x, y) in z1.iter_mut().zip(z2.iter_mut()) {
                    let (nx, ny) = (init.standard_normal(), init.standard_normal());
                    euler_common(p, std::slice::from_mut(x), std::slice::from_mut(y), dt, [0.0, 0.0]);
                    *x += sq * nx;
                    *y += sq * ny;
                }
            }
        }
    }
    let noise = NoiseStream::with_stream(cfg.seed, 0, 2, cfg.dt)?;
    evolve_cloud(p, &mut z1, &mut z2, cfg.t_end, &noise)?;
    let failed = z1
        .iter()
        .zip(&z2)
        .filter(|(x, y)| !(x.is_finite() && y.is_finite()))
        .count();
    Ok(AttractorCloud { z1, z2, failed, r_hat })
}

/// Scatter plot of a cloud with the reference circle.
pub fn svg_scatter(xs: &[f64], ys: &[f64], radius: f64) -> String {
    let ext = 2.5 * radius;
    let size = 600.0;
    let map = |v: f64| (v + ext) / (2.0 * ext) * size;
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{size}\" height=\"{size}\" viewBox=\"0 0 {size} {size}\">\n"
    );
    s.push_str(&format!(
        "<circle cx=\"{c}\" cy=\"{c}\" r=\"{r}\" fill=\"none\" stroke=\"red\" stroke-dasharray=\"4 3\"/>\n",
        c = size / 2.0,
        r = radius / (2.0 * ext) * size
    ));
    for (x, y) in xs.iter().zip(ys) {
        if x.is_finite() && y.is_finite() && x.abs() < ext && y.abs() < ext {
            s.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"0.6\" fill=\"black\"/>\n",
                map(*x),
                size - map(*y)
            ));
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Polyline plot of `ys` against `xs` with a horizontal zero line.
pub fn svg_curve(xs: &[f64], ys: &[f64]) -> String {
    let (w, h) = (600.0, 400.0);
    let (x0, x1) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, &v| (a.0.min(v), a.1.max(v)));
    let (y0, y1) = ys.iter().fold((0.0f64, 0.0f64), |a, &v| (a.0.min(v), a.1.max(v)));
    let (y0, y1) = if y1 > y0 { (y0, y1) } else { (y0 - 1.0, y1 + 1.0) };
    let mx = |v: f64| (v - x0) / (x1 - x0).max(f64::MIN_POSITIVE) * w;
    let my = |v: f64| h - (v - y0) / (y1 - y0) * h;
    let pts: Vec<String> = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| format!("{:.2},{:.2}", mx(*x), my(*y)))
        .collect();
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\">\n\
         <line x1=\"0\" y1=\"{z:.2}\" x2=\"{w}\" y2=\"{z:.2}\" stroke=\"gray\"/>\n\
         <polyline fill=\"none\" stroke=\"black\" points=\"{}\"/>\n</svg>\n",
        pts.join(" "),
        z = my(0.0)
    )
}
