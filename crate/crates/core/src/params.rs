//! Parameter spaces of the full Hopf model, the ε-rescaled shear family and the
//! simplified cylinder model, plus the flat `key=value` run configuration.
//!
//! Everything is validated at construction; downstream code assumes the
//! invariants hold.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn positive(name: &'static str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::domain(name, v, "must be finite and > 0"))
    }
}

fn finite(name: &'static str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::domain(name, v, "must be finite"))
    }
}

/// Parameters `(α, β, a, b, σ)` of `dZ = F(Z) dt + σ dW`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HopfParams {
    pub alpha: f64,
    pub beta: f64,
    pub a: f64,
    pub b: f64,
    pub sigma: f64,
}

impl HopfParams {
    pub fn new(alpha: f64, beta: f64, a: f64, b: f64, sigma: f64) -> Result<Self> {
        let sigma = finite("sigma", sigma)?;
        if sigma < 0.0 {
            return Err(Error::domain("sigma", sigma, "must be >= 0"));
        }
        Ok(Self {
            alpha: positive("alpha", alpha)?,
            beta: finite("beta", beta)?,
            a: positive("a", a)?,
            b: finite("b", b)?,
            sigma,
        })
    }

    /// Radius `√(α/a)` of the deterministic limit cycle.
    pub fn r_hat(&self) -> f64 {
        (self.alpha / self.a).sqrt()
    }
}

/// The `(α, β, a)` part shared by every member of the shear family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseParams {
    pub alpha: f64,
    pub beta: f64,
    pub a: f64,
}

impl BaseParams {
    pub fn new(alpha: f64, beta: f64, a: f64) -> Result<Self> {
        Ok(Self {
            alpha: positive("alpha", alpha)?,
            beta: finite("beta", beta)?,
            a: positive("a", a)?,
        })
    }

    pub fn r_hat(&self) -> f64 {
        (self.alpha / self.a).sqrt()
    }
}

/// Scaled shear and noise `(b′, σ′, ε)` with `b = b′/ε`, `σ = ε σ′`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShearScaling {
    pub b_prime: f64,
    pub sigma_prime: f64,
    pub epsilon: f64,
}

impl ShearScaling {
    pub fn new(b_prime: f64, sigma_prime: f64, epsilon: f64) -> Result<Self> {
        Ok(Self {
            b_prime: finite("b_prime", b_prime)?,
            sigma_prime: positive("sigma_prime", sigma_prime)?,
            epsilon: positive("epsilon", epsilon)?,
        })
    }

    pub fn hopf_params(&self, base: &BaseParams) -> HopfParams {
        HopfParams {
            alpha: base.alpha,
            beta: base.beta,
            a: base.a,
            b: self.b_prime / self.epsilon,
            sigma: self.epsilon * self.sigma_prime,
        }
    }
}

/// Parameters `(α̂, b̂, σ̂)` of the simplified cylinder model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimplifiedParams {
    pub alpha_hat: f64,
    pub b_hat: f64,
    pub sigma_hat: f64,
}

impl SimplifiedParams {
    pub fn new(alpha_hat: f64, b_hat: f64, sigma_hat: f64) -> Result<Self> {
        Ok(Self {
            alpha_hat: positive("alpha_hat", alpha_hat)?,
            b_hat: finite("b_hat", b_hat)?,
            sigma_hat: positive("sigma_hat", sigma_hat)?,
        })
    }

    /// `ζ = b̂² σ̂² / α̂³`; zero (degenerate) when `b̂ = 0`.
    pub fn zeta(&self) -> f64 {
        zeta_of(self)
    }
}

pub fn zeta_of(p: &SimplifiedParams) -> f64 {
    p.b_hat * p.b_hat * p.sigma_hat * p.sigma_hat / (p.alpha_hat * p.alpha_hat * p.alpha_hat)
}

/// Map `(α, a, b′, σ′)` to the simplified model obtained in the ε → 0 limit:
/// `(2α, 2αb′/a, σ′√(a/α))`.
pub fn to_hat_params(alpha: f64, a: f64, b_prime: f64, sigma_prime: f64) -> Result<SimplifiedParams> {
    let alpha = positive("alpha", alpha)?;
    let a = positive("a", a)?;
    let sigma_prime = positive("sigma_prime", sigma_prime)?;
    let b_prime = finite("b_prime", b_prime)?;
    Ok(SimplifiedParams {
        alpha_hat: 2.0 * alpha,
        b_hat: 2.0 * alpha * b_prime / a,
        sigma_hat: sigma_prime * (a / alpha).sqrt(),
    })
}

/// The argument `b′²σ′²/(2α²a)` of `Ψ` in the shear limit, evaluated through
/// the hat map so that it agrees bit for bit with `zeta_of(to_hat_params(..))`.
pub fn effective_zeta(alpha: f64, a: f64, b_prime: f64, sigma_prime: f64) -> Result<f64> {
    Ok(zeta_of(&to_hat_params(alpha, a, b_prime, sigma_prime)?))
}

/// The full shear family `(α, β, a, b′, σ′)`; a member is selected by `ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShearModel {
    pub alpha: f64,
    pub beta: f64,
    pub a: f64,
    pub b_prime: f64,
    pub sigma_prime: f64,
}

impl ShearModel {
    pub fn new(alpha: f64, beta: f64, a: f64, b_prime: f64, sigma_prime: f64) -> Result<Self> {
        Ok(Self {
            alpha: positive("alpha", alpha)?,
            beta: finite("beta", beta)?,
            a: positive("a", a)?,
            b_prime: finite("b_prime", b_prime)?,
            sigma_prime: positive("sigma_prime", sigma_prime)?,
        })
    }

    /// The parameters used for the attractor figure: α = β = a = σ′ = 1, b′ = −10.
    pub fn figure_two() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            a: 1.0,
            b_prime: -10.0,
            sigma_prime: 1.0,
        }
    }

    pub fn base(&self) -> BaseParams {
        BaseParams {
            alpha: self.alpha,
            beta: self.beta,
            a: self.a,
        }
    }

    pub fn r_hat(&self) -> f64 {
        (self.alpha / self.a).sqrt()
    }

    pub fn scaling(&self, epsilon: f64) -> Result<ShearScaling> {
        ShearScaling::new(self.b_prime, self.sigma_prime, epsilon)
    }

    pub fn at_epsilon(&self, epsilon: f64) -> Result<HopfParams> {
        Ok(self.scaling(epsilon)?.hopf_params(&self.base()))
    }

    pub fn hat_params(&self) -> Result<SimplifiedParams> {
        to_hat_params(self.alpha, self.a, self.b_prime, self.sigma_prime)
    }

    pub fn effective_zeta(&self) -> Result<f64> {
        effective_zeta(self.alpha, self.a, self.b_prime, self.sigma_prime)
    }

    /// Itô drift of the radius, `αr − ar³ + ε²σ′²/(2r)`.
    pub fn radial_drift(&self, r: f64, epsilon: f64) -> f64 {
        let noise = epsilon * self.sigma_prime;
        self.alpha * r - self.a * r * r * r + noise * noise / (2.0 * r)
    }

    /// Shear model whose ε = 0 limit at `r̂` is the given simplified model
    /// (chooses `α = α̂/2`, `a = α` so that `r̂ = 1`).
    pub fn from_simplified(p: &SimplifiedParams) -> Self {
        let alpha = p.alpha_hat / 2.0;
        Self {
            alpha,
            beta: 0.0,
            a: alpha,
            b_prime: p.b_hat / 2.0,
            sigma_prime: p.sigma_hat,
        }
    }
}

/// Flat `key=value` run configuration. Unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub a: Option<f64>,
    pub b_prime: Option<f64>,
    pub sigma_prime: Option<f64>,
    pub epsilon: Option<f64>,
    pub seed: Option<u64>,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
}

impl RunConfig {
    pub const KEYS: [&'static str; 9] = [
        "alpha",
        "beta",
        "a",
        "b_prime",
        "sigma_prime",
        "epsilon",
        "seed",
        "dt",
        "t_end",
    ];

    /// Parses `key=value` lines; `#` starts a comment, blank lines are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key=value, got {raw:?}", lineno + 1))
            })?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let real = |v: &str| v.parse::<f64>().map_err(|e| format!("{key}: {e}"));
        match key {
            "alpha" => self.alpha = Some(real(value)?),
            "beta" => self.beta = Some(real(value)?),
            "a" => self.a = Some(real(value)?),
            "b_prime" => self.b_prime = Some(real(value)?),
            "sigma_prime" => self.sigma_prime = Some(real(value)?),
            "epsilon" => self.epsilon = Some(real(value)?),
            "dt" => self.dt = Some(real(value)?),
            "t_end" => self.t_end = Some(real(value)?),
            "seed" => self.seed = Some(value.parse::<u64>().map_err(|e| format!("seed: {e}"))?),
            other => return Err(format!("unknown key {other:?}")),
        }
        Ok(())
    }

    /// Values in `overrides` win over values in `self`.
    pub fn merged(&self, overrides: &RunConfig) -> RunConfig {
        RunConfig {
            alpha: overrides.alpha.or(self.alpha),
            beta: overrides.beta.or(self.beta),
            a: overrides.a.or(self.a),
            b_prime: overrides.b_prime.or(self.b_prime),
            sigma_prime: overrides.sigma_prime.or(self.sigma_prime),
            epsilon: overrides.epsilon.or(self.epsilon),
            seed: overrides.seed.or(self.seed),
            dt: overrides.dt.or(self.dt),
            t_end: overrides.t_end.or(self.t_end),
        }
    }

    /// Canonical sorted `key=value` listing of the set keys.
    pub fn canonical(&self) -> BTreeMap<&'static str, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &'static str, v: Option<String>| {
            if let Some(v) = v {
                m.insert(k, v);
            }
        };
        put("alpha", self.alpha.map(fmt_real));
        put("beta", self.beta.map(fmt_real));
        put("a", self.a.map(fmt_real));
        put("b_prime", self.b_prime.map(fmt_real));
        put("sigma_prime", self.sigma_prime.map(fmt_real));
        put("epsilon", self.epsilon.map(fmt_real));
        put("seed", self.seed.map(|s| s.to_string()));
        put("dt", self.dt.map(fmt_real));
        put("t_end", self.t_end.map(fmt_real));
        m
    }
}

/// 17 significant digits, the float format of every output file.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}
