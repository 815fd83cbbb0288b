//! Right-hand sides of the noisy Hopf normal form in Cartesian, polar,
//! tangent-frame and rescaled tangent-frame coordinates, and the transforms
//! between them.
//!
//! Angles (`φ`) are carried unwrapped. Every system whose state contains a
//! radius treats `r ≤ r_floor = 1e-6·r̂` as leaving the admissible region.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{HopfParams, ShearModel, SimplifiedParams};
use crate::sde::{Convention, Sde};

pub type Mat2 = [[f64; 2]; 2];

pub const R_FLOOR_FACTOR: f64 = 1e-6;

pub fn r_floor(r_hat: f64) -> f64 {
    R_FLOOR_FACTOR * r_hat
}

pub fn mat_vec(m: &Mat2, v: [f64; 2]) -> [f64; 2] {
    [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
}

/// `F(Z) = [[α,−β],[β,α]]Z − ‖Z‖²[[a,−b],[b,a]]Z`.
pub fn drift_f(z: [f64; 2], p: &HopfParams) -> [f64; 2] {
    let n2 = z[0] * z[0] + z[1] * z[1];
    [
        p.alpha * z[0] - p.beta * z[1] - n2 * (p.a * z[0] - p.b * z[1]),
        p.beta * z[0] + p.alpha * z[1] - n2 * (p.b * z[0] + p.a * z[1]),
    ]
}

/// `DF(Z) = [[α,−β],[β,α]] − ‖Z‖²[[a,−b],[b,a]] − 2[[a,−b],[b,a]]ZZᵀ`.
pub fn jacobian_f(z: [f64; 2], p: &HopfParams) -> Mat2 {
    let n2 = z[0] * z[0] + z[1] * z[1];
    let m = [[p.a, -p.b], [p.b, p.a]];
    let mut j = [
        [p.alpha - n2 * p.a, -p.beta + n2 * p.b],
        [p.beta - n2 * p.b, p.alpha - n2 * p.a],
    ];
    let mz = mat_vec(&m, z);
    for (i, row) in j.iter_mut().enumerate() {
        for (k, v) in row.iter_mut().enumerate() {
            *v -= 2.0 * mz[i] * z[k];
        }
    }
    j
}

/// `(Z, Y)` with `dZ = F(Z)dt + σ dW`, `dY = DF(Z)Y dt`. The noise is
/// additive, so both conventions describe the same process; the label only
/// selects the integrator.
#[derive(Debug, Clone, Copy)]
pub struct CartesianSystem {
    pub params: HopfParams,
    pub convention: Convention,
}

impl CartesianSystem {
    pub fn new(params: HopfParams) -> Self {
        Self {
            params,
            convention: Convention::Ito,
        }
    }

    pub fn with_convention(mut self, convention: Convention) -> Self {
        self.convention = convention;
        self
    }
}

impl Sde for CartesianSystem {
    fn state_dim(&self) -> usize {
        4
    }
    fn noise_dim(&self) -> usize {
        2
    }
    fn convention(&self) -> Convention {
        self.convention
    }
    fn drift(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        let z = [x[0], x[1]];
        let f = drift_f(z, &self.params);
        let dy = mat_vec(&jacobian_f(z, &self.params), [x[2], x[3]]);
        out.copy_from_slice(&[f[0], f[1], dy[0], dy[1]]);
    }
    fn diffusion(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        let s = self.params.sigma;
        out.copy_from_slice(&[s, 0.0, 0.0, s, 0.0, 0.0, 0.0, 0.0]);
    }
}

/// Itô polar system `(r, φ)` driven by independent `(W_r, W_φ)`.
#[derive(Debug, Clone, Copy)]
pub struct PolarSystem {
    pub params: HopfParams,
}

impl Sde for PolarSystem {
    fn state_dim(&self) -> usize {
        2
    }
    fn noise_dim(&self) -> usize {
        2
    }
    fn convention(&self) -> Convention {
        Convention::Ito
    }
    fn drift(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        let p = &self.params;
        let r = x[0];
        out[0] = p.alpha * r - p.a * r * r * r + p.sigma * p.sigma / (2.0 * r);
        out[1] = p.beta - p.b * r * r;
    }
    fn diffusion(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        let s = self.params.sigma;
        out.copy_from_slice(&[s, 0.0, 0.0, s / x[0]]);
    }
    fn admissible(&self, x: &[f64]) -> bool {
        x[0] > r_floor(self.params.r_hat())
    }
}

/// Stratonovich system `(r, φ, s, ϑ)` driven by the Cartesian noise
/// `(W₁, W₂)`; `dW_r`, `dW_φ` are the rotations of `dW` by `−φ`.
#[derive(Debug, Clone, Copy)]
pub struct PolarFrameSystem {
    pub params: HopfParams,
}

impl Sde for PolarFrameSystem {
    fn state_dim(&self) -> usize {
        4
    }
    fn noise_dim(&self) -> usize {
        2
    }
    fn convention(&self) -> Convention {
        Convention::Stratonovich
    }
    fn drift(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        let p = &self.params;
        let (r, s, v) = (x[0], x[2], x[3]);
        let r2 = r * r;
        out[0] = p.alpha * r - p.a * r2 * r;
        out[1] = p.beta - p.b * r2;
        out[2] = (p.alpha - 3.0 * p.a * r2) * s;
        out[3] = (p.alpha - p.a * r2) * v - 2.0 * p.b * r2 * s;
    }
    fn diffusion(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        let sg = self.params.sigma;
        let (r, phi, s, v) = (x[0], x[1], x[2], x[3]);
        let (sn, cs) = phi.sin_cos();
        let k = sg / r;
        // rows: r, φ, s, ϑ; columns: W₁, W₂
        out.copy_from_slice(&[
            sg * cs,
            sg * sn,
            -k * sn,
            k * cs,
            -k * v * sn,
            k * v * cs,
            k * s * sn,
            -k * s * cs,
        ]);
    }
    fn admissible(&self, x: &[f64]) -> bool {
        x[0] > r_floor(self.params.r_hat())
    }
}

/// Which second tangent coordinate a state carries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Chart {
    /// `ϑ`, the angular component in the unscaled frame.
    Vartheta,
    /// `θ = εϑ`.
    Theta { epsilon: f64 },
}

/// Polar position with tangent vector in the `(s, ϑ)` or `(s, θ)` chart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarTangentState {
    pub r: f64,
    /// Unwrapped angle; see [`PolarTangentState::phi_wrapped`].
    pub phi: f64,
    pub s: f64,
    pub theta_or_vartheta: f64,
    pub chart: Chart,
}

impl PolarTangentState {
    pub fn new(r: f64, phi: f64, s: f64, second: f64, chart: Chart) -> Result<Self> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::domain("r", r, "must be finite and > 0"));
        }
        if let Chart::Theta { epsilon } = chart {
            if !(epsilon > 0.0 && epsilon.is_finite()) {
                return Err(Error::domain("epsilon", epsilon, "must be finite and > 0"));
            }
        }
        Ok(Self {
            r,
            phi,
            s,
            theta_or_vartheta: second,
            chart,
        })
    }

    pub fn phi_wrapped(&self) -> f64 {
        self.phi.rem_euclid(std::f64::consts::TAU)
    }

    pub fn vartheta(&self) -> f64 {
        match self.chart {
            Chart::Vartheta => self.theta_or_vartheta,
            Chart::Theta { epsilon } => self.theta_or_vartheta / epsilon,
        }
    }

    /// Re-expresses the tangent vector in `chart`.
    pub fn to_chart(&self, chart: Chart) -> Self {
        let v = self.vartheta();
        let second = match chart {
            Chart::Vartheta => v,
            Chart::Theta { epsilon } => epsilon * v,
        };
        Self {
            theta_or_vartheta: second,
            chart,
            ..*self
        }
    }

    pub fn tangent_norm(&self) -> f64 {
        self.s.hypot(self.theta_or_vartheta)
    }

    /// `ε√(s²+ϑ²) ≤ √(s²+θ²) ≤ √(s²+ϑ²)` for `ε ≤ 1`.
    pub fn norm_bridge_holds(s: f64, vartheta: f64, epsilon: f64) -> bool {
        let nv = s.hypot(vartheta);
        let nt = s.hypot(epsilon * vartheta);
        let slack = 1e-12 * nv;
        epsilon * nv <= nt + slack && nt <= nv + slack
    }

    /// `(Z, Y)` with `Z = r e_r`, `Y = s e_r + ϑ e_φ`.
    pub fn to_cartesian(&self) -> ([f64; 2], [f64; 2]) {
        let (sn, cs) = self.phi.sin_cos();
        let v = self.vartheta();
        (
            [self.r * cs, self.r * sn],
            [self.s * cs - v * sn, self.s * sn + v * cs],
        )
    }

    pub fn from_cartesian(z: [f64; 2], y: [f64; 2], chart: Chart) -> Result<Self> {
        let r = z[0].hypot(z[1]);
        let phi = z[1].atan2(z[0]);
        let (sn, cs) = phi.sin_cos();
        let s = y[0] * cs + y[1] * sn;
        let v = -y[0] * sn + y[1] * cs;
        Self::new(r, phi, s, v, Chart::Vartheta).map(|st| st.to_chart(chart))
    }
}

/// Coefficient matrices of the tangent dynamics `dv = A₁v dt + A₂v ∘dW_φ`
/// in the `(s, θ)` chart and `Ã` in the `(s, ϑ)` chart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientMatrices {
    pub a1: Mat2,
    pub a2: Mat2,
    pub a1_tilde: Mat2,
    pub a2_tilde: Mat2,
}

/// `A₁ = [[α−3ar², 0], [−2b′r², α−ar²]]`, `A₂ = [[0, σ′/r], [−ε²σ′/r, 0]]`.
pub fn a_matrices(m: &ShearModel, r: f64, eps: f64) -> (Mat2, Mat2) {
    let r2 = r * r;
    let k = m.sigma_prime / r;
    (
        [[m.alpha - 3.0 * m.a * r2, 0.0], [-2.0 * m.b_prime * r2, m.alpha - m.a * r2]],
        [[0.0, k], [-eps * eps * k, 0.0]],
    )
}

/// `Ã₁ = [[α−3ar², 0], [−2b′r²/ε, α−ar²]]`, `Ã₂ = [[0, εσ′/r], [−εσ′/r, 0]]`.
pub fn a_tilde_matrices(m: &ShearModel, r: f64, eps: f64) -> Result<(Mat2, Mat2)> {
    if !(eps > 0.0) {
        return Err(Error::domain("epsilon", eps, "tilde matrices need epsilon > 0"));
    }
    let r2 = r * r;
    let k = eps * m.sigma_prime / r;
    Ok((
        [[m.alpha - 3.0 * m.a * r2, 0.0], [-2.0 * m.b_prime * r2 / eps, m.alpha - m.a * r2]],
        [[0.0, k], [-k, 0.0]],
    ))
}

pub fn coefficient_matrices(m: &ShearModel, r: f64, eps: f64) -> Result<CoefficientMatrices> {
    if !(r > 0.0) {
        return Err(Error::domain("r", r, "must be > 0"));
    }
    let (a1, a2) = a_matrices(m, r, eps);
    let (a1_tilde, a2_tilde) = a_tilde_matrices(m, r, eps)?;
    Ok(CoefficientMatrices {
        a1,
        a2,
        a1_tilde,
        a2_tilde,
    })
}

/// Stratonovich `(r, s, θ)` (chart `Theta`) or `(r, s, ϑ)` (chart `Vartheta`)
/// system driven by independent `(W_r, W_φ)`. At `ε = 0` (chart `Theta` only)
/// the radius is deterministic and `θ` carries no noise.
#[derive(Debug, Clone, Copy)]
pub struct RsThetaSystem {
    pub model: ShearModel,
    pub epsilon: f64,
    pub chart: Chart,
}

impl RsThetaSystem {
    pub fn new(model: ShearModel, epsilon: f64) -> Result<Self> {
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(Error::domain("epsilon", epsilon, "must be finite and >= 0"));
        }
        Ok(Self {
            model,
            epsilon,
            chart: Chart::Theta { epsilon },
        })
    }

    pub fn vartheta_chart(model: ShearModel, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::domain("epsilon", epsilon, "must be finite and > 0"));
        }
        Ok(Self {
            model,
            epsilon,
            chart: Chart::Vartheta,
        })
    }

    fn matrices(&self, r: f64) -> (Mat2, Mat2) {
        match self.chart {
            Chart::Theta { .. } => a_matrices(&self.model, r, self.epsilon),
            Chart::Vartheta => {
                a_tilde_matrices(&self.model, r, self.epsilon).expect("epsilon checked at construction")
            }
        }
    }
}

impl Sde for RsThetaSystem {
    fn state_dim(&self) -> usize {
        3
    }
    fn noise_dim(&self) -> usize {
        2
    }
    fn convention(&self) -> Convention {
        Convention::Stratonovich
    }
    fn drift(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        let r = x[0];
        let (a1, _) = self.matrices(r);
        let dv = mat_vec(&a1, [x[1], x[2]]);
        out[0] = self.model.radial_drift(r, self.epsilon);
        out[1] = dv[0];
        out[2] = dv[1];
    }
    fn diffusion(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        let (_, a2) = self.matrices(x[0]);
        let gv = mat_vec(&a2, [x[1], x[2]]);
        // columns: W_r, W_φ
        out.copy_from_slice(&[self.epsilon * self.model.sigma_prime, 0.0, 0.0, gv[0], 0.0, gv[1]]);
    }
    fn admissible(&self, x: &[f64]) -> bool {
        x[0] > r_floor(self.model.r_hat())
    }
}

/// Variational system of the simplified model, `(ŝ, θ̂)`:
/// `dŝ = −α̂ŝ dt + σ̂θ̂ ∘dŴ`, `dθ̂ = −b̂ŝ dt`. The diffusion matrix is
/// nilpotent, so the Itô and Stratonovich forms coincide.
#[derive(Debug, Clone, Copy)]
pub struct SimplifiedVariational {
    pub params: SimplifiedParams,
}

impl SimplifiedVariational {
    pub fn b_matrices(&self) -> (Mat2, Mat2) {
        let p = &self.params;
        ([[-p.alpha_hat, 0.0], [-p.b_hat, 0.0]], [[0.0, p.sigma_hat], [0.0, 0.0]])
    }
}

impl Sde for SimplifiedVariational {
    fn state_dim(&self) -> usize {
        2
    }
    fn noise_dim(&self) -> usize {
        1
    }
    fn convention(&self) -> Convention {
        Convention::Stratonovich
    }
    fn drift(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        out[0] = -self.params.alpha_hat * x[0];
        out[1] = -self.params.b_hat * x[0];
    }
    fn diffusion(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        out[0] = self.params.sigma_hat * x[1];
        out[1] = 0.0;
    }
}
