//! Numerics for the noisy Hopf normal form in the large-shear, small-noise regime.
//!
//! The crate is organised bottom-up:
//!
//! - [`params`]: parameter spaces and the maps between the full model, the
//!   ε-rescaled family and the simplified cylinder model.
//! - [`quadrature`]: the density `m_ζ`, its normalisation `K_ζ`, the function `Ψ`
//!   and its unique zero `C₀`.
//! - [`sde`]: seeded Brownian increments and fixed-step Itô / Stratonovich
//!   integration.
//! - [`hopf`]: right-hand sides of the Cartesian, polar, tangent-frame and
//!   rescaled tangent-frame systems.
//! - [`projective`]: projective coordinates and the Furstenberg–Khasminskii
//!   coefficient functions.
//! - [`stationary`]: the radial stationary density, exact sampling and
//!   empirical stationary measures.
//! - [`lyapunov`]: top Lyapunov exponent estimators and the ε-sweep.
//! - [`experiments`]: figure pipelines and the record format shared with the CLI.

pub mod error;
pub mod experiments;
pub mod hopf;
pub mod lyapunov;
pub mod params;
pub mod projective;
pub mod quadrature;
pub mod sde;
pub mod stationary;

pub use error::{Error, Result};
pub use hopf::{Chart, PolarTangentState};
pub use lyapunov::{LyapunovConfig, LyapunovEstimate};
pub use params::{BaseParams, HopfParams, ShearModel, ShearScaling, SimplifiedParams};
pub use quadrature::{PsiValue, QuadratureConfig};
pub use sde::{Convention, NoiseStream, Sde, Stepper};
