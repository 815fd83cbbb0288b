use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {name} = {value} ({reason})")]
    Domain {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("quadrature did not converge: achieved error {achieved:e}, target {target:e}")]
    Convergence { achieved: f64, target: f64 },

    #[error("root bracket [{lo}, {hi}] has no sign change (f(lo) = {f_lo:e}, f(hi) = {f_hi:e})")]
    Bracket {
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
    },

    #[error("state left the admissible region at t = {t}: {state:?}")]
    RegionExit { t: f64, state: Vec<f64> },

    #[error("integrator produced a non-finite state at t = {t}: {state:?}")]
    NonFinite { t: f64, state: Vec<f64> },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn domain(name: &'static str, value: f64, reason: &'static str) -> Self {
        Error::Domain {
            name,
            value,
            reason,
        }
    }

    /// True for failures of the numerics themselves (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Convergence { .. }
                | Error::Bracket { .. }
                | Error::RegionExit { .. }
                | Error::NonFinite { .. }
        )
    }
}
