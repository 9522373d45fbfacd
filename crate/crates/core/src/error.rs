use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error("quadrature did not converge on [{lower:e}, {upper:e}]: estimate {estimate:e}, achieved error {achieved:e} > requested {requested:e}")]
    NotConverged {
        lower: f64,
        upper: f64,
        estimate: f64,
        achieved: f64,
        requested: f64,
    },
    #[error("non-finite integrand value at {at:e}")]
    NonFinite { at: f64 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("{operation} requires the high-temperature mode (use the quadrature path instead)")]
    RequiresHighTemperature { operation: &'static str },

    #[error("{operation} requires a finite temperature")]
    RequiresFiniteTemperature { operation: &'static str },

    #[error("{context}: {source}")]
    Quadrature {
        context: String,
        #[source]
        source: QuadratureError,
    },

    #[error("truncation leak {leak:e} exceeds threshold {threshold:e} at t = {time:e} s; try a Fock dimension of at least {suggested}")]
    TruncationLeak {
        leak: f64,
        threshold: f64,
        time: f64,
        suggested: usize,
    },

    #[error("trace drifted by {drift:e} (limit {limit:e}) at t = {time:e} s")]
    TraceDrift { drift: f64, limit: f64, time: f64 },

    #[error("hermiticity violated by {deviation:e} at t = {time:e} s")]
    HermiticityDrift { deviation: f64, time: f64 },

    #[error("negative channel rate on [{start:e}, {end:e}] s (non-Lindblad interval); use the deterministic secular solver")]
    NegativeRate { start: f64, end: f64 },

    #[error("jump probability {probability} in one step exceeds 0.1 at t = {time:e} s; reduce dt")]
    StepTooLarge { probability: f64, time: f64 },

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
