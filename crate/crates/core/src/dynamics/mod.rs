//! Direct simulation of the reduced oscillator dynamics in a truncated Fock
//! basis.

mod characteristics;
mod mcwf;
mod nonsecular;
mod oracle;
mod secular;
mod state;

pub use mcwf::{mcwf_ensemble, EnsembleConfig, EnsembleResult};
pub use nonsecular::{evolve_nonsecular, NonsecularResult};
pub use oracle::{heating_ode_oracle, OracleResolution};
pub use secular::{evolve_secular, SecularResult, SecularScheme};
pub use state::{mean_n, suggest_dimension, DensityMatrix, TruncatedState};

use serde::{Deserialize, Serialize};

use crate::coefficients::CoefficientMethod;
use crate::error::{Error, Result};

/// Fixed-step integration settings shared by the deterministic solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Number of Fock levels 0..N−1.
    pub dimension: usize,
    /// Nominal step (s); intervals between output times are split into
    /// equal steps no longer than this.
    pub dt: f64,
    /// Largest tolerated weight in the top two Fock levels.
    pub leak_threshold: f64,
    pub coefficients: CoefficientMethod,
    /// Keep the state at every output time.
    pub record_states: bool,
    pub secular_scheme: SecularScheme,
}

impl SolverConfig {
    pub const DEFAULT_LEAK_THRESHOLD: f64 = 1e-8;

    /// Largest step allowed for the given reservoir and oscillator scales.
    pub fn max_step(cutoff: f64, frequency: f64) -> f64 {
        (std::f64::consts::TAU / frequency).min(1.0 / cutoff) / 40.0
    }

    pub fn new(dimension: usize, dt: f64) -> Self {
        Self {
            dimension,
            dt,
            leak_threshold: Self::DEFAULT_LEAK_THRESHOLD,
            coefficients: CoefficientMethod::ClosedForm,
            record_states: false,
            secular_scheme: SecularScheme::Auto,
        }
    }

    pub fn validate(&self, cutoff: f64, frequency: f64) -> Result<()> {
        if self.dimension < 4 {
            return Err(Error::invalid("dimension", format!("must be >= 4, got {}", self.dimension)));
        }
        let limit = Self::max_step(cutoff, frequency);
        if !(self.dt > 0.0 && self.dt <= limit * (1.0 + 1e-12)) {
            return Err(Error::invalid(
                "dt",
                format!("must lie in (0, {limit:e}] (1/40 of the shorter of 2π/ω₀ and 1/ω_c), got {:e}", self.dt),
            ));
        }
        if !(self.leak_threshold > 0.0) {
            return Err(Error::invalid("leak_threshold", "must be > 0"));
        }
        Ok(())
    }
}

/// Equal sub-steps covering `[start, end]` with length at most `dt`.
pub(crate) fn substeps(start: f64, end: f64, dt: f64) -> (usize, f64) {
    let span = end - start;
    if span <= 0.0 {
        return (0, 0.0);
    }
    let count = ((span / dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    (count, span / count as f64)
}
