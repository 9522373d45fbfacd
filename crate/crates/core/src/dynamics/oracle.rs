use serde::{Deserialize, Serialize};

use crate::analytics::{HeatingTrace, TraceMethod};
use crate::coefficients::{validate_grid, CoefficientModel};
use crate::error::Result;

use super::substeps;

/// Step density of the scalar oracle: steps per 2π/ω₀ and per 1/ω_c,
/// whichever is finer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleResolution {
    pub steps_per_scale: usize,
}

impl Default for OracleResolution {
    fn default() -> Self {
        Self { steps_per_scale: 400 }
    }
}

/// Classical RK4 on d⟨n⟩/dt = Δ(t) − γ(t) − 2γ(t)⟨n⟩ from ⟨n(0)⟩ = `n0`.
pub fn heating_ode_oracle(n0: f64, model: &dyn CoefficientModel, times: &[f64], resolution: &OracleResolution) -> Result<HeatingTrace> {
    validate_grid(times)?;
    let scale = (std::f64::consts::TAU / model.frequency()).min(1.0 / model.cutoff());
    let dt = scale / resolution.steps_per_scale.max(1) as f64;
    let rhs = |t: f64, n: f64| {
        let (delta, gamma) = model.delta_gamma(t);
        delta - gamma - 2.0 * gamma * n
    };

    let mut values = Vec::with_capacity(times.len());
    let mut t = 0.0;
    let mut n = n0;
    for &target in times {
        let (count, h) = substeps(t, target, dt);
        for k in 0..count {
            let s = t + k as f64 * h;
            let k1 = rhs(s, n);
            let k2 = rhs(s + 0.5 * h, n + 0.5 * h * k1);
            let k3 = rhs(s + 0.5 * h, n + 0.5 * h * k2);
            let k4 = rhs(s + h, n + h * k3);
            n += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        t = target;
        values.push(n);
    }
    Ok(HeatingTrace::new(TraceMethod::Ode, times.to_vec(), values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::ConstantCoefficients;

    #[test]
    fn constant_coefficients_closed_solution() {
        let (delta, gamma, n0) = (3e5, 2e4, 2.0);
        let model = ConstantCoefficients {
            delta,
            gamma,
            pi: 0.0,
            rshift: 0.0,
            cutoff: 1e6,
            frequency: 1e6,
        };
        let times: Vec<f64> = (0..=30).map(|i| i as f64 * 2e-6).collect();
        let trace = heating_ode_oracle(n0, &model, &times, &OracleResolution::default()).unwrap();
        assert_eq!(trace.values[0], n0);
        for (t, v) in times.iter().zip(&trace.values) {
            let e = (-2.0 * gamma * t).exp();
            let want = e * n0 + (delta - gamma) * (1.0 - e) / (2.0 * gamma);
            assert!((v - want).abs() < 1e-12 * want);
        }
    }
}
