//! Secular population dynamics through the generating function
//! G(s, t) = Σ pₙ(t) sⁿ.
//!
//! The birth–death equations become the first-order equation
//! ∂G/∂t = (1−s)[(Δ+γ) − (Δ−γ)s] ∂G/∂s − (Δ−γ)(1−s) G,
//! whose characteristics in w = 1 − s are Riccati curves with a triangular
//! linearisation. Along them the solution is
//!
//! G(1 − w, t) = G₀(1 − w e^{−Γ}/(1 + wJ)) / (1 + wJ),
//!
//! where Γ' = 2γ and J' = (Δ − γ) − 2γJ, J(0) = 0. Populations are recovered
//! from G on the N-th roots of unity by one FFT. Unlike stepping the
//! populations, this stays well conditioned when Δ ± γ are negative.

use num_complex::Complex64;
use rustfft::FftPlanner;

use super::secular::{SecularResult, SecularScheme};
use super::{substeps, SolverConfig};
use crate::analytics::{HeatingTrace, TraceMethod};
use crate::coefficients::{validate_grid, CoefficientModel};
use crate::error::{Error, Result};

/// w = 1 − e^{iθ} at the N-th roots of unity, without cancellation near θ = 0.
pub(crate) fn unit_circle_offsets(n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|k| {
            let theta = std::f64::consts::TAU * k as f64 / n as f64;
            let half = 0.5 * theta;
            Complex64::new(2.0 * half.sin() * half.sin(), -theta.sin())
        })
        .collect()
}

/// Populations at one instant from the characteristic parameters.
pub(crate) fn populations_from_characteristics(
    initial: &[f64],
    big_gamma: f64,
    j: f64,
    offsets: &[Complex64],
    fft: &dyn rustfft::Fft<f64>,
    buffer: &mut [Complex64],
) -> Vec<f64> {
    let n = offsets.len();
    let decay = (-big_gamma).exp();
    for (&w, slot) in offsets.iter().zip(buffer.iter_mut()) {
        let denom = 1.0 + w * j;
        let s0 = 1.0 - w * decay / denom;
        let mut g0 = Complex64::new(0.0, 0.0);
        for p in initial.iter().rev() {
            g0 = g0 * s0 + p;
        }
        *slot = g0 / denom;
    }
    fft.process(buffer);
    buffer.iter().map(|c| c.re / n as f64).collect()
}

pub(crate) fn evolve_characteristics(
    initial: &[f64],
    model: &dyn CoefficientModel,
    cfg: &SolverConfig,
    times: &[f64],
) -> Result<SecularResult> {
    cfg.validate(model.cutoff(), model.frequency())?;
    validate_grid(times)?;
    if initial.len() > cfg.dimension {
        return Err(Error::invalid("dimension", "smaller than the initial population vector"));
    }
    let n = cfg.dimension;
    let support = initial.iter().rposition(|&p| p != 0.0).map_or(0, |k| k + 1);
    let initial = &initial[..support];
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let mut buffer = vec![Complex64::new(0.0, 0.0); n];
    let offsets = unit_circle_offsets(n);

    // (Γ, J) by classical RK4
    let rhs = |t: f64, y: [f64; 2]| {
        let (delta, gamma) = model.delta_gamma(t);
        [2.0 * gamma, delta - gamma - 2.0 * gamma * y[1]]
    };
    let mut y = [0.0, 0.0];
    let mut t = 0.0;

    let mut values = Vec::with_capacity(times.len());
    let mut history = cfg.record_states.then(Vec::new);
    let mut max_leak = 0.0f64;
    let mut max_drift = 0.0f64;
    let mut min_population = f64::INFINITY;
    let mut populations = Vec::new();
    for &target in times {
        let (count, h) = substeps(t, target, cfg.dt);
        for k in 0..count {
            let s = t + k as f64 * h;
            let k1 = rhs(s, y);
            let k2 = rhs(s + 0.5 * h, [y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]]);
            let k3 = rhs(s + 0.5 * h, [y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]]);
            let k4 = rhs(s + h, [y[0] + h * k3[0], y[1] + h * k3[1]]);
            for i in 0..2 {
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        t = target;

        populations = if y == [0.0, 0.0] {
            let mut p = initial.to_vec();
            p.resize(n, 0.0);
            p
        } else {
            populations_from_characteristics(initial, y[0], y[1], &offsets, fft.as_ref(), &mut buffer)
        };
        let leak = populations[n - 1] + populations[n - 2];
        max_leak = max_leak.max(leak);
        if leak > cfg.leak_threshold {
            return Err(Error::TruncationLeak {
                leak,
                threshold: cfg.leak_threshold,
                time: t,
                suggested: 2 * n,
            });
        }
        let total: f64 = populations.iter().sum();
        let drift = (total - 1.0).abs();
        max_drift = max_drift.max(drift);
        if drift > 1e-6 {
            return Err(Error::TraceDrift {
                drift,
                limit: 1e-6,
                time: t,
            });
        }
        min_population = min_population.min(populations.iter().copied().fold(f64::INFINITY, f64::min));
        values.push(populations.iter().enumerate().map(|(k, w)| k as f64 * w).sum::<f64>() / total);
        if let Some(h) = history.as_mut() {
            h.push(populations.clone());
        }
    }

    Ok(SecularResult {
        trace: HeatingTrace::new(TraceMethod::Secular, times.to_vec(), values),
        populations: history,
        final_populations: populations,
        max_leak,
        max_trace_drift: max_drift,
        min_population,
        scheme: SecularScheme::Characteristics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plan(n: usize) -> std::sync::Arc<dyn rustfft::Fft<f64>> {
        FftPlanner::<f64>::new().plan_fft_forward(n)
    }

    #[test]
    fn vacuum_maps_to_thermal_state() {
        let n = 64;
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        let j = 0.7;
        let p = populations_from_characteristics(&[1.0], 0.3, j, &unit_circle_offsets(n), plan(n).as_ref(), &mut buf);
        for (k, v) in p.iter().enumerate().take(30) {
            let want = (j / (1.0 + j)).powi(k as i32) / (1.0 + j);
            assert!((v - want).abs() < 1e-15, "{k}: {v} vs {want}");
        }
    }

    #[test]
    fn pure_decay_is_binomial() {
        let n = 16;
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        let eta: f64 = 0.4;
        let p = populations_from_characteristics(&[0.0, 0.0, 0.0, 1.0], -eta.ln(), 0.0, &unit_circle_offsets(n), plan(n).as_ref(), &mut buf);
        let want = [(1.0 - eta).powi(3), 3.0 * eta * (1.0 - eta).powi(2), 3.0 * eta * eta * (1.0 - eta), eta.powi(3)];
        for (k, w) in want.iter().enumerate() {
            assert!((p[k] - w).abs() < 1e-15);
        }
        assert!(p[4..].iter().all(|v| v.abs() < 1e-15));
    }
}
