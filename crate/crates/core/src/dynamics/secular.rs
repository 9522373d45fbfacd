//! Birth–death population equations of the secular master equation:
//!
//! dp_n/dt = (Δ+γ)[(n+1)p_{n+1} − n p_n] + (Δ−γ)[n p_{n−1} − (n+1)p_n].
//!
//! The generator is tridiagonal with a spectral radius that grows like
//! (Δ+γ)·N, so large Fock spaces make the problem stiff. Steps use a
//! five-stage, fourth-order, L-stable singly diagonally implicit Runge–Kutta
//! method; each stage is one tridiagonal solve. Because the method is linear,
//! ⟨n⟩ follows the same scheme applied to the closed moment equation.
//!
//! When Δ ± γ turn negative the same equations describe backward diffusion,
//! and roundoff in the high Fock modes grows like e^{|∫Δ|N}. Such spans are
//! handled by the generating-function scheme in `characteristics`.

use serde::{Deserialize, Serialize};

use super::characteristics::evolve_characteristics;
use super::{substeps, SolverConfig};
use crate::analytics::{HeatingTrace, TraceMethod};
use crate::coefficients::{validate_grid, CoefficientGrid, CoefficientModel};
use crate::error::{Error, Result};

const DIAG: f64 = 0.25;
const STAGES: usize = 5;
const C: [f64; STAGES] = [0.25, 0.75, 11.0 / 20.0, 0.5, 1.0];
const A: [[f64; STAGES]; STAGES] = [
    [0.25, 0.0, 0.0, 0.0, 0.0],
    [0.5, 0.25, 0.0, 0.0, 0.0],
    [17.0 / 50.0, -1.0 / 25.0, 0.25, 0.0, 0.0],
    [371.0 / 1360.0, -137.0 / 2720.0, 15.0 / 544.0, 0.25, 0.0],
    [25.0 / 24.0, -49.0 / 48.0, 125.0 / 16.0, -85.0 / 12.0, 0.25],
];
const B: [f64; STAGES] = A[STAGES - 1];

/// How the secular population equations are integrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SecularScheme {
    /// Fock stepping when Δ ± γ ≥ 0 on the whole span, characteristics
    /// otherwise.
    #[default]
    Auto,
    /// SDIRK steps of the population vector.
    FockSteps,
    /// Generating function along characteristics, populations by FFT.
    Characteristics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecularResult {
    pub trace: HeatingTrace,
    /// Populations at every output time when `record_states` is set.
    pub populations: Option<Vec<Vec<f64>>>,
    pub final_populations: Vec<f64>,
    pub max_leak: f64,
    pub max_trace_drift: f64,
    pub min_population: f64,
    /// Scheme actually used.
    pub scheme: SecularScheme,
}

/// Tridiagonal generator at one instant.
struct Generator {
    down: f64,
    up: f64,
}

impl Generator {
    /// y = A p.
    fn apply(&self, p: &[f64], y: &mut [f64]) {
        let n = p.len();
        let (down, up) = (self.down, self.up);
        // interior rows: −(down·k + up(k+1))p_k + down(k+1)p_{k+1} + up·k·p_{k−1}
        y[0] = -up * p[0] + down * p[1];
        for k in 1..n - 1 {
            let kf = k as f64;
            y[k] = up * kf * p[k - 1] - (down * kf + up * (kf + 1.0)) * p[k] + down * (kf + 1.0) * p[k + 1];
        }
        let last = (n - 1) as f64;
        y[n - 1] = up * last * p[n - 2] - down * last * p[n - 1];
    }

    /// Solve (I − s A) x = rhs in place (Thomas algorithm).
    fn solve_shifted(&self, s: f64, rhs: &mut [f64], scratch: &mut [f64]) {
        let n = rhs.len();
        let (sd, su) = (s * self.down, s * self.up);
        // row k: sub = −su·k, diag = 1 + sd·k + su(k+1), sup = −sd(k+1); the
        // top row has no upward outflow
        let mut inv = 1.0 / (1.0 + su);
        scratch[0] = -sd * inv;
        rhs[0] *= inv;
        for k in 1..n {
            let kf = k as f64;
            let sub = -su * kf;
            let diag = if k + 1 < n { 1.0 + sd * kf + su * (kf + 1.0) } else { 1.0 + sd * kf };
            inv = 1.0 / (diag - sub * scratch[k - 1]);
            scratch[k] = -sd * (kf + 1.0) * inv;
            rhs[k] = (rhs[k] - sub * rhs[k - 1]) * inv;
        }
        for k in (0..n - 1).rev() {
            rhs[k] -= scratch[k] * rhs[k + 1];
        }
    }
}

fn generator(model: &dyn CoefficientModel, t: f64) -> Generator {
    let (delta, gamma) = model.delta_gamma(t);
    Generator {
        down: delta + gamma,
        up: delta - gamma,
    }
}

struct Workspace {
    stages: Vec<Vec<f64>>,
    tmp: Vec<f64>,
    scratch: Vec<f64>,
}

fn step(model: &dyn CoefficientModel, t: f64, h: f64, p: &mut [f64], ws: &mut Workspace) {
    let n = p.len();
    for i in 0..STAGES {
        let gen = generator(model, t + C[i] * h);
        // v = p + h Σ_{j<i} a_ij k_j ; k_i solves (I − hγA)k_i = A v
        ws.tmp.copy_from_slice(p);
        for j in 0..i {
            let w = h * A[i][j];
            if w != 0.0 {
                for (v, k) in ws.tmp.iter_mut().zip(&ws.stages[j]) {
                    *v += w * k;
                }
            }
        }
        let (before, rest) = ws.stages.split_at_mut(i);
        let _ = before;
        let ki = &mut rest[0];
        gen.apply(&ws.tmp, ki);
        gen.solve_shifted(h * DIAG, ki, &mut ws.scratch[..n]);
    }
    for j in 0..STAGES {
        let w = h * B[j];
        for (v, k) in p.iter_mut().zip(&ws.stages[j]) {
            *v += w * k;
        }
    }
}

/// Integrate the secular population equations from `initial` and report
/// ⟨n⟩ at each time of `times` (which must start at or after 0; the state is
/// taken to be `initial` at t = 0).
pub fn evolve_secular(initial: &[f64], model: &dyn CoefficientModel, cfg: &SolverConfig, times: &[f64]) -> Result<SecularResult> {
    cfg.validate(model.cutoff(), model.frequency())?;
    validate_grid(times)?;
    let scheme = match cfg.secular_scheme {
        SecularScheme::Auto => {
            let t_end = *times.last().expect("grid validated as non-empty");
            let (steps, h) = substeps(0.0, t_end, cfg.dt);
            let check: Vec<f64> = (0..=4 * steps.max(1)).map(|k| k as f64 * 0.25 * h).collect();
            let grid = CoefficientGrid::build(&check, model, 1e-3 * h)?;
            if grid.all_lindblad() {
                SecularScheme::FockSteps
            } else {
                SecularScheme::Characteristics
            }
        }
        s => s,
    };
    match scheme {
        SecularScheme::Characteristics => evolve_characteristics(initial, model, cfg, times),
        _ => evolve_fock_steps(initial, model, cfg, times),
    }
}

fn evolve_fock_steps(initial: &[f64], model: &dyn CoefficientModel, cfg: &SolverConfig, times: &[f64]) -> Result<SecularResult> {
    if initial.len() > cfg.dimension {
        return Err(Error::invalid("dimension", "smaller than the initial population vector"));
    }
    let n = cfg.dimension;
    let mut p = vec![0.0; n];
    p[..initial.len()].copy_from_slice(initial);

    let mut ws = Workspace {
        stages: vec![vec![0.0; n]; STAGES],
        tmp: vec![0.0; n],
        scratch: vec![0.0; n],
    };

    let mut values = Vec::with_capacity(times.len());
    let mut history = cfg.record_states.then(Vec::new);
    let mut max_leak = 0.0f64;
    let mut max_drift = 0.0f64;
    let mut min_population = p.iter().copied().fold(f64::INFINITY, f64::min);
    let mut t = 0.0;

    for &target in times {
        let (count, h) = substeps(t, target, cfg.dt);
        for k in 0..count {
            step(model, t + k as f64 * h, h, &mut p, &mut ws);
            let leak = p[n - 1] + p[n - 2];
            max_leak = max_leak.max(leak);
            if leak > cfg.leak_threshold {
                return Err(Error::TruncationLeak {
                    leak,
                    threshold: cfg.leak_threshold,
                    time: t + (k + 1) as f64 * h,
                    suggested: 2 * n,
                });
            }
        }
        t = target;

        let total: f64 = p.iter().sum();
        let drift = (total - 1.0).abs();
        max_drift = max_drift.max(drift);
        if drift > 1e-6 {
            return Err(Error::TraceDrift {
                drift,
                limit: 1e-6,
                time: t,
            });
        }
        min_population = min_population.min(p.iter().copied().fold(f64::INFINITY, f64::min));
        values.push(p.iter().enumerate().map(|(k, w)| k as f64 * w).sum::<f64>() / total);
        if let Some(h) = history.as_mut() {
            h.push(p.clone());
        }
    }

    Ok(SecularResult {
        trace: HeatingTrace::new(TraceMethod::Secular, times.to_vec(), values),
        populations: history,
        final_populations: p,
        max_leak,
        max_trace_drift: max_drift,
        min_population,
        scheme: SecularScheme::FockSteps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::ConstantCoefficients;

    #[test]
    fn tableau_order_conditions() {
        let sum = |f: &dyn Fn(usize) -> f64| (0..STAGES).map(f).sum::<f64>();
        let ac = |i: usize| (0..STAGES).map(|j| A[i][j] * C[j]).sum::<f64>();
        let ac2 = |i: usize| (0..STAGES).map(|j| A[i][j] * C[j] * C[j]).sum::<f64>();
        let aac = |i: usize| (0..STAGES).map(|j| A[i][j] * ac(j)).sum::<f64>();
        for i in 0..STAGES {
            let row: f64 = A[i].iter().sum();
            assert!((row - C[i]).abs() < 1e-14);
            assert_eq!(A[i][i], DIAG);
        }
        let checks = [
            (sum(&|i| B[i]), 1.0),
            (sum(&|i| B[i] * C[i]), 0.5),
            (sum(&|i| B[i] * C[i] * C[i]), 1.0 / 3.0),
            (sum(&|i| B[i] * ac(i)), 1.0 / 6.0),
            (sum(&|i| B[i] * C[i].powi(3)), 0.25),
            (sum(&|i| B[i] * C[i] * ac(i)), 0.125),
            (sum(&|i| B[i] * ac2(i)), 1.0 / 12.0),
            (sum(&|i| B[i] * aac(i)), 1.0 / 24.0),
        ];
        for (got, want) in checks {
            assert!((got - want).abs() < 1e-13, "{got} vs {want}");
        }
    }

    #[test]
    fn tridiagonal_solve_inverts_shifted_generator() {
        let gen = Generator { down: 3.0, up: 1.5 };
        let x: Vec<f64> = (0..9).map(|k| 0.1 * k as f64 - 0.3).collect();
        let mut ax = vec![0.0; 9];
        gen.apply(&x, &mut ax);
        let s = 0.7;
        let mut rhs: Vec<f64> = x.iter().zip(&ax).map(|(a, b)| a - s * b).collect();
        let mut scratch = vec![0.0; 9];
        gen.solve_shifted(s, &mut rhs, &mut scratch);
        for (a, b) in rhs.iter().zip(&x) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    fn constant(delta: f64, gamma: f64) -> ConstantCoefficients {
        ConstantCoefficients {
            delta,
            gamma,
            pi: 0.0,
            rshift: 0.0,
            cutoff: 1e6,
            frequency: 1e6,
        }
    }

    #[test]
    fn zero_generator_keeps_state() {
        let model = constant(0.0, 0.0);
        let initial = [0.0, 0.3, 0.7];
        let cfg = SolverConfig::new(8, 2e-8);
        let times: Vec<f64> = (0..=10).map(|i| i as f64 * 1e-7).collect();
        let out = evolve_secular(&initial, &model, &cfg, &times).unwrap();
        assert_eq!(&out.final_populations[..3], &initial);
        assert!(out.trace.values.iter().all(|&v| v == 1.7));
    }

    #[test]
    fn constant_rates_follow_moment_equation() {
        let (delta, gamma) = (2e5, 5e4);
        let model = constant(delta, gamma);
        let cfg = SolverConfig::new(80, 2.5e-8);
        let times: Vec<f64> = (0..=20).map(|i| i as f64 * 1e-6).collect();
        let out = evolve_secular(&[0.0, 1.0], &model, &cfg, &times).unwrap();
        for (t, v) in times.iter().zip(&out.trace.values) {
            let decay = (-2.0 * gamma * t).exp();
            let want = decay * 1.0 + (delta - gamma) * (1.0 - decay) / (2.0 * gamma);
            assert!((v - want).abs() < 1e-9 * want, "t={t:e}");
        }
        assert!(out.max_trace_drift < 1e-12);
        assert!(out.min_population > -1e-10);
    }

    #[test]
    fn leak_is_reported() {
        let model = constant(5e6, 0.0);
        let cfg = SolverConfig::new(6, 2.5e-8);
        let err = evolve_secular(&[1.0], &model, &cfg, &[2e-6]).unwrap_err();
        assert!(matches!(err, Error::TruncationLeak { suggested: 12, .. }));
    }
}
