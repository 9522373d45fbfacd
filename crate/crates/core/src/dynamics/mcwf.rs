//! Quantum-jump unraveling of the secular master equation with jump
//! operators √(Δ+γ)·a and √(Δ−γ)·a†.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::substeps;
use crate::analytics::{HeatingTrace, TraceMethod};
use crate::coefficients::{validate_grid, CoefficientModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub trajectories: usize,
    pub seed: u64,
    pub dt: f64,
    pub dimension: usize,
    pub leak_threshold: f64,
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trajectories == 0 {
            return Err(Error::invalid("trajectories", "must be >= 1"));
        }
        if self.dimension < 4 {
            return Err(Error::invalid("dimension", "must be >= 4"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid("dt", "must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    /// Ensemble mean ⟨n⟩ with standard errors.
    pub trace: HeatingTrace,
    /// Ensemble-averaged weight in the top two levels, per output time.
    pub leak: Vec<f64>,
    pub jumps: u64,
}

/// Random stream for one trajectory: the master seed selects the key and the
/// trajectory index selects the stream, so results do not depend on which
/// thread runs which trajectory.
fn trajectory_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

struct Trajectory {
    mean_n: Vec<f64>,
    leak: Vec<f64>,
    jumps: u64,
}

fn run_trajectory(
    index: usize,
    initial: &[f64],
    model: &dyn CoefficientModel,
    cfg: &EnsembleConfig,
    times: &[f64],
) -> Result<Trajectory> {
    let n = cfg.dimension;
    let w0 = model.frequency();
    let mut rng = trajectory_rng(cfg.seed, index);

    // a diagonal initial state is sampled as one Fock state per trajectory
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut start = initial.len() - 1;
    for (k, p) in initial.iter().enumerate() {
        acc += p;
        if u < acc {
            start = k;
            break;
        }
    }
    let mut psi = vec![Complex64::new(0.0, 0.0); n];
    psi[start] = Complex64::new(1.0, 0.0);
    // scratch stays all-zero between steps; psi is zero outside [lo, hi], so
    // loops skip exact zeros without changing any floating-point result
    let mut scratch = psi.clone();
    scratch[start] = Complex64::new(0.0, 0.0);
    let (mut lo, mut hi) = (start, start);

    let mut mean_n = Vec::with_capacity(times.len());
    let mut leak = Vec::with_capacity(times.len());
    let mut jumps = 0;
    let mut t = 0.0;
    for &target in times {
        let (count, h) = substeps(t, target, cfg.dt);
        for k in 0..count {
            let s = t + (k as f64 + 0.5) * h;
            let (delta, gamma) = model.delta_gamma(s);
            let (down, up) = (delta + gamma, delta - gamma);
            if down < 0.0 || up < 0.0 {
                return Err(Error::NegativeRate { start: s - 0.5 * h, end: s + 0.5 * h });
            }
            // ⟨a†a⟩ and ⟨aa†⟩ in the truncated space
            let mut occ = 0.0;
            let mut vac = 0.0;
            for m in lo..=hi {
                let w = psi[m].norm_sqr();
                occ += m as f64 * w;
                if m + 1 < n {
                    vac += (m as f64 + 1.0) * w;
                }
            }
            let p_down = h * down * occ;
            let p_up = h * up * vac;
            if p_down + p_up > 0.1 {
                return Err(Error::StepTooLarge {
                    probability: p_down + p_up,
                    time: s,
                });
            }
            let r: f64 = rng.random();
            if r < p_down {
                let (new_lo, new_hi) = (lo.saturating_sub(1), hi - 1);
                for m in new_lo..=new_hi {
                    scratch[m] = psi[m + 1] * ((m + 1) as f64).sqrt();
                }
                psi[lo..=hi].fill(Complex64::new(0.0, 0.0));
                std::mem::swap(&mut psi, &mut scratch);
                (lo, hi) = (new_lo, new_hi);
                jumps += 1;
            } else if r < p_down + p_up {
                let (new_lo, new_hi) = (lo + 1, (hi + 1).min(n - 1));
                for m in new_lo..=new_hi {
                    scratch[m] = psi[m - 1] * (m as f64).sqrt();
                }
                psi[lo..=hi].fill(Complex64::new(0.0, 0.0));
                std::mem::swap(&mut psi, &mut scratch);
                (lo, hi) = (new_lo, new_hi);
                jumps += 1;
            } else {
                for m in lo..=hi {
                    let mf = m as f64;
                    let up_level = if m + 1 < n { up * (mf + 1.0) } else { 0.0 };
                    let decay = -0.5 * h * (down * mf + up_level);
                    psi[m] *= Complex64::from_polar(decay.exp(), -w0 * mf * h);
                }
            }
            let norm = psi[lo..=hi].iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            for c in psi[lo..=hi].iter_mut() {
                *c /= norm;
            }
        }
        t = target;
        let mut occ = 0.0;
        for m in lo..=hi {
            occ += m as f64 * psi[m].norm_sqr();
        }
        mean_n.push(occ);
        leak.push(psi[n - 1].norm_sqr() + psi[n - 2].norm_sqr());
    }
    Ok(Trajectory { mean_n, leak, jumps })
}

/// First span of half-step samples on `[0, t_end]` where Δ ± γ < 0,
/// widened by half a step on each side.
fn first_negative_span(model: &dyn CoefficientModel, t_end: f64, dt: f64) -> Option<(f64, f64)> {
    let (steps, h) = substeps(0.0, t_end, dt);
    let half = 0.5 * h;
    let samples = 2 * steps.max(1);
    let negative = |k: usize| {
        let (delta, gamma) = model.delta_gamma(k as f64 * half);
        delta + gamma < 0.0 || delta - gamma < 0.0
    };
    let first = (0..=samples).find(|&k| negative(k))?;
    let last = (first..=samples).take_while(|&k| negative(k)).last().unwrap_or(first);
    Some((((first as f64) - 1.0).max(0.0) * half, ((last + 1) as f64 * half).min(t_end)))
}

/// Sum in a fixed binary tree over the index range, independent of threads.
fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        len if len <= 8 => values.iter().sum(),
        len => {
            let (a, b) = values.split_at(len / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

/// Ensemble of quantum-jump trajectories started from the diagonal state
/// `initial`. The rates must be non-negative over the whole span; this is
/// checked at every half step before any trajectory runs.
pub fn mcwf_ensemble(initial: &[f64], model: &dyn CoefficientModel, cfg: &EnsembleConfig, times: &[f64]) -> Result<EnsembleResult> {
    cfg.validate()?;
    validate_grid(times)?;
    if initial.is_empty() || initial.len() > cfg.dimension {
        return Err(Error::invalid("dimension", "initial populations do not fit the Fock dimension"));
    }

    let t_end = *times.last().expect("grid validated as non-empty");
    if let Some((start, end)) = first_negative_span(model, t_end, cfg.dt) {
        return Err(Error::NegativeRate { start, end });
    }

    let runs: Vec<Trajectory> = (0..cfg.trajectories)
        .into_par_iter()
        .map(|i| run_trajectory(i, initial, model, cfg, times))
        .collect::<Result<_>>()?;

    let m = cfg.trajectories as f64;
    let points = times.len();
    let mut mean = Vec::with_capacity(points);
    let mut stderr = Vec::with_capacity(points);
    let mut leak = Vec::with_capacity(points);
    let mut column = vec![0.0; runs.len()];
    for g in 0..points {
        for (c, r) in column.iter_mut().zip(&runs) {
            *c = r.mean_n[g];
        }
        let mu = pairwise_sum(&column) / m;
        for c in column.iter_mut() {
            *c = (*c - mu) * (*c - mu);
        }
        let var = if runs.len() > 1 { pairwise_sum(&column) / (m - 1.0) } else { 0.0 };
        mean.push(mu);
        stderr.push((var / m).sqrt());

        for (c, r) in column.iter_mut().zip(&runs) {
            *c = r.leak[g];
        }
        let lk = pairwise_sum(&column) / m;
        if lk > cfg.leak_threshold {
            return Err(Error::TruncationLeak {
                leak: lk,
                threshold: cfg.leak_threshold,
                time: times[g],
                suggested: 2 * cfg.dimension,
            });
        }
        leak.push(lk);
    }

    let mut trace = HeatingTrace::new(TraceMethod::Mcwf, times.to_vec(), mean);
    trace.stderr = Some(stderr);
    Ok(EnsembleResult {
        trace,
        leak,
        jumps: runs.iter().map(|r| r.jumps).sum(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::ConstantCoefficients;

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

    fn cfg(trajectories: usize) -> EnsembleConfig {
        EnsembleConfig {
            trajectories,
            seed: 7,
            dt: 2.5e-8,
            dimension: 16,
            leak_threshold: 1e-8,
        }
    }

    #[test]
    fn no_rates_keep_fock_state() {
        let model = constant(0.0, 0.0);
        let out = mcwf_ensemble(&[0.0, 0.0, 1.0], &model, &cfg(1), &[0.0, 1e-6, 2e-6]).unwrap();
        assert!(out.trace.values.iter().all(|v| (v - 2.0).abs() < 1e-12));
        assert_eq!(out.jumps, 0);
    }

    #[test]
    fn negative_rates_are_rejected() {
        let model = constant(1e3, 2e3);
        let err = mcwf_ensemble(&[1.0], &model, &cfg(4), &[1e-6]).unwrap_err();
        assert!(matches!(err, Error::NegativeRate { .. }));
    }

    #[test]
    fn oversized_steps_are_rejected() {
        let model = constant(3e6, 0.0);
        let mut c = cfg(2);
        c.dt = 1e-7;
        let err = mcwf_ensemble(&[0.0, 0.0, 0.0, 0.0, 1.0], &model, &c, &[1e-6]).unwrap_err();
        assert!(matches!(err, Error::StepTooLarge { .. }));
    }

    #[test]
    fn streams_are_distinct_and_reproducible() {
        let a: u64 = trajectory_rng(1, 0).random();
        let b: u64 = trajectory_rng(1, 1).random();
        let c: u64 = trajectory_rng(1, 0).random();
        assert_ne!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn pairwise_sum_is_exact_on_integers() {
        let v: Vec<f64> = (0..1001).map(|k| k as f64).collect();
        assert_eq!(pairwise_sum(&v), 500_500.0);
    }
}
