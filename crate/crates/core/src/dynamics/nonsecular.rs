//! Full density-matrix evolution under
//!
//! dρ/dt = −i[H₀,ρ] − Δ[X,[X,ρ]] + Π[X,[P,ρ]] + (i/2) r [X²,ρ] − iγ[X,{P,ρ}]
//!
//! with X = (a + a†)/√2, P = i(a† − a)/√2 and H₀ = ω₀(a†a + ½).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::state::DensityMatrix;
use super::{substeps, SolverConfig};
use crate::analytics::{HeatingTrace, TraceMethod};
use crate::coefficients::{validate_grid, CoefficientModel, CoefficientSample};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonsecularResult {
    pub trace: HeatingTrace,
    pub states: Option<Vec<DensityMatrix>>,
    pub final_state: DensityMatrix,
    pub max_leak: f64,
    pub max_trace_drift: f64,
    pub max_hermiticity_deviation: f64,
}

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Operator with nonzero entries only on the diagonals −2..=2; `rows[i][d]`
/// holds the entry at column i + d − 2.
struct Banded {
    rows: Vec<[Complex64; 5]>,
}

impl Banded {
    fn build(n: usize, entry: impl Fn(usize, isize) -> Complex64) -> Self {
        let rows = (0..n)
            .map(|i| {
                let mut row = [Complex64::new(0.0, 0.0); 5];
                for (d, slot) in row.iter_mut().enumerate() {
                    let j = i as isize + d as isize - 2;
                    if j >= 0 && (j as usize) < n {
                        *slot = entry(i, d as isize - 2);
                    }
                }
                row
            })
            .collect();
        Self { rows }
    }

    /// X = (a + a†)/√2
    fn position(n: usize) -> Self {
        let f = std::f64::consts::FRAC_1_SQRT_2;
        Self::build(n, |i, d| match d {
            1 => Complex64::new(f * ((i + 1) as f64).sqrt(), 0.0),
            -1 => Complex64::new(f * (i as f64).sqrt(), 0.0),
            _ => Complex64::new(0.0, 0.0),
        })
    }

    /// P = i(a† − a)/√2
    fn momentum(n: usize) -> Self {
        let f = std::f64::consts::FRAC_1_SQRT_2;
        Self::build(n, |i, d| match d {
            1 => -I * f * ((i + 1) as f64).sqrt(),
            -1 => I * f * (i as f64).sqrt(),
            _ => Complex64::new(0.0, 0.0),
        })
    }

    /// X² = (a² + a†² + 2a†a + 1)/2
    fn position_squared(n: usize) -> Self {
        Self::build(n, |i, d| {
            let v = match d {
                2 => 0.5 * (((i + 1) * (i + 2)) as f64).sqrt(),
                -2 => 0.5 * ((i * (i - 1)) as f64).sqrt(),
                0 => i as f64 + 0.5,
                _ => 0.0,
            };
            Complex64::new(v, 0.0)
        })
    }

    /// XP (sign = 1) or PX (sign = −1), i.e. (i/2)(a†² − a² ± 1)
    fn mixed(n: usize, sign: f64) -> Self {
        Self::build(n, |i, d| match d {
            2 => -0.5 * I * (((i + 1) * (i + 2)) as f64).sqrt(),
            -2 => 0.5 * I * ((i * (i - 1)) as f64).sqrt(),
            0 => 0.5 * I * sign,
            _ => Complex64::new(0.0, 0.0),
        })
    }

    /// out = B·m
    fn left(&self, m: &[Complex64], out: &mut [Complex64]) {
        let n = self.rows.len();
        for (i, row) in self.rows.iter().enumerate() {
            let dst = &mut out[i * n..(i + 1) * n];
            dst.fill(Complex64::new(0.0, 0.0));
            for (d, b) in row.iter().enumerate() {
                if *b == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let k = i + d - 2;
                for (o, v) in dst.iter_mut().zip(&m[k * n..(k + 1) * n]) {
                    *o += b * v;
                }
            }
        }
    }

    /// out = m·B
    fn right(&self, m: &[Complex64], out: &mut [Complex64]) {
        let n = self.rows.len();
        for i in 0..n {
            let src = &m[i * n..(i + 1) * n];
            for j in 0..n {
                let mut v = Complex64::new(0.0, 0.0);
                for d in 0..5 {
                    // entry B[k][d] sits at column k + d − 2 = j
                    let k = j as isize - d as isize + 2;
                    if k >= 0 && (k as usize) < n {
                        v += src[k as usize] * self.rows[k as usize][d];
                    }
                }
                out[i * n + j] = v;
            }
        }
    }
}

/// X², XP and PX equal the products of the truncated X and P, so every term
/// of the generator is a commutator of N×N matrices and the trace is kept to
/// roundoff.
struct Workspace {
    x: Banded,
    p: Banded,
    x2: Banded,
    xp: Banded,
    px: Banded,
    x_rho: Vec<Complex64>,
    p_rho: Vec<Complex64>,
    buf: Vec<Complex64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        let z = vec![Complex64::new(0.0, 0.0); n * n];
        let mut x2 = Banded::position_squared(n);
        let mut xp = Banded::mixed(n, 1.0);
        let mut px = Banded::mixed(n, -1.0);
        // entries of the truncated products X·X, X·P and P·X at the top level
        let top = (n - 1) as f64 / 2.0;
        x2.rows[n - 1][2] = Complex64::new(top, 0.0);
        xp.rows[n - 1][2] = -I * top;
        px.rows[n - 1][2] = I * top;
        Self {
            x: Banded::position(n),
            p: Banded::momentum(n),
            x2,
            xp,
            px,
            x_rho: z.clone(),
            p_rho: z.clone(),
            buf: z,
        }
    }
}

fn accumulate(out: &mut [Complex64], factor: Complex64, term: &[Complex64]) {
    for (o, v) in out.iter_mut().zip(term) {
        *o += factor * v;
    }
}

fn rhs(rho: &[Complex64], c: &CoefficientSample, w0: f64, ws: &mut Workspace, out: &mut [Complex64]) {
    let n = ws.x.rows.len();
    let (delta, pi, gamma, half_r) = (c.delta, c.pi, c.gamma, 0.5 * c.rshift);
    // −i[H₀, ρ]
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = -I * w0 * (i as f64 - j as f64) * rho[i * n + j];
        }
    }
    ws.x.left(rho, &mut ws.x_rho);
    ws.p.left(rho, &mut ws.p_rho);

    // −Δ(X²ρ − 2XρX + ρX²) + (i/2) r (X²ρ − ρX²)
    ws.x2.left(rho, &mut ws.buf);
    accumulate(out, Complex64::new(-delta, half_r), &ws.buf);
    ws.x2.right(rho, &mut ws.buf);
    accumulate(out, Complex64::new(-delta, -half_r), &ws.buf);
    ws.x.right(&ws.x_rho, &mut ws.buf);
    accumulate(out, Complex64::new(2.0 * delta, 0.0), &ws.buf);

    // Π(XPρ − XρP − PρX + ρPX) − iγ(XPρ + XρP − PρX − ρPX)
    ws.xp.left(rho, &mut ws.buf);
    accumulate(out, Complex64::new(pi, -gamma), &ws.buf);
    ws.px.right(rho, &mut ws.buf);
    accumulate(out, Complex64::new(pi, gamma), &ws.buf);
    ws.p.right(&ws.x_rho, &mut ws.buf);
    accumulate(out, Complex64::new(-pi, -gamma), &ws.buf);
    ws.x.right(&ws.p_rho, &mut ws.buf);
    accumulate(out, Complex64::new(-pi, gamma), &ws.buf);
}

/// Bound on the generator's spectral radius, used to pick stable RK4 steps.
fn spectral_bound(c: &CoefficientSample, w0: f64, n: usize) -> f64 {
    let nf = n as f64;
    w0 * nf + 4.0 * c.delta.abs() * nf + 2.0 * c.pi.abs() * nf + c.rshift.abs() * nf + 4.0 * c.gamma.abs() * nf
}

/// Integrate the full master equation with classical RK4. Each nominal step
/// is split into equal internal sub-steps so that h·(spectral bound) ≤ 1.5,
/// inside the RK4 stability region on the imaginary axis.
pub fn evolve_nonsecular(initial: &DensityMatrix, model: &dyn CoefficientModel, cfg: &SolverConfig, times: &[f64]) -> Result<NonsecularResult> {
    cfg.validate(model.cutoff(), model.frequency())?;
    validate_grid(times)?;
    let n = cfg.dimension;
    if initial.dimension > n {
        return Err(Error::invalid("dimension", "smaller than the initial state"));
    }
    let w0 = model.frequency();
    let mut rho = DensityMatrix::zeros(n);
    for i in 0..initial.dimension {
        for j in 0..initial.dimension {
            rho.data[i * n + j] = initial.get(i, j);
        }
    }

    // largest coefficient magnitudes over the run, sampled at half steps
    let t_end = *times.last().expect("grid validated as non-empty");
    let scan = ((2.0 * t_end / cfg.dt).ceil() as usize).max(1);
    let mut envelope = CoefficientSample::zero(model.method());
    for k in 0..=scan {
        let c = model.sample(t_end * k as f64 / scan as f64);
        envelope.delta = envelope.delta.max(c.delta.abs());
        envelope.gamma = envelope.gamma.max(c.gamma.abs());
        envelope.pi = envelope.pi.max(c.pi.abs());
        envelope.rshift = envelope.rshift.max(c.rshift.abs());
    }
    let bound = 1.1 * spectral_bound(&envelope, w0, n);
    let inner = ((cfg.dt * bound / 1.5).ceil() as usize).max(1);

    let mut ws = Workspace::new(n);
    let zero = vec![Complex64::new(0.0, 0.0); n * n];
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (zero.clone(), zero.clone(), zero.clone(), zero.clone(), zero);

    let mut values = Vec::with_capacity(times.len());
    let mut history = cfg.record_states.then(Vec::new);
    let (mut max_leak, mut max_drift, mut max_herm) = (0.0f64, 0.0f64, 0.0f64);
    let mut t = 0.0;

    for &target in times {
        let (count, outer_h) = substeps(t, target, cfg.dt);
        let h = outer_h / inner as f64;
        for k in 0..count * inner {
            let s = t + k as f64 * h;
            let c0 = model.sample(s);
            let cm = model.sample(s + 0.5 * h);
            let c1 = model.sample(s + h);
            rhs(&rho.data, &c0, w0, &mut ws, &mut k1);
            for q in 0..n * n {
                tmp[q] = rho.data[q] + 0.5 * h * k1[q];
            }
            rhs(&tmp, &cm, w0, &mut ws, &mut k2);
            for q in 0..n * n {
                tmp[q] = rho.data[q] + 0.5 * h * k2[q];
            }
            rhs(&tmp, &cm, w0, &mut ws, &mut k3);
            for q in 0..n * n {
                tmp[q] = rho.data[q] + h * k3[q];
            }
            rhs(&tmp, &c1, w0, &mut ws, &mut k4);
            for q in 0..n * n {
                rho.data[q] += h / 6.0 * (k1[q] + 2.0 * k2[q] + 2.0 * k3[q] + k4[q]);
            }

            let herm = rho.hermiticity_deviation();
            max_herm = max_herm.max(herm);
            if herm > 1e-8 {
                return Err(Error::HermiticityDrift { deviation: herm, time: s + h });
            }
            rho.symmetrize();
            let leak = rho.get(n - 1, n - 1).re + rho.get(n - 2, n - 2).re;
            max_leak = max_leak.max(leak);
            if leak > cfg.leak_threshold {
                return Err(Error::TruncationLeak {
                    leak,
                    threshold: cfg.leak_threshold,
                    time: s + h,
                    suggested: 2 * n,
                });
            }
        }
        t = target;

        let tr = rho.trace().re;
        let drift = (tr - 1.0).abs();
        max_drift = max_drift.max(drift);
        if drift > 1e-6 {
            return Err(Error::TraceDrift { drift, limit: 1e-6, time: t });
        }
        let mean: f64 = (0..n).map(|k| k as f64 * rho.get(k, k).re).sum();
        values.push(mean / tr);
        if let Some(h) = history.as_mut() {
            h.push(rho.clone());
        }
    }

    Ok(NonsecularResult {
        trace: HeatingTrace::new(TraceMethod::Nonsecular, times.to_vec(), values),
        states: history,
        final_state: rho,
        max_leak,
        max_trace_drift: max_drift,
        max_hermiticity_deviation: max_herm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{CoefficientMethod, ConstantCoefficients};

    fn dense(b: &Banded, left: bool) -> Vec<Complex64> {
        let n = b.rows.len();
        let mut id = vec![Complex64::new(0.0, 0.0); n * n];
        for k in 0..n {
            id[k * n + k] = Complex64::new(1.0, 0.0);
        }
        let mut out = vec![Complex64::new(0.0, 0.0); n * n];
        if left {
            b.left(&id, &mut out);
        } else {
            b.right(&id, &mut out);
        }
        out
    }

    fn product(a: &[Complex64], b: &[Complex64], n: usize) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..n {
            for k in 0..n {
                for j in 0..n {
                    out[i * n + j] += a[i * n + k] * b[k * n + j];
                }
            }
        }
        out
    }

    #[test]
    fn ladder_operators_match_definitions() {
        let n = 7;
        let x = dense(&Banded::position(n), true);
        let p = dense(&Banded::momentum(n), true);
        let f = std::f64::consts::FRAC_1_SQRT_2;
        for i in 0..n {
            for j in 0..n {
                // a_ij = √j δ_{i,j−1}
                let a = if j == i + 1 { (j as f64).sqrt() } else { 0.0 };
                let ad = if i == j + 1 { (i as f64).sqrt() } else { 0.0 };
                assert!((x[i * n + j] - Complex64::new(f * (a + ad), 0.0)).norm() < 1e-15);
                assert!((p[i * n + j] - I * f * (ad - a)).norm() < 1e-15);
            }
        }
        assert_eq!(x, dense(&Banded::position(n), false));
        assert_eq!(p, dense(&Banded::momentum(n), false));

        // the workspace products are the truncated matrix products
        let ws = Workspace::new(n);
        let pairs = [
            (dense(&ws.x2, true), product(&x, &x, n)),
            (dense(&ws.xp, true), product(&x, &p, n)),
            (dense(&ws.px, true), product(&p, &x, n)),
        ];
        for (banded, truncated) in pairs {
            for (u, v) in banded.iter().zip(&truncated) {
                assert!((u - v).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn generator_matches_dense_reference() {
        // exact operators on a larger space, applied to a state supported on
        // the first n levels, restricted back to n levels; only the top row
        // and column feel the truncation
        let (n, m) = (6, 10);
        let x = dense(&Banded::position(m), true);
        let p = dense(&Banded::momentum(m), true);
        let mut rho_big = vec![Complex64::new(0.0, 0.0); m * m];
        let mut rho = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..n {
            for j in 0..n {
                let v = Complex64::new(((i * 7 + j * 3) % 5) as f64 * 0.1, (i as f64 - j as f64) * 0.05);
                rho[i * n + j] = v;
                rho_big[i * m + j] = v;
            }
        }
        let c = CoefficientSample {
            t: 0.0,
            delta: 1.3,
            gamma: 0.7,
            pi: -0.4,
            rshift: 0.9,
            method: CoefficientMethod::ClosedForm,
        };
        let w0 = 2.0;
        let comm = |a: &[Complex64], b: &[Complex64]| -> Vec<Complex64> {
            product(a, b, m).iter().zip(product(b, a, m)).map(|(u, v)| u - v).collect()
        };
        let anti = |a: &[Complex64], b: &[Complex64]| -> Vec<Complex64> {
            product(a, b, m).iter().zip(product(b, a, m)).map(|(u, v)| u + v).collect()
        };
        let mut h = vec![Complex64::new(0.0, 0.0); m * m];
        for k in 0..m {
            h[k * m + k] = Complex64::new(w0 * (k as f64 + 0.5), 0.0);
        }
        let x2 = product(&x, &x, m);
        let terms = [
            (-I, comm(&h, &rho_big)),
            (Complex64::new(-c.delta, 0.0), comm(&x, &comm(&x, &rho_big))),
            (Complex64::new(c.pi, 0.0), comm(&x, &comm(&p, &rho_big))),
            (0.5 * I * c.rshift, comm(&x2, &rho_big)),
            (-I * c.gamma, comm(&x, &anti(&p, &rho_big))),
        ];
        let mut ws = Workspace::new(n);
        let mut out = vec![Complex64::new(0.0, 0.0); n * n];
        rhs(&rho, &c, w0, &mut ws, &mut out);
        for i in 0..n - 1 {
            for j in 0..n - 1 {
                let want: Complex64 = terms.iter().map(|(f, t)| f * t[i * m + j]).sum();
                assert!((out[i * n + j] - want).norm() < 1e-12, "{i},{j}: {} vs {want}", out[i * n + j]);
            }
        }
    }

    #[test]
    fn trace_is_kept_and_truncation_converges() {
        let model = ConstantCoefficients {
            delta: 2e4,
            gamma: 0.5,
            pi: 2e4,
            rshift: 1.0,
            cutoff: 1e6,
            frequency: 1e6,
        };
        let times: Vec<f64> = (1..=10).map(|i| i as f64 * 1e-6).collect();
        let small = evolve_nonsecular(&DensityMatrix::diagonal(&[1.0]), &model, &SolverConfig::new(20, 2.5e-8), &times).unwrap();
        let large = evolve_nonsecular(&DensityMatrix::diagonal(&[1.0]), &model, &SolverConfig::new(40, 2.5e-8), &times).unwrap();
        assert!(small.max_trace_drift < 1e-12 && large.max_trace_drift < 1e-12);
        for (a, b) in small.trace.values.iter().zip(&large.trace.values) {
            assert!((a - b).abs() < 1e-10 * a.abs(), "{a} vs {b}");
        }
    }

    #[test]
    fn vacuum_has_zero_heating_without_coefficients() {
        let model = ConstantCoefficients {
            delta: 0.0,
            gamma: 0.0,
            pi: 0.0,
            rshift: 0.0,
            cutoff: 1e6,
            frequency: 1e6,
        };
        let mut cfg = SolverConfig::new(6, 2.5e-8);
        cfg.coefficients = CoefficientMethod::ClosedForm;
        let out = evolve_nonsecular(&DensityMatrix::diagonal(&[0.0, 1.0]), &model, &cfg, &[1e-6]).unwrap();
        assert!((out.trace.values[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn pure_diffusion_grows_linearly() {
        // with only Δ, d⟨n⟩/dt = Δ exactly
        let delta = 1e5;
        let model = ConstantCoefficients {
            delta,
            gamma: 0.0,
            pi: 0.0,
            rshift: 0.0,
            cutoff: 1e6,
            frequency: 1e6,
        };
        let cfg = SolverConfig::new(40, 2.5e-8);
        let times: Vec<f64> = (1..=5).map(|i| i as f64 * 1e-6).collect();
        let out = evolve_nonsecular(&DensityMatrix::diagonal(&[1.0]), &model, &cfg, &times).unwrap();
        for (t, v) in times.iter().zip(&out.trace.values) {
            assert!((v - delta * t).abs() < 1e-9, "{v} vs {}", delta * t);
        }
        assert!(out.max_trace_drift < 1e-12);
    }
}
