//! Comparison report and CSV emission.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use serde::Serialize;

use crate::analytics::{HeatingTrace, Timescales, TraceMethod};
use crate::coefficients::{CoefficientGrid, Regime, SignChange};
use crate::dynamics::SecularScheme;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairDeviation {
    pub first: TraceMethod,
    pub second: TraceMethod,
    /// max |a − b| / max(|a|, |b|) over the compared points.
    pub max_relative: f64,
    pub mean_relative: f64,
    /// Points where both traces are below 1e-12 of their common scale are
    /// skipped; this counts the rest.
    pub points_compared: usize,
}

/// Relative deviation of two traces on a shared grid.
pub fn pair_deviation(a: &HeatingTrace, b: &HeatingTrace) -> PairDeviation {
    let scale = a.values.iter().chain(&b.values).fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = 1e-12 * scale;
    let mut max = 0.0f64;
    let mut sum = 0.0;
    let mut count = 0;
    for (x, y) in a.values.iter().zip(&b.values) {
        let denom = x.abs().max(y.abs());
        if denom <= floor || denom == 0.0 {
            continue;
        }
        let d = (x - y).abs() / denom;
        max = max.max(d);
        sum += d;
        count += 1;
    }
    PairDeviation {
        first: a.method,
        second: b.method,
        max_relative: max,
        mean_relative: if count > 0 { sum / count as f64 } else { 0.0 },
        points_compared: count,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeSummary {
    /// Fraction of [0, t_max] on which Δ − γ or Δ + γ is negative somewhere.
    pub non_lindblad_fraction: f64,
    /// Number of maximal runs of non-Lindblad grid intervals.
    pub non_lindblad_intervals: usize,
    pub delta_negative: bool,
    pub sign_changes: Vec<SignChange>,
}

impl RegimeSummary {
    pub fn from_grid(grid: &CoefficientGrid) -> Self {
        let mut runs = 0;
        let mut previous = Regime::Lindblad;
        for i in &grid.intervals {
            if i.regime == Regime::NonLindblad && previous == Regime::Lindblad {
                runs += 1;
            }
            previous = i.regime;
        }
        Self {
            non_lindblad_fraction: grid.non_lindblad_fraction(),
            non_lindblad_intervals: runs,
            delta_negative: grid.samples.iter().any(|s| s.delta < 0.0),
            sign_changes: grid.sign_changes.clone(),
        }
    }
}

/// A convention chosen where an alternative form is also in circulation,
/// attached whenever the affected quantity is computed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Notice {
    pub id: &'static str,
    pub message: &'static str,
}

pub const NOTICE_GAMMA_FACTOR: Notice = Notice {
    id: "gamma_factor",
    message: "Gamma(t) is taken as 2*integral(gamma), so the Markov decay rate is 2*gamma(inf) and tau_T = 1/(2*gamma(inf)). \
              The alternative thermalization time 1/gamma(inf) is reported as thermalization_nominal.",
};

pub const NOTICE_SINE_COEFFICIENT: Notice = Notice {
    id: "short_time_sine_coefficient",
    message: "The short-time integral of Delta carries -2r e^{-w_c t} sin(w0 t) in its braces, the coefficient for which it \
              vanishes to second order at t = 0. A coefficient of -r would not.",
};

pub const NOTICE_SMALL_R_PREFACTOR: Notice = Notice {
    id: "small_r_prefactor",
    message: "The small-r formula uses the prefactor 2 alpha^2 kT r^2 / w_c, the r << 1 limit of the short-time formula. \
              A prefactor of 2 alpha^2 kT/(pi w_c) would differ by a factor of pi.",
};

pub const NOTICE_FRONT_FACTOR: Notice = Notice {
    id: "fig2_front_factor",
    message: "Two values of the front factor 2 alpha^2 kT/pi are in use for r = 10: 0.84e9 Hz (preset fig2) \
              and 0.84e7 Hz (preset fig2_text).",
};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverDiagnostics {
    pub method: TraceMethod,
    pub dimension: usize,
    pub dt: f64,
    pub max_leak: f64,
    pub max_trace_drift: Option<f64>,
    pub trajectories: Option<usize>,
    pub seed: Option<u64>,
    pub scheme: Option<SecularScheme>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportParameters {
    pub omega_c: f64,
    pub omega0: f64,
    pub ratio: f64,
    pub alpha2: f64,
    pub alpha2_kt: f64,
    pub kt: f64,
    pub high_temperature: bool,
    pub n0: f64,
    pub t_max: f64,
    pub points: usize,
    pub coefficients: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub preset: Option<String>,
    pub parameters: ReportParameters,
    pub methods: Vec<TraceMethod>,
    pub deviations: Vec<PairDeviation>,
    pub regime: RegimeSummary,
    pub timescales: Timescales,
    /// (Δ(∞) − γ(∞)) / (2γ(∞)).
    pub stationary_occupation: f64,
    pub solvers: Vec<SolverDiagnostics>,
    pub warnings: Vec<String>,
    pub notices: Vec<Notice>,
}

impl ComparisonReport {
    pub fn deviation(&self, a: TraceMethod, b: TraceMethod) -> Option<&PairDeviation> {
        self.deviations
            .iter()
            .find(|d| (d.first == a && d.second == b) || (d.first == b && d.second == a))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Short human-readable digest.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let p = &self.parameters;
        let _ = writeln!(
            s,
            "omega_c = {:e} s^-1, omega0 = {:e} s^-1, r = {}, alpha^2 kT = {:e} s^-2, t_max = {:e} s, {} points",
            p.omega_c, p.omega0, p.ratio, p.alpha2_kt, p.t_max, p.points
        );
        let _ = writeln!(
            s,
            "tau_R = {:e} s, tau_T = {:e} s, stationary <n> = {:e}",
            self.timescales.reservoir_correlation, self.timescales.thermalization, self.stationary_occupation
        );
        let _ = writeln!(
            s,
            "non-Lindblad fraction {:.4} ({} intervals), Delta negative: {}",
            self.regime.non_lindblad_fraction, self.regime.non_lindblad_intervals, self.regime.delta_negative
        );
        for d in &self.deviations {
            let _ = writeln!(s, "{} vs {}: max rel {:e}, mean rel {:e}", d.first, d.second, d.max_relative, d.mean_relative);
        }
        for w in &self.warnings {
            let _ = writeln!(s, "warning: {w}");
        }
        for n in &self.notices {
            let _ = writeln!(s, "notice [{}]: {}", n.id, n.message);
        }
        s
    }
}

fn coefficient_columns(out: &mut String, grid: &CoefficientGrid, row: usize) {
    let c = &grid.samples[row];
    let regime = match grid.intervals.get(row) {
        Some(i) => i.regime,
        None if c.is_lindblad() => Regime::Lindblad,
        None => Regime::NonLindblad,
    };
    // adding 0.0 turns -0 into +0
    let _ = write!(out, "{:e},{:e},{:e},{:e},{}", c.delta + 0.0, c.gamma + 0.0, c.pi + 0.0, c.rshift + 0.0, regime.label());
}

/// Traces CSV: `t,<method>[,<method>_stderr]...,Delta,gamma,Pi,rshift,regime`.
/// The regime of a row is that of the interval from it to the next row.
pub fn traces_csv(traces: &[HeatingTrace], grid: &CoefficientGrid) -> String {
    let mut out = String::from("t");
    for tr in traces {
        let _ = write!(out, ",{}", tr.method);
        if tr.stderr.is_some() {
            let _ = write!(out, ",{}_stderr", tr.method);
        }
    }
    out.push_str(",Delta,gamma,Pi,rshift,regime\n");
    for (row, sample) in grid.samples.iter().enumerate() {
        let _ = write!(out, "{:e}", sample.t);
        for tr in traces {
            let _ = write!(out, ",{:e}", tr.values[row] + 0.0);
            if let Some(e) = &tr.stderr {
                let _ = write!(out, ",{:e}", e[row] + 0.0);
            }
        }
        out.push(',');
        coefficient_columns(&mut out, grid, row);
        out.push('\n');
    }
    out
}

/// Coefficient table: `t,Delta,gamma,Pi,rshift,regime`.
pub fn coefficients_csv(grid: &CoefficientGrid) -> String {
    let mut out = String::from("t,Delta,gamma,Pi,rshift,regime\n");
    for (row, sample) in grid.samples.iter().enumerate() {
        let _ = write!(out, "{:e},", sample.t);
        coefficient_columns(&mut out, grid, row);
        out.push('\n');
    }
    out
}

/// Write `files` into `dir`; on any failure the files already written are
/// removed again.
pub fn write_all(dir: &Path, files: &[(&str, String)]) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (name, contents) in files {
        let path = dir.join(name);
        if let Err(e) = fs::write(&path, contents) {
            for p in &written {
                let _ = fs::remove_file(p);
            }
            let _ = fs::remove_file(&path);
            return Err(io::Error::new(e.kind(), format!("{}: {e}", path.display())));
        }
        written.push(path);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::ConstantCoefficients;

    fn grid(n: usize) -> CoefficientGrid {
        let model = ConstantCoefficients {
            delta: 1.0,
            gamma: 0.5,
            pi: 0.0,
            rshift: 0.0,
            cutoff: 1e6,
            frequency: 1e6,
        };
        let times: Vec<f64> = (0..n).map(|i| i as f64 * 1e-7).collect();
        CoefficientGrid::build(&times, &model, 1e-12).unwrap()
    }

    #[test]
    fn csv_has_header_plus_one_row_per_point() {
        let g = grid(1001);
        let times = g.times();
        let a = HeatingTrace::new(TraceMethod::Exact, times.clone(), vec![1.0; 1001]);
        let b = HeatingTrace::new(TraceMethod::Secular, times, vec![2.0; 1001]);
        let csv = traces_csv(&[a, b], &g);
        assert_eq!(csv.lines().count(), 1002);
        assert_eq!(csv.lines().next().unwrap(), "t,exact,secular,Delta,gamma,Pi,rshift,regime");
    }

    #[test]
    fn stderr_column_follows_its_method() {
        let g = grid(3);
        let mut m = HeatingTrace::new(TraceMethod::Mcwf, g.times(), vec![0.0, 1.0, 2.0]);
        m.stderr = Some(vec![0.0, 0.1, 0.2]);
        let csv = traces_csv(&[m], &g);
        assert_eq!(csv.lines().next().unwrap(), "t,mcwf,mcwf_stderr,Delta,gamma,Pi,rshift,regime");
        assert_eq!(csv.lines().nth(2).unwrap(), "1e-7,1e0,1e-1,1e0,5e-1,0e0,0e0,L");
    }

    #[test]
    fn values_round_trip_exactly() {
        let g = grid(2);
        let v = [0.1 + 0.2, std::f64::consts::PI * 1e-300];
        let tr = HeatingTrace::new(TraceMethod::Exact, g.times(), v.to_vec());
        let csv = traces_csv(&[tr], &g);
        for (line, want) in csv.lines().skip(1).zip(v) {
            let got: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
            assert_eq!(got.to_bits(), want.to_bits());
        }
    }

    #[test]
    fn deviation_is_symmetric_and_skips_zeros() {
        let t = vec![0.0, 1.0, 2.0];
        let a = HeatingTrace::new(TraceMethod::Exact, t.clone(), vec![0.0, 1.0, 2.0]);
        let b = HeatingTrace::new(TraceMethod::Ode, t, vec![0.0, 1.1, 2.0]);
        let d = pair_deviation(&a, &b);
        let e = pair_deviation(&b, &a);
        assert_eq!(d.points_compared, 2);
        assert!((d.max_relative - 0.1 / 1.1).abs() < 1e-15);
        assert_eq!(d.max_relative, e.max_relative);
        assert!((d.mean_relative - 0.05 / 1.1).abs() < 1e-15);
    }

    #[test]
    fn failed_write_leaves_nothing_behind() {
        let dir = tempfile::tempdir().unwrap();
        let files = [("a.csv", "x".to_string()), ("missing/b.csv", "y".to_string())];
        assert!(write_all(dir.path(), &files).is_err());
        assert!(!dir.path().join("a.csv").exists());
    }
}
