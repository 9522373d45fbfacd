//! Scenario execution: builds the coefficient model, runs every requested
//! method on the output grid and assembles the comparison report.

use std::path::{Path, PathBuf};

use crate::analytics::{
    heating_exact, heating_high_t, heating_limits, timescales, HeatingTrace, LimitVariant, TraceMethod,
};
use crate::coefficients::{
    ClosedFormCoefficients, CoefficientGrid, CoefficientMethod, CoefficientModel, CoefficientTolerance,
    TabulatedCoefficients,
};
use crate::dynamics::{
    evolve_nonsecular, evolve_secular, heating_ode_oracle, mcwf_ensemble, suggest_dimension, DensityMatrix,
    EnsembleConfig, OracleResolution, SolverConfig,
};
use crate::analytics::GridResolution;
use crate::error::Error;

use super::config::ScenarioConfig;
use super::report::{
    coefficients_csv, pair_deviation, traces_csv, write_all, ComparisonReport, Notice, RegimeSummary,
    ReportParameters, SolverDiagnostics, NOTICE_FRONT_FACTOR, NOTICE_GAMMA_FACTOR, NOTICE_SINE_COEFFICIENT,
    NOTICE_SMALL_R_PREFACTOR,
};

/// Largest automatically chosen Fock dimension for the density-matrix solver.
pub const NONSECULAR_AUTO_LIMIT: usize = 256;

pub const TRACES_FILE: &str = "traces.csv";
pub const COEFFICIENTS_FILE: &str = "coefficients.csv";
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("setup failed")]
    Setup(#[source] Error),
    #[error("method {method} failed")]
    Method {
        method: TraceMethod,
        #[source]
        source: Error,
    },
    #[error("cannot write output")]
    Io(#[from] std::io::Error),
}

impl ScenarioError {
    fn method(method: TraceMethod) -> impl FnOnce(Error) -> Self {
        move |source| ScenarioError::Method { method, source }
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub traces: Vec<HeatingTrace>,
    pub grid: CoefficientGrid,
    pub report: ComparisonReport,
}

impl ScenarioOutcome {
    pub fn trace(&self, method: TraceMethod) -> Option<&HeatingTrace> {
        self.traces.iter().find(|t| t.method == method)
    }
}

/// Coefficient model used by every method of a scenario.
pub fn build_model(cfg: &ScenarioConfig) -> Result<Box<dyn CoefficientModel>, Error> {
    match cfg.coefficients {
        CoefficientMethod::ClosedForm => Ok(Box::new(ClosedFormCoefficients::new(&cfg.reservoir, &cfg.system)?)),
        CoefficientMethod::Quadrature => {
            let step = GridResolution::default().max_step(cfg.reservoir.cutoff, cfg.system.frequency);
            Ok(Box::new(TabulatedCoefficients::build(
                &cfg.reservoir,
                &cfg.system,
                cfg.t_max,
                step,
                &CoefficientTolerance::default(),
            )?))
        }
    }
}

/// Sample the model on the output grid and classify the regimes.
pub fn coefficient_grid(cfg: &ScenarioConfig, model: &dyn CoefficientModel) -> Result<CoefficientGrid, Error> {
    let scale = (std::f64::consts::TAU / cfg.system.frequency).min(1.0 / cfg.reservoir.cutoff);
    CoefficientGrid::build(&cfg.times(), model, 1e-6 * scale)
}

/// Time step for the jump unraveling: the solver step, shortened so that a
/// trajectory in the top level jumps with probability at most 0.05 per step.
fn ensemble_step(base: f64, grid: &CoefficientGrid, model: &dyn CoefficientModel, dimension: usize) -> f64 {
    let a = model.asymptotes();
    let envelope = grid
        .samples
        .iter()
        .map(|s| s.delta.abs() + s.gamma.abs())
        .fold(a.delta.abs() + a.gamma.abs(), f64::max);
    if envelope == 0.0 {
        return base;
    }
    base.min(0.05 / (2.0 * envelope * dimension as f64))
}

struct Runner<'a> {
    cfg: &'a ScenarioConfig,
    model: &'a dyn CoefficientModel,
    grid: &'a CoefficientGrid,
    times: Vec<f64>,
    n0: f64,
    predicted_max: Option<f64>,
    warnings: Vec<String>,
    solvers: Vec<SolverDiagnostics>,
}

impl Runner<'_> {
    fn predicted_max(&mut self) -> Result<f64, Error> {
        if let Some(m) = self.predicted_max {
            return Ok(m);
        }
        let exact = heating_exact(self.model, self.n0, &self.times)?;
        let m = exact.values.iter().copied().fold(self.n0, f64::max);
        self.predicted_max = Some(m);
        Ok(m)
    }

    /// Explicit dimension, or one sized from the predicted peak ⟨n⟩.
    fn dimension(&mut self) -> Result<(usize, bool), Error> {
        match self.cfg.dimension {
            Some(n) => Ok((n, false)),
            None => {
                let peak = self.predicted_max()?;
                Ok((suggest_dimension(peak, self.cfg.system.initial.max_level()), true))
            }
        }
    }

    fn solver_config(&self, dimension: usize) -> SolverConfig {
        let dt = self
            .cfg
            .dt
            .unwrap_or_else(|| SolverConfig::max_step(self.cfg.reservoir.cutoff, self.cfg.system.frequency));
        SolverConfig {
            dimension,
            dt,
            leak_threshold: self.cfg.leak_threshold,
            coefficients: self.model.method(),
            record_states: false,
            secular_scheme: Default::default(),
        }
    }

    fn run(&mut self, method: TraceMethod) -> Result<HeatingTrace, Error> {
        let (spec, sys) = (&self.cfg.reservoir, &self.cfg.system);
        match method {
            TraceMethod::Exact => heating_exact(self.model, self.n0, &self.times),
            TraceMethod::HighT => heating_high_t(self.model, &self.times),
            TraceMethod::Ode => heating_ode_oracle(self.n0, self.model, &self.times, &OracleResolution::default()),
            TraceMethod::Markov | TraceMethod::ShortTime | TraceMethod::SmallR | TraceMethod::Quadratic => {
                let variant = match method {
                    TraceMethod::Markov => LimitVariant::Markov,
                    TraceMethod::ShortTime => LimitVariant::ShortTime,
                    TraceMethod::SmallR => LimitVariant::SmallR,
                    _ => LimitVariant::Quadratic,
                };
                let out = heating_limits(&self.times, spec, sys, variant)?;
                self.warnings.extend(out.warnings);
                Ok(out.trace)
            }
            TraceMethod::Secular => {
                let (mut n, auto) = self.dimension()?;
                loop {
                    let cfg = self.solver_config(n);
                    match evolve_secular(&sys.initial.populations(n), self.model, &cfg, &self.times) {
                        Ok(out) => {
                            self.solvers.push(SolverDiagnostics {
                                method,
                                dimension: n,
                                dt: cfg.dt,
                                max_leak: out.max_leak,
                                max_trace_drift: Some(out.max_trace_drift),
                                trajectories: None,
                                seed: None,
                                scheme: Some(out.scheme),
                            });
                            return Ok(out.trace);
                        }
                        Err(Error::TruncationLeak { suggested, .. }) if auto && suggested <= 8 * n => n = suggested,
                        Err(e) => return Err(e),
                    }
                    if n > 1 << 24 {
                        return Err(Error::invalid("dimension", "automatic Fock dimension exceeds 2^24 levels"));
                    }
                }
            }
            TraceMethod::Nonsecular => {
                let (n, auto) = self.dimension()?;
                if auto && n > NONSECULAR_AUTO_LIMIT {
                    return Err(Error::invalid(
                        "dimension",
                        format!(
                            "the density-matrix solver would need {n} Fock levels (automatic limit {NONSECULAR_AUTO_LIMIT}); \
                             set solver.dimension explicitly or lower the coupling"
                        ),
                    ));
                }
                let cfg = self.solver_config(n);
                let initial = DensityMatrix::diagonal(&sys.initial.populations(n));
                let out = evolve_nonsecular(&initial, self.model, &cfg, &self.times)?;
                self.solvers.push(SolverDiagnostics {
                    method,
                    dimension: n,
                    dt: cfg.dt,
                    max_leak: out.max_leak,
                    max_trace_drift: Some(out.max_trace_drift),
                    trajectories: None,
                    seed: None,
                    scheme: None,
                });
                Ok(out.trace)
            }
            TraceMethod::Mcwf => {
                if let Some(bad) = self.grid.first_non_lindblad() {
                    return Err(Error::NegativeRate { start: bad.start, end: bad.end });
                }
                let (n, _) = self.dimension()?;
                let base = self.solver_config(n).dt;
                let dt = if self.cfg.dt.is_some() {
                    base
                } else {
                    ensemble_step(base, self.grid, self.model, n)
                };
                let ecfg = EnsembleConfig {
                    trajectories: self.cfg.trajectories,
                    seed: self.cfg.seed,
                    dt,
                    dimension: n,
                    leak_threshold: self.cfg.leak_threshold,
                };
                let out = mcwf_ensemble(&sys.initial.populations(n), self.model, &ecfg, &self.times)?;
                self.solvers.push(SolverDiagnostics {
                    method,
                    dimension: n,
                    dt,
                    max_leak: out.leak.iter().copied().fold(0.0, f64::max),
                    max_trace_drift: None,
                    trajectories: Some(ecfg.trajectories),
                    seed: Some(ecfg.seed),
                    scheme: None,
                });
                Ok(out.trace)
            }
        }
    }
}

fn notices(cfg: &ScenarioConfig) -> Vec<Notice> {
    let has = |m: TraceMethod| cfg.methods.contains(&m);
    let mut out = vec![NOTICE_GAMMA_FACTOR];
    if has(TraceMethod::ShortTime) || has(TraceMethod::SmallR) {
        out.push(NOTICE_SINE_COEFFICIENT);
    }
    if has(TraceMethod::SmallR) {
        out.push(NOTICE_SMALL_R_PREFACTOR);
    }
    if matches!(cfg.preset.as_deref(), Some("fig2") | Some("fig2_text")) {
        out.push(NOTICE_FRONT_FACTOR);
    }
    out
}

/// Run every requested method without touching the filesystem.
pub fn compute_scenario(cfg: &ScenarioConfig) -> Result<ScenarioOutcome, ScenarioError> {
    let model = build_model(cfg).map_err(ScenarioError::Setup)?;
    let grid = coefficient_grid(cfg, model.as_ref()).map_err(ScenarioError::Setup)?;
    let scales = timescales(&cfg.reservoir, &cfg.system).map_err(ScenarioError::Setup)?;

    let mut runner = Runner {
        cfg,
        model: model.as_ref(),
        grid: &grid,
        times: cfg.times(),
        n0: cfg.system.initial.mean_n(),
        predicted_max: None,
        warnings: Vec::new(),
        solvers: Vec::new(),
    };
    let mut traces = Vec::with_capacity(cfg.methods.len());
    for &method in &cfg.methods {
        traces.push(runner.run(method).map_err(ScenarioError::method(method))?);
    }

    let mut deviations = Vec::new();
    for (i, a) in traces.iter().enumerate() {
        for b in &traces[i + 1..] {
            deviations.push(pair_deviation(a, b));
        }
    }
    let asym = model.asymptotes();
    let report = ComparisonReport {
        preset: cfg.preset.clone(),
        parameters: ReportParameters {
            omega_c: cfg.reservoir.cutoff,
            omega0: cfg.system.frequency,
            ratio: cfg.system.ratio(&cfg.reservoir),
            alpha2: cfg.reservoir.coupling,
            alpha2_kt: cfg.reservoir.coupling_kt(),
            kt: cfg.reservoir.kt(),
            high_temperature: cfg.reservoir.is_high_temperature(),
            n0: runner.n0,
            t_max: cfg.t_max,
            points: cfg.points,
            coefficients: model.method().as_str(),
        },
        methods: cfg.methods.clone(),
        deviations,
        regime: RegimeSummary::from_grid(&grid),
        timescales: scales,
        stationary_occupation: (asym.delta - asym.gamma) / (2.0 * asym.gamma),
        solvers: runner.solvers,
        warnings: runner.warnings,
        notices: notices(cfg),
    };
    Ok(ScenarioOutcome { traces, grid, report })
}

/// Paths written by [`run_scenario`].
pub fn output_paths(dir: &Path) -> [PathBuf; 3] {
    [dir.join(TRACES_FILE), dir.join(COEFFICIENTS_FILE), dir.join(REPORT_FILE)]
}

/// Compute the scenario, then write traces, coefficients and report into
/// `cfg.out`. Nothing is written when any method fails.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioOutcome, ScenarioError> {
    let outcome = compute_scenario(cfg)?;
    write_all(
        &cfg.out,
        &[
            (TRACES_FILE, traces_csv(&outcome.traces, &outcome.grid)),
            (COEFFICIENTS_FILE, coefficients_csv(&outcome.grid)),
            (REPORT_FILE, outcome.report.to_json()),
        ],
    )?;
    Ok(outcome)
}

/// Coefficient table only.
pub fn write_coefficients(cfg: &ScenarioConfig) -> Result<CoefficientGrid, ScenarioError> {
    let model = build_model(cfg).map_err(ScenarioError::Setup)?;
    let grid = coefficient_grid(cfg, model.as_ref()).map_err(ScenarioError::Setup)?;
    write_all(&cfg.out, &[(COEFFICIENTS_FILE, coefficients_csv(&grid))])?;
    Ok(grid)
}
