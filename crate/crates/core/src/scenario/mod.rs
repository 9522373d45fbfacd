//! Configuration, presets and end-to-end scenario runs with CSV and report
//! output.

mod config;
mod presets;
mod report;
mod run;

pub use config::{load_config, ConfigError, ConfigIssue, Origin, Overrides, ScenarioConfig};
pub use presets::{preset_text, PRESET_NAMES};
pub use report::{
    coefficients_csv, pair_deviation, traces_csv, ComparisonReport, Notice, PairDeviation, RegimeSummary,
    ReportParameters, SolverDiagnostics, NOTICE_FRONT_FACTOR, NOTICE_GAMMA_FACTOR, NOTICE_SINE_COEFFICIENT,
    NOTICE_SMALL_R_PREFACTOR,
};
pub use run::{
    build_model, coefficient_grid, compute_scenario, output_paths, run_scenario, write_coefficients, ScenarioError,
    ScenarioOutcome, COEFFICIENTS_FILE, NONSECULAR_AUTO_LIMIT, REPORT_FILE, TRACES_FILE,
};
