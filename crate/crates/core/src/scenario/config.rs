//! Scenario configuration: TOML files with `[reservoir]`, `[system]`, `[run]`,
//! `[solver]` and `[ensemble]` tables, optionally layered over a preset.

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use toml::Spanned;

use super::presets::preset_text;
use crate::analytics::TraceMethod;
use crate::coefficients::CoefficientMethod;
use crate::reservoir::{InitialState, ReservoirSpec, SystemSpec};

/// Where a configuration value came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Origin {
    Line(usize),
    Preset(String),
    Flag,
    Missing,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Line(l) => write!(f, "line {l}"),
            Origin::Preset(p) => write!(f, "preset {p}"),
            Origin::Flag => f.write_str("command line"),
            Origin::Missing => f.write_str("missing"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    pub field: String,
    pub origin: Origin,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct ConfigError {
    pub issues: Vec<ConfigIssue>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "invalid configuration ({} problem{}):", self.issues.len(), if self.issues.len() == 1 { "" } else { "s" })?;
        for i in &self.issues {
            writeln!(f, "  {} ({}): {}", i.field, i.origin, i.message)?;
        }
        Ok(())
    }
}

impl ConfigError {
    fn single(field: &str, origin: Origin, message: impl Into<String>) -> Self {
        Self {
            issues: vec![ConfigIssue {
                field: field.into(),
                origin,
                message: message.into(),
            }],
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(untagged)]
enum Number {
    Int(i64),
    Float(f64),
}

impl Number {
    fn value(self) -> f64 {
        match self {
            Number::Int(i) => i as f64,
            Number::Float(x) => x,
        }
    }
}

type Field<T> = Option<Spanned<T>>;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawReservoir {
    mode: Field<String>,
    omega_c: Field<Number>,
    alpha2: Field<Number>,
    alpha2_kt: Field<Number>,
    front_factor: Field<Number>,
    kt: Field<Number>,
    kt_over_omega0: Field<Number>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    omega0: Field<Number>,
    n0: Field<i64>,
    populations: Field<Vec<Number>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    t_max: Field<Number>,
    points: Field<i64>,
    methods: Field<Vec<String>>,
    out: Field<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    dimension: Field<i64>,
    dt: Field<Number>,
    leak_threshold: Field<Number>,
    coefficients: Field<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEnsemble {
    trajectories: Field<i64>,
    seed: Field<i64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    preset: Field<String>,
    #[serde(default)]
    reservoir: RawReservoir,
    #[serde(default)]
    system: RawSystem,
    #[serde(default)]
    run: RawRun,
    #[serde(default)]
    solver: RawSolver,
    #[serde(default)]
    ensemble: RawEnsemble,
}

/// A value paired with the text it was parsed from, for line lookup.
struct Sourced<'a> {
    raw: RawConfig,
    text: &'a str,
    origin_for_preset: Option<String>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

fn parse_raw(text: &str) -> Result<RawConfig, ConfigError> {
    toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| line_of(text, s.start)).unwrap_or(0);
        ConfigError::single("config", if line > 0 { Origin::Line(line) } else { Origin::Missing }, e.message().to_string())
    })
}

/// Overrides applied on top of file and preset values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub preset: Option<String>,
    pub methods: Option<Vec<String>>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub t_max: Option<f64>,
}

/// Fully expanded and validated scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub preset: Option<String>,
    pub reservoir: ReservoirSpec,
    pub system: SystemSpec,
    pub t_max: f64,
    pub points: usize,
    pub methods: Vec<TraceMethod>,
    pub out: PathBuf,
    /// Fock dimension; chosen from the predicted maximum ⟨n⟩ when absent.
    pub dimension: Option<usize>,
    /// Solver step; the largest allowed step when absent.
    pub dt: Option<f64>,
    pub leak_threshold: f64,
    pub coefficients: CoefficientMethod,
    pub trajectories: usize,
    pub seed: u64,
}

impl ScenarioConfig {
    /// Output grid: `points` equally spaced times on [0, t_max].
    pub fn times(&self) -> Vec<f64> {
        let last = self.points - 1;
        (0..self.points).map(|i| self.t_max * i as f64 / last as f64).collect()
    }
}

/// Parse `text` (may be empty) with `overrides`, expanding any preset first.
pub fn load_config(text: &str, overrides: &Overrides) -> Result<ScenarioConfig, ConfigError> {
    let file = parse_raw(text)?;
    let preset_name = overrides
        .preset
        .clone()
        .map(|p| (p, Origin::Flag))
        .or_else(|| file.preset.as_ref().map(|p| (p.get_ref().clone(), Origin::Line(line_of(text, p.span().start)))));

    let layers = match &preset_name {
        Some((name, origin)) => {
            let ptext = preset_text(name).ok_or_else(|| {
                ConfigError::single("preset", origin.clone(), format!("unknown preset `{name}` (known: {})", super::presets::PRESET_NAMES.join(", ")))
            })?;
            let preset = parse_raw(ptext).expect("built-in presets parse");
            vec![
                Sourced {
                    raw: preset,
                    text: ptext,
                    origin_for_preset: Some(name.clone()),
                },
                Sourced {
                    raw: file,
                    text,
                    origin_for_preset: None,
                },
            ]
        }
        None => vec![Sourced {
            raw: file,
            text,
            origin_for_preset: None,
        }],
    };
    Builder::new(layers, preset_name.map(|p| p.0)).build(overrides)
}

struct Builder<'a> {
    layers: Vec<Sourced<'a>>,
    preset: Option<String>,
    issues: Vec<ConfigIssue>,
}

/// Value of one field, resolved through the layers (later layers win).
struct Resolved<T> {
    value: T,
    origin: Origin,
}

macro_rules! lookup {
    ($self:ident, $section:ident . $field:ident) => {{
        let mut found = None;
        for layer in &$self.layers {
            if let Some(v) = &layer.raw.$section.$field {
                let origin = match &layer.origin_for_preset {
                    Some(p) => Origin::Preset(p.clone()),
                    None => Origin::Line(line_of(layer.text, v.span().start)),
                };
                found = Some(Resolved {
                    value: v.get_ref().clone(),
                    origin,
                });
            }
        }
        found
    }};
}

impl<'a> Builder<'a> {
    fn new(mut layers: Vec<Sourced<'a>>, preset: Option<String>) -> Self {
        // a file that sets one member of an alternative group replaces the
        // whole group from the preset
        if layers.len() == 2 {
            let (base, top) = layers.split_at_mut(1);
            let (p, f) = (&mut base[0].raw.reservoir, &top[0].raw.reservoir);
            if f.alpha2_kt.is_some() || f.front_factor.is_some() {
                p.alpha2_kt = None;
                p.front_factor = None;
            }
            if f.alpha2.is_some() || f.kt.is_some() || f.kt_over_omega0.is_some() {
                p.alpha2 = None;
                p.kt = None;
                p.kt_over_omega0 = None;
            }
            let (ps, fs) = (&mut base[0].raw.system, &top[0].raw.system);
            if fs.n0.is_some() || fs.populations.is_some() {
                ps.n0 = None;
                ps.populations = None;
            }
        }
        Self {
            layers,
            preset,
            issues: Vec::new(),
        }
    }

    fn issue(&mut self, field: &str, origin: Origin, message: impl Into<String>) {
        self.issues.push(ConfigIssue {
            field: field.into(),
            origin,
            message: message.into(),
        });
    }

    fn missing(&mut self, field: &str) {
        self.issue(field, Origin::Missing, "required field is missing");
    }

    fn positive(&mut self, field: &str, v: Option<Resolved<Number>>, required: bool) -> Option<f64> {
        match v {
            Some(r) => {
                let x = r.value.value();
                if x.is_finite() && x > 0.0 {
                    Some(x)
                } else {
                    self.issue(field, r.origin, format!("must be a positive number, got {x}"));
                    None
                }
            }
            None => {
                if required {
                    self.missing(field);
                }
                None
            }
        }
    }

    fn build(mut self, overrides: &Overrides) -> Result<ScenarioConfig, ConfigError> {
        // reservoir
        let mode = lookup!(self, reservoir.mode);
        let omega_c = lookup!(self, reservoir.omega_c);
        let omega_c = self.positive("reservoir.omega_c", omega_c, true);
        let omega0 = lookup!(self, system.omega0);
        let omega0 = self.positive("system.omega0", omega0, true);
        let alpha2 = lookup!(self, reservoir.alpha2);
        let alpha2 = self.positive("reservoir.alpha2", alpha2, false);
        let alpha2_kt = lookup!(self, reservoir.alpha2_kt);
        let alpha2_kt = self.positive("reservoir.alpha2_kt", alpha2_kt, false);
        let front = lookup!(self, reservoir.front_factor);
        let front = self.positive("reservoir.front_factor", front, false);
        let kt = lookup!(self, reservoir.kt);
        let kt = self.positive("reservoir.kt", kt, false);
        let ratio = lookup!(self, reservoir.kt_over_omega0);
        let ratio = self.positive("reservoir.kt_over_omega0", ratio, false);

        let reservoir = match mode {
            None => {
                self.missing("reservoir.mode");
                None
            }
            Some(m) if m.value == "high_t" => {
                let product = match (alpha2_kt, front) {
                    (Some(p), None) => Some(p),
                    (None, Some(f)) => Some(std::f64::consts::PI * f / 2.0),
                    (Some(_), Some(_)) => {
                        self.issue("reservoir.alpha2_kt", Origin::Missing, "give either alpha2_kt or front_factor, not both");
                        None
                    }
                    (None, None) => {
                        self.missing("reservoir.alpha2_kt (or reservoir.front_factor)");
                        None
                    }
                };
                let coupling = match (alpha2, ratio) {
                    (Some(a), None) => Some(a),
                    (None, Some(k)) => match (product, omega0) {
                        (Some(p), Some(w)) => Some(p / (k * w)),
                        _ => None,
                    },
                    (Some(_), Some(_)) => {
                        self.issue("reservoir.alpha2", Origin::Missing, "give either alpha2 or kt_over_omega0, not both");
                        None
                    }
                    (None, None) => {
                        self.missing("reservoir.alpha2 (or reservoir.kt_over_omega0)");
                        None
                    }
                };
                match (omega_c, coupling, product) {
                    (Some(c), Some(a), Some(p)) => ReservoirSpec::high_temperature(c, a, p)
                        .map_err(|e| self.issue("reservoir", Origin::Missing, e.to_string()))
                        .ok(),
                    _ => None,
                }
            }
            Some(m) if m.value == "finite" => {
                if alpha2.is_none() {
                    self.missing("reservoir.alpha2");
                }
                let temperature = match (kt, ratio) {
                    (Some(k), None) => Some(k),
                    (None, Some(x)) => omega0.map(|w| x * w),
                    (Some(_), Some(_)) => {
                        self.issue("reservoir.kt", Origin::Missing, "give either kt or kt_over_omega0, not both");
                        None
                    }
                    (None, None) => {
                        self.missing("reservoir.kt (or reservoir.kt_over_omega0)");
                        None
                    }
                };
                match (omega_c, alpha2, temperature) {
                    (Some(c), Some(a), Some(k)) => ReservoirSpec::finite_temperature(c, a, k)
                        .map_err(|e| self.issue("reservoir", Origin::Missing, e.to_string()))
                        .ok(),
                    _ => None,
                }
            }
            Some(m) => {
                self.issue("reservoir.mode", m.origin, format!("expected `high_t` or `finite`, got `{}`", m.value));
                None
            }
        };

        // system
        let n0 = lookup!(self, system.n0);
        let populations = lookup!(self, system.populations);
        let initial = match (n0, populations) {
            (Some(_), Some(p)) => {
                self.issue("system.populations", p.origin, "give either n0 or populations, not both");
                None
            }
            (Some(n), None) if n.value < 0 => {
                self.issue("system.n0", n.origin, "must be >= 0");
                None
            }
            (Some(n), None) => Some(InitialState::Fock(n.value as usize)),
            (None, Some(p)) => {
                let state = InitialState::Populations(p.value.iter().map(|x| x.value()).collect());
                match state.validate() {
                    Ok(()) => Some(state),
                    Err(e) => {
                        self.issue("system.populations", p.origin, e.to_string());
                        None
                    }
                }
            }
            (None, None) => Some(InitialState::Fock(0)),
        };
        let system = match (omega0, initial) {
            (Some(w), Some(i)) => SystemSpec::new(w, i).map_err(|e| self.issue("system", Origin::Missing, e.to_string())).ok(),
            _ => None,
        };

        // run
        let t_max = match overrides.t_max {
            Some(t) if t.is_finite() && t > 0.0 => Some(t),
            Some(t) => {
                self.issue("run.t_max", Origin::Flag, format!("must be > 0, got {t}"));
                None
            }
            None => {
                let v = lookup!(self, run.t_max);
                self.positive("run.t_max", v, true)
            }
        };
        let points = match lookup!(self, run.points) {
            Some(p) if p.value >= 2 => Some(p.value as usize),
            Some(p) => {
                self.issue("run.points", p.origin, "must be >= 2");
                None
            }
            None => Some(401),
        };
        let method_names = match &overrides.methods {
            Some(m) => Some(Resolved {
                value: m.clone(),
                origin: Origin::Flag,
            }),
            None => lookup!(self, run.methods),
        };
        let methods = match method_names {
            None => {
                self.missing("run.methods");
                None
            }
            Some(r) => {
                let mut out = Vec::new();
                for name in &r.value {
                    match TraceMethod::parse(name.trim()) {
                        Some(m) if !out.contains(&m) => out.push(m),
                        Some(_) => {}
                        None => self.issue("run.methods", r.origin.clone(), format!("unknown method `{name}`")),
                    }
                }
                if out.is_empty() {
                    self.issue("run.methods", r.origin, "at least one method is required");
                }
                Some(out)
            }
        };
        let out = overrides
            .out
            .clone()
            .or_else(|| lookup!(self, run.out).map(|o| PathBuf::from(o.value)))
            .unwrap_or_else(|| PathBuf::from("out"));

        // solver
        let dimension = match lookup!(self, solver.dimension) {
            Some(d) if d.value >= 4 => Some(d.value as usize),
            Some(d) => {
                self.issue("solver.dimension", d.origin, "must be >= 4");
                None
            }
            None => None,
        };
        let dt = lookup!(self, solver.dt);
        let dt = self.positive("solver.dt", dt, false);
        let leak = lookup!(self, solver.leak_threshold);
        let leak_threshold = self.positive("solver.leak_threshold", leak, false).unwrap_or(1e-8);
        let coefficients = match lookup!(self, solver.coefficients) {
            None => CoefficientMethod::ClosedForm,
            Some(c) if c.value == "closed_form" => CoefficientMethod::ClosedForm,
            Some(c) if c.value == "quadrature" => CoefficientMethod::Quadrature,
            Some(c) => {
                self.issue("solver.coefficients", c.origin, format!("expected `closed_form` or `quadrature`, got `{}`", c.value));
                CoefficientMethod::ClosedForm
            }
        };
        if let (Some(r), CoefficientMethod::ClosedForm) = (&reservoir, coefficients) {
            if !r.is_high_temperature() && lookup!(self, solver.coefficients).is_some() {
                self.issue("solver.coefficients", Origin::Missing, "closed-form coefficients need reservoir.mode = high_t");
            }
        }

        // ensemble
        let trajectories = match lookup!(self, ensemble.trajectories) {
            Some(m) if m.value >= 1 => m.value as usize,
            Some(m) => {
                self.issue("ensemble.trajectories", m.origin, "must be >= 1");
                1
            }
            None => 1000,
        };
        let seed = match overrides.seed {
            Some(s) => s,
            None => match lookup!(self, ensemble.seed) {
                Some(s) if s.value >= 0 => s.value as u64,
                Some(s) => {
                    self.issue("ensemble.seed", s.origin, "must be >= 0");
                    0
                }
                None => 0,
            },
        };

        if !self.issues.is_empty() {
            return Err(ConfigError { issues: self.issues });
        }
        let reservoir = reservoir.expect("validated");
        let coefficients = if reservoir.is_high_temperature() {
            coefficients
        } else {
            CoefficientMethod::Quadrature
        };
        Ok(ScenarioConfig {
            preset: self.preset,
            reservoir,
            system: system.expect("validated"),
            t_max: t_max.expect("validated"),
            points: points.expect("validated"),
            methods: methods.expect("validated"),
            out,
            dimension,
            dt,
            leak_threshold,
            coefficients,
            trajectories,
            seed,
        })
    }
}
