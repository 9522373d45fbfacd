//! Closed-form and semi-analytic heating observables.

use serde::{Deserialize, Serialize};

use crate::coefficients::{validate_grid, ClosedFormCoefficients, CoefficientModel};
use crate::error::{Error, Result};
use crate::reservoir::{thermal_occupation, ReservoirSpec, SystemSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceMethod {
    Exact,
    Markov,
    HighT,
    ShortTime,
    SmallR,
    Quadratic,
    Ode,
    Secular,
    Nonsecular,
    Mcwf,
}

impl TraceMethod {
    pub const ALL: [TraceMethod; 10] = [
        TraceMethod::Exact,
        TraceMethod::Markov,
        TraceMethod::HighT,
        TraceMethod::ShortTime,
        TraceMethod::SmallR,
        TraceMethod::Quadratic,
        TraceMethod::Ode,
        TraceMethod::Secular,
        TraceMethod::Nonsecular,
        TraceMethod::Mcwf,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            TraceMethod::Exact => "exact",
            TraceMethod::Markov => "markov",
            TraceMethod::HighT => "high_T",
            TraceMethod::ShortTime => "short_time",
            TraceMethod::SmallR => "small_r",
            TraceMethod::Quadratic => "quadratic",
            TraceMethod::Ode => "ode",
            TraceMethod::Secular => "secular",
            TraceMethod::Nonsecular => "nonsecular",
            TraceMethod::Mcwf => "mcwf",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == name)
    }
}

impl std::fmt::Display for TraceMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// ⟨n(t)⟩ on a time grid, with optional per-point standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatingTrace {
    pub method: TraceMethod,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub stderr: Option<Vec<f64>>,
}

impl HeatingTrace {
    pub fn new(method: TraceMethod, times: Vec<f64>, values: Vec<f64>) -> Self {
        debug_assert_eq!(times.len(), values.len());
        Self {
            method,
            times,
            values,
            stderr: None,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Values with tiny negative noise (≥ −1e-9) clamped to zero.
    pub fn clamped_values(&self) -> Vec<f64> {
        self.values
            .iter()
            .map(|&v| if (-1e-9..0.0).contains(&v) { 0.0 } else { v })
            .collect()
    }
}

/// Sampling density of the internal integration grid: at least
/// `points_per_scale` points per oscillation period 2π/ω₀ and per 1/ω_c.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridResolution {
    pub points_per_scale: usize,
}

impl Default for GridResolution {
    fn default() -> Self {
        Self { points_per_scale: 80 }
    }
}

impl GridResolution {
    pub fn max_step(&self, cutoff: f64, frequency: f64) -> f64 {
        let scale = (std::f64::consts::TAU / frequency).min(1.0 / cutoff);
        scale / self.points_per_scale.max(40) as f64
    }
}

/// Γ(t) and Δ_Γ(t) at each requested time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatingIntegrals {
    pub times: Vec<f64>,
    pub big_gamma: Vec<f64>,
    pub delta_gamma: Vec<f64>,
}

impl HeatingIntegrals {
    /// e^{−Γ}n₀ + ½(e^{−Γ} − 1) + Δ_Γ at every time.
    pub fn heating(&self, n0: f64) -> Vec<f64> {
        self.big_gamma
            .iter()
            .zip(&self.delta_gamma)
            .map(|(&g, &d)| {
                let decay = (-g).exp();
                decay * n0 + 0.5 * (-g).exp_m1() + d
            })
            .collect()
    }
}

/// Γ(t) = 2∫₀ᵗγ and Δ_Γ(t) = e^{−Γ(t)}∫₀ᵗ e^{Γ(s)}Δ(s)ds by composite Simpson
/// integration. Δ_Γ is advanced interval by interval as
/// `D_{k+1} = e^{−ΔΓ_k} D_k + ∫ e^{−(Γ_{k+1} − Γ(s))}Δ(s)ds`, which never forms
/// the large factor e^{Γ}.
pub fn heating_integrals(model: &dyn CoefficientModel, times: &[f64], resolution: &GridResolution) -> Result<HeatingIntegrals> {
    validate_grid(times)?;
    let h_max = resolution.max_step(model.cutoff(), model.frequency());
    let mut big_gamma = Vec::with_capacity(times.len());
    let mut delta_gamma = Vec::with_capacity(times.len());

    let mut t = 0.0;
    let mut g = 0.0;
    let mut d = 0.0;
    let mut current = model.delta_gamma(0.0);
    for &target in times {
        let span = target - t;
        if span > 0.0 {
            let pieces = (span / h_max).ceil() as usize;
            let h = span / pieces as f64;
            for k in 0..pieces {
                let a = t + k as f64 * h;
                let b = if k + 1 == pieces { target } else { t + (k + 1) as f64 * h };
                let h = b - a;
                let (d0, g0) = current;
                let (_, gq1) = model.delta_gamma(a + 0.25 * h);
                let (dm, gm) = model.delta_gamma(a + 0.5 * h);
                let (_, gq3) = model.delta_gamma(a + 0.75 * h);
                let (d1, g1) = model.delta_gamma(b);
                // Γ increments on each half, Simpson with the quarter points
                let first = h / 12.0 * (g0 + 4.0 * gq1 + gm) * 2.0;
                let second = h / 12.0 * (gm + 4.0 * gq3 + g1) * 2.0;
                let total = first + second;
                let weight_start = (-total).exp();
                let weight_mid = (-second).exp();
                d = weight_start * d + h / 6.0 * (weight_start * d0 + 4.0 * weight_mid * dm + d1);
                g += total;
                current = (d1, g1);
            }
            t = target;
        }
        big_gamma.push(g);
        delta_gamma.push(d);
    }
    Ok(HeatingIntegrals {
        times: times.to_vec(),
        big_gamma,
        delta_gamma,
    })
}

/// Γ(t) = 2∫₀ᵗγ(s)ds with closed-form γ.
pub fn big_gamma(t: f64, spec: &ReservoirSpec, sys: &SystemSpec) -> Result<f64> {
    let model = ClosedFormCoefficients::new(spec, sys)?;
    Ok(heating_integrals(&model, &[t], &GridResolution::default())?.big_gamma[0])
}

/// Δ_Γ(t) = e^{−Γ(t)}∫₀ᵗ e^{Γ(s)}Δ(s)ds with closed-form coefficients.
pub fn delta_big_gamma(t: f64, spec: &ReservoirSpec, sys: &SystemSpec) -> Result<f64> {
    let model = ClosedFormCoefficients::new(spec, sys)?;
    Ok(heating_integrals(&model, &[t], &GridResolution::default())?.delta_gamma[0])
}

/// ⟨n(t)⟩ = e^{−Γ}⟨n(0)⟩ + ½(e^{−Γ} − 1) + Δ_Γ on `times`.
pub fn heating_exact(model: &dyn CoefficientModel, n0: f64, times: &[f64]) -> Result<HeatingTrace> {
    let integrals = heating_integrals(model, times, &GridResolution::default())?;
    Ok(HeatingTrace::new(TraceMethod::Exact, times.to_vec(), integrals.heating(n0)))
}

/// High-temperature ground-state approximation ⟨n(t)⟩ ≈ Δ_Γ(t).
pub fn heating_high_t(model: &dyn CoefficientModel, times: &[f64]) -> Result<HeatingTrace> {
    let integrals = heating_integrals(model, times, &GridResolution::default())?;
    Ok(HeatingTrace::new(TraceMethod::HighT, times.to_vec(), integrals.delta_gamma))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitVariant {
    Markov,
    ShortTime,
    SmallR,
    Quadratic,
}

impl LimitVariant {
    pub fn method(&self) -> TraceMethod {
        match self {
            LimitVariant::Markov => TraceMethod::Markov,
            LimitVariant::ShortTime => TraceMethod::ShortTime,
            LimitVariant::SmallR => TraceMethod::SmallR,
            LimitVariant::Quadratic => TraceMethod::Quadratic,
        }
    }
}

/// A limit-formula trace together with notes on where its validity
/// conditions are violated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitTrace {
    pub trace: HeatingTrace,
    pub warnings: Vec<String>,
}

/// Thermal occupation used by the Markov law: kT/ω₀ in the high-temperature
/// mode, the Bose factor otherwise.
pub fn stationary_occupation(spec: &ReservoirSpec, sys: &SystemSpec) -> Result<f64> {
    if spec.is_high_temperature() {
        Ok(spec.kt() / sys.frequency)
    } else {
        thermal_occupation(sys.frequency, spec.kt())
    }
}

/// Re[e^z − 1 − z] and Im[...] for z = (−ω_c + iω₀)t, accurate at small t.
fn exp_tail(t: f64, cutoff: f64, frequency: f64) -> (f64, f64) {
    let x = cutoff * t;
    let y = frequency * t;
    if x * x + y * y >= 0.25 {
        let e = (-x).exp();
        let (s, c) = y.sin_cos();
        return (e * c - 1.0 + x, e * s - y);
    }
    // Taylor series Σ_{k≥2} z^k/k!
    let (mut re, mut im) = (x * x - y * y, -2.0 * x * y);
    re *= 0.5;
    im *= 0.5;
    let (mut sum_re, mut sum_im) = (re, im);
    for k in 3..24 {
        let nre = (re * -x - im * y) / k as f64;
        let nim = (re * y + im * -x) / k as f64;
        re = nre;
        im = nim;
        sum_re += re;
        sum_im += im;
    }
    (sum_re, sum_im)
}

/// ∫₀ᵗΔ(s)ds in closed form (high temperature):
/// (2α²kT/ω_c) r²/(1+r²)² {ω_c t(1+r²) − (r²−1)[1 − e^{−ω_c t}cos ω₀t] − 2r e^{−ω_c t} sin ω₀t}.
pub fn short_time_heating(t: f64, spec: &ReservoirSpec, sys: &SystemSpec) -> Result<f64> {
    if !spec.is_high_temperature() {
        return Err(Error::RequiresHighTemperature { operation: "short_time" });
    }
    let r = sys.ratio(spec);
    let (tre, tim) = exp_tail(t, spec.cutoff, sys.frequency);
    // the linear terms of the braces cancel identically
    let braces = (r * r - 1.0) * tre - 2.0 * r * tim;
    let r2 = r * r;
    Ok(2.0 * spec.coupling_kt() / spec.cutoff * r2 / ((1.0 + r2) * (1.0 + r2)) * braces)
}

/// r ≪ 1 limit of [`short_time_heating`]:
/// (2α²kT r²/ω_c){ω_c t + 1 − e^{−ω_c t}cos ω₀t − 2r e^{−ω_c t} sin ω₀t}.
pub fn small_ratio_heating(t: f64, spec: &ReservoirSpec, sys: &SystemSpec) -> Result<f64> {
    if !spec.is_high_temperature() {
        return Err(Error::RequiresHighTemperature { operation: "small_r" });
    }
    let r = sys.ratio(spec);
    if r > 0.5 {
        return Err(Error::invalid("r", format!("small-r formula needs r <= 0.5, got {r}")));
    }
    let (tre, tim) = exp_tail(t, spec.cutoff, sys.frequency);
    let braces = -tre - 2.0 * r * tim;
    Ok(2.0 * spec.coupling_kt() * r * r / spec.cutoff * braces)
}

/// ⟨n⟩ ≈ α²ω_c kT t².
pub fn quadratic_heating(t: f64, spec: &ReservoirSpec) -> f64 {
    spec.coupling_kt() * spec.cutoff * t * t
}

/// e^{−Γ̄t}n₀ + n(ω₀)(1 − e^{−Γ̄t}) with Γ̄ = 2γ(∞).
pub fn markov_heating(t: f64, spec: &ReservoirSpec, sys: &SystemSpec) -> Result<f64> {
    let rate = 2.0 * crate::coefficients::asymptotes(spec, sys)?.gamma;
    let n_th = stationary_occupation(spec, sys)?;
    let decay = (-rate * t).exp();
    Ok(decay * sys.initial.mean_n() - n_th * (-rate * t).exp_m1())
}

pub fn heating_limits(times: &[f64], spec: &ReservoirSpec, sys: &SystemSpec, variant: LimitVariant) -> Result<LimitTrace> {
    validate_grid(times)?;
    let t_max = *times.last().expect("grid validated as non-empty");
    let r = sys.ratio(spec);
    let scales = timescales(spec, sys)?;
    let mut warnings = Vec::new();
    let values: Vec<f64> = match variant {
        LimitVariant::Markov => {
            let early = times.iter().filter(|&&t| t < 10.0 * scales.reservoir_correlation).count();
            if early > 0 {
                warnings.push(format!(
                    "markov: {early} grid points lie at t < 10/omega_c where the Markov limit does not apply"
                ));
            }
            times.iter().map(|&t| markov_heating(t, spec, sys)).collect::<Result<_>>()?
        }
        LimitVariant::ShortTime => {
            if t_max > 0.1 * scales.thermalization {
                warnings.push(format!(
                    "short_time: t_max = {t_max:e} s exceeds 0.1 tau_T = {:e} s",
                    0.1 * scales.thermalization
                ));
            }
            times.iter().map(|&t| short_time_heating(t, spec, sys)).collect::<Result<_>>()?
        }
        LimitVariant::SmallR => {
            if r > 0.2 {
                warnings.push(format!("small_r: r = {r} is not small (formula assumes r << 1)"));
            }
            times.iter().map(|&t| small_ratio_heating(t, spec, sys)).collect::<Result<_>>()?
        }
        LimitVariant::Quadratic => {
            if r < 5.0 {
                warnings.push(format!("quadratic: r = {r} < 5"));
            }
            if t_max > 0.1 * scales.reservoir_correlation {
                warnings.push(format!(
                    "quadratic: t_max = {t_max:e} s exceeds 0.1/omega_c = {:e} s",
                    0.1 * scales.reservoir_correlation
                ));
            }
            times.iter().map(|&t| quadratic_heating(t, spec)).collect()
        }
    };
    Ok(LimitTrace {
        trace: HeatingTrace::new(variant.method(), times.to_vec(), values),
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timescales {
    /// τ_R = 1/ω_c.
    pub reservoir_correlation: f64,
    /// τ_T = 1/(2γ(∞)), the e-folding time of e^{−Γ(t)}.
    pub thermalization: f64,
    /// 1/γ(∞) = (r²+1)/(α²ω₀r²), the alternative convention for τ_T.
    pub thermalization_nominal: f64,
}

pub fn timescales(spec: &ReservoirSpec, sys: &SystemSpec) -> Result<Timescales> {
    spec.validate()?;
    sys.validate()?;
    let r = sys.ratio(spec);
    let gamma_inf = spec.coupling * sys.frequency * r * r / (1.0 + r * r);
    Ok(Timescales {
        reservoir_correlation: 1.0 / spec.cutoff,
        thermalization: 1.0 / (2.0 * gamma_inf),
        thermalization_nominal: 1.0 / gamma_inf,
    })
}

/// Natural logarithms of factorials 0!..=n!.
fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..=n {
        acc += (k as f64).ln();
        out.push(acc);
    }
    out
}

/// Population law for a high-temperature amplitude reservoir at short times,
/// as a function of the single parameter `x = n̄γt`:
///
/// ρ_nn(t) = q Σ_j y^j q^{2n−2j} C(n, j) Σ_l y^l C(n+l−j, n−j) ρ_{n+l−j}(0),
/// with q = 1/(1+x), y = x/(1+x). The output has `dimension` levels; the
/// l-sum runs over the support of the initial vector.
pub fn markov_populations(x: f64, initial: &[f64], dimension: usize) -> Result<Vec<f64>> {
    if !(x.is_finite() && x >= 0.0) {
        return Err(Error::invalid("nbar_gamma_t", format!("must be finite and >= 0, got {x}")));
    }
    if initial.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::invalid("populations", "entries must be finite and non-negative"));
    }
    let total: f64 = initial.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::invalid("populations", format!("sum is {total}, expected 1")));
    }
    if dimension == 0 {
        return Err(Error::invalid("dimension", "must be >= 1"));
    }
    if x == 0.0 {
        let mut out = vec![0.0; dimension];
        for (o, p) in out.iter_mut().zip(initial) {
            *o = *p;
        }
        return Ok(out);
    }

    let support = initial.len();
    let ln_q = -x.ln_1p();
    let ln_y = x.ln() + ln_q;
    let lf = ln_factorials(dimension + support);
    let ln_binom = |n: usize, k: usize| lf[n] - lf[k] - lf[n - k];

    // inner[m] = Σ_l y^l C(m+l, m) ρ_{m+l}(0)
    let inner: Vec<f64> = (0..dimension)
        .map(|m| {
            (m..support)
                .map(|k| {
                    let l = k - m;
                    initial[k] * (ln_binom(k, m) + l as f64 * ln_y).exp()
                })
                .sum()
        })
        .collect();

    let out = (0..dimension)
        .map(|n| {
            // m = n − j
            let sum: f64 = (0..=n)
                .filter(|&m| inner[m] != 0.0)
                .map(|m| {
                    let ln_w = ln_binom(n, m) + (n - m) as f64 * ln_y + 2.0 * m as f64 * ln_q;
                    ln_w.exp() * inner[m]
                })
                .sum();
            sum * ln_q.exp()
        })
        .collect();
    Ok(out)
}

/// Red-to-blue k-th sideband intensity ratio (⟨n⟩/(⟨n⟩+1))^k.
pub fn sideband_ratio(mean_n: f64, k: u32) -> Result<f64> {
    if !(mean_n.is_finite() && mean_n >= 0.0) {
        return Err(Error::invalid("mean_n", format!("must be >= 0, got {mean_n}")));
    }
    if k == 0 {
        return Err(Error::invalid("k", "sideband order must be >= 1"));
    }
    Ok((mean_n / (mean_n + 1.0)).powi(k as i32))
}

/// Inverse of [`sideband_ratio`]: ⟨n⟩ = x/(1−x), x = ratio^{1/k}.
pub fn invert_sideband(ratio: f64, k: u32) -> Result<f64> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(Error::invalid("ratio", format!("must lie in [0, 1), got {ratio}")));
    }
    if k == 0 {
        return Err(Error::invalid("k", "sideband order must be >= 1"));
    }
    let x = ratio.powf(1.0 / k as f64);
    Ok(x / (1.0 - x))
}

/// Inputs of the voltage-noise calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationInput {
    /// Noise variance ⟨V²⟩ (V²).
    pub variance: f64,
    /// Application time t̄ (s).
    pub application_time: f64,
    /// Geometry factor c relating electrode voltage to secular-frequency noise.
    pub geometry_factor: f64,
    /// Carrier Rabi frequency Ω (s⁻¹).
    pub rabi_frequency: f64,
}

/// n̄γ = c²⟨V²⟩/t̄: the geometry factor rescales the voltage amplitude, so
/// the effective variance is c²⟨V²⟩.
pub fn noise_calibration(cal: &CalibrationInput) -> Result<f64> {
    if !(cal.variance.is_finite() && cal.variance >= 0.0) {
        return Err(Error::invalid("variance", format!("must be >= 0, got {}", cal.variance)));
    }
    if !(cal.application_time.is_finite() && cal.application_time > 0.0) {
        return Err(Error::invalid("application_time", "must be > 0"));
    }
    if !(cal.geometry_factor.is_finite() && cal.geometry_factor > 0.0) {
        return Err(Error::invalid("geometry_factor", "must be > 0"));
    }
    let c = cal.geometry_factor;
    Ok(c * c * cal.variance / cal.application_time)
}

/// Probability scale of off-resonant carrier excitation, (Ω/ω₀)².
pub fn off_resonant_probability(rabi: f64, frequency: f64) -> Result<f64> {
    if !(rabi >= 0.0 && rabi.is_finite()) {
        return Err(Error::invalid("rabi_frequency", "must be >= 0"));
    }
    if !(frequency > 0.0 && frequency.is_finite()) {
        return Err(Error::invalid("omega0", "must be > 0"));
    }
    Ok((rabi * rabi) / (frequency * frequency))
}
