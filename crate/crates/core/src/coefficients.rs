//! Time-dependent master-equation coefficients Δ(t), γ(t), Π(t), r(t).
//!
//! Two independent routes are provided: elementary closed forms for the
//! Lorentz–Drude reservoir in the high-temperature mode, and nested quadrature
//! of the kernel transforms that works at any temperature. The closed forms
//! are only trusted because the quadrature route reproduces them.

use std::cell::RefCell;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate_vec, Tolerance};
use crate::reservoir::{dissipation_kernel, noise_kernel, spectral_density, thermal_spectrum, KernelTolerance, ReservoirSpec, SystemSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientMethod {
    #[default]
    ClosedForm,
    Quadrature,
}

impl CoefficientMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            CoefficientMethod::ClosedForm => "closed_form",
            CoefficientMethod::Quadrature => "quadrature",
        }
    }
}

/// The four coefficients at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSample {
    pub t: f64,
    pub delta: f64,
    pub gamma: f64,
    pub pi: f64,
    pub rshift: f64,
    pub method: CoefficientMethod,
}

impl CoefficientSample {
    pub fn zero(method: CoefficientMethod) -> Self {
        Self {
            t: 0.0,
            delta: 0.0,
            gamma: 0.0,
            pi: 0.0,
            rshift: 0.0,
            method,
        }
    }

    /// Rate of the de-excitation channel, Δ + γ.
    pub fn down_rate(&self) -> f64 {
        self.delta + self.gamma
    }

    /// Rate of the excitation channel, Δ − γ.
    pub fn up_rate(&self) -> f64 {
        self.delta - self.gamma
    }

    pub fn is_lindblad(&self) -> bool {
        self.down_rate() >= 0.0 && self.up_rate() >= 0.0
    }
}

fn check_time(t: f64) -> Result<()> {
    if t >= 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("t", format!("must be finite and >= 0, got {t}")))
    }
}

fn require_high_t(spec: &ReservoirSpec, operation: &'static str) -> Result<()> {
    if spec.is_high_temperature() {
        Ok(())
    } else {
        Err(Error::RequiresHighTemperature { operation })
    }
}

/// (e^z − 1 − z)/z², accurate near z = 0.
fn phi2(z: Complex64) -> Complex64 {
    if z.norm() < 0.5 {
        let mut term = Complex64::new(0.5, 0.0);
        let mut sum = term;
        for k in 3..24 {
            term = term * z / k as f64;
            sum += term;
        }
        sum
    } else {
        (z.exp() - 1.0 - z) / (z * z)
    }
}

struct Brackets {
    /// 1 − e^{−ω_c t}[cos ω₀t + r sin ω₀t]
    damping: f64,
    /// 1 − e^{−ω_c t}[cos ω₀t − (1/r) sin ω₀t]
    diffusion: f64,
}

/// The two bracketed combinations shared by all four closed forms, written
/// as `Re[1 − c·e^z]` with `z = (−ω_c + iω₀)t` and expanded so the parts
/// that cancel analytically at small t never reach floating point.
fn brackets(t: f64, cutoff: f64, frequency: f64) -> Brackets {
    let r = cutoff / frequency;
    let z = Complex64::new(-cutoff * t, frequency * t);
    let damp_c = Complex64::new(1.0, -r);
    let diff_c = Complex64::new(1.0, 1.0 / r);
    if z.norm() >= 0.5 {
        let e = z.exp();
        return Brackets {
            damping: 1.0 - (damp_c * e).re,
            diffusion: 1.0 - (diff_c * e).re,
        };
    }
    let tail = z * z * phi2(z);
    // Re[(1 − ir) z] vanishes identically
    let damping = -(damp_c * tail).re;
    // −Re[(1 + i/r) z] = (ω_c + ω₀²/ω_c) t
    let diffusion = (cutoff + frequency * frequency / cutoff) * t - (diff_c * tail).re;
    Brackets { damping, diffusion }
}

fn lorentz_weight(r: f64) -> f64 {
    r * r / (1.0 + r * r)
}

/// γ(t) = α²ω₀ r²/(1+r²) [1 − e^{−ω_c t} cos ω₀t − r e^{−ω_c t} sin ω₀t].
pub fn gamma_closed(t: f64, spec: &ReservoirSpec, sys: &SystemSpec) -> Result<f64> {
    check_time(t)?;
    let r = sys.ratio(spec);
    let b = brackets(t, spec.cutoff, sys.frequency);
    Ok(spec.coupling * sys.frequency * lorentz_weight(r) * b.damping)
}

/// Δ(t) = 2α²kT r²/(1+r²) {1 − e^{−ω_c t}[cos ω₀t − (1/r) sin ω₀t]}, high-T only.
pub fn delta_closed(t: f64, spec: &ReservoirSpec, sys: &SystemSpec) -> Result<f64> {
    require_high_t(spec, "delta_closed")?;
    check_time(t)?;
    let r = sys.ratio(spec);
    let b = brackets(t, spec.cutoff, sys.frequency);
    Ok(2.0 * spec.coupling_kt() * lorentz_weight(r) * b.diffusion)
}

/// Π(t) = 2α²kT r/(1+r²) [1 − e^{−ω_c t}(cos ω₀t + r sin ω₀t)], high-T only.
pub fn pi_closed(t: f64, spec: &ReservoirSpec, sys: &SystemSpec) -> Result<f64> {
    require_high_t(spec, "pi_closed")?;
    check_time(t)?;
    let r = sys.ratio(spec);
    let b = brackets(t, spec.cutoff, sys.frequency);
    Ok(2.0 * spec.coupling_kt() * r / (1.0 + r * r) * b.damping)
}

/// r(t) = 2α²ω₀ r³/(1+r²) {1 − e^{−ω_c t}[cos ω₀t − (1/r) sin ω₀t]}.
pub fn rshift_closed(t: f64, spec: &ReservoirSpec, sys: &SystemSpec) -> Result<f64> {
    check_time(t)?;
    let r = sys.ratio(spec);
    let b = brackets(t, spec.cutoff, sys.frequency);
    Ok(2.0 * spec.coupling * sys.frequency * r * lorentz_weight(r) * b.diffusion)
}

pub fn coefficients_closed(t: f64, spec: &ReservoirSpec, sys: &SystemSpec) -> Result<CoefficientSample> {
    require_high_t(spec, "coefficients_closed")?;
    check_time(t)?;
    let r = sys.ratio(spec);
    let b = brackets(t, spec.cutoff, sys.frequency);
    let w = lorentz_weight(r);
    let a2kt = spec.coupling_kt();
    Ok(CoefficientSample {
        t,
        delta: 2.0 * a2kt * w * b.diffusion,
        gamma: spec.coupling * sys.frequency * w * b.damping,
        pi: 2.0 * a2kt * r / (1.0 + r * r) * b.damping,
        rshift: 2.0 * spec.coupling * sys.frequency * r * w * b.diffusion,
        method: CoefficientMethod::ClosedForm,
    })
}

/// Long-time (Markovian) values of the coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Asymptotes {
    pub delta: f64,
    pub gamma: f64,
    /// Π(∞) and r(∞); only available in closed form (high-T mode).
    pub pi: Option<f64>,
    pub rshift: Option<f64>,
}

/// Δ(∞) = πα² I(ω₀) and γ(∞) = (π/2)α² J(ω₀) at any temperature.
pub fn asymptotes(spec: &ReservoirSpec, sys: &SystemSpec) -> Result<Asymptotes> {
    let r = sys.ratio(spec);
    let w = lorentz_weight(r);
    let gamma = spec.coupling * sys.frequency * w;
    if spec.is_high_temperature() {
        let a2kt = spec.coupling_kt();
        Ok(Asymptotes {
            delta: 2.0 * a2kt * w,
            gamma,
            pi: Some(2.0 * a2kt * r / (1.0 + r * r)),
            rshift: Some(2.0 * spec.coupling * sys.frequency * r * w),
        })
    } else {
        let delta = std::f64::consts::PI * spec.coupling * thermal_spectrum(sys.frequency, spec)?;
        let gamma_check = 0.5 * std::f64::consts::PI * spec.coupling * spectral_density(sys.frequency, spec)?;
        debug_assert!((gamma - gamma_check).abs() <= 1e-12 * gamma);
        Ok(Asymptotes {
            delta,
            gamma,
            pi: None,
            rshift: None,
        })
    }
}

/// Accuracy of the nested quadrature: `outer` governs the τ-integral over
/// `[0, t]`, `kernel` the inner frequency transforms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientTolerance {
    pub outer_rel: f64,
    pub outer_abs_fraction: f64,
    pub kernel: KernelTolerance,
}

impl Default for CoefficientTolerance {
    fn default() -> Self {
        Self {
            outer_rel: 1e-10,
            outer_abs_fraction: 1e-13,
            kernel: KernelTolerance::default(),
        }
    }
}

/// ∫ over `[a, b]` of the four coefficient integrands
/// `[κ cos ω₀τ, μ sin ω₀τ, κ sin ω₀τ, 2μ cos ω₀τ]`.
fn coefficient_increment(
    a: f64,
    b: f64,
    spec: &ReservoirSpec,
    sys: &SystemSpec,
    tol: &CoefficientTolerance,
) -> Result<[f64; 4]> {
    let w0 = sys.frequency;
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let integrand = |tau: f64| -> [f64; 4] {
        let kernels = noise_kernel(tau, spec, &tol.kernel).and_then(|k| {
            dissipation_kernel(tau, spec, &tol.kernel).map(|m| (k.scalar(), m.scalar()))
        });
        match kernels {
            Ok((kappa, mu)) => {
                let (s, c) = (w0 * tau).sin_cos();
                [kappa * c, mu * s, kappa * s, 2.0 * mu * c]
            }
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                [f64::NAN; 4]
            }
        }
    };

    // natural scales of the four integrals over one reservoir time
    let noise_scale = 2.0 * spec.coupling_kt().max(spec.coupling * w0);
    let diss_scale = spec.coupling * spec.cutoff.max(w0);
    let outer = Tolerance::new(
        tol.outer_abs_fraction * noise_scale.min(diss_scale) * (b - a).min(1.0 / spec.cutoff) * spec.cutoff,
        tol.outer_rel,
    );

    let result = integrate_vec(integrand, a, b, &outer);
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    result.map(|est| est.value).map_err(|source| Error::Quadrature {
        context: format!("coefficient integrals on [{a:e}, {b:e}]"),
        source,
    })
}

/// Kernel magnitude, relative to its largest sampled value, treated as zero.
const KERNEL_FLOOR: f64 = 1e-17;

/// All four coefficients at time `t` by nested quadrature over τ ∈ [0, t].
pub fn coefficients_quadrature(
    t: f64,
    spec: &ReservoirSpec,
    sys: &SystemSpec,
    tol: &CoefficientTolerance,
) -> Result<CoefficientSample> {
    check_time(t)?;
    if t == 0.0 {
        return Ok(CoefficientSample::zero(CoefficientMethod::Quadrature));
    }
    // split at multiples of the faster of the two time scales so every
    // panel sees at most one oscillation or one e-fold of the kernel
    let step = (1.0 / spec.cutoff).min(std::f64::consts::TAU / sys.frequency);
    let pieces = ((t / step).ceil() as usize).max(1);
    let mut total = [0.0; 4];
    let mut peak = [0.0f64; 2];
    let mut quiet = 0;
    for i in 0..pieces {
        let a = t * i as f64 / pieces as f64;
        let b = t * (i + 1) as f64 / pieces as f64;
        if i > 0 {
            // once both kernels sit at roundoff level at several consecutive
            // boundaries the rest of the lag range adds nothing
            let kappa = noise_kernel(a, spec, &tol.kernel)?.scalar().abs();
            let mu = dissipation_kernel(a, spec, &tol.kernel)?.scalar().abs();
            peak = [peak[0].max(kappa), peak[1].max(mu)];
            if kappa <= KERNEL_FLOOR * peak[0] && mu <= KERNEL_FLOOR * peak[1] {
                quiet += 1;
                if quiet >= 3 {
                    break;
                }
            } else {
                quiet = 0;
            }
        }
        let inc = coefficient_increment(a, b, spec, sys, tol)?;
        for (acc, v) in total.iter_mut().zip(inc) {
            *acc += v;
        }
    }
    Ok(CoefficientSample {
        t,
        delta: total[0],
        gamma: total[1],
        pi: total[2],
        rshift: total[3],
        method: CoefficientMethod::Quadrature,
    })
}

/// Source of coefficient values used by the analytic and dynamical solvers.
pub trait CoefficientModel: Send + Sync {
    fn sample(&self, t: f64) -> CoefficientSample;

    fn method(&self) -> CoefficientMethod;

    fn asymptotes(&self) -> Asymptotes;

    /// Reservoir cutoff ω_c (s⁻¹).
    fn cutoff(&self) -> f64;

    /// Oscillator frequency ω₀ (s⁻¹).
    fn frequency(&self) -> f64;

    /// (Δ(t), γ(t)).
    fn delta_gamma(&self, t: f64) -> (f64, f64) {
        let s = self.sample(t);
        (s.delta, s.gamma)
    }
}

/// Closed-form coefficients (high-temperature Lorentz–Drude reservoir).
#[derive(Debug, Clone, Copy)]
pub struct ClosedFormCoefficients {
    spec: ReservoirSpec,
    cutoff: f64,
    frequency: f64,
    delta_scale: f64,
    gamma_scale: f64,
    pi_scale: f64,
    rshift_scale: f64,
}

impl ClosedFormCoefficients {
    pub fn new(spec: &ReservoirSpec, sys: &SystemSpec) -> Result<Self> {
        require_high_t(spec, "closed-form coefficients")?;
        spec.validate()?;
        sys.validate()?;
        let r = sys.ratio(spec);
        let w = lorentz_weight(r);
        Ok(Self {
            spec: *spec,
            cutoff: spec.cutoff,
            frequency: sys.frequency,
            delta_scale: 2.0 * spec.coupling_kt() * w,
            gamma_scale: spec.coupling * sys.frequency * w,
            pi_scale: 2.0 * spec.coupling_kt() * r / (1.0 + r * r),
            rshift_scale: 2.0 * spec.coupling * sys.frequency * r * w,
        })
    }

    /// Same model with γ and r(t) switched off while Δ and Π are kept; used to
    /// isolate the pure-diffusion limit.
    pub fn without_damping(mut self) -> Self {
        self.gamma_scale = 0.0;
        self.rshift_scale = 0.0;
        self
    }
}

impl CoefficientModel for ClosedFormCoefficients {
    fn sample(&self, t: f64) -> CoefficientSample {
        let b = brackets(t, self.cutoff, self.frequency);
        CoefficientSample {
            t,
            delta: self.delta_scale * b.diffusion,
            gamma: self.gamma_scale * b.damping,
            pi: self.pi_scale * b.damping,
            rshift: self.rshift_scale * b.diffusion,
            method: CoefficientMethod::ClosedForm,
        }
    }

    fn method(&self) -> CoefficientMethod {
        CoefficientMethod::ClosedForm
    }

    fn asymptotes(&self) -> Asymptotes {
        Asymptotes {
            delta: self.delta_scale,
            gamma: self.gamma_scale,
            pi: Some(self.pi_scale),
            rshift: Some(self.rshift_scale),
        }
    }

    fn cutoff(&self) -> f64 {
        self.cutoff
    }

    fn frequency(&self) -> f64 {
        self.frequency
    }

    fn delta_gamma(&self, t: f64) -> (f64, f64) {
        let b = brackets(t, self.cutoff, self.frequency);
        (self.delta_scale * b.diffusion, self.gamma_scale * b.damping)
    }
}

impl std::fmt::Debug for dyn CoefficientModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "CoefficientModel({})", self.method().as_str())
    }
}

impl ClosedFormCoefficients {
    pub fn reservoir(&self) -> &ReservoirSpec {
        &self.spec
    }
}

/// Time-independent coefficients, for synthetic checks of the solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantCoefficients {
    pub delta: f64,
    pub gamma: f64,
    pub pi: f64,
    pub rshift: f64,
    pub cutoff: f64,
    pub frequency: f64,
}

impl CoefficientModel for ConstantCoefficients {
    fn sample(&self, t: f64) -> CoefficientSample {
        CoefficientSample {
            t,
            delta: self.delta,
            gamma: self.gamma,
            pi: self.pi,
            rshift: self.rshift,
            method: CoefficientMethod::ClosedForm,
        }
    }

    fn method(&self) -> CoefficientMethod {
        CoefficientMethod::ClosedForm
    }

    fn asymptotes(&self) -> Asymptotes {
        Asymptotes {
            delta: self.delta,
            gamma: self.gamma,
            pi: Some(self.pi),
            rshift: Some(self.rshift),
        }
    }

    fn cutoff(&self) -> f64 {
        self.cutoff
    }

    fn frequency(&self) -> f64 {
        self.frequency
    }
}

/// Quadrature coefficients tabulated on a uniform grid and interpolated with
/// cubic Hermite polynomials. Node derivatives are the exact integrands
/// (e.g. dΔ/dt = κ(t) cos ω₀t), so interpolation is fourth-order accurate.
#[derive(Debug, Clone)]
pub struct TabulatedCoefficients {
    step: f64,
    values: Vec<[f64; 4]>,
    slopes: Vec<[f64; 4]>,
    asymptotes: Asymptotes,
    cutoff: f64,
    frequency: f64,
}

impl TabulatedCoefficients {
    /// Tabulate on `[0, t_max]` with node spacing no larger than `max_step`.
    pub fn build(
        spec: &ReservoirSpec,
        sys: &SystemSpec,
        t_max: f64,
        max_step: f64,
        tol: &CoefficientTolerance,
    ) -> Result<Self> {
        check_time(t_max)?;
        if !(max_step > 0.0) {
            return Err(Error::invalid("max_step", "must be > 0"));
        }
        let intervals = ((t_max / max_step).ceil() as usize).max(1);
        let step = t_max.max(max_step) / intervals as f64;
        let w0 = sys.frequency;

        let increments: Vec<[f64; 4]> = (0..intervals)
            .into_par_iter()
            .map(|i| coefficient_increment(i as f64 * step, (i + 1) as f64 * step, spec, sys, tol))
            .collect::<Result<_>>()?;

        let mut values = Vec::with_capacity(intervals + 1);
        let mut acc = [0.0; 4];
        values.push(acc);
        for inc in &increments {
            for (a, v) in acc.iter_mut().zip(inc) {
                *a += v;
            }
            values.push(acc);
        }

        let slopes: Vec<[f64; 4]> = (0..=intervals)
            .into_par_iter()
            .map(|i| -> Result<[f64; 4]> {
                let tau = i as f64 * step;
                if tau == 0.0 && !spec.is_high_temperature() {
                    // κ diverges logarithmically at zero lag; fall back to the
                    // secant of the first interval
                    let first = increments[0];
                    return Ok([first[0] / step, first[1] / step, first[2] / step, first[3] / step]);
                }
                let kappa = noise_kernel(tau, spec, &tol.kernel)?.scalar();
                let mu = dissipation_kernel(tau, spec, &tol.kernel)?.scalar();
                let (s, c) = (w0 * tau).sin_cos();
                Ok([kappa * c, mu * s, kappa * s, 2.0 * mu * c])
            })
            .collect::<Result<_>>()?;

        Ok(Self {
            step,
            values,
            slopes,
            asymptotes: asymptotes(spec, sys)?,
            cutoff: spec.cutoff,
            frequency: sys.frequency,
        })
    }

    pub fn t_max(&self) -> f64 {
        self.step * (self.values.len() - 1) as f64
    }

    fn interpolate(&self, t: f64) -> [f64; 4] {
        let last = self.values.len() - 1;
        let x = (t / self.step).max(0.0);
        let i = (x.floor() as usize).min(last - 1);
        let s = (x - i as f64).clamp(0.0, 1.0);
        let h = self.step;
        let (h00, h10, h01, h11) = (
            (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s),
            s * (1.0 - s) * (1.0 - s),
            s * s * (3.0 - 2.0 * s),
            s * s * (s - 1.0),
        );
        let mut out = [0.0; 4];
        for c in 0..4 {
            out[c] = h00 * self.values[i][c]
                + h10 * h * self.slopes[i][c]
                + h01 * self.values[i + 1][c]
                + h11 * h * self.slopes[i + 1][c];
        }
        out
    }
}

impl CoefficientModel for TabulatedCoefficients {
    fn sample(&self, t: f64) -> CoefficientSample {
        let v = self.interpolate(t);
        CoefficientSample {
            t,
            delta: v[0],
            gamma: v[1],
            pi: v[2],
            rshift: v[3],
            method: CoefficientMethod::Quadrature,
        }
    }

    fn method(&self) -> CoefficientMethod {
        CoefficientMethod::Quadrature
    }

    fn asymptotes(&self) -> Asymptotes {
        self.asymptotes
    }

    fn cutoff(&self) -> f64 {
        self.cutoff
    }

    fn frequency(&self) -> f64 {
        self.frequency
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Lindblad,
    NonLindblad,
}

impl Regime {
    pub fn label(&self) -> &'static str {
        match self {
            Regime::Lindblad => "L",
            Regime::NonLindblad => "NL",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeInterval {
    pub start: f64,
    pub end: f64,
    pub regime: Regime,
}

/// Which rate combination crosses zero at a refined boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    DeltaPlusGamma,
    DeltaMinusGamma,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignChange {
    pub time: f64,
    pub channel: Channel,
}

/// A strictly increasing time grid with coefficient samples and one regime
/// label per inter-sample interval.
#[derive(Debug, Clone, Serialize)]
pub struct CoefficientGrid {
    pub samples: Vec<CoefficientSample>,
    pub intervals: Vec<RegimeInterval>,
    pub sign_changes: Vec<SignChange>,
}

pub fn validate_grid(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::InvalidGrid("empty time grid".into()));
    }
    if times[0] < 0.0 || !times.iter().all(|t| t.is_finite()) {
        return Err(Error::InvalidGrid("times must be finite and non-negative".into()));
    }
    if let Some(w) = times.windows(2).find(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidGrid(format!("not strictly increasing at {:e} -> {:e}", w[0], w[1])));
    }
    Ok(())
}

impl CoefficientGrid {
    /// Sample `model` on `times` and classify every interval.
    pub fn build(times: &[f64], model: &dyn CoefficientModel, resolution: f64) -> Result<Self> {
        validate_grid(times)?;
        let samples: Vec<CoefficientSample> = times.par_iter().map(|&t| model.sample(t)).collect();
        let (intervals, sign_changes) = classify_regime(&samples, |t| model.sample(t), resolution);
        Ok(Self {
            samples,
            intervals,
            sign_changes,
        })
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    /// Fraction of the covered span labelled non-Lindblad.
    pub fn non_lindblad_fraction(&self) -> f64 {
        let span: f64 = self.intervals.iter().map(|i| i.end - i.start).sum();
        if span == 0.0 {
            return 0.0;
        }
        self.intervals
            .iter()
            .filter(|i| i.regime == Regime::NonLindblad)
            .map(|i| i.end - i.start)
            .sum::<f64>()
            / span
    }

    pub fn all_lindblad(&self) -> bool {
        self.intervals.iter().all(|i| i.regime == Regime::Lindblad) && self.samples.iter().all(|s| s.is_lindblad())
    }

    /// First non-Lindblad interval, if any.
    pub fn first_non_lindblad(&self) -> Option<RegimeInterval> {
        self.intervals.iter().copied().find(|i| i.regime == Regime::NonLindblad)
    }
}

type RateOf = fn(&CoefficientSample) -> f64;

/// Label each inter-sample interval and refine the zero crossings of Δ ± γ by
/// bisection on `evaluate` down to `resolution` (seconds).
pub fn classify_regime<F>(samples: &[CoefficientSample], evaluate: F, resolution: f64) -> (Vec<RegimeInterval>, Vec<SignChange>)
where
    F: Fn(f64) -> CoefficientSample,
{
    let mut intervals = Vec::with_capacity(samples.len().saturating_sub(1));
    let mut changes = Vec::new();
    for pair in samples.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let regime = if a.is_lindblad() && b.is_lindblad() {
            Regime::Lindblad
        } else {
            Regime::NonLindblad
        };
        intervals.push(RegimeInterval {
            start: a.t,
            end: b.t,
            regime,
        });

        let channels: [(Channel, RateOf); 2] = [
            (Channel::DeltaPlusGamma, CoefficientSample::down_rate),
            (Channel::DeltaMinusGamma, CoefficientSample::up_rate),
        ];
        for (channel, rate) in channels {
            let (fa, fb) = (rate(&a), rate(&b));
            if (fa < 0.0) != (fb < 0.0) {
                let (mut lo, mut hi) = (a.t, b.t);
                let lo_negative = fa < 0.0;
                while hi - lo > resolution {
                    let mid = 0.5 * (lo + hi);
                    if (rate(&evaluate(mid)) < 0.0) == lo_negative {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                changes.push(SignChange {
                    time: 0.5 * (lo + hi),
                    channel,
                });
            }
        }
    }
    changes.sort_by(|x, y| x.time.total_cmp(&y.time));
    (intervals, changes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reservoir::InitialState;

    fn setup(r: f64) -> (ReservoirSpec, SystemSpec) {
        let wc = 1e6;
        let spec = ReservoirSpec::high_temperature(wc, 2e-3, 1.3e9).unwrap();
        let sys = SystemSpec::new(wc / r, InitialState::Fock(0)).unwrap();
        (spec, sys)
    }

    /// Direct evaluation of the closed forms, used only as a
    /// cross-check for the cancellation-free evaluation.
    fn naive(t: f64, spec: &ReservoirSpec, sys: &SystemSpec) -> [f64; 4] {
        let r = sys.ratio(spec);
        let (w0, wc) = (sys.frequency, spec.cutoff);
        let e = (-wc * t).exp();
        let (s, c) = (w0 * t).sin_cos();
        let w = r * r / (1.0 + r * r);
        [
            2.0 * spec.coupling_kt() * w * (1.0 - e * (c - s / r)),
            spec.coupling * w0 * w * (1.0 - e * c - r * e * s),
            2.0 * spec.coupling_kt() * r / (1.0 + r * r) * (1.0 - e * (c + r * s)),
            2.0 * spec.coupling * w0 * r * w * (1.0 - e * (c - s / r)),
        ]
    }

    #[test]
    fn stable_brackets_agree_with_direct_forms() {
        for &r in &[0.1, 1.0, 10.0] {
            let (spec, sys) = setup(r);
            for i in 1..200 {
                let t = i as f64 * 0.07e-6;
                let s = coefficients_closed(t, &spec, &sys).unwrap();
                let n = naive(t, &spec, &sys);
                for (got, want) in [s.delta, s.gamma, s.pi, s.rshift].iter().zip(n) {
                    assert!((got - want).abs() <= 1e-11 * want.abs().max(1e-3 * n[0].abs().max(n[1].abs())));
                }
            }
        }
    }

    #[test]
    fn small_time_series_limits() {
        let (spec, sys) = setup(10.0);
        let t = 1e-6 / spec.cutoff;
        let g = gamma_closed(t, &spec, &sys).unwrap();
        // γ ≈ α² ω_c² ω₀ t²/2 and Δ ≈ 2α²kT ω_c t at leading order
        let g_lead = spec.coupling * spec.cutoff.powi(2) * sys.frequency * t * t / 2.0;
        assert!((g - g_lead).abs() < 1e-5 * g_lead);
        let d = delta_closed(t, &spec, &sys).unwrap();
        let d_lead = 2.0 * spec.coupling_kt() * spec.cutoff * t;
        assert!((d - d_lead).abs() < 1e-5 * d_lead);
    }

    #[test]
    fn zero_time_is_exactly_zero() {
        let (spec, sys) = setup(0.1);
        let s = coefficients_closed(0.0, &spec, &sys).unwrap();
        assert_eq!((s.delta, s.gamma, s.pi, s.rshift), (0.0, 0.0, 0.0, 0.0));
        let q = coefficients_quadrature(0.0, &spec, &sys, &CoefficientTolerance::default()).unwrap();
        assert_eq!((q.delta, q.gamma, q.pi, q.rshift), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn asymptotic_values() {
        let (spec, sys) = setup(3.0);
        let r = 3.0;
        let far = 200.0 / spec.cutoff;
        let g = gamma_closed(far, &spec, &sys).unwrap();
        let g_inf = spec.coupling * sys.frequency * r * r / (1.0 + r * r);
        assert!((g - g_inf).abs() < 1e-12 * g_inf);
        let d = delta_closed(far, &spec, &sys).unwrap();
        assert!((d - 2.0 * spec.coupling_kt() * r * r / (1.0 + r * r)).abs() < 1e-12 * d);
        // γ(∞)(1 + r²)/r² = α²ω₀
        let a = asymptotes(&spec, &sys).unwrap();
        assert!((a.gamma * (1.0 + r * r) / (r * r) - spec.coupling * sys.frequency).abs() < 1e-12 * a.gamma);
    }

    #[test]
    fn pi_asymptote_matches_scalar_integral() {
        // ∫₀^∞ 2α²kT ω_c e^{−ω_c τ} sin(ω₀τ) dτ by plain adaptive quadrature
        let (spec, sys) = setup(0.4);
        let tol = Tolerance::new(0.0, 1e-12);
        let wc = spec.cutoff;
        let upper = 60.0 / wc;
        let oracle = crate::quadrature::integrate(
            |tau| 2.0 * spec.coupling_kt() * wc * (-wc * tau).exp() * (sys.frequency * tau).sin(),
            0.0,
            upper,
            &tol,
        )
        .unwrap()
        .scalar();
        let r = sys.ratio(&spec);
        let expected = 2.0 * spec.coupling_kt() * r / (1.0 + r * r);
        assert!((oracle - expected).abs() < 1e-9 * expected);
        assert_eq!(asymptotes(&spec, &sys).unwrap().pi, Some(expected));
    }

    #[test]
    fn gamma_reference_point() {
        // r = 1, ω_c t = ω₀ t = 1: γ = α²ω₀/2 · [1 − e⁻¹(cos 1 + sin 1)]
        let (spec, sys) = setup(1.0);
        let t = 1.0 / spec.cutoff;
        let expected = spec.coupling * sys.frequency / 2.0 * (1.0 - (1f64.cos() + 1f64.sin()) / 1f64.exp());
        let got = gamma_closed(t, &spec, &sys).unwrap();
        assert!((got - expected).abs() < 1e-14 * expected);
        let q = coefficients_quadrature(t, &spec, &sys, &CoefficientTolerance::default()).unwrap();
        assert!((q.gamma - expected).abs() < 1e-8 * expected);
    }

    #[test]
    fn delta_requires_high_temperature() {
        let spec = ReservoirSpec::finite_temperature(1e6, 1e-3, 1e7).unwrap();
        let sys = SystemSpec::ground(1e6).unwrap();
        assert!(matches!(delta_closed(1e-6, &spec, &sys), Err(Error::RequiresHighTemperature { .. })));
        assert!(pi_closed(1e-6, &spec, &sys).is_err());
        assert!(gamma_closed(1e-6, &spec, &sys).is_ok());
        assert!(rshift_closed(1e-6, &spec, &sys).is_ok());
        assert!(ClosedFormCoefficients::new(&spec, &sys).is_err());
    }

    #[test]
    fn delta_goes_negative_only_for_small_ratio() {
        let (spec, sys) = setup(0.1);
        let w0 = sys.frequency;
        let negative = (1..=20_000)
            .map(|i| i as f64 * 20.0 / w0 / 20_000.0)
            .any(|t| delta_closed(t, &spec, &sys).unwrap() < 0.0);
        assert!(negative);
        for &r in &[1.0, 2.0, 10.0, 100.0] {
            let (spec, sys) = setup(r);
            let w0 = sys.frequency;
            for i in 0..=20_000 {
                let t = i as f64 * 50.0 / w0 / 20_000.0;
                assert!(delta_closed(t, &spec, &sys).unwrap() >= 0.0, "r={r} t={t:e}");
            }
        }
    }

    #[test]
    fn temperature_scaling() {
        let (spec, sys) = setup(0.7);
        let hot = ReservoirSpec::high_temperature(spec.cutoff, spec.coupling, 2.0 * spec.coupling_kt()).unwrap();
        for i in 0..50 {
            let t = i as f64 * 0.13e-6;
            let a = coefficients_closed(t, &spec, &sys).unwrap();
            let b = coefficients_closed(t, &hot, &sys).unwrap();
            assert_eq!(a.gamma, b.gamma);
            assert_eq!(a.rshift, b.rshift);
            assert!((b.delta - 2.0 * a.delta).abs() <= 1e-15 * b.delta.abs());
            assert!((b.pi - 2.0 * a.pi).abs() <= 1e-15 * b.pi.abs());
        }
    }

    #[test]
    fn asymptotic_ratio_of_delta_to_gamma() {
        let (spec, sys) = setup(10.0);
        let kt_over_w0 = spec.kt() / sys.frequency;
        let far = 500.0 / spec.cutoff;
        let ratio = delta_closed(far, &spec, &sys).unwrap() / gamma_closed(far, &spec, &sys).unwrap();
        assert!((ratio - 2.0 * kt_over_w0).abs() < 1e-6 * 2.0 * kt_over_w0);
    }

    #[test]
    fn finite_temperature_asymptotes_give_thermal_occupation() {
        let spec = ReservoirSpec::finite_temperature(1e6, 1e-3, 3e5).unwrap();
        let sys = SystemSpec::ground(4e5).unwrap();
        let a = asymptotes(&spec, &sys).unwrap();
        let stationary = (a.delta - a.gamma) / (2.0 * a.gamma);
        let n = crate::reservoir::thermal_occupation(4e5, 3e5).unwrap();
        assert!((stationary - n).abs() < 1e-12 * n);
    }

    #[test]
    fn tabulated_model_reproduces_closed_form_in_high_t() {
        let (spec, sys) = setup(1.0);
        let wc = spec.cutoff;
        let table = TabulatedCoefficients::build(&spec, &sys, 4.0 / wc, 0.05 / wc, &CoefficientTolerance::default()).unwrap();
        let closed = ClosedFormCoefficients::new(&spec, &sys).unwrap();
        for i in 0..=97 {
            let t = i as f64 * 4.0 / wc / 97.0;
            let a = table.sample(t);
            let b = closed.sample(t);
            let scale = closed.asymptotes().delta;
            assert!((a.delta - b.delta).abs() < 1e-7 * scale);
            assert!((a.gamma - b.gamma).abs() < 1e-7 * closed.asymptotes().gamma);
        }
    }

    #[test]
    fn classification_of_reference_ratios() {
        for (r, expect_lindblad) in [(10.0, true), (1.0, true), (0.1, false)] {
            let (spec, sys) = setup(r);
            let model = ClosedFormCoefficients::new(&spec, &sys).unwrap();
            let t_max = 5.0 / spec.cutoff.min(sys.frequency);
            let times: Vec<f64> = (0..=2000).map(|i| i as f64 * t_max / 2000.0).collect();
            let grid = CoefficientGrid::build(&times, &model, 1e-3 / sys.frequency).unwrap();
            assert_eq!(grid.all_lindblad(), expect_lindblad, "r = {r}");
            assert_eq!(grid.intervals.len(), times.len() - 1);
            if !expect_lindblad {
                assert!(grid.non_lindblad_fraction() > 0.0);
                let change = grid.sign_changes[0];
                let d = model.sample(change.time);
                // refined to 1e-3/ω₀: the rate is near zero there
                let slope_scale = model.asymptotes().delta * sys.frequency;
                assert!(d.up_rate().abs() < 2e-3 / sys.frequency * slope_scale * 20.0);
            }
        }
    }

    #[test]
    fn grid_must_increase() {
        let (spec, sys) = setup(1.0);
        let model = ClosedFormCoefficients::new(&spec, &sys).unwrap();
        assert!(CoefficientGrid::build(&[0.0, 1e-6, 1e-6], &model, 1e-9).is_err());
        assert!(CoefficientGrid::build(&[], &model, 1e-9).is_err());
    }
}
