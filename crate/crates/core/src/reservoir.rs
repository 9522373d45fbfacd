//! Reservoir and oscillator parameterisation, the Ohmic Lorentz–Drude
//! spectral density and the noise/dissipation kernels.
//!
//! Units: ħ = k_B = 1. Frequencies are angular (s⁻¹) and the temperature only
//! enters as `kT` in s⁻¹.

use std::f64::consts::{FRAC_2_PI, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{fourier_integral_shifted, Estimate, Tolerance, Weight};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SpectralFamily {
    #[default]
    OhmicLorentzDrude,
}

/// Temperature of the reservoir. In the high-temperature idealisation only
/// the product `α²kT` is meaningful and is carried as a single number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Temperature {
    Finite { kt: f64 },
    High { coupling_kt: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReservoirSpec {
    /// Cut-off frequency ω_c (s⁻¹).
    pub cutoff: f64,
    /// Dimensionless coupling α².
    pub coupling: f64,
    pub temperature: Temperature,
    pub family: SpectralFamily,
}

impl ReservoirSpec {
    pub fn finite_temperature(cutoff: f64, coupling: f64, kt: f64) -> Result<Self> {
        let spec = Self {
            cutoff,
            coupling,
            temperature: Temperature::Finite { kt },
            family: SpectralFamily::OhmicLorentzDrude,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn high_temperature(cutoff: f64, coupling: f64, coupling_kt: f64) -> Result<Self> {
        let spec = Self {
            cutoff,
            coupling,
            temperature: Temperature::High { coupling_kt },
            family: SpectralFamily::OhmicLorentzDrude,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cutoff.is_finite() && self.cutoff > 0.0) {
            return Err(Error::invalid("cutoff", format!("must be > 0, got {}", self.cutoff)));
        }
        if !(self.coupling.is_finite() && self.coupling > 0.0) {
            return Err(Error::invalid("coupling", format!("must be > 0, got {}", self.coupling)));
        }
        match self.temperature {
            Temperature::Finite { kt } if !(kt.is_finite() && kt >= 0.0) => {
                Err(Error::invalid("kt", format!("must be >= 0, got {kt}")))
            }
            Temperature::High { coupling_kt } if !(coupling_kt.is_finite() && coupling_kt > 0.0) => Err(
                Error::invalid("coupling_kt", format!("must be finite and > 0, got {coupling_kt}")),
            ),
            _ => Ok(()),
        }
    }

    pub fn is_high_temperature(&self) -> bool {
        matches!(self.temperature, Temperature::High { .. })
    }

    /// The product α²kT.
    pub fn coupling_kt(&self) -> f64 {
        match self.temperature {
            Temperature::Finite { kt } => self.coupling * kt,
            Temperature::High { coupling_kt } => coupling_kt,
        }
    }

    /// kT in s⁻¹. In the high-temperature mode this is recovered from the
    /// product α²kT and the explicitly supplied α².
    pub fn kt(&self) -> f64 {
        match self.temperature {
            Temperature::Finite { kt } => kt,
            Temperature::High { coupling_kt } => coupling_kt / self.coupling,
        }
    }

    /// Same reservoir with α² scaled by `factor` and kT by `1/factor`.
    pub fn rescaled_coupling(&self, factor: f64) -> Self {
        let temperature = match self.temperature {
            Temperature::Finite { kt } => Temperature::Finite { kt: kt / factor },
            t @ Temperature::High { .. } => t,
        };
        Self {
            coupling: self.coupling * factor,
            temperature,
            ..*self
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    Fock(usize),
    Populations(Vec<f64>),
}

impl InitialState {
    pub fn mean_n(&self) -> f64 {
        match self {
            InitialState::Fock(n) => *n as f64,
            InitialState::Populations(p) => p.iter().enumerate().map(|(n, w)| n as f64 * w).sum(),
        }
    }

    /// Highest occupied Fock level.
    pub fn max_level(&self) -> usize {
        match self {
            InitialState::Fock(n) => *n,
            InitialState::Populations(p) => p.iter().rposition(|&w| w > 0.0).unwrap_or(0),
        }
    }

    pub fn populations(&self, dimension: usize) -> Vec<f64> {
        let mut out = vec![0.0; dimension];
        match self {
            InitialState::Fock(n) => {
                if *n < dimension {
                    out[*n] = 1.0;
                }
            }
            InitialState::Populations(p) => {
                for (o, w) in out.iter_mut().zip(p) {
                    *o = *w;
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if let InitialState::Populations(p) = self {
            if p.is_empty() {
                return Err(Error::invalid("populations", "empty population vector"));
            }
            if let Some(w) = p.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
                return Err(Error::invalid("populations", format!("entry {w} is negative or not finite")));
            }
            let total: f64 = p.iter().sum();
            if (total - 1.0).abs() > 1e-12 {
                return Err(Error::invalid("populations", format!("sum is {total}, expected 1")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    /// Oscillator frequency ω₀ (s⁻¹).
    pub frequency: f64,
    pub initial: InitialState,
}

impl SystemSpec {
    pub fn new(frequency: f64, initial: InitialState) -> Result<Self> {
        let sys = Self { frequency, initial };
        sys.validate()?;
        Ok(sys)
    }

    pub fn ground(frequency: f64) -> Result<Self> {
        Self::new(frequency, InitialState::Fock(0))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.frequency.is_finite() && self.frequency > 0.0) {
            return Err(Error::invalid("omega0", format!("must be > 0, got {}", self.frequency)));
        }
        self.initial.validate()
    }

    /// r = ω_c / ω₀.
    pub fn ratio(&self, reservoir: &ReservoirSpec) -> f64 {
        reservoir.cutoff / self.frequency
    }
}

fn lorentzian(omega: f64, cutoff: f64) -> f64 {
    let c2 = cutoff * cutoff;
    c2 / (c2 + omega * omega)
}

/// J(ω) = (2ω/π) ω_c² / (ω_c² + ω²).
pub fn spectral_density(omega: f64, spec: &ReservoirSpec) -> Result<f64> {
    if !(omega >= 0.0) {
        return Err(Error::invalid("omega", format!("spectral density needs omega >= 0, got {omega}")));
    }
    Ok(FRAC_2_PI * omega * lorentzian(omega, spec.cutoff))
}

/// Bose–Einstein occupation 1/(e^{ω/kT} − 1).
pub fn thermal_occupation(omega: f64, kt: f64) -> Result<f64> {
    if !(omega > 0.0) {
        return Err(Error::invalid("omega", format!("occupation needs omega > 0, got {omega}")));
    }
    if !(kt >= 0.0) {
        return Err(Error::invalid("kt", format!("must be >= 0, got {kt}")));
    }
    if kt == 0.0 {
        return Ok(0.0);
    }
    Ok(1.0 / (omega / kt).exp_m1())
}

/// (ω/2)·coth(ω/2kT) = ω(n(ω) + 1/2), finite at ω → 0.
fn symmetrized_occupation_weight(omega: f64, kt: f64) -> f64 {
    if kt == 0.0 {
        return 0.5 * omega;
    }
    let x = omega / (2.0 * kt);
    if x < 1e-6 {
        kt * (1.0 + x * x / 3.0)
    } else {
        0.5 * omega / x.tanh()
    }
}

/// α² I(ω), the coupling-weighted thermal spectrum that enters the noise kernel.
fn coupled_thermal_spectrum(omega: f64, spec: &ReservoirSpec) -> f64 {
    let shape = FRAC_2_PI * lorentzian(omega, spec.cutoff);
    match spec.temperature {
        Temperature::High { coupling_kt } => coupling_kt * shape,
        Temperature::Finite { kt } => spec.coupling * shape * symmetrized_occupation_weight(omega, kt),
    }
}

/// I(ω) = J(ω)(n(ω) + 1/2); in the high-temperature mode (2kT/π) ω_c²/(ω_c² + ω²).
pub fn thermal_spectrum(omega: f64, spec: &ReservoirSpec) -> Result<f64> {
    if !(omega > 0.0) {
        return Err(Error::invalid("omega", format!("thermal spectrum needs omega > 0, got {omega}")));
    }
    Ok(match spec.temperature {
        Temperature::High { .. } => FRAC_2_PI * spec.kt() * lorentzian(omega, spec.cutoff),
        Temperature::Finite { kt } => {
            FRAC_2_PI * lorentzian(omega, spec.cutoff) * symmetrized_occupation_weight(omega, kt)
        }
    })
}

/// Accuracy settings for the kernel transforms. The absolute tolerance is a
/// fraction of the kernel's natural magnitude `ω_c · |integrand(ω_c)| · π`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelTolerance {
    pub rel_tol: f64,
    pub abs_fraction: f64,
}

impl Default for KernelTolerance {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_fraction: 1e-14,
        }
    }
}

impl KernelTolerance {
    fn for_reference(&self, reference: f64) -> Tolerance {
        Tolerance::new(self.abs_fraction * reference.abs(), self.rel_tol)
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau >= 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("tau", format!("kernel lag must be finite and >= 0, got {tau}")))
    }
}

fn lorentzian_c(z: Complex64, cutoff: f64) -> Complex64 {
    let c2 = cutoff * cutoff;
    c2 / (c2 + z * z)
}

fn symmetrized_occupation_weight_c(z: Complex64, kt: f64) -> Complex64 {
    if kt == 0.0 {
        return 0.5 * z;
    }
    let x = z / (2.0 * kt);
    if x.norm() < 1e-6 {
        kt * (1.0 + x * x / 3.0)
    } else if x.re.abs() > 20.0 {
        // tanh saturates; the complex formula overflows here
        0.5 * z * x.re.signum()
    } else {
        0.5 * z / x.tanh()
    }
}

/// Height of the integration line for the kernel transforms: three quarters
/// of the distance to the nearest singularity above the real axis (the
/// Lorentzian pole at iω_c or the first Matsubara pole at 2πikT).
fn contour_shift(spec: &ReservoirSpec) -> f64 {
    let nearest = match spec.temperature {
        Temperature::Finite { kt } if kt > 0.0 => spec.cutoff.min(2.0 * PI * kt),
        _ => spec.cutoff,
    };
    0.75 * nearest
}

/// Noise kernel κ(τ) = 2α² ∫₀^∞ I(ω) cos(ωτ) dω, by quadrature.
///
/// At finite temperature the vacuum part of I(ω) decays only as 1/ω, so the
/// kernel has an integrable logarithmic singularity at τ = 0 and the zero lag
/// itself is rejected.
pub fn noise_kernel(tau: f64, spec: &ReservoirSpec, tol: &KernelTolerance) -> Result<Estimate<1>> {
    check_tau(tau)?;
    if tau == 0.0 && !spec.is_high_temperature() {
        return Err(Error::invalid(
            "tau",
            "the finite-temperature noise kernel diverges at zero lag",
        ));
    }
    let wc = spec.cutoff;
    let integrand = |z: Complex64| {
        let shape = FRAC_2_PI * lorentzian_c(z, wc);
        2.0 * match spec.temperature {
            Temperature::High { coupling_kt } => coupling_kt * shape,
            Temperature::Finite { kt } => spec.coupling * shape * symmetrized_occupation_weight_c(z, kt),
        }
    };
    let reference = PI * wc * 2.0 * coupled_thermal_spectrum(wc, spec);
    fourier_integral_shifted(
        integrand,
        Weight::Cos,
        tau,
        wc,
        contour_shift(spec),
        &tol.for_reference(reference),
    )
    .map_err(|source| Error::Quadrature {
        context: format!("noise kernel at tau = {tau:e}"),
        source,
    })
}

/// Dissipation kernel μ(τ) = α² ∫₀^∞ J(ω) sin(ωτ) dω, by quadrature.
///
/// At τ = 0 the sine transform is defined by its τ → 0⁺ limit, α²ω_c².
pub fn dissipation_kernel(tau: f64, spec: &ReservoirSpec, tol: &KernelTolerance) -> Result<Estimate<1>> {
    check_tau(tau)?;
    let wc = spec.cutoff;
    if tau == 0.0 {
        return Ok(Estimate {
            value: [spec.coupling * wc * wc],
            error: [0.0],
            magnitude: [0.0],
            evaluations: 0,
        });
    }
    let integrand = |z: Complex64| spec.coupling * FRAC_2_PI * z * lorentzian_c(z, wc);
    let reference = PI * wc * spec.coupling * FRAC_2_PI * wc * lorentzian(wc, wc);
    // μ does not depend on temperature, so the line height is fixed by the
    // Lorentzian pole alone
    fourier_integral_shifted(
        integrand,
        Weight::Sin,
        tau,
        wc,
        0.75 * wc,
        &tol.for_reference(reference),
    )
    .map_err(|source| Error::Quadrature {
        context: format!("dissipation kernel at tau = {tau:e}"),
        source,
    })
}

/// Closed form of κ(τ) in the high-temperature mode: 2α²kT ω_c e^{−ω_c τ}.
pub fn noise_kernel_closed(tau: f64, spec: &ReservoirSpec) -> Result<f64> {
    if !spec.is_high_temperature() {
        return Err(Error::RequiresHighTemperature {
            operation: "noise_kernel_closed",
        });
    }
    check_tau(tau)?;
    Ok(2.0 * spec.coupling_kt() * spec.cutoff * (-spec.cutoff * tau).exp())
}

/// Closed form of μ(τ): α²ω_c² e^{−ω_c τ}.
pub fn dissipation_kernel_closed(tau: f64, spec: &ReservoirSpec) -> Result<f64> {
    check_tau(tau)?;
    Ok(spec.coupling * spec.cutoff * spec.cutoff * (-spec.cutoff * tau).exp())
}
