//! Adaptive Gauss–Kronrod quadrature and a Fourier-integral driver for
//! semi-infinite cosine/sine transforms.
//!
//! The finite-interval integrator is a QUADPACK-style QAG scheme on the
//! 21-point Kronrod extension of the 10-point Gauss rule, generalised to
//! vector-valued integrands so several integrals sharing expensive
//! evaluations can be refined together. Fourier integrals over `[0, ∞)` are
//! split at the zeros of the oscillatory weight; each half-period is integrated
//! with the phase reduced to `[0, π)` and the alternating sequence of partial
//! sums is accelerated with Wynn's epsilon algorithm.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::QuadratureError;

#[allow(clippy::excessive_precision)]
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

#[allow(clippy::excessive_precision)]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_958_109_831_074,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

const ROUNDOFF_FLOOR: f64 = 100.0 * f64::EPSILON;

/// Tolerances for the adaptive integrators. An integral is accepted when its
/// error estimate is below `max(abs_tol, rel_tol * |value|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
}

impl Tolerance {
    pub fn new(abs_tol: f64, rel_tol: f64) -> Self {
        Self {
            abs_tol,
            rel_tol,
            max_subdivisions: 2000,
        }
    }

    fn bound(&self, value: f64) -> f64 {
        self.abs_tol.max(self.rel_tol * value.abs())
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Self::new(0.0, 1e-10)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate<const N: usize> {
    pub value: [f64; N],
    pub error: [f64; N],
    /// Integral of `|f|` per component, used to scale tolerances of callers.
    pub magnitude: [f64; N],
    pub evaluations: usize,
}

impl Estimate<1> {
    pub fn scalar(&self) -> f64 {
        self.value[0]
    }
    pub fn scalar_error(&self) -> f64 {
        self.error[0]
    }
}

#[derive(Debug, Clone, Copy)]
struct Panel<const N: usize> {
    lower: f64,
    upper: f64,
    value: [f64; N],
    error: [f64; N],
    magnitude: [f64; N],
}

/// One application of the 21-point Gauss–Kronrod pair on `[a, b]`.
fn kronrod21<const N: usize, F>(f: &F, a: f64, b: f64) -> Result<Panel<N>, QuadratureError>
where
    F: Fn(f64) -> [f64; N],
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let f_center = f(center);
    check_finite(&f_center, center)?;

    let mut kronrod = [0.0; N];
    let mut gauss = [0.0; N];
    let mut abs_sum = [0.0; N];
    let mut samples = [[[0.0; N]; 2]; 10];

    for c in 0..N {
        kronrod[c] = f_center[c] * WGK[10];
        abs_sum[c] = f_center[c].abs() * WGK[10];
    }

    for j in 0..10 {
        let dx = half * XGK[j];
        let lo = f(center - dx);
        let hi = f(center + dx);
        check_finite(&lo, center - dx)?;
        check_finite(&hi, center + dx)?;
        samples[j] = [lo, hi];
        for c in 0..N {
            let sum = lo[c] + hi[c];
            kronrod[c] += WGK[j] * sum;
            abs_sum[c] += WGK[j] * (lo[c].abs() + hi[c].abs());
            // odd Kronrod abscissae are the Gauss nodes
            if j % 2 == 1 {
                gauss[c] += WG[j / 2] * sum;
            }
        }
    }

    let mut value = [0.0; N];
    let mut error = [0.0; N];
    let mut magnitude = [0.0; N];
    for c in 0..N {
        let mean = 0.5 * kronrod[c];
        let mut asc = WGK[10] * (f_center[c] - mean).abs();
        for (j, pair) in samples.iter().enumerate() {
            asc += WGK[j] * ((pair[0][c] - mean).abs() + (pair[1][c] - mean).abs());
        }
        let resasc = asc * half.abs();
        let resabs = abs_sum[c] * half.abs();
        let mut err = ((kronrod[c] - gauss[c]) * half).abs();
        if resasc != 0.0 && err != 0.0 {
            err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
        }
        if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
            err = err.max(50.0 * f64::EPSILON * resabs);
        }
        value[c] = kronrod[c] * half;
        error[c] = err;
        magnitude[c] = resabs;
    }

    Ok(Panel {
        lower: a,
        upper: b,
        value,
        error,
        magnitude,
    })
}

fn check_finite<const N: usize>(v: &[f64; N], at: f64) -> Result<(), QuadratureError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(QuadratureError::NonFinite { at })
    }
}

struct Ranked<const N: usize> {
    score: f64,
    panel: Panel<N>,
}

impl<const N: usize> PartialEq for Ranked<N> {
    fn eq(&self, other: &Self) -> bool {
        self.score == other.score
    }
}
impl<const N: usize> Eq for Ranked<N> {}
impl<const N: usize> PartialOrd for Ranked<N> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<const N: usize> Ord for Ranked<N> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.score.total_cmp(&other.score)
    }
}

/// Adaptive integration of a vector-valued integrand over `[a, b]`.
///
/// Panels are bisected in order of their largest error contribution until
/// every component satisfies its tolerance. Summation over panels is done in
/// a fixed (left-to-right) order so the result does not depend on the
/// refinement history beyond the final partition.
pub fn integrate_vec<const N: usize, F>(
    f: F,
    a: f64,
    b: f64,
    tol: &Tolerance,
) -> Result<Estimate<N>, QuadratureError>
where
    F: Fn(f64) -> [f64; N],
{
    if a == b {
        return Ok(Estimate {
            value: [0.0; N],
            error: [0.0; N],
            magnitude: [0.0; N],
            evaluations: 0,
        });
    }

    let first = kronrod21(&f, a, b)?;
    let mut evaluations = 21;
    let mut value = first.value;
    let mut error = first.error;
    let mut magnitude = first.magnitude;

    let score = |p: &Panel<N>, total: &[f64; N]| -> f64 {
        (0..N)
            .map(|c| p.error[c] / tol.bound(total[c]).max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max)
    };

    let mut heap = BinaryHeap::new();
    heap.push(Ranked {
        score: score(&first, &value),
        panel: first,
    });

    // a component is done once its error is at the tolerance or at the
    // roundoff floor set by the integral of |f|
    let converged = |value: &[f64; N], error: &[f64; N], magnitude: &[f64; N]| {
        (0..N).all(|c| error[c] <= tol.bound(value[c]).max(ROUNDOFF_FLOOR * magnitude[c]))
    };

    let mut subdivisions = 0;
    while !converged(&value, &error, &magnitude) {
        if subdivisions >= tol.max_subdivisions {
            let worst = (0..N)
                .max_by(|&i, &j| {
                    (error[i] / tol.bound(value[i]).max(f64::MIN_POSITIVE))
                        .total_cmp(&(error[j] / tol.bound(value[j]).max(f64::MIN_POSITIVE)))
                })
                .unwrap_or(0);
            return Err(QuadratureError::NotConverged {
                lower: a,
                upper: b,
                estimate: value[worst],
                achieved: error[worst],
                requested: tol.bound(value[worst]),
            });
        }
        let Some(Ranked { panel, .. }) = heap.pop() else {
            break;
        };
        let mid = 0.5 * (panel.lower + panel.upper);
        if mid <= panel.lower || mid >= panel.upper {
            // interval exhausted at machine resolution; keep its estimate
            heap.push(Ranked { score: 0.0, panel });
            break;
        }
        let left = kronrod21(&f, panel.lower, mid)?;
        let right = kronrod21(&f, mid, panel.upper)?;
        evaluations += 42;
        subdivisions += 1;
        for c in 0..N {
            value[c] += left.value[c] + right.value[c] - panel.value[c];
            error[c] += left.error[c] + right.error[c] - panel.error[c];
            magnitude[c] += left.magnitude[c] + right.magnitude[c] - panel.magnitude[c];
        }
        heap.push(Ranked {
            score: score(&left, &value),
            panel: left,
        });
        heap.push(Ranked {
            score: score(&right, &value),
            panel: right,
        });
    }

    // recompute totals from the final partition in a fixed order
    let mut panels: Vec<Panel<N>> = heap.into_iter().map(|r| r.panel).collect();
    panels.sort_by(|p, q| p.lower.total_cmp(&q.lower));
    let mut value = [0.0; N];
    let mut error = [0.0; N];
    let mut magnitude = [0.0; N];
    for p in &panels {
        for c in 0..N {
            value[c] += p.value[c];
            error[c] += p.error[c];
            magnitude[c] += p.magnitude[c];
        }
    }

    Ok(Estimate {
        value,
        error,
        magnitude,
        evaluations,
    })
}

/// Scalar convenience wrapper around [`integrate_vec`].
pub fn integrate<F>(f: F, a: f64, b: f64, tol: &Tolerance) -> Result<Estimate<1>, QuadratureError>
where
    F: Fn(f64) -> f64,
{
    integrate_vec(|x| [f(x)], a, b, tol)
}

/// Integral of `f` over `[0, ∞)` via the map `x = scale * u / (1 - u)`.
pub fn integrate_semi_infinite<F>(
    f: F,
    scale: f64,
    tol: &Tolerance,
) -> Result<Estimate<1>, QuadratureError>
where
    F: Fn(f64) -> f64,
{
    integrate(
        |u| {
            // nodes can round onto the endpoint u = 1
            let v = (1.0 - u).max(0.5 * f64::EPSILON);
            let x = scale * u / v;
            f(x) * scale / (v * v)
        },
        0.0,
        1.0,
        tol,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weight {
    Cos,
    Sin,
}

/// Limit of the sequence of partial sums estimated by Wynn's epsilon
/// algorithm. Returns the estimate and the difference between the last two
/// even columns as an error indicator.
pub fn wynn_epsilon(partial_sums: &[f64]) -> (f64, f64) {
    let n = partial_sums.len();
    match n {
        0 => return (0.0, f64::INFINITY),
        1 | 2 => {
            let last = partial_sums[n - 1];
            let prev = if n == 2 { partial_sums[0] } else { f64::INFINITY };
            return (last, (last - prev).abs());
        }
        _ => {}
    }

    let mut previous = vec![0.0; n + 1];
    let mut current: Vec<f64> = partial_sums.to_vec();
    let mut best = current[n - 1];
    let mut best_err = (current[n - 1] - current[n - 2]).abs();
    let mut last_even = best;

    for column in 1..n {
        let len = current.len() - 1;
        let mut next = Vec::with_capacity(len);
        let mut breakdown = false;
        for i in 0..len {
            let diff = current[i + 1] - current[i];
            if diff == 0.0 {
                breakdown = true;
                break;
            }
            next.push(previous[i + 1] + 1.0 / diff);
        }
        if breakdown || next.is_empty() {
            break;
        }
        previous = current;
        current = next;
        if column % 2 == 0 {
            let candidate = current[current.len() - 1];
            if !candidate.is_finite() {
                break;
            }
            let err = (candidate - last_even).abs();
            if err <= best_err {
                best = candidate;
                best_err = err;
            }
            last_even = candidate;
        }
    }

    (best, best_err)
}

/// Fourier integral `∫₀^∞ g(ω) w(ωτ) dω` for `w ∈ {cos, sin}`.
///
/// `scale` is the frequency scale of `g` (the Lorentzian width for the
/// reservoir kernels); it is used to place the change of variables at
/// `τ = 0` and to decide when the tail of alternating half-period
/// contributions is regular enough for extrapolation.
pub fn fourier_integral<F>(
    g: F,
    weight: Weight,
    tau: f64,
    scale: f64,
    tol: &Tolerance,
) -> Result<Estimate<1>, QuadratureError>
where
    F: Fn(f64) -> f64,
{
    fourier_integral_shifted(|z: Complex64| Complex64::new(g(z.re), 0.0), weight, tau, scale, 0.0, tol)
}

/// Fourier integral evaluated along the line `Im ω = shift` instead of the
/// real axis.
///
/// `g` must be analytic in the strip `0 ≤ Im ω ≤ shift`, real on the real
/// axis, even for [`Weight::Cos`] and odd for [`Weight::Sin`]. Under those
/// conditions the segment `[0, i·shift]` contributes only to the discarded
/// part of `∫ g e^{iωτ}`, so
///
/// ```text
/// ∫₀^∞ g(ω) cos(ωτ) dω = Re ∫₀^∞ g(x + ih) e^{i(x+ih)τ} dx
/// ∫₀^∞ g(ω) sin(ωτ) dω = Im ∫₀^∞ g(x + ih) e^{i(x+ih)τ} dx
/// ```
///
/// The factor `e^{-hτ}` carried by every panel keeps the alternating partial
/// sums from cancelling down to the (exponentially small) result at large τ.
pub fn fourier_integral_shifted<F>(
    g: F,
    weight: Weight,
    tau: f64,
    scale: f64,
    shift: f64,
    tol: &Tolerance,
) -> Result<Estimate<1>, QuadratureError>
where
    F: Fn(Complex64) -> Complex64,
{
    if tau == 0.0 {
        return match weight {
            Weight::Cos => integrate_semi_infinite(|x| g(Complex64::new(x, 0.0)).re, scale, tol),
            Weight::Sin => Ok(Estimate {
                value: [0.0],
                error: [0.0],
                magnitude: [0.0],
                evaluations: 0,
            }),
        };
    }

    let half_period = PI / tau;
    let damping = (-shift * tau).exp();
    let project = |z: Complex64| match weight {
        Weight::Cos => z.re,
        Weight::Sin => z.im,
    };

    // Past this index the half-period terms alternate with slowly varying
    // magnitude and the epsilon table is reliable.
    let min_terms = ((8.0 * scale / half_period).ceil() as usize).max(8);
    let max_terms = min_terms + 20_000;
    let window = 40;

    let inner = Tolerance {
        abs_tol: tol.abs_tol * 1e-3,
        rel_tol: tol.rel_tol.min(1e-13),
        max_subdivisions: tol.max_subdivisions,
    };

    let mut partial = Vec::with_capacity(min_terms + window);
    let mut sum = 0.0;
    let mut compensation = 0.0;
    let mut magnitude = 0.0;
    let mut panel_error = 0.0;
    let mut evaluations = 0;
    let mut last_estimate = f64::NAN;

    for k in 0..max_terms {
        let origin = k as f64 * half_period;
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let panel = integrate(
            |u| {
                let phase = Complex64::from_polar(damping, u * tau);
                project(g(Complex64::new(origin + u, shift)) * phase)
            },
            0.0,
            half_period,
            &inner,
        )?;
        evaluations += panel.evaluations;
        magnitude += panel.magnitude[0];
        panel_error += panel.error[0];

        // Kahan summation of the alternating sequence
        let term = sign * panel.value[0] - compensation;
        let next = sum + term;
        compensation = (next - sum) - term;
        sum = next;
        partial.push(sum);

        if k + 1 < min_terms {
            continue;
        }
        let start = partial.len().saturating_sub(window);
        let (estimate, extrapolation_error) = wynn_epsilon(&partial[start..]);
        let change = (estimate - last_estimate).abs();
        last_estimate = estimate;
        let achieved = extrapolation_error.max(change) + panel_error;
        let requested = tol.abs_tol.max(tol.rel_tol * estimate.abs());
        if achieved <= requested || (change == 0.0 && extrapolation_error <= requested) {
            return Ok(Estimate {
                value: [estimate],
                error: [achieved],
                magnitude: [magnitude],
                evaluations,
            });
        }
    }

    let start = partial.len().saturating_sub(window);
    let (estimate, extrapolation_error) = wynn_epsilon(&partial[start..]);
    Err(QuadratureError::NotConverged {
        lower: 0.0,
        upper: f64::INFINITY,
        estimate,
        achieved: extrapolation_error + panel_error,
        requested: tol.abs_tol.max(tol.rel_tol * estimate.abs()),
    })
}
