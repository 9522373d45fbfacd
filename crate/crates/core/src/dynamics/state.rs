use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Dense complex N×N matrix, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityMatrix {
    pub dimension: usize,
    pub data: Vec<Complex64>,
}

impl DensityMatrix {
    pub fn zeros(dimension: usize) -> Self {
        Self {
            dimension,
            data: vec![Complex64::new(0.0, 0.0); dimension * dimension],
        }
    }

    pub fn diagonal(populations: &[f64]) -> Self {
        let mut m = Self::zeros(populations.len());
        for (n, p) in populations.iter().enumerate() {
            m.data[n * populations.len() + n] = Complex64::new(*p, 0.0);
        }
        m
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.dimension + col]
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dimension).map(|n| self.get(n, n)).sum()
    }

    /// max |ρ_mn − ρ̄_nm|.
    pub fn hermiticity_deviation(&self) -> f64 {
        let n = self.dimension;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.get(i, j) - self.get(j, i).conj()).norm());
            }
        }
        worst
    }

    /// Replace ρ by (ρ + ρ†)/2.
    pub fn symmetrize(&mut self) {
        let n = self.dimension;
        for i in 0..n {
            self.data[i * n + i].im = 0.0;
            for j in (i + 1)..n {
                let avg = 0.5 * (self.data[i * n + j] + self.data[j * n + i].conj());
                self.data[i * n + j] = avg;
                self.data[j * n + i] = avg.conj();
            }
        }
    }

    pub fn populations(&self) -> Vec<f64> {
        (0..self.dimension).map(|n| self.get(n, n).re).collect()
    }
}

/// Oscillator state in a truncated Fock basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TruncatedState {
    Populations(Vec<f64>),
    Density(DensityMatrix),
    Amplitudes(Vec<Complex64>),
}

impl TruncatedState {
    pub fn dimension(&self) -> usize {
        match self {
            TruncatedState::Populations(p) => p.len(),
            TruncatedState::Density(m) => m.dimension,
            TruncatedState::Amplitudes(a) => a.len(),
        }
    }

    fn weights(&self) -> Vec<f64> {
        match self {
            TruncatedState::Populations(p) => p.clone(),
            TruncatedState::Density(m) => m.populations(),
            TruncatedState::Amplitudes(a) => {
                let norm: f64 = a.iter().map(|c| c.norm_sqr()).sum();
                a.iter().map(|c| c.norm_sqr() / norm).collect()
            }
        }
    }

    /// Total weight in the top two Fock levels.
    pub fn leak(&self) -> f64 {
        self.weights().iter().rev().take(2).sum()
    }
}

/// ⟨a†a⟩ of a state (normalised by ⟨ψ|ψ⟩ for amplitude vectors).
pub fn mean_n(state: &TruncatedState) -> f64 {
    state.weights().iter().enumerate().map(|(n, w)| n as f64 * w).sum()
}

/// Fock dimension for which a thermal state of mean occupation `max_mean_n`
/// has less than 1e-10 of its weight above the cut, with two spare levels.
pub fn suggest_dimension(max_mean_n: f64, initial_level: usize) -> usize {
    let n = max_mean_n.max(0.0);
    let thermal = if n < 1e-12 {
        1.0
    } else {
        (1e10f64).ln() / ((n + 1.0) / n).ln()
    };
    (thermal.ceil() as usize).max(initial_level + 1) + 2 + 8
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_means() {
        let mut fock = vec![0.0; 6];
        fock[3] = 1.0;
        assert_eq!(mean_n(&TruncatedState::Populations(fock.clone())), 3.0);
        assert_eq!(mean_n(&TruncatedState::Density(DensityMatrix::diagonal(&fock))), 3.0);
        let amps: Vec<Complex64> = fock.iter().map(|&p| Complex64::new(0.0, 2.0 * p)).collect();
        assert_eq!(mean_n(&TruncatedState::Amplitudes(amps)), 3.0);
        assert_eq!(mean_n(&TruncatedState::Populations(vec![0.25; 4])), 1.5);
    }

    #[test]
    fn thermal_vector_mean() {
        // p_n = x^n(1 − x) with x = 1/2; Σ n p_n = x/(1 − x) = 1
        let p: Vec<f64> = (0..200).map(|n| 0.5f64.powi(n) * 0.5).collect();
        let m = mean_n(&TruncatedState::Populations(p));
        assert!((m - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dimension_covers_thermal_tail() {
        for &n in &[0.5, 3.0, 40.0, 1e4] {
            let dim = suggest_dimension(n, 0);
            let tail = (n / (n + 1.0)).powf((dim - 2) as f64);
            assert!(tail < 1e-10, "n={n} dim={dim}");
        }
        assert!(suggest_dimension(0.0, 7) >= 8);
    }

    #[test]
    fn symmetrize_makes_hermitian() {
        let mut m = DensityMatrix::zeros(3);
        m.data[1] = Complex64::new(1.0, 2.0);
        m.data[3] = Complex64::new(0.0, 1.0);
        m.data[4] = Complex64::new(0.5, 0.3);
        assert!(m.hermiticity_deviation() > 0.0);
        m.symmetrize();
        assert_eq!(m.hermiticity_deviation(), 0.0);
    }
}
