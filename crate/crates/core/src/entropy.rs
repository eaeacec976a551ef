//! Macroscopic entropy of a wave function, the von Neumann entropy of a
//! density matrix, the quantum Boltzmann entropy and the H-theorem along a
//! trajectory.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::Serialize;

use crate::dynamics::{macro_probabilities, macro_trajectory, DensityMatrix, TimeGrid};
use crate::error::{ensure_dim, Error, Result};
use crate::linalg;
use crate::sampling::{MacroDecomposition, StateVector};
use crate::spectra::Spectrum;

/// Eigenvalues below `-NEGATIVE_EIGENVALUE_TOLERANCE` make a density matrix
/// invalid for [`Entropy::von_neumann`].
pub const NEGATIVE_EIGENVALUE_TOLERANCE: f64 = 1e-8;

/// `p log p` with `0 log 0 = 0`; `p` is clamped to `[0, 1]` first.
fn p_log_p(p: f64) -> f64 {
    let p = p.clamp(0.0, 1.0);
    if p == 0.0 {
        0.0
    } else {
        p * p.ln()
    }
}

/// Entropy functionals in units of the Boltzmann constant `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Entropy {
    k: f64,
}

impl Default for Entropy {
    fn default() -> Self {
        Self { k: 1.0 }
    }
}

/// `k Σ_ν p_ν log d_ν` together with the term `k Σ_ν p_ν log p_ν` it drops
/// relative to the macroscopic entropy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EntropyApprox {
    pub value: f64,
    pub dropped: f64,
}

impl Entropy {
    pub fn new(k: f64) -> Result<Self> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::Precondition(format!("Boltzmann constant must be positive, got {k}")));
        }
        Ok(Self { k })
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    /// `k log D`
    pub fn maximum(&self, dim: usize) -> f64 {
        self.k * (dim as f64).ln()
    }

    /// `-k Σ_ν p_ν log(p_ν / d_ν)` for given macro probabilities.
    pub fn from_probabilities(&self, probabilities: &[f64], dims: &[usize]) -> f64 {
        self.k
            * probabilities
                .iter()
                .zip(dims)
                .map(|(&p, &d)| p.clamp(0.0, 1.0) * (d as f64).ln() - p_log_p(p))
                .sum::<f64>()
    }

    /// Macroscopic entropy `S(ψ)`.
    pub fn of_state(&self, psi: &StateVector, decomp: &MacroDecomposition) -> Result<f64> {
        Ok(self.from_probabilities(&macro_probabilities(psi, decomp)?, decomp.dims()))
    }

    /// `-k tr(ρ log ρ)`
    pub fn von_neumann(&self, rho: &DensityMatrix) -> Result<f64> {
        let eigenvalues = linalg::hermitian_eigenvalues(rho.as_ref());
        if let Some(bad) = eigenvalues.iter().find(|&&l| l < -NEGATIVE_EIGENVALUE_TOLERANCE) {
            return Err(Error::InvalidDensity(format!("negative eigenvalue {bad:e}")));
        }
        Ok(-self.k * eigenvalues.iter().map(|&l| p_log_p(l)).sum::<f64>())
    }

    /// `k log d_ν`
    pub fn quantum_boltzmann(&self, nu: usize, decomp: &MacroDecomposition) -> Result<f64> {
        if nu >= decomp.n_blocks() {
            return Err(Error::IndexOutOfRange { index: nu, len: decomp.n_blocks() });
        }
        Ok(self.k * (decomp.block_dim(nu) as f64).ln())
    }

    /// Weighted average of the quantum Boltzmann entropies.
    pub fn approx(&self, psi: &StateVector, decomp: &MacroDecomposition) -> Result<EntropyApprox> {
        let p = macro_probabilities(psi, decomp)?;
        Ok(self.approx_from_probabilities(&p, decomp.dims()))
    }

    pub fn approx_from_probabilities(&self, probabilities: &[f64], dims: &[usize]) -> EntropyApprox {
        let mut value = 0.0;
        let mut dropped = 0.0;
        for (&p, &d) in probabilities.iter().zip(dims) {
            value += p.clamp(0.0, 1.0) * (d as f64).ln();
            dropped += p_log_p(p);
        }
        EntropyApprox { value: self.k * value, dropped: self.k * dropped }
    }
}

/// `S(ψ_t)` on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropyTrajectory {
    pub times: Vec<f64>,
    pub s_values: Vec<f64>,
    /// `k log D`
    pub s_max: f64,
    pub theta: f64,
    /// Fraction of grid times with `S ≥ θ k log D`.
    pub fraction_near_max: f64,
    /// Grid average of `S(ψ_t)`.
    pub mean_s: f64,
    /// `k Σ_ν (d_ν/D) log d_ν`, the value expected for most times when the
    /// macro probabilities sit near `d_ν/D` and the `p log p` term is dropped.
    pub prediction: f64,
}

/// Entropy along `ψ_t` for `t_k = kT/N`.
pub fn h_theorem_trajectory(
    entropy: &Entropy,
    psi0: &StateVector,
    decomp: &MacroDecomposition,
    spectrum: &Spectrum,
    horizon: f64,
    samples: usize,
    theta: f64,
) -> Result<EntropyTrajectory> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::Precondition(format!("theta must lie in (0, 1), got {theta}")));
    }
    spectrum.ensure_resonance_free()?;
    let grid = TimeGrid::new(horizon, samples)?;
    let traj = macro_trajectory(psi0, decomp, spectrum, &grid)?;
    let dims = decomp.dims();
    let dim = decomp.dim();
    let s_max = entropy.maximum(dim);

    let mut p = vec![0.0; decomp.n_blocks()];
    let s_values: Vec<f64> = (0..samples)
        .map(|k| {
            for (nu, slot) in p.iter_mut().enumerate() {
                *slot = traj[(nu, k)];
            }
            entropy.from_probabilities(&p, dims)
        })
        .collect();
    let near = s_values.iter().filter(|&&s| s >= theta * s_max).count();
    let prediction = entropy.k()
        * dims.iter().map(|&d| d as f64 / dim as f64 * (d as f64).ln()).sum::<f64>();

    Ok(EntropyTrajectory {
        times: grid.times(),
        mean_s: linalg::pairwise_sum(&s_values) / samples as f64,
        s_values,
        s_max,
        theta,
        fraction_near_max: near as f64 / samples as f64,
        prediction,
    })
}

/// Collapsed entropies smaller than `S(ψ)` by more than this relative margin
/// count as a decrease.
const DECREASE_TOLERANCE: f64 = 1e-12;

/// Statistics of a macroscopic measurement on a superposition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasurementSummary {
    pub probabilities: Vec<f64>,
    /// `S(ψ)` before the measurement.
    pub entropy_before: f64,
    /// `S_qB(ν)` after collapse onto each outcome.
    pub collapsed_entropy: Vec<f64>,
    /// Exact probability that the collapsed entropy is below `S(ψ)`.
    pub decrease_probability: f64,
    /// Exact expectation `Σ_ν p_ν k log d_ν` of the collapsed entropy.
    pub expected_collapsed_entropy: f64,
    pub trials: usize,
    pub outcome_counts: Vec<usize>,
    pub empirical_decrease_fraction: f64,
    pub empirical_mean_collapsed_entropy: f64,
}

/// Simulates `trials` macro-measurements of `ψ`: outcome `ν` with probability
/// `p_ν`, after which the state lies in `ℋ_ν` with entropy `k log d_ν`.
pub fn superposition_measurement<R: Rng + ?Sized>(
    entropy: &Entropy,
    psi: &StateVector,
    decomp: &MacroDecomposition,
    rng: &mut R,
    trials: usize,
) -> Result<MeasurementSummary> {
    ensure_dim(decomp.dim(), psi.dim())?;
    if trials == 0 {
        return Err(Error::Precondition("measurement simulation needs at least one trial".into()));
    }
    let probabilities: Vec<f64> = macro_probabilities(psi, decomp)?.iter().map(|p| p.clamp(0.0, 1.0)).collect();
    let entropy_before = entropy.from_probabilities(&probabilities, decomp.dims());
    let collapsed_entropy = (0..decomp.n_blocks())
        .map(|nu| entropy.quantum_boltzmann(nu, decomp))
        .collect::<Result<Vec<_>>>()?;
    let decreases: Vec<bool> = collapsed_entropy
        .iter()
        .map(|&s| s < entropy_before - DECREASE_TOLERANCE * entropy_before.abs().max(entropy.k()))
        .collect();
    let decrease_probability =
        probabilities.iter().zip(&decreases).filter(|(_, &d)| d).map(|(p, _)| p).sum();
    let expected_collapsed_entropy = entropy.approx_from_probabilities(&probabilities, decomp.dims()).value;

    let sampler = WeightedIndex::new(&probabilities)
        .map_err(|e| Error::Precondition(format!("invalid outcome distribution: {e}")))?;
    let mut outcome_counts = vec![0usize; decomp.n_blocks()];
    for _ in 0..trials {
        outcome_counts[sampler.sample(rng)] += 1;
    }
    let n = trials as f64;
    let empirical_decrease_fraction =
        outcome_counts.iter().zip(&decreases).filter(|(_, &d)| d).map(|(&c, _)| c as f64).sum::<f64>() / n;
    let empirical_mean_collapsed_entropy =
        outcome_counts.iter().zip(&collapsed_entropy).map(|(&c, s)| c as f64 * s).sum::<f64>() / n;

    Ok(MeasurementSummary {
        probabilities,
        entropy_before,
        collapsed_entropy,
        decrease_probability,
        expected_collapsed_entropy,
        trials,
        outcome_counts,
        empirical_decrease_fraction,
        empirical_mean_collapsed_entropy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::c64;
    use crate::rng::trial_rng;
    use crate::sampling::{aligned_decomposition, random_decomposition, uniform_sphere_state};
    use crate::spectra::sample_nonresonant_spectrum;

    const K: Entropy = Entropy { k: 1.0 };

    fn two_block_superposition(d1: usize, d2: usize, weight1: f64) -> (StateVector, MacroDecomposition) {
        let decomp = aligned_decomposition(&[d1, d2]).unwrap();
        let mut c = vec![c64::new(0.0, 0.0); d1 + d2];
        c[0] = c64::new(weight1.sqrt(), 0.0);
        c[d1] = c64::new((1.0 - weight1).sqrt(), 0.0);
        (StateVector::new(c).unwrap(), decomp)
    }

    #[test]
    fn state_in_one_macro_space() {
        let d = aligned_decomposition(&[100, 20]).unwrap();
        let s = K.of_state(&StateVector::basis(120, 3).unwrap(), &d).unwrap();
        assert!((s - 100f64.ln()).abs() < 1e-12);
        assert!((s - 4.60517).abs() < 1e-5);
    }

    #[test]
    fn even_superposition() {
        let (psi, d) = two_block_superposition(7, 7, 0.5);
        assert!((K.of_state(&psi, &d).unwrap() - 14f64.ln()).abs() < 1e-12);
        let approx = K.approx(&psi, &d).unwrap();
        assert!((approx.value - 7f64.ln()).abs() < 1e-12);
        assert!((approx.dropped + 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn equilibrium_probabilities_reach_the_maximum() {
        let dims = [3, 5, 12];
        let p: Vec<f64> = dims.iter().map(|&d| d as f64 / 20.0).collect();
        assert!((K.from_probabilities(&p, &dims) - 20f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn von_neumann_examples() {
        let psi = uniform_sphere_state(6, &mut trial_rng(1, 0)).unwrap();
        assert!(K.von_neumann(&DensityMatrix::pure(&psi)).unwrap().abs() < 1e-10);
        assert!((K.von_neumann(&DensityMatrix::micro_canonical(8)).unwrap() - 8f64.ln()).abs() < 1e-12);
        let d = random_decomposition(&[3, 5], &mut trial_rng(1, 1)).unwrap();
        for nu in 0..2 {
            let rho = DensityMatrix::normalized_projector(&d, nu);
            let svn = K.von_neumann(&rho).unwrap();
            assert!((svn - K.quantum_boltzmann(nu, &d).unwrap()).abs() < 1e-10);
        }
    }

    #[test]
    fn quantum_boltzmann_bounds() {
        let d = aligned_decomposition(&[1, 9]).unwrap();
        assert_eq!(K.quantum_boltzmann(0, &d).unwrap(), 0.0);
        let single = aligned_decomposition(&[10]).unwrap();
        assert!((K.quantum_boltzmann(0, &single).unwrap() - K.maximum(10)).abs() < 1e-15);
        assert!(matches!(K.quantum_boltzmann(2, &d), Err(Error::IndexOutOfRange { index: 2, len: 2 })));
    }

    #[test]
    fn boltzmann_constant_scales() {
        let e = Entropy::new(2.5).unwrap();
        assert!((e.maximum(10) - 2.5 * 10f64.ln()).abs() < 1e-15);
        assert!(Entropy::new(0.0).is_err());
    }

    #[test]
    fn measurement_examples() {
        let (psi, d) = two_block_superposition(5, 5, 0.5);
        let m = superposition_measurement(&K, &psi, &d, &mut trial_rng(2, 0), 1000).unwrap();
        assert!((m.decrease_probability - 1.0).abs() < 1e-12);
        assert!((m.entropy_before - m.collapsed_entropy[0] - 2f64.ln()).abs() < 1e-12);
        assert_eq!(m.empirical_decrease_fraction, 1.0);

        let d = random_decomposition(&[4, 4], &mut trial_rng(2, 1)).unwrap();
        let inside = d.block_state(1).unwrap();
        let m = superposition_measurement(&K, &inside, &d, &mut trial_rng(2, 2), 100).unwrap();
        assert_eq!(m.decrease_probability, 0.0);

        let (psi, d) = two_block_superposition(10, 1000, 0.5);
        let m = superposition_measurement(&K, &psi, &d, &mut trial_rng(2, 3), 10).unwrap();
        assert!((m.decrease_probability - 0.5).abs() < 1e-15);
        let approx = K.approx(&psi, &d).unwrap().value;
        assert!((m.expected_collapsed_entropy - approx).abs() < 1e-12);
    }

    #[test]
    fn stationary_equilibrium_trajectory() {
        // populations proportional to d_ν in an aligned decomposition are
        // stationary, and sit at the maximum
        let dims = [2, 3, 5];
        let d = aligned_decomposition(&dims).unwrap();
        let c: Vec<c64> = (0..10).map(|_| c64::new((0.1f64).sqrt(), 0.0)).collect();
        let psi = StateVector::new(c).unwrap();
        let s = sample_nonresonant_spectrum(10, (0.0, 1.0), &mut trial_rng(3, 0), 1e-12, 10).unwrap();
        let traj = h_theorem_trajectory(&K, &psi, &d, &s, 500.0, 64, 0.9).unwrap();
        assert_eq!(traj.fraction_near_max, 1.0);
        assert!(traj.s_values.iter().all(|v| (v - 10f64.ln()).abs() < 1e-12));
    }

    #[test]
    fn trajectory_prediction_for_equal_blocks() {
        let s = sample_nonresonant_spectrum(40, (0.0, 1.0), &mut trial_rng(4, 0), 1e-12, 10).unwrap();
        let d = random_decomposition(&[10; 4], &mut trial_rng(4, 1)).unwrap();
        let psi = d.block_state(0).unwrap();
        let traj = h_theorem_trajectory(&K, &psi, &d, &s, 1000.0, 16, 0.5).unwrap();
        assert!((traj.prediction - 10f64.ln()).abs() < 1e-12);
        assert!(traj.s_values.iter().all(|&v| v >= -1e-12 && v <= traj.s_max + 1e-9));
        assert!(h_theorem_trajectory(&K, &psi, &d, &s, 1000.0, 16, 1.0).is_err());
    }
}
