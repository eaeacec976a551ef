//! Thermal equilibrium of individual wave functions, equilibrium residence
//! times, and equilibration or thermalization relative to a class of
//! observables.
//!
//! The dominant-macro-space regime (`d_eq / D` close to 1) lies outside the
//! dimension hypotheses of the ergodic theorem, so residence in equilibrium
//! is measured directly on the trajectory instead of being inferred from
//! [`crate::typicality::check_theorem_condition`].

use faer::{c64, Mat, MatRef};
use rand::Rng;
use serde::Serialize;

use crate::dynamics::{evolve_many, macro_probabilities, macro_trajectory, DensityMatrix, TimeGrid};
use crate::error::{ensure_dim, Error, Result};
use crate::linalg;
use crate::sampling::{random_decomposition, MacroDecomposition, StateVector};
use crate::spectra::Spectrum;

/// Hermiticity tolerance for observables.
pub const HERMITIAN_TOLERANCE: f64 = 1e-10;

/// Default lower bound on `⟨ψ|P_eq|ψ⟩` for thermal equilibrium.
pub const DEFAULT_EQUILIBRIUM_THRESHOLD: f64 = 0.9;

/// Fraction of good times required by the equilibration and thermalization
/// verdicts.
pub const GOOD_TIME_FRACTION: f64 = 0.9;

const TIME_CHUNK: usize = 128;

/// A labelled Hermitian matrix on the energy shell, in the energy eigenbasis.
#[derive(Debug, Clone)]
pub struct Observable {
    label: String,
    matrix: Mat<c64>,
    spread: f64,
}

impl Observable {
    pub fn new(label: impl Into<String>, matrix: Mat<c64>) -> Result<Self> {
        let label = label.into();
        if matrix.nrows() != matrix.ncols() || matrix.nrows() == 0 {
            return Err(Error::DimensionMismatch { expected: matrix.nrows(), found: matrix.ncols() });
        }
        if linalg::hermitian_defect(matrix.as_ref()) > HERMITIAN_TOLERANCE {
            return Err(Error::NonHermitian(label));
        }
        let eigenvalues = linalg::hermitian_eigenvalues(matrix.as_ref());
        let spread = eigenvalues[eigenvalues.len() - 1] - eigenvalues[0];
        Ok(Self { label, matrix, spread })
    }

    /// `P_ν` of a decomposition.
    pub fn projector(label: impl Into<String>, decomp: &MacroDecomposition, nu: usize) -> Result<Self> {
        if nu >= decomp.n_blocks() {
            return Err(Error::IndexOutOfRange { index: nu, len: decomp.n_blocks() });
        }
        Self::new(label, decomp.projector(nu))
    }

    /// `|φ_α⟩⟨φ_α|`
    pub fn eigenprojector(label: impl Into<String>, dim: usize, alpha: usize) -> Result<Self> {
        if alpha >= dim {
            return Err(Error::IndexOutOfRange { index: alpha, len: dim });
        }
        let m = Mat::from_fn(dim, dim, |i, j| if i == alpha && j == alpha { linalg::ONE } else { linalg::ZERO });
        Self::new(label, m)
    }

    pub fn identity(dim: usize) -> Self {
        let m = Mat::from_fn(dim, dim, |i, j| if i == j { linalg::ONE } else { linalg::ZERO });
        Self { label: "identity".into(), matrix: m, spread: 0.0 }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn matrix(&self) -> MatRef<'_, c64> {
        self.matrix.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Largest minus smallest eigenvalue.
    pub fn spread(&self) -> f64 {
        self.spread
    }

    /// `sqrt(tr(ρ_mc A²)) = ‖A‖_F / sqrt(D)`
    pub fn micro_canonical_scale(&self) -> f64 {
        let mut sq = 0.0;
        for j in 0..self.dim() {
            for i in 0..self.dim() {
                sq += self.matrix[(i, j)].norm_sqr();
            }
        }
        (sq / self.dim() as f64).sqrt()
    }

    /// `tr(A) / D`
    pub fn micro_canonical_average(&self) -> f64 {
        (0..self.dim()).map(|i| self.matrix[(i, i)].re).sum::<f64>() / self.dim() as f64
    }

    /// `tr(ω A)` for `ω = diag(w)`.
    pub fn diagonal_average(&self, weights: &[f64]) -> f64 {
        weights.iter().enumerate().map(|(i, w)| w * self.matrix[(i, i)].re).sum()
    }
}

/// A class of observables sharing one dimension.
#[derive(Debug, Clone, Default)]
pub struct ObservableSet {
    observables: Vec<Observable>,
}

impl ObservableSet {
    pub fn new(observables: Vec<Observable>) -> Result<Self> {
        if let Some(first) = observables.first() {
            for a in &observables {
                ensure_dim(first.dim(), a.dim())?;
            }
        }
        Ok(Self { observables })
    }

    pub fn push(&mut self, observable: Observable) -> Result<()> {
        if let Some(first) = self.observables.first() {
            ensure_dim(first.dim(), observable.dim())?;
        }
        self.observables.push(observable);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.observables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observables.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Observable> {
        self.observables.iter()
    }
}

/// Haar decomposition with one equilibrium macro-space of dimension
/// `round(eq_fraction · D)` followed by `n_small` equal blocks. The
/// equilibrium block is listed first.
pub fn build_equilibrium_decomposition<R: Rng + ?Sized>(
    dim: usize,
    eq_fraction: f64,
    n_small: usize,
    rng: &mut R,
) -> Result<MacroDecomposition> {
    if !(eq_fraction > 0.0 && eq_fraction < 1.0) {
        return Err(Error::Precondition(format!("eq_fraction must lie in (0, 1), got {eq_fraction}")));
    }
    let d_eq = (eq_fraction * dim as f64).round() as usize;
    if d_eq == 0 {
        return Err(Error::Precondition(format!("eq_fraction {eq_fraction} leaves no equilibrium states at D = {dim}")));
    }
    let dims = if d_eq >= dim {
        vec![dim]
    } else {
        let rest = dim - d_eq;
        if n_small == 0 || rest % n_small != 0 {
            return Err(Error::Precondition(format!(
                "{rest} non-equilibrium dimensions cannot be split into {n_small} equal blocks"
            )));
        }
        let mut dims = vec![d_eq];
        dims.extend(std::iter::repeat_n(rest / n_small, n_small));
        dims
    };
    random_decomposition(&dims, rng)?.with_equilibrium(0)
}

fn equilibrium_index(decomp: &MacroDecomposition) -> Result<usize> {
    decomp.eq_index().ok_or(Error::MissingEquilibrium)
}

/// `⟨ψ|P_eq|ψ⟩ ≥ threshold`
pub fn is_thermal_equilibrium(psi: &StateVector, decomp: &MacroDecomposition, threshold: f64) -> Result<bool> {
    let eq = equilibrium_index(decomp)?;
    Ok(macro_probabilities(psi, decomp)?[eq] >= threshold)
}

/// Fraction of grid times at which `ψ_t` is in thermal equilibrium.
pub fn equilibrium_time_fraction(
    psi0: &StateVector,
    decomp: &MacroDecomposition,
    spectrum: &Spectrum,
    threshold: f64,
    horizon: f64,
    samples: usize,
) -> Result<f64> {
    let eq = equilibrium_index(decomp)?;
    let grid = TimeGrid::new(horizon, samples)?;
    let traj = macro_trajectory(psi0, decomp, spectrum, &grid)?;
    let good = (0..samples).filter(|&k| traj[(eq, k)] >= threshold).count();
    Ok(good as f64 / samples as f64)
}

/// Verdict for one observable.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservableVerdict {
    pub label: String,
    /// Value the expectation should stay near.
    pub reference: f64,
    /// `ε_rel · spread(A)`
    pub deviation_scale: f64,
    pub fraction_good_times: f64,
    /// `ε_rel · sqrt(tr(ρ_mc A²))`
    pub micro_canonical_scale: f64,
    pub fraction_good_times_mc_scale: f64,
    pub max_deviation: f64,
    /// `fraction_good_times ≥ 0.9`
    pub verdict: bool,
}

/// `⟨ψ_t|A|ψ_t⟩` for every grid time, evaluated in batches.
fn expectation_trajectory(psi0: &StateVector, spectrum: &Spectrum, a: &Observable, grid: &TimeGrid) -> Result<Vec<f64>> {
    ensure_dim(a.dim(), psi0.dim())?;
    let mut out = Vec::with_capacity(grid.samples);
    for start in (0..grid.samples).step_by(TIME_CHUNK) {
        let times: Vec<f64> = (start..(start + TIME_CHUNK).min(grid.samples)).map(|k| grid.time(k)).collect();
        let states = evolve_many(psi0, spectrum, &times)?;
        let applied = linalg::mul(a.matrix(), states.as_ref());
        for k in 0..states.ncols() {
            let v: f64 = (0..states.nrows()).map(|i| (states[(i, k)].conj() * applied[(i, k)]).re).sum();
            out.push(v);
        }
    }
    Ok(out)
}

fn observable_check(
    psi0: &StateVector,
    observables: &ObservableSet,
    spectrum: &Spectrum,
    epsilon_rel: f64,
    horizon: f64,
    samples: usize,
    reference: impl Fn(&Observable) -> f64,
) -> Result<Vec<ObservableVerdict>> {
    if !(epsilon_rel > 0.0) {
        return Err(Error::Precondition(format!("epsilon_rel must be positive, got {epsilon_rel}")));
    }
    spectrum.ensure_resonance_free()?;
    ensure_dim(spectrum.dim(), psi0.dim())?;
    let grid = TimeGrid::new(horizon, samples)?;
    observables
        .iter()
        .map(|a| {
            let r = reference(a);
            let values = expectation_trajectory(psi0, spectrum, a, &grid)?;
            let scale = epsilon_rel * a.spread();
            let mc_scale = epsilon_rel * a.micro_canonical_scale();
            let deviations: Vec<f64> = values.iter().map(|v| (v - r).abs()).collect();
            // a tiny slack lets A ∝ I, whose spread is 0, pass
            let slack = 1e-12 * (1.0 + r.abs());
            let good = deviations.iter().filter(|&&d| d <= scale + slack).count();
            let good_mc = deviations.iter().filter(|&&d| d <= mc_scale + slack).count();
            let n = samples as f64;
            let fraction = good as f64 / n;
            Ok(ObservableVerdict {
                label: a.label().to_string(),
                reference: r,
                deviation_scale: scale,
                fraction_good_times: fraction,
                micro_canonical_scale: mc_scale,
                fraction_good_times_mc_scale: good_mc as f64 / n,
                max_deviation: deviations.iter().copied().fold(0.0, f64::max),
                verdict: fraction >= GOOD_TIME_FRACTION,
            })
        })
        .collect()
}

/// Expectations stay near their time averages `tr(ωA)`, with
/// `ω = diag(|c_α|²)`.
pub fn equilibration_check(
    psi0: &StateVector,
    observables: &ObservableSet,
    spectrum: &Spectrum,
    epsilon_rel: f64,
    horizon: f64,
    samples: usize,
) -> Result<Vec<ObservableVerdict>> {
    let populations = psi0.populations();
    observable_check(psi0, observables, spectrum, epsilon_rel, horizon, samples, |a| {
        a.diagonal_average(&populations)
    })
}

/// Expectations stay near their micro-canonical averages `tr(A)/D`.
pub fn thermalization_check(
    psi0: &StateVector,
    observables: &ObservableSet,
    spectrum: &Spectrum,
    epsilon_rel: f64,
    horizon: f64,
    samples: usize,
) -> Result<Vec<ObservableVerdict>> {
    observable_check(psi0, observables, spectrum, epsilon_rel, horizon, samples, Observable::micro_canonical_average)
}

/// `|tr(ρP_ν) - tr(ρ′P_ν)| ≤ tol_rel · d_ν/D` for all `ν`.
pub fn macro_equivalence(
    rho: &DensityMatrix,
    rho_prime: &DensityMatrix,
    decomp: &MacroDecomposition,
    tol_rel: f64,
) -> Result<bool> {
    ensure_dim(rho.dim(), rho_prime.dim())?;
    let a = rho.macro_weights(decomp)?;
    let b = rho_prime.macro_weights(decomp)?;
    Ok((0..decomp.n_blocks()).all(|nu| (a[nu] - b[nu]).abs() <= tol_rel * decomp.micro_canonical_weight(nu)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{time_averaged_density, time_stats_closed_form};
    use crate::rng::trial_rng;
    use crate::sampling::{aligned_decomposition, uniform_sphere_state};
    use crate::spectra::sample_nonresonant_spectrum;
    use std::f64::consts::FRAC_1_SQRT_2;

    #[test]
    fn equilibrium_decomposition_dims() {
        let mut rng = trial_rng(1, 0);
        let d = build_equilibrium_decomposition(100, 0.99, 1, &mut rng).unwrap();
        assert_eq!(d.dims(), &[99, 1]);
        assert_eq!(d.eq_index(), Some(0));
        let whole = build_equilibrium_decomposition(10, 0.99, 3, &mut rng).unwrap();
        assert_eq!(whole.dims(), &[10]);
        assert!(build_equilibrium_decomposition(100, 0.9, 3, &mut rng).is_err());
        assert!(build_equilibrium_decomposition(10, 0.01, 3, &mut rng).is_err());
    }

    #[test]
    fn equilibrium_predicate() {
        let d = aligned_decomposition(&[3, 1]).unwrap().with_equilibrium(0).unwrap();
        assert!(is_thermal_equilibrium(&StateVector::basis(4, 1).unwrap(), &d, 0.9).unwrap());
        assert!(!is_thermal_equilibrium(&StateVector::basis(4, 3).unwrap(), &d, 0.9).unwrap());
        let plain = aligned_decomposition(&[3, 1]).unwrap();
        assert!(matches!(
            is_thermal_equilibrium(&StateVector::basis(4, 1).unwrap(), &plain, 0.9),
            Err(Error::MissingEquilibrium)
        ));
    }

    #[test]
    fn residence_extremes() {
        let s = sample_nonresonant_spectrum(6, (0.0, 1.0), &mut trial_rng(2, 0), 1e-12, 10).unwrap();
        let whole = random_decomposition(&[6], &mut trial_rng(2, 1)).unwrap().with_equilibrium(0).unwrap();
        let psi = uniform_sphere_state(6, &mut trial_rng(2, 2)).unwrap();
        assert_eq!(equilibrium_time_fraction(&psi, &whole, &s, 0.9, 100.0, 50).unwrap(), 1.0);
        let aligned = aligned_decomposition(&[5, 1]).unwrap().with_equilibrium(0).unwrap();
        let small = StateVector::basis(6, 5).unwrap();
        assert_eq!(equilibrium_time_fraction(&small, &aligned, &s, 0.9, 100.0, 50).unwrap(), 0.0);
    }

    #[test]
    fn non_hermitian_observable_rejected() {
        let mut m = Mat::<c64>::zeros(2, 2);
        m[(0, 1)] = linalg::ONE;
        assert!(matches!(Observable::new("raise", m), Err(Error::NonHermitian(label)) if label == "raise"));
    }

    #[test]
    fn identity_always_equilibrates_and_thermalizes() {
        let s = sample_nonresonant_spectrum(5, (0.0, 1.0), &mut trial_rng(3, 0), 1e-12, 10).unwrap();
        let psi = uniform_sphere_state(5, &mut trial_rng(3, 1)).unwrap();
        let set = ObservableSet::new(vec![Observable::identity(5)]).unwrap();
        for check in [equilibration_check, thermalization_check] {
            let v = check(&psi, &set, &s, 0.1, 100.0, 40).unwrap();
            assert_eq!(v[0].fraction_good_times, 1.0);
            assert!(v[0].max_deviation < 1e-14);
        }
    }

    #[test]
    fn projector_reference_matches_closed_form_mean() {
        let s = sample_nonresonant_spectrum(12, (0.0, 1.0), &mut trial_rng(4, 0), 1e-12, 10).unwrap();
        let d = random_decomposition(&[4, 8], &mut trial_rng(4, 1)).unwrap();
        let psi = uniform_sphere_state(12, &mut trial_rng(4, 2)).unwrap();
        let stats = time_stats_closed_form(&psi, &d, &s).unwrap();
        let set = ObservableSet::new(vec![
            Observable::projector("P0", &d, 0).unwrap(),
            Observable::projector("P1", &d, 1).unwrap(),
        ])
        .unwrap();
        let v = equilibration_check(&psi, &set, &s, 0.1, 100.0, 8).unwrap();
        for nu in 0..2 {
            assert!((v[nu].reference - stats.time_mean[nu]).abs() < 1e-10);
        }
    }

    #[test]
    fn two_level_beat_does_not_equilibrate() {
        let s = Spectrum::new(vec![0.0, 1.0], 1e-12).unwrap();
        let v = FRAC_1_SQRT_2;
        let psi = StateVector::new(vec![c64::new(v, 0.0), c64::new(v, 0.0)]).unwrap();
        let plus = Mat::from_fn(2, 2, |_, _| c64::new(0.5, 0.0));
        let set = ObservableSet::new(vec![Observable::new("plus", plus).unwrap()]).unwrap();
        let r = equilibration_check(&psi, &set, &s, 0.1, 20_000.0, 10_000).unwrap();
        assert!((r[0].reference - 0.5).abs() < 1e-15);
        assert!((r[0].max_deviation - 0.5).abs() < 1e-4);
        // |cos t| / 2 ≤ 0.1 on a fraction 2 asin(0.2) / π of times
        let expected = 2.0 * 0.2f64.asin() / std::f64::consts::PI;
        assert!((r[0].fraction_good_times - expected).abs() < 0.01);
        assert!(!r[0].verdict);
    }

    #[test]
    fn occupied_eigenstate_does_not_thermalize() {
        let s = sample_nonresonant_spectrum(4, (0.0, 1.0), &mut trial_rng(5, 0), 1e-12, 10).unwrap();
        let set = ObservableSet::new(vec![Observable::eigenprojector("phi0", 4, 0).unwrap()]).unwrap();
        let r = thermalization_check(&StateVector::basis(4, 0).unwrap(), &set, &s, 0.1, 10.0, 10).unwrap();
        assert_eq!(r[0].fraction_good_times, 0.0);
        assert!(!r[0].verdict);
    }

    #[test]
    fn macro_equivalence_examples() {
        let mut rng = trial_rng(6, 0);
        let d = random_decomposition(&[3, 9], &mut rng).unwrap();
        let psi = uniform_sphere_state(12, &mut rng).unwrap();
        let rho = DensityMatrix::pure(&psi);
        let mc = DensityMatrix::micro_canonical(12);
        assert!(macro_equivalence(&rho, &rho, &d, 0.0).unwrap());
        assert_eq!(macro_equivalence(&rho, &mc, &d, 0.3).unwrap(), macro_equivalence(&mc, &rho, &d, 0.3).unwrap());
        let inside = DensityMatrix::pure(&d.block_state(0).unwrap());
        // p_1 = 1 against d_1/D = 1/4: the relative gap is D/d_1 - 1 = 3
        assert!(!macro_equivalence(&inside, &mc, &d, 2.9).unwrap());
        assert!(macro_equivalence(&inside, &mc, &d, 3.0 + 1e-9).unwrap());
        let s = sample_nonresonant_spectrum(12, (0.0, 1.0), &mut rng, 1e-12, 10).unwrap();
        let omega = time_averaged_density(&psi, &s).unwrap();
        assert!(macro_equivalence(&omega, &omega, &d, 0.0).unwrap());
        assert!(macro_equivalence(&mc, &DensityMatrix::micro_canonical(5), &d, 0.1).is_err());
    }
}
