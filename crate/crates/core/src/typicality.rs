//! Normal typicality: the `F_ν` statistic, the sufficient conditions of the
//! ergodic theorem, sampled-time ε-δ′ normality, concentration on the sphere
//! and the quantifier-order experiment.

use faer::linalg::matmul::matmul;
use faer::{c64, Accum, Mat, MatRef, Par};
use rand::Rng;
use serde::Serialize;

use crate::dynamics::{macro_trajectory, time_stats_closed_form, TimeGrid};
use crate::error::{ensure_dim, Error, Result};
use crate::linalg;
use crate::sampling::{
    aligned_decomposition, random_decomposition, uniform_sphere_block, uniform_sphere_state, MacroDecomposition,
    StateVector,
};
use crate::spectra::Spectrum;

/// Slack allowed when comparing the time-averaged squared deviation with
/// `F_ν`.
pub const DEVIATION_BOUND_SLACK: f64 = 1e-10;

/// `F_ν = max_{α≠β} |⟨φ_α|P_ν|φ_β⟩|² + max_α (⟨φ_α|P_ν|φ_α⟩ - d_ν/D)²` for
/// every macro-space.
pub fn compute_f(decomp: &MacroDecomposition) -> Vec<f64> {
    let dim = decomp.dim();
    (0..decomp.n_blocks())
        .map(|nu| {
            let w = decomp.micro_canonical_weight(nu);
            if decomp.is_aligned() {
                let diag = decomp.projector_diagonal(nu);
                return diag.iter().map(|p| (p - w).powi(2)).fold(0.0, f64::max);
            }
            let p = decomp.projector(nu);
            let mut off = 0.0f64;
            let mut diag = 0.0f64;
            for b in 0..dim {
                for a in 0..b {
                    off = off.max(p[(a, b)].norm_sqr());
                }
                diag = diag.max((p[(b, b)].re - w).powi(2));
            }
            off + diag
        })
        .collect()
}

/// Outcome of the sufficient condition `F_ν < ε² (d_ν / nD)(δ′ / n)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoremCheck {
    pub holds: bool,
    /// `ε² (d_ν / nD)(δ′ / n) - F_ν`
    pub margins: Vec<f64>,
}

/// Theorem condition from precomputed `F_ν` values.
pub fn theorem_condition_from_f(f: &[f64], dims: &[usize], epsilon: f64, delta_prime: f64) -> TheoremCheck {
    let n = dims.len() as f64;
    let dim: usize = dims.iter().sum();
    let margins: Vec<f64> = f
        .iter()
        .zip(dims)
        .map(|(f, &d)| epsilon * epsilon * (d as f64 / (n * dim as f64)) * (delta_prime / n) - f)
        .collect();
    TheoremCheck { holds: margins.iter().all(|&m| m > 0.0), margins }
}

/// Checks whether `(H, 𝒟)` satisfies the sufficient condition under which
/// every initial state is ε-δ′-normal.
pub fn check_theorem_condition(
    decomp: &MacroDecomposition,
    spectrum: &Spectrum,
    epsilon: f64,
    delta_prime: f64,
) -> Result<TheoremCheck> {
    ensure_dim(decomp.dim(), spectrum.dim())?;
    spectrum.ensure_resonance_free()?;
    Ok(theorem_condition_from_f(&compute_f(decomp), decomp.dims(), epsilon, delta_prime))
}

/// Dimension condition `max(C₁, 10n²/(ε²δ′δ)) log D < d_ν < D / C₁` for all
/// `ν`. `dim` is taken as given and not required to equal `Σ dims`.
pub fn check_dimension_condition(
    dim: usize,
    dims: &[usize],
    epsilon: f64,
    delta_prime: f64,
    delta: f64,
    c1: f64,
) -> Result<bool> {
    if !(c1 > 0.0) {
        return Err(Error::Precondition(format!("C1 must be positive, got {c1}")));
    }
    let n = dims.len() as f64;
    let lower = c1.max(10.0 * n * n / (epsilon * epsilon * delta_prime * delta)) * (dim as f64).ln();
    let upper = dim as f64 / c1;
    Ok(dims.iter().all(|&d| lower < d as f64 && (d as f64) < upper))
}

/// Which deviation bounds hold at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InstantVerdict {
    /// `|x_ν| < ε √(d_ν / nD)` for all `ν`
    pub per_block: bool,
    /// `Σ_ν x_ν² D/d_ν < ε²`, equivalent to the bound holding for every
    /// real combination `A = Σ α_ν P_ν`
    pub algebra: bool,
    /// `|x_ν| < ε d_ν / D` for all `ν`
    pub relative: bool,
}

/// Worst normalized squared deviation over the observable algebra,
/// `sup_α (Σ α_ν x_ν)² / Σ α_ν² d_ν/D = Σ_ν x_ν² D/d_ν` by Cauchy–Schwarz,
/// where `x_ν = p_ν - d_ν/D`.
pub fn algebra_statistic(probabilities: &[f64], dims: &[usize]) -> f64 {
    let dim: usize = dims.iter().sum();
    let dim = dim as f64;
    probabilities
        .iter()
        .zip(dims)
        .map(|(p, &d)| {
            let w = d as f64 / dim;
            (p - w).powi(2) / w
        })
        .sum()
}

/// Evaluates the three deviation bounds for one vector of macro
/// probabilities.
pub fn instant_verdict(probabilities: &[f64], dims: &[usize], epsilon: f64) -> InstantVerdict {
    let n = dims.len() as f64;
    let dim: usize = dims.iter().sum();
    let dim = dim as f64;
    let mut per_block = true;
    let mut relative = true;
    for (p, &d) in probabilities.iter().zip(dims) {
        let w = d as f64 / dim;
        let x = (p - w).abs();
        per_block &= x < epsilon * (w / n).sqrt();
        relative &= x < epsilon * w;
    }
    let algebra = algebra_statistic(probabilities, dims) < epsilon * epsilon;
    InstantVerdict { per_block, algebra, relative }
}

/// Fractions of sampled times at which each bound holds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct GoodTimeFractions {
    pub per_block: f64,
    pub algebra: f64,
    pub relative: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct GoodTimeCounter {
    per_block: usize,
    algebra: usize,
    relative: usize,
    total: usize,
}

impl GoodTimeCounter {
    fn record(&mut self, v: InstantVerdict) {
        self.per_block += v.per_block as usize;
        self.algebra += v.algebra as usize;
        self.relative += v.relative as usize;
        self.total += 1;
    }

    fn fractions(&self) -> GoodTimeFractions {
        let n = self.total.max(1) as f64;
        GoodTimeFractions {
            per_block: self.per_block as f64 / n,
            algebra: self.algebra as f64 / n,
            relative: self.relative as f64 / n,
        }
    }
}

/// Good-time fractions of an `n × N` macro-probability trajectory.
pub fn good_time_fractions(trajectory: MatRef<'_, f64>, dims: &[usize], epsilon: f64) -> GoodTimeFractions {
    let mut counter = GoodTimeCounter::default();
    let mut p = vec![0.0; trajectory.nrows()];
    for k in 0..trajectory.ncols() {
        for (nu, slot) in p.iter_mut().enumerate() {
            *slot = trajectory[(nu, k)];
        }
        counter.record(instant_verdict(&p, dims, epsilon));
    }
    counter.fractions()
}

/// Good-time fractions for all `D` block-basis states of `decomp` at once.
///
/// At each grid time the matrix `B† U_t B` is formed; its column `j` holds
/// the amplitudes of the evolved `j`-th block-basis state in the block basis.
pub fn block_state_fractions(
    decomp: &MacroDecomposition,
    spectrum: &Spectrum,
    grid: &TimeGrid,
    epsilon: f64,
) -> Result<Vec<GoodTimeFractions>> {
    ensure_dim(decomp.dim(), spectrum.dim())?;
    let dim = decomp.dim();
    let n = decomp.n_blocks();
    let b = decomp.basis();
    let e = spectrum.eigenvalues();
    let mut counters = vec![GoodTimeCounter::default(); dim];
    let mut evolved = Mat::<c64>::zeros(dim, dim);
    let mut amps = Mat::<c64>::zeros(dim, dim);
    let mut p = vec![0.0; n];

    for t in grid.times() {
        let phases: Vec<c64> = e
            .iter()
            .map(|energy| {
                let (s, c) = (energy * t).sin_cos();
                c64::new(c, -s)
            })
            .collect();
        for j in 0..dim {
            for a in 0..dim {
                evolved[(a, j)] = phases[a] * b[(a, j)];
            }
        }
        matmul(amps.as_mut(), Accum::Replace, b.adjoint(), evolved.as_ref(), linalg::ONE, Par::Seq);
        for (j, counter) in counters.iter_mut().enumerate() {
            for (nu, slot) in p.iter_mut().enumerate() {
                *slot = decomp.block_range(nu).map(|i| amps[(i, j)].norm_sqr()).sum();
            }
            counter.record(instant_verdict(&p, decomp.dims(), epsilon));
        }
    }
    Ok(counters.iter().map(GoodTimeCounter::fractions).collect())
}

/// ε-δ′ normality assessment of one `(H, 𝒟, ψ₀)` triple.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalityReport {
    pub dims: Vec<usize>,
    pub f_values: Vec<f64>,
    /// Closed-form time average of `(‖P_ν ψ_t‖² - d_ν/D)²`.
    pub msd: Vec<f64>,
    pub time_mean: Vec<f64>,
    pub time_variance: Vec<f64>,
    pub epsilon: f64,
    pub delta_prime: f64,
    pub horizon: f64,
    pub samples: usize,
    pub fractions: GoodTimeFractions,
    /// Per-block bound `|x_ν| < ε √(d_ν/nD)` held for `(1-δ′)`-most times.
    pub verdict_per_block: bool,
    /// Algebra-wide bound held for `(1-δ′)`-most times.
    pub verdict_algebra: bool,
    /// Relative bound `|x_ν| < ε d_ν/D` held for `(1-δ′)`-most times.
    pub verdict_relative: bool,
}

impl NormalityReport {
    /// `msd_ν ≤ F_ν` (up to [`DEVIATION_BOUND_SLACK`]) for every `ν`.
    pub fn deviation_bound_holds(&self) -> bool {
        self.msd.iter().zip(&self.f_values).all(|(e, f)| *e <= f + DEVIATION_BOUND_SLACK)
    }
}

fn check_epsilon_delta(epsilon: f64, delta_prime: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon < 1.0 && delta_prime > 0.0 && delta_prime < 1.0) {
        return Err(Error::Precondition(format!(
            "epsilon and delta' must lie in (0, 1), got {epsilon} and {delta_prime}"
        )));
    }
    Ok(())
}

/// Evaluates ε-δ′ normality of `ψ₀` on a uniform grid over `[0, T)`.
pub fn normality_verdict(
    psi0: &StateVector,
    decomp: &MacroDecomposition,
    spectrum: &Spectrum,
    epsilon: f64,
    delta_prime: f64,
    horizon: f64,
    samples: usize,
) -> Result<NormalityReport> {
    check_epsilon_delta(epsilon, delta_prime)?;
    let stats = time_stats_closed_form(psi0, decomp, spectrum)?;
    let grid = TimeGrid::new(horizon, samples)?;
    let traj = macro_trajectory(psi0, decomp, spectrum, &grid)?;
    let fractions = good_time_fractions(traj.as_ref(), decomp.dims(), epsilon);
    let need = 1.0 - delta_prime;
    Ok(NormalityReport {
        dims: decomp.dims().to_vec(),
        f_values: compute_f(decomp),
        msd: stats.mean_square_deviation(),
        time_mean: stats.time_mean,
        time_variance: stats.time_variance,
        epsilon,
        delta_prime,
        horizon,
        samples,
        fractions,
        verdict_per_block: fractions.per_block >= need,
        verdict_algebra: fractions.algebra >= need,
        verdict_relative: fractions.relative >= need,
    })
}

/// Empirical distribution of `‖P_ν φ‖²` over uniform sphere states.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcentrationReport {
    pub dims: Vec<usize>,
    pub sample_count: usize,
    pub empirical_mean: Vec<f64>,
    /// Unbiased sample variance.
    pub empirical_variance: Vec<f64>,
    /// Standard error of the empirical mean.
    pub standard_error: Vec<f64>,
    /// `(1/d_ν)(d_ν/D)²`
    pub variance_bound: Vec<f64>,
    /// `d_ν(D - d_ν) / (D²(D + 1))`
    pub exact_variance: Vec<f64>,
}

impl ConcentrationReport {
    pub fn bound_holds(&self) -> Vec<bool> {
        self.empirical_variance.iter().zip(&self.variance_bound).map(|(v, b)| v < b).collect()
    }
}

/// Running sums for [`ConcentrationReport`], mergeable across chunks.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationSums {
    count: usize,
    /// `Σ (p - d/D)` and `Σ (p - d/D)²` per block
    shifted: Vec<f64>,
    shifted_sq: Vec<f64>,
}

const SPHERE_BATCH: usize = 256;

impl ConcentrationSums {
    pub fn new(n_blocks: usize) -> Self {
        Self { count: 0, shifted: vec![0.0; n_blocks], shifted_sq: vec![0.0; n_blocks] }
    }

    /// Adds `count` fresh sphere samples.
    pub fn accumulate<R: Rng + ?Sized>(&mut self, decomp: &MacroDecomposition, count: usize, rng: &mut R) {
        let mut remaining = count;
        while remaining > 0 {
            let batch = remaining.min(SPHERE_BATCH);
            let states = uniform_sphere_block(decomp.dim(), batch, rng);
            let weights = decomp.macro_weights(states.as_ref());
            for k in 0..batch {
                for nu in 0..decomp.n_blocks() {
                    let y = weights[(nu, k)] - decomp.micro_canonical_weight(nu);
                    self.shifted[nu] += y;
                    self.shifted_sq[nu] += y * y;
                }
            }
            self.count += batch;
            remaining -= batch;
        }
    }

    pub fn merge(&mut self, other: &ConcentrationSums) {
        self.count += other.count;
        for nu in 0..self.shifted.len() {
            self.shifted[nu] += other.shifted[nu];
            self.shifted_sq[nu] += other.shifted_sq[nu];
        }
    }

    pub fn finish(&self, decomp: &MacroDecomposition) -> ConcentrationReport {
        let n = self.count as f64;
        let dim = decomp.dim() as f64;
        let mut report = ConcentrationReport {
            dims: decomp.dims().to_vec(),
            sample_count: self.count,
            empirical_mean: vec![],
            empirical_variance: vec![],
            standard_error: vec![],
            variance_bound: vec![],
            exact_variance: vec![],
        };
        for nu in 0..decomp.n_blocks() {
            let d = decomp.block_dim(nu) as f64;
            let w = d / dim;
            let mean_shift = self.shifted[nu] / n;
            let var = ((self.shifted_sq[nu] - n * mean_shift * mean_shift) / (n - 1.0)).max(0.0);
            report.empirical_mean.push(w + mean_shift);
            report.empirical_variance.push(var);
            report.standard_error.push((var / n).sqrt());
            report.variance_bound.push(w * w / d);
            report.exact_variance.push(d * (dim - d) / (dim * dim * (dim + 1.0)));
        }
        report
    }
}

/// Samples `trials` uniform sphere states and summarizes `‖P_ν φ‖²`.
pub fn concentration_experiment<R: Rng + ?Sized>(
    decomp: &MacroDecomposition,
    trials: usize,
    rng: &mut R,
) -> Result<ConcentrationReport> {
    if trials < 100 {
        return Err(Error::Precondition(format!("concentration needs >= 100 trials, got {trials}")));
    }
    let mut sums = ConcentrationSums::new(decomp.n_blocks());
    sums.accumulate(decomp, trials, rng);
    Ok(sums.finish(decomp))
}

/// Choice of initial state in the quantifier-order experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialStateMode {
    /// The same energy eigenstate `φ_index` for every decomposition.
    FixedEigenstate(usize),
    /// A fresh uniform state for every decomposition.
    PerDecompositionRandom,
}

/// `F_ν` and the time-averaged squared deviation for one decomposition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantifierRow {
    pub f_values: Vec<f64>,
    pub msd: Vec<f64>,
}

impl QuantifierRow {
    pub fn max_msd(&self) -> f64 {
        self.msd.iter().copied().fold(0.0, f64::max)
    }
}

/// Draws one Haar decomposition (and a state, when random) and evaluates it.
pub fn quantifier_trial<R: Rng + ?Sized>(
    spectrum: &Spectrum,
    dims: &[usize],
    mode: InitialStateMode,
    rng: &mut R,
) -> Result<QuantifierRow> {
    let decomp = random_decomposition(dims, rng)?;
    let psi0 = initial_state(decomp.dim(), mode, rng)?;
    evaluate_quantifier_row(&decomp, spectrum, &psi0)
}

fn initial_state<R: Rng + ?Sized>(dim: usize, mode: InitialStateMode, rng: &mut R) -> Result<StateVector> {
    match mode {
        InitialStateMode::FixedEigenstate(index) => StateVector::basis(dim, index),
        InitialStateMode::PerDecompositionRandom => uniform_sphere_state(dim, rng),
    }
}

fn evaluate_quantifier_row(
    decomp: &MacroDecomposition,
    spectrum: &Spectrum,
    psi0: &StateVector,
) -> Result<QuantifierRow> {
    let stats = time_stats_closed_form(psi0, decomp, spectrum)?;
    Ok(QuantifierRow { f_values: compute_f(decomp), msd: stats.mean_square_deviation() })
}

/// Averages over Haar decompositions against one adversarial decomposition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantifierSummary {
    pub dims: Vec<usize>,
    pub n_decompositions: usize,
    /// Decomposition-average of `F_ν`.
    pub mean_f: Vec<f64>,
    /// Decomposition-average of the time-averaged squared deviation.
    pub mean_msd: Vec<f64>,
    /// Decomposition-average of `max_ν msd_ν`.
    pub mean_max_msd: f64,
    /// The aligned decomposition with the eigenstate initial state.
    pub aligned_msd: Vec<f64>,
    pub aligned_f: Vec<f64>,
    pub rows: Vec<QuantifierRow>,
}

impl QuantifierSummary {
    pub fn aligned_max_msd(&self) -> f64 {
        self.aligned_msd.iter().copied().fold(0.0, f64::max)
    }
}

/// Combines per-decomposition rows with the aligned adversary. The aligned
/// decomposition is evaluated on the fixed eigenstate, or on `φ_0` when the
/// initial states are random.
pub fn summarize_quantifier(
    spectrum: &Spectrum,
    dims: &[usize],
    mode: InitialStateMode,
    rows: Vec<QuantifierRow>,
) -> Result<QuantifierSummary> {
    let n = dims.len();
    let count = rows.len() as f64;
    let mut mean_f = vec![0.0; n];
    let mut mean_msd = vec![0.0; n];
    for row in &rows {
        for nu in 0..n {
            mean_f[nu] += row.f_values[nu] / count;
            mean_msd[nu] += row.msd[nu] / count;
        }
    }
    let mean_max_msd = rows.iter().map(QuantifierRow::max_msd).sum::<f64>() / count;

    let aligned = aligned_decomposition(dims)?;
    let index = match mode {
        InitialStateMode::FixedEigenstate(index) => index,
        InitialStateMode::PerDecompositionRandom => 0,
    };
    let adversary = evaluate_quantifier_row(&aligned, spectrum, &StateVector::basis(aligned.dim(), index)?)?;

    Ok(QuantifierSummary {
        dims: dims.to_vec(),
        n_decompositions: rows.len(),
        mean_f,
        mean_msd,
        mean_max_msd,
        aligned_msd: adversary.msd,
        aligned_f: adversary.f_values,
        rows,
    })
}

/// Contrasts the decomposition-average of the squared deviation (small for
/// every fixed `ψ₀`) with its value on an adversarial aligned decomposition.
pub fn quantifier_experiment<R: Rng + ?Sized>(
    spectrum: &Spectrum,
    dims: &[usize],
    n_decomps: usize,
    mode: InitialStateMode,
    rng: &mut R,
) -> Result<QuantifierSummary> {
    if n_decomps < 10 {
        return Err(Error::Precondition(format!("need at least 10 decompositions, got {n_decomps}")));
    }
    ensure_dim(spectrum.dim(), dims.iter().sum())?;
    spectrum.ensure_resonance_free()?;
    let rows = (0..n_decomps)
        .map(|_| quantifier_trial(spectrum, dims, mode, rng))
        .collect::<Result<Vec<_>>>()?;
    summarize_quantifier(spectrum, dims, mode, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::trial_rng;
    use crate::spectra::sample_nonresonant_spectrum;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn hadamard_pair() -> MacroDecomposition {
        let v = FRAC_1_SQRT_2;
        MacroDecomposition::from_parts(
            vec![1, 1],
            Mat::from_fn(2, 2, |i, j| c64::new(if i == 1 && j == 1 { -v } else { v }, 0.0)),
            None,
        )
        .unwrap()
    }

    #[test]
    fn f_for_aligned_pair() {
        let f = compute_f(&aligned_decomposition(&[1, 1]).unwrap());
        assert_eq!(f, vec![0.25, 0.25]);
    }

    #[test]
    fn f_for_hadamard_pair() {
        let f = compute_f(&hadamard_pair());
        assert!((f[0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn f_for_aligned_blocks() {
        for dims in [vec![3, 5, 2], vec![10, 10, 10], vec![1, 7]] {
            let d = aligned_decomposition(&dims).unwrap();
            let dim: usize = dims.iter().sum();
            for (nu, f) in compute_f(&d).iter().enumerate() {
                let w = dims[nu] as f64 / dim as f64;
                assert!((f - (1.0 - w).powi(2).max(w * w)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn aligned_and_general_paths_agree() {
        let aligned = aligned_decomposition(&[2, 3]).unwrap();
        let general = MacroDecomposition::from_parts(vec![2, 3], Mat::from_fn(5, 5, |i, j| if i == j { c64::new(-1.0, 0.0) } else { linalg::ZERO }), None)
            .unwrap();
        assert!(!general.is_aligned());
        for (a, b) in compute_f(&aligned).iter().zip(compute_f(&general)) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn theorem_condition_examples() {
        let s = Spectrum::new(vec![0.0, 0.37], 1e-9).unwrap();
        let check = check_theorem_condition(&aligned_decomposition(&[1, 1]).unwrap(), &s, 1.0, 1.0).unwrap();
        assert!(!check.holds);
        assert!((check.margins[0] - (0.125 - 0.25)).abs() < 1e-15);

        let s = sample_nonresonant_spectrum(6, (0.0, 1.0), &mut trial_rng(1, 0), 1e-9, 10).unwrap();
        let single = random_decomposition(&[6], &mut trial_rng(1, 1)).unwrap();
        assert!(check_theorem_condition(&single, &s, 0.1, 0.1).unwrap().holds);

        let resonant = Spectrum::new(vec![0.0, 1.0, 2.0], 1e-9).unwrap();
        let d = aligned_decomposition(&[1, 2]).unwrap();
        assert!(matches!(check_theorem_condition(&d, &resonant, 0.5, 0.5), Err(Error::Precondition(_))));
    }

    #[test]
    fn dimension_condition_examples() {
        assert!(!check_dimension_condition(1000, &[100; 10], 0.2, 0.1, 0.1, 10.0).unwrap());
        assert!(check_dimension_condition(1_000_000, &[1000, 1000], 1.0, 1.0, 1.0, 10.0).unwrap());
        assert!(!check_dimension_condition(500, &[500], 0.5, 0.5, 0.5, 10.0).unwrap());
        assert!(check_dimension_condition(10, &[10], 0.5, 0.5, 0.5, 0.0).is_err());
    }

    #[test]
    fn trivially_normal_single_block() {
        let s = sample_nonresonant_spectrum(5, (0.0, 1.0), &mut trial_rng(2, 0), 1e-9, 10).unwrap();
        let d = random_decomposition(&[5], &mut trial_rng(2, 1)).unwrap();
        let psi = uniform_sphere_state(5, &mut trial_rng(2, 2)).unwrap();
        let r = normality_verdict(&psi, &d, &s, 0.1, 0.1, 1000.0, 64).unwrap();
        assert!(r.verdict_per_block && r.verdict_algebra && r.verdict_relative);
        assert_eq!(r.fractions.algebra, 1.0);
        assert!(r.deviation_bound_holds());
    }

    #[test]
    fn stationary_eigenstate_in_aligned_block_is_never_normal() {
        let s = sample_nonresonant_spectrum(30, (0.0, 1.0), &mut trial_rng(3, 0), 1e-12, 10).unwrap();
        let d = aligned_decomposition(&[10, 10, 10]).unwrap();
        let psi = StateVector::basis(30, 0).unwrap();
        let r = normality_verdict(&psi, &d, &s, 0.9, 0.1, s.default_horizon(), 50).unwrap();
        assert_eq!(r.fractions.per_block, 0.0);
        assert_eq!(r.fractions.algebra, 0.0);
        assert!(!r.verdict_per_block && !r.verdict_algebra);
        assert!((r.msd[0] - 4.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn epsilon_delta_must_be_in_unit_interval() {
        let s = Spectrum::new(vec![0.0, 0.37], 1e-9).unwrap();
        let d = aligned_decomposition(&[1, 1]).unwrap();
        let psi = StateVector::basis(2, 0).unwrap();
        assert!(normality_verdict(&psi, &d, &s, 1.0, 0.1, 10.0, 4).is_err());
        assert!(normality_verdict(&psi, &d, &s, 0.5, 0.0, 10.0, 4).is_err());
    }

    #[test]
    fn block_state_fractions_match_single_state_path() {
        let mut rng = trial_rng(4, 0);
        let s = sample_nonresonant_spectrum(12, (0.0, 1.0), &mut rng, 1e-12, 10).unwrap();
        let d = random_decomposition(&[4, 4, 4], &mut rng).unwrap();
        let grid = TimeGrid::new(s.default_horizon(), 40).unwrap();
        let all = block_state_fractions(&d, &s, &grid, 0.6).unwrap();
        for j in [0, 5, 11] {
            let psi = d.block_state(j).unwrap();
            let traj = macro_trajectory(&psi, &d, &s, &grid).unwrap();
            assert_eq!(good_time_fractions(traj.as_ref(), d.dims(), 0.6), all[j]);
        }
    }

    #[test]
    fn concentration_single_block_has_no_spread() {
        let d = random_decomposition(&[4], &mut trial_rng(5, 0)).unwrap();
        let r = concentration_experiment(&d, 200, &mut trial_rng(5, 1)).unwrap();
        assert!((r.empirical_mean[0] - 1.0).abs() < 1e-12);
        assert!(r.empirical_variance[0] < 1e-28);
        assert!(concentration_experiment(&d, 99, &mut trial_rng(5, 1)).is_err());
    }

    #[test]
    fn concentration_sums_merge_like_one_run() {
        let d = aligned_decomposition(&[2, 3]).unwrap();
        let mut rng = trial_rng(6, 0);
        let mut a = ConcentrationSums::new(2);
        a.accumulate(&d, 300, &mut rng);
        let mut b = ConcentrationSums::new(2);
        b.accumulate(&d, 200, &mut rng);
        a.merge(&b);
        let mut whole = ConcentrationSums::new(2);
        whole.accumulate(&d, 500, &mut trial_rng(6, 0));
        let (x, y) = (a.finish(&d), whole.finish(&d));
        for nu in 0..2 {
            assert!((x.empirical_mean[nu] - y.empirical_mean[nu]).abs() < 1e-14);
        }
    }

    #[test]
    fn quantifier_single_block_is_zero() {
        let s = sample_nonresonant_spectrum(8, (0.0, 1.0), &mut trial_rng(7, 0), 1e-12, 10).unwrap();
        for mode in [InitialStateMode::FixedEigenstate(0), InitialStateMode::PerDecompositionRandom] {
            let r = quantifier_experiment(&s, &[8], 10, mode, &mut trial_rng(7, 1)).unwrap();
            assert!(r.rows.iter().all(|row| row.msd[0] < 1e-14 && row.f_values[0] < 1e-20));
            assert!(r.aligned_msd[0] < 1e-20);
        }
        assert!(quantifier_experiment(&s, &[8], 9, InitialStateMode::FixedEigenstate(0), &mut trial_rng(7, 1)).is_err());
    }
}
