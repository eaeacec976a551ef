//! Schrödinger evolution in the energy eigenbasis and its long-time averages.
//!
//! With `ħ = 1` the propagator is diagonal, `c_α(t) = e^{-iE_α t} c_α(0)`, so
//! evolution costs `O(D)` and no matrix exponential is ever formed. Time
//! averages come in two independent flavours: closed forms valid under the
//! no-resonance condition, and uniform-grid quadrature over `[0, T)`.

use faer::{c64, Mat, MatRef};
use serde::Serialize;

use crate::error::{ensure_dim, Error, Result};
use crate::linalg::{self, pairwise_sum};
use crate::sampling::{MacroDecomposition, StateVector};
use crate::spectra::Spectrum;

/// Number of time points evolved per batched product.
const TIME_CHUNK: usize = 128;

/// Tolerances for [`DensityMatrix::new`].
pub const DENSITY_TOLERANCE: f64 = 1e-10;

/// Hermitian, positive semidefinite, unit-trace matrix on the shell.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(Mat<c64>);

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and positivity (to
    /// [`DENSITY_TOLERANCE`]).
    pub fn new(matrix: Mat<c64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() == 0 {
            return Err(Error::InvalidDensity(format!(
                "expected a non-empty square matrix, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let herm = linalg::hermitian_defect(matrix.as_ref());
        if herm > DENSITY_TOLERANCE {
            return Err(Error::InvalidDensity(format!("not Hermitian (defect {herm:e})")));
        }
        let trace: f64 = (0..matrix.nrows()).map(|i| matrix[(i, i)].re).sum();
        if (trace - 1.0).abs() > DENSITY_TOLERANCE {
            return Err(Error::InvalidDensity(format!("trace {trace} != 1")));
        }
        let lowest = linalg::hermitian_eigenvalues(matrix.as_ref())[0];
        if lowest < -DENSITY_TOLERANCE {
            return Err(Error::InvalidDensity(format!("negative eigenvalue {lowest:e}")));
        }
        Ok(Self(matrix))
    }

    /// `|ψ⟩⟨ψ|`
    pub fn pure(psi: &StateVector) -> Self {
        let c = psi.coefficients();
        Self(Mat::from_fn(c.len(), c.len(), |i, j| c[i] * c[j].conj()))
    }

    /// `ρ_mc = I / D`
    pub fn micro_canonical(dim: usize) -> Self {
        let w = c64::new(1.0 / dim as f64, 0.0);
        Self(Mat::from_fn(dim, dim, |i, j| if i == j { w } else { linalg::ZERO }))
    }

    /// Diagonal density matrix with the given weights (assumed a probability
    /// vector).
    pub fn diagonal(weights: &[f64]) -> Self {
        let n = weights.len();
        Self(Mat::from_fn(n, n, |i, j| if i == j { c64::new(weights[i], 0.0) } else { linalg::ZERO }))
    }

    /// `d_ν⁻¹ P_ν`
    pub fn normalized_projector(decomp: &MacroDecomposition, nu: usize) -> Self {
        let scale = 1.0 / decomp.block_dim(nu) as f64;
        let mut p = decomp.projector(nu);
        for j in 0..p.ncols() {
            for i in 0..p.nrows() {
                p[(i, j)] *= scale;
            }
        }
        Self(p)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_ref(&self) -> MatRef<'_, c64> {
        self.0.as_ref()
    }

    /// `tr(ρ A)`
    pub fn expectation(&self, a: MatRef<'_, c64>) -> Result<c64> {
        ensure_dim(self.dim(), a.nrows())?;
        ensure_dim(self.dim(), a.ncols())?;
        let mut acc = linalg::ZERO;
        for i in 0..self.dim() {
            for k in 0..self.dim() {
                acc += self.0[(i, k)] * a[(k, i)];
            }
        }
        Ok(acc)
    }

    /// `tr(ρ P_ν)` for every macro-space.
    pub fn macro_weights(&self, decomp: &MacroDecomposition) -> Result<Vec<f64>> {
        ensure_dim(decomp.dim(), self.dim())?;
        let rho_b = linalg::mul(self.0.as_ref(), decomp.basis());
        let b = decomp.basis();
        Ok((0..decomp.n_blocks())
            .map(|nu| {
                decomp
                    .block_range(nu)
                    .map(|k| (0..self.dim()).map(|a| (b[(a, k)].conj() * rho_b[(a, k)]).re).sum::<f64>())
                    .sum()
            })
            .collect())
    }
}

/// `ψ_t`, with `c_α(t) = e^{-iE_α t} c_α`.
pub fn evolve(psi0: &StateVector, spectrum: &Spectrum, t: f64) -> Result<StateVector> {
    ensure_dim(spectrum.dim(), psi0.dim())?;
    let coeffs = psi0
        .coefficients()
        .iter()
        .zip(spectrum.eigenvalues())
        .map(|(c, e)| c * phase(e * t))
        .collect();
    Ok(StateVector::from_unit(coeffs))
}

#[inline]
fn phase(angle: f64) -> c64 {
    let (s, c) = angle.sin_cos();
    c64::new(c, -s)
}

/// Columns `ψ_{t_k}` for each of `times`.
pub fn evolve_many(psi0: &StateVector, spectrum: &Spectrum, times: &[f64]) -> Result<Mat<c64>> {
    ensure_dim(spectrum.dim(), psi0.dim())?;
    let c = psi0.coefficients();
    let e = spectrum.eigenvalues();
    Ok(Mat::from_fn(c.len(), times.len(), |a, k| c[a] * phase(e[a] * times[k])))
}

/// `‖P_ν ψ‖²` for every macro-space.
pub fn macro_probabilities(psi: &StateVector, decomp: &MacroDecomposition) -> Result<Vec<f64>> {
    ensure_dim(decomp.dim(), psi.dim())?;
    let weights = decomp.macro_weights(psi.as_column_matrix().as_ref());
    Ok((0..decomp.n_blocks()).map(|nu| weights[(nu, 0)]).collect())
}

/// Long-time average of `|ψ_t⟩⟨ψ_t|`: the off-diagonal phases average to
/// zero for a non-degenerate spectrum, leaving `diag(|c_α|²)`.
pub fn time_averaged_density(psi0: &StateVector, spectrum: &Spectrum) -> Result<DensityMatrix> {
    ensure_dim(spectrum.dim(), psi0.dim())?;
    spectrum.ensure_nondegenerate()?;
    Ok(DensityMatrix::diagonal(&psi0.populations()))
}

/// `(1/T) ∫₀ᵀ e^{-iΔt} dt`
pub fn phase_average(delta: f64, horizon: f64) -> c64 {
    let x = delta * horizon;
    if x.abs() < 1e-8 {
        return c64::new(1.0, -x / 2.0);
    }
    (linalg::ONE - phase(x)) / c64::new(0.0, x)
}

/// Uniform grid `t_k = k T / N`, `k = 0, …, N-1`, over `[0, T)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeGrid {
    pub horizon: f64,
    pub samples: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, samples: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Precondition(format!("time horizon must be positive, got {horizon}")));
        }
        if samples == 0 {
            return Err(Error::Precondition("time grid needs at least one sample".into()));
        }
        Ok(Self { horizon, samples })
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.samples as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.step()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.samples).map(|k| self.time(k)).collect()
    }

    /// Splits the grid into consecutive index ranges of at most `chunk`.
    pub(crate) fn chunks(&self, chunk: usize) -> impl Iterator<Item = std::ops::Range<usize>> {
        let n = self.samples;
        (0..n).step_by(chunk).map(move |s| s..(s + chunk).min(n))
    }
}

/// Macro-state probabilities along the grid, as an `n × N` matrix.
pub fn macro_trajectory(
    psi0: &StateVector,
    decomp: &MacroDecomposition,
    spectrum: &Spectrum,
    grid: &TimeGrid,
) -> Result<Mat<f64>> {
    ensure_dim(spectrum.dim(), psi0.dim())?;
    ensure_dim(decomp.dim(), psi0.dim())?;
    let mut out = Mat::<f64>::zeros(decomp.n_blocks(), grid.samples);
    for range in grid.chunks(TIME_CHUNK) {
        let times: Vec<f64> = range.clone().map(|k| grid.time(k)).collect();
        let states = evolve_many(psi0, spectrum, &times)?;
        let weights = decomp.macro_weights(states.as_ref());
        for (col, k) in range.enumerate() {
            for nu in 0..decomp.n_blocks() {
                out[(nu, k)] = weights[(nu, col)];
            }
        }
    }
    Ok(out)
}

/// How a [`TimeStats`] was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum AveragingMethod {
    ClosedForm,
    Quadrature { horizon: f64, samples: usize },
}

impl AveragingMethod {
    pub fn label(&self) -> &'static str {
        match self {
            AveragingMethod::ClosedForm => "closed_form",
            AveragingMethod::Quadrature { .. } => "quadrature",
        }
    }
}

/// Per-macro-space time mean and time variance of `‖P_ν ψ_t‖²`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeStats {
    pub dims: Vec<usize>,
    pub time_mean: Vec<f64>,
    pub time_variance: Vec<f64>,
    pub method: AveragingMethod,
}

impl TimeStats {
    pub fn dim(&self) -> usize {
        self.dims.iter().sum()
    }

    /// Time average of `(‖P_ν ψ_t‖² - d_ν/D)²`, i.e. variance plus squared
    /// offset of the mean.
    pub fn mean_square_deviation(&self) -> Vec<f64> {
        let dim = self.dim() as f64;
        self.dims
            .iter()
            .zip(self.time_mean.iter().zip(&self.time_variance))
            .map(|(&d, (m, v))| v + (m - d as f64 / dim).powi(2))
            .collect()
    }
}

/// Exact infinite-time mean and variance of `‖P_ν ψ_t‖²`.
///
/// `mean_ν = Σ_α |c_α|² ⟨φ_α|P_ν|φ_α⟩` and, because no two distinct gaps
/// coincide, `var_ν = Σ_{α≠β} |c_α|² |c_β|² |⟨φ_α|P_ν|φ_β⟩|²`. The double sum
/// is evaluated as `‖B_ν† W B_ν‖_F² - Σ_α w_α² (P_ν)_αα²` with
/// `W = diag(|c_α|²)`, which costs `O(D d_ν²)` per block.
pub fn time_stats_closed_form(
    psi0: &StateVector,
    decomp: &MacroDecomposition,
    spectrum: &Spectrum,
) -> Result<TimeStats> {
    ensure_dim(spectrum.dim(), psi0.dim())?;
    ensure_dim(decomp.dim(), psi0.dim())?;
    spectrum.ensure_resonance_free()?;

    let w = psi0.populations();
    let sqrt_w: Vec<f64> = w.iter().map(|x| x.sqrt()).collect();
    let dim = decomp.dim();
    let mut time_mean = Vec::with_capacity(decomp.n_blocks());
    let mut time_variance = Vec::with_capacity(decomp.n_blocks());

    for nu in 0..decomp.n_blocks() {
        let diag = decomp.projector_diagonal(nu);
        let mean: f64 = w.iter().zip(&diag).map(|(a, b)| a * b).sum();
        let block = decomp.block(nu);
        let scaled = Mat::from_fn(dim, block.ncols(), |a, k| block[(a, k)] * sqrt_w[a]);
        let gram = linalg::adjoint_mul(scaled.as_ref(), scaled.as_ref());
        let mut total = 0.0;
        for j in 0..gram.ncols() {
            for i in 0..gram.nrows() {
                total += gram[(i, j)].norm_sqr();
            }
        }
        let diagonal_part: f64 = w.iter().zip(&diag).map(|(a, p)| (a * p).powi(2)).sum();
        time_mean.push(mean);
        time_variance.push((total - diagonal_part).max(0.0));
    }

    Ok(TimeStats { dims: decomp.dims().to_vec(), time_mean, time_variance, method: AveragingMethod::ClosedForm })
}

/// Uniform-grid estimate of the same quantities over `[0, T)`.
pub fn time_stats_quadrature(
    psi0: &StateVector,
    decomp: &MacroDecomposition,
    spectrum: &Spectrum,
    horizon: f64,
    samples: usize,
) -> Result<TimeStats> {
    let grid = TimeGrid::new(horizon, samples)?;
    let traj = macro_trajectory(psi0, decomp, spectrum, &grid)?;
    let n = samples as f64;
    let mut time_mean = Vec::with_capacity(decomp.n_blocks());
    let mut time_variance = Vec::with_capacity(decomp.n_blocks());
    for nu in 0..decomp.n_blocks() {
        let row: Vec<f64> = (0..samples).map(|k| traj[(nu, k)]).collect();
        let mean = pairwise_sum(&row) / n;
        let sq: Vec<f64> = row.iter().map(|p| (p - mean).powi(2)).collect();
        time_mean.push(mean);
        time_variance.push(pairwise_sum(&sq) / n);
    }
    Ok(TimeStats {
        dims: decomp.dims().to_vec(),
        time_mean,
        time_variance,
        method: AveragingMethod::Quadrature { horizon, samples },
    })
}

/// Best approximate return of `U_t` to the identity found on a grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Recurrence {
    pub time: f64,
    /// `‖U_t - I‖ = max_α |e^{-iE_α t} - 1|`
    pub deviation: f64,
}

/// Deviations closer than this are treated as ties; the earliest wins.
const RECURRENCE_TIE: f64 = 1e-12;

/// Scans `t_k = k·step`, `k ≥ 1`, up to `t_max` for the time minimizing the
/// operator-norm distance of `U_t` from the identity.
pub fn recurrence_search(spectrum: &Spectrum, t_max: f64, step: f64) -> Result<Recurrence> {
    recurrence_search_after(spectrum, 0.0, t_max, step)
}

/// As [`recurrence_search`], restricted to grid times `t_k ≥ t_min`. Short
/// times trivially keep `U_t` near the identity; a positive `t_min` asks for
/// a genuine return.
pub fn recurrence_search_after(spectrum: &Spectrum, t_min: f64, t_max: f64, step: f64) -> Result<Recurrence> {
    if !(step > 0.0 && t_max >= step && t_max.is_finite() && t_min >= 0.0 && t_min <= t_max) {
        return Err(Error::Precondition(format!(
            "recurrence scan needs 0 < step <= t_max and 0 <= t_min <= t_max, got step {step}, t_min {t_min}, t_max {t_max}"
        )));
    }
    let e = spectrum.eigenvalues();
    let first = ((t_min / step).ceil() as u64).max(1);
    let last = (t_max / step).floor() as u64;
    let mut best = Recurrence { time: first as f64 * step, deviation: f64::INFINITY };
    for k in first..=last {
        let t = k as f64 * step;
        let cutoff = best.deviation - RECURRENCE_TIE;
        let mut dev = 0.0f64;
        for &energy in e {
            // |e^{-iθ} - 1| = 2|sin(θ/2)|
            dev = dev.max(2.0 * (0.5 * energy * t).sin().abs());
            if dev >= cutoff {
                break;
            }
        }
        if dev < cutoff {
            best = Recurrence { time: t, deviation: dev };
        }
    }
    Ok(best)
}

/// Largest drift of any radius `|c_α(t)|` from `|c_α(0)|` over `times`:
/// the trajectory must stay on the invariant torus of fixed radii.
pub fn torus_invariant_check(psi0: &StateVector, spectrum: &Spectrum, times: &[f64]) -> Result<f64> {
    ensure_dim(spectrum.dim(), psi0.dim())?;
    let radii: Vec<f64> = psi0.coefficients().iter().map(|c| c.norm()).collect();
    let mut worst = 0.0f64;
    for &t in times {
        let psi_t = evolve(psi0, spectrum, t)?;
        for (c, r) in psi_t.coefficients().iter().zip(&radii) {
            worst = worst.max((c.norm() - r).abs());
        }
    }
    Ok(worst)
}
