//! Haar-random unitaries, uniform states on the unit sphere and random
//! macro-decompositions.

mod decomposition;

pub use decomposition::{aligned_decomposition, random_decomposition, MacroDecomposition};

use faer::{c64, ColRef, Mat, MatRef};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg;

/// Tolerance on `|‖ψ‖² - 1|` accepted by [`StateVector::new`].
pub const NORM_TOLERANCE: f64 = 1e-12;

/// Unit vector of amplitudes `c_α` in the energy eigenbasis.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    coeffs: Vec<c64>,
}

impl StateVector {
    /// Wraps already-normalized amplitudes.
    pub fn new(coeffs: Vec<c64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::DegenerateInput("state vector must have dimension >= 1".into()));
        }
        let norm_sqr: f64 = coeffs.iter().map(|c| c.norm_sqr()).sum();
        if (norm_sqr - 1.0).abs() >= NORM_TOLERANCE {
            return Err(Error::Precondition(format!("state is not normalized: ‖ψ‖² = {norm_sqr}")));
        }
        Ok(Self { coeffs })
    }

    /// Normalizes arbitrary non-zero amplitudes.
    pub fn normalized(mut coeffs: Vec<c64>) -> Result<Self> {
        let norm = coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if coeffs.is_empty() || !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::DegenerateInput("cannot normalize a zero or non-finite vector".into()));
        }
        for c in &mut coeffs {
            *c /= norm;
        }
        Ok(Self { coeffs })
    }

    /// The energy eigenvector `φ_index`.
    pub fn basis(dim: usize, index: usize) -> Result<Self> {
        if index >= dim {
            return Err(Error::Precondition(format!("basis index {index} out of range for D = {dim}")));
        }
        let mut coeffs = vec![linalg::ZERO; dim];
        coeffs[index] = linalg::ONE;
        Ok(Self { coeffs })
    }

    /// Wraps amplitudes known to be normalized (for example, a phase-rotated
    /// unit vector).
    pub(crate) fn from_unit(coeffs: Vec<c64>) -> Self {
        Self { coeffs }
    }

    pub(crate) fn from_column(col: ColRef<'_, c64>) -> Result<Self> {
        Self::normalized(col.iter().copied().collect())
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coefficients(&self) -> &[c64] {
        &self.coeffs
    }

    pub fn into_coefficients(self) -> Vec<c64> {
        self.coeffs
    }

    pub fn norm_sqr(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    /// Energy populations `|c_α|²`.
    pub fn populations(&self) -> Vec<f64> {
        self.coeffs.iter().map(|c| c.norm_sqr()).collect()
    }

    /// `⟨self|other⟩`
    pub fn inner(&self, other: &StateVector) -> Result<c64> {
        crate::error::ensure_dim(self.dim(), other.dim())?;
        Ok(self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a.conj() * b).sum())
    }

    pub(crate) fn as_column_matrix(&self) -> Mat<c64> {
        Mat::from_fn(self.dim(), 1, |i, _| self.coeffs[i])
    }
}

/// A `D × D` unitary matrix.
#[derive(Debug, Clone)]
pub struct UnitaryMatrix(Mat<c64>);

impl UnitaryMatrix {
    pub fn as_ref(&self) -> MatRef<'_, c64> {
        self.0.as_ref()
    }

    pub fn into_inner(self) -> Mat<c64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    /// `max |(U†U - I)_ij|`
    pub fn unitarity_defect(&self) -> f64 {
        linalg::identity_defect(linalg::adjoint_mul(self.as_ref(), self.as_ref()).as_ref())
    }
}

fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> c64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    c64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Samples a unitary from the Haar measure.
///
/// A matrix of i.i.d. standard complex Gaussians is QR-factored and each
/// column of `Q` is multiplied by the phase `r_jj / |r_jj|`; without that
/// correction the distribution depends on the QR sign convention.
pub fn haar_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Result<UnitaryMatrix> {
    if dim == 0 {
        return Err(Error::DegenerateInput("unitary dimension must be >= 1".into()));
    }
    let mut gauss = Mat::<c64>::zeros(dim, dim);
    for j in 0..dim {
        for i in 0..dim {
            gauss[(i, j)] = complex_gaussian(rng);
        }
    }
    let qr = gauss.qr();
    let mut q = qr.compute_Q();
    let r = qr.R();
    for j in 0..dim {
        let rjj = r[(j, j)];
        let modulus = rjj.norm();
        let phase = if modulus > 0.0 { rjj / modulus } else { linalg::ONE };
        for i in 0..dim {
            q[(i, j)] *= phase;
        }
    }
    Ok(UnitaryMatrix(q))
}

/// Samples a state uniformly from the unit sphere of `C^dim`.
pub fn uniform_sphere_state<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Result<StateVector> {
    if dim == 0 {
        return Err(Error::DegenerateInput("state dimension must be >= 1".into()));
    }
    loop {
        let coeffs: Vec<c64> = (0..dim).map(|_| complex_gaussian(rng)).collect();
        if let Ok(state) = StateVector::normalized(coeffs) {
            return Ok(state);
        }
    }
}

/// Fills a `dim × count` matrix whose columns are independent uniform sphere
/// states.
pub(crate) fn uniform_sphere_block<R: Rng + ?Sized>(dim: usize, count: usize, rng: &mut R) -> Mat<c64> {
    let mut out = Mat::<c64>::zeros(dim, count);
    for j in 0..count {
        let mut norm_sqr = 0.0;
        for i in 0..dim {
            let z = complex_gaussian(rng);
            norm_sqr += z.norm_sqr();
            out[(i, j)] = z;
        }
        let inv = 1.0 / norm_sqr.sqrt();
        for i in 0..dim {
            out[(i, j)] *= inv;
        }
    }
    out
}
