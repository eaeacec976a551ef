use std::ops::Range;

use faer::{c64, Mat, MatRef};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{haar_unitary, StateVector};
use crate::error::{ensure_dim, Error, Result};
use crate::linalg;

/// Tolerance for unitarity of the basis and closure `Σ_ν P_ν = I`.
pub const CLOSURE_TOLERANCE: f64 = 1e-10;

/// Orthogonal decomposition of the shell into macro-spaces `ℋ_ν`.
///
/// The basis is stored in the energy eigenbasis: its consecutive column
/// blocks of widths `d_1, …, d_n` are orthonormal bases of the macro-spaces,
/// so `P_ν = B_ν B_ν†` and every matrix element `⟨φ_α|P_ν|φ_β⟩` is a row
/// inner product of `B_ν`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "DecompositionRepr", try_from = "DecompositionRepr")]
pub struct MacroDecomposition {
    dims: Vec<usize>,
    offsets: Vec<usize>,
    basis: Mat<c64>,
    eq_index: Option<usize>,
    aligned: bool,
}

/// Wire form: dims plus the basis as row-major `[re, im]` pairs.
#[derive(Serialize, Deserialize)]
struct DecompositionRepr {
    dims: Vec<usize>,
    basis: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    eq_index: Option<usize>,
}

impl From<MacroDecomposition> for DecompositionRepr {
    fn from(d: MacroDecomposition) -> Self {
        let dim = d.dim();
        let mut basis = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                let z = d.basis[(i, j)];
                basis.push([z.re, z.im]);
            }
        }
        Self { dims: d.dims, basis, eq_index: d.eq_index }
    }
}

impl TryFrom<DecompositionRepr> for MacroDecomposition {
    type Error = Error;

    fn try_from(repr: DecompositionRepr) -> Result<Self> {
        let dim: usize = repr.dims.iter().sum();
        ensure_dim(dim * dim, repr.basis.len())?;
        let basis = Mat::from_fn(dim, dim, |i, j| {
            let [re, im] = repr.basis[i * dim + j];
            c64::new(re, im)
        });
        MacroDecomposition::from_parts(repr.dims, basis, repr.eq_index)
    }
}

fn validate_dims(dims: &[usize]) -> Result<()> {
    if dims.is_empty() {
        return Err(Error::DegenerateInput("decomposition needs at least one macro-space".into()));
    }
    if let Some(pos) = dims.iter().position(|&d| d == 0) {
        return Err(Error::DegenerateInput(format!("macro-space {pos} has dimension 0")));
    }
    Ok(())
}

fn offsets_of(dims: &[usize]) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(dims.len() + 1);
    offsets.push(0);
    let mut acc = 0;
    for &d in dims {
        acc += d;
        offsets.push(acc);
    }
    offsets
}

impl MacroDecomposition {
    /// Builds a decomposition from block dimensions and a unitary basis.
    pub fn from_parts(dims: Vec<usize>, basis: Mat<c64>, eq_index: Option<usize>) -> Result<Self> {
        validate_dims(&dims)?;
        let dim: usize = dims.iter().sum();
        ensure_dim(dim, basis.nrows())?;
        ensure_dim(dim, basis.ncols())?;
        if let Some(idx) = eq_index {
            if idx >= dims.len() {
                return Err(Error::IndexOutOfRange { index: idx, len: dims.len() });
            }
        }
        let defect = linalg::identity_defect(linalg::adjoint_mul(basis.as_ref(), basis.as_ref()).as_ref());
        if !(defect < CLOSURE_TOLERANCE) {
            return Err(Error::Precondition(format!("basis is not unitary (defect {defect:e})")));
        }
        let aligned = linalg::identity_defect(basis.as_ref()) == 0.0;
        Ok(Self { offsets: offsets_of(&dims), dims, basis, eq_index, aligned })
    }

    /// Designates macro-space `index` as thermal equilibrium.
    pub fn with_equilibrium(mut self, index: usize) -> Result<Self> {
        if index >= self.dims.len() {
            return Err(Error::IndexOutOfRange { index, len: self.dims.len() });
        }
        self.eq_index = Some(index);
        Ok(self)
    }

    /// Shell dimension `D`.
    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    /// Number of macro-spaces `n`.
    pub fn n_blocks(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn block_dim(&self, nu: usize) -> usize {
        self.dims[nu]
    }

    /// `d_ν / D`
    pub fn micro_canonical_weight(&self, nu: usize) -> f64 {
        self.dims[nu] as f64 / self.dim() as f64
    }

    /// Column range of block `ν` in the basis.
    pub fn block_range(&self, nu: usize) -> Range<usize> {
        self.offsets[nu]..self.offsets[nu + 1]
    }

    /// The `D × d_ν` block `B_ν`.
    pub fn block(&self, nu: usize) -> MatRef<'_, c64> {
        self.basis.as_ref().subcols(self.offsets[nu], self.dims[nu])
    }

    pub fn basis(&self) -> MatRef<'_, c64> {
        self.basis.as_ref()
    }

    pub fn eq_index(&self) -> Option<usize> {
        self.eq_index
    }

    /// True when every macro-space is spanned by energy eigenvectors.
    pub fn is_aligned(&self) -> bool {
        self.aligned
    }

    /// Macro-space containing basis column `column`.
    pub fn block_of(&self, column: usize) -> usize {
        self.offsets.partition_point(|&o| o <= column) - 1
    }

    /// The `column`-th block-basis state, a unit vector inside one `ℋ_ν`.
    pub fn block_state(&self, column: usize) -> Result<StateVector> {
        if column >= self.dim() {
            return Err(Error::Precondition(format!("block-basis index {column} out of range")));
        }
        StateVector::from_column(self.basis.as_ref().col(column))
    }

    /// `P_ν = B_ν B_ν†` in the energy eigenbasis.
    pub fn projector(&self, nu: usize) -> Mat<c64> {
        let block = self.block(nu);
        linalg::mul_adjoint(block, block)
    }

    /// Diagonal elements `⟨φ_α|P_ν|φ_α⟩`.
    pub fn projector_diagonal(&self, nu: usize) -> Vec<f64> {
        let block = self.block(nu);
        (0..self.dim())
            .map(|alpha| (0..block.ncols()).map(|k| block[(alpha, k)].norm_sqr()).sum())
            .collect()
    }

    /// Worst unitarity and projector-closure defects.
    pub fn invariant_defects(&self) -> (f64, f64) {
        let b = self.basis.as_ref();
        let unitarity = linalg::identity_defect(linalg::adjoint_mul(b, b).as_ref());
        let mut closure = Mat::<c64>::zeros(self.dim(), self.dim());
        for nu in 0..self.n_blocks() {
            closure += self.projector(nu);
        }
        (unitarity, linalg::identity_defect(closure.as_ref()))
    }

    /// Macro-state probabilities `‖P_ν ψ_k‖²` for every column `ψ_k` of
    /// `states`; the result is `n × m`.
    ///
    /// When an equilibrium block holds more than half the shell, only the
    /// other blocks are projected and the equilibrium weight is obtained from
    /// `1 - Σ others`.
    pub fn macro_weights(&self, states: MatRef<'_, c64>) -> Mat<f64> {
        let n = self.n_blocks();
        let m = states.ncols();
        let mut out = Mat::<f64>::zeros(n, m);

        if self.aligned {
            for k in 0..m {
                for nu in 0..n {
                    out[(nu, k)] = self.block_range(nu).map(|a| states[(a, k)].norm_sqr()).sum();
                }
            }
            return out;
        }

        let dominant = self.eq_index.filter(|&eq| 2 * self.dims[eq] > self.dim());
        match dominant {
            Some(eq) => {
                for nu in (0..n).filter(|&nu| nu != eq) {
                    let amps = linalg::adjoint_mul(self.block(nu), states);
                    for k in 0..m {
                        out[(nu, k)] = (0..amps.nrows()).map(|i| amps[(i, k)].norm_sqr()).sum();
                    }
                }
                for k in 0..m {
                    let rest: f64 = (0..n).filter(|&nu| nu != eq).map(|nu| out[(nu, k)]).sum();
                    let norm: f64 = (0..states.nrows()).map(|a| states[(a, k)].norm_sqr()).sum();
                    out[(eq, k)] = (norm - rest).max(0.0);
                }
            }
            None => {
                let amps = linalg::adjoint_mul(self.basis.as_ref(), states);
                for k in 0..m {
                    for nu in 0..n {
                        out[(nu, k)] = self.block_range(nu).map(|i| amps[(i, k)].norm_sqr()).sum();
                    }
                }
            }
        }
        out
    }
}

/// Decomposition whose basis is a Haar-random unitary; blocks are assigned
/// in order of `dims`.
pub fn random_decomposition<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<MacroDecomposition> {
    validate_dims(dims)?;
    let dim = dims.iter().sum();
    let basis = haar_unitary(dim, rng)?.into_inner();
    Ok(MacroDecomposition {
        dims: dims.to_vec(),
        offsets: offsets_of(dims),
        basis,
        eq_index: None,
        aligned: false,
    })
}

/// Decomposition diagonal in the energy eigenbasis: block `ν` is spanned by
/// consecutive eigenvectors.
pub fn aligned_decomposition(dims: &[usize]) -> Result<MacroDecomposition> {
    validate_dims(dims)?;
    let dim = dims.iter().sum();
    Ok(MacroDecomposition {
        dims: dims.to_vec(),
        offsets: offsets_of(dims),
        basis: Mat::identity(dim, dim),
        eq_index: None,
        aligned: true,
    })
}
