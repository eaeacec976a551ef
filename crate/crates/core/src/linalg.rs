//! Thin wrappers over faer products, always single-threaded so that results
//! do not depend on the worker count of the surrounding trial pool.

use faer::linalg::matmul::matmul;
use faer::{c64, Accum, Mat, MatRef, Par};

pub const ONE: c64 = c64 { re: 1.0, im: 0.0 };
pub const ZERO: c64 = c64 { re: 0.0, im: 0.0 };

/// `lhs * rhs`
pub fn mul(lhs: MatRef<'_, c64>, rhs: MatRef<'_, c64>) -> Mat<c64> {
    let mut out = Mat::zeros(lhs.nrows(), rhs.ncols());
    matmul(out.as_mut(), Accum::Replace, lhs, rhs, ONE, Par::Seq);
    out
}

/// `lhs† * rhs`
pub fn adjoint_mul(lhs: MatRef<'_, c64>, rhs: MatRef<'_, c64>) -> Mat<c64> {
    let mut out = Mat::zeros(lhs.ncols(), rhs.ncols());
    matmul(out.as_mut(), Accum::Replace, lhs.adjoint(), rhs, ONE, Par::Seq);
    out
}

/// `lhs * rhs†`
pub fn mul_adjoint(lhs: MatRef<'_, c64>, rhs: MatRef<'_, c64>) -> Mat<c64> {
    let mut out = Mat::zeros(lhs.nrows(), rhs.nrows());
    matmul(out.as_mut(), Accum::Replace, lhs, rhs.adjoint(), ONE, Par::Seq);
    out
}

/// Largest entrywise modulus of `a - I`.
pub fn identity_defect(a: MatRef<'_, c64>) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            let target = if i == j { ONE } else { ZERO };
            worst = worst.max((a[(i, j)] - target).norm());
        }
    }
    worst
}

/// Largest entrywise modulus of `a - a†`.
pub fn hermitian_defect(a: MatRef<'_, c64>) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..=j.min(a.nrows().saturating_sub(1)) {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Eigenvalues of a Hermitian matrix in ascending order.
pub fn hermitian_eigenvalues(a: MatRef<'_, c64>) -> Vec<f64> {
    a.self_adjoint_eigenvalues(faer::Side::Lower)
        .expect("self-adjoint eigenvalue iteration did not converge")
}

/// Sum of `values` by pairwise (cascade) summation.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let (left, right) = values.split_at(values.len() / 2);
    pairwise_sum(left) + pairwise_sum(right)
}
