//! Small dense helpers on top of nalgebra: checked symmetric inversion,
//! null spaces and PSD checks.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Largest condition number accepted before a matrix is reported singular.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Relative singular value threshold used for rank decisions.
pub const RANK_TOLERANCE: f64 = 1e-10;

pub fn symmetrize<T: Scalar>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * T::lit(0.5)
}

/// Condition number of `D^-1/2 M D^-1/2` with `D = diag(M)`.
///
/// Infinite when a diagonal entry is not positive or the scaled matrix has a
/// non-positive eigenvalue.
pub fn equilibrated_condition<T: Scalar>(m: &DMatrix<T>) -> f64 {
    let n = m.nrows();
    if n == 0 {
        return 1.0;
    }
    let diag = m.diagonal();
    if diag.iter().any(|d| !(*d > T::zero())) {
        return f64::INFINITY;
    }
    let scale = diag.map(|d| T::one() / d.sqrt());
    let scaled = DMatrix::from_fn(n, n, |i, j| m[(i, j)] * scale[i] * scale[j]);
    let eig = SymmetricEigen::new(symmetrize(&scaled)).eigenvalues;
    let max = eig.iter().fold(T::zero(), |a, &b| a.max(b));
    let min = eig.iter().fold(T::infinity(), |a, &b| a.min(b));
    if !(min > T::zero()) || !min.is_finite() {
        return f64::INFINITY;
    }
    (max / min).as_f64()
}

/// Inverse of a symmetric positive definite matrix, refusing ill-conditioned
/// input instead of returning a pseudo-inverse.
pub fn spd_inverse<T: Scalar>(m: &DMatrix<T>, what: &str) -> Result<DMatrix<T>> {
    let n = m.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let sym = symmetrize(m);
    let cond = equilibrated_condition(&sym);
    if !(cond <= CONDITION_LIMIT) {
        return Err(Error::Singular {
            what: what.to_string(),
            condition_number: cond,
            limit: CONDITION_LIMIT,
        });
    }
    let diag = sym.diagonal();
    let scale = diag.map(|d| T::one() / d.sqrt());
    let scaled = DMatrix::from_fn(n, n, |i, j| sym[(i, j)] * scale[i] * scale[j]);
    let chol = scaled.cholesky().ok_or_else(|| Error::Singular {
        what: what.to_string(),
        condition_number: cond,
        limit: CONDITION_LIMIT,
    })?;
    let inv = chol.inverse();
    Ok(symmetrize(&DMatrix::from_fn(n, n, |i, j| {
        inv[(i, j)] * scale[i] * scale[j]
    })))
}

/// Singular values and an orthonormal basis of the null space of `l`.
///
/// Returns `(rank, basis)` where `basis` has `cols(l) - rank` columns.
pub fn null_space<T: Scalar>(l: &DMatrix<T>) -> (usize, DMatrix<T>) {
    let p = l.ncols();
    let r = l.nrows();
    if r == 0 {
        return (0, DMatrix::identity(p, p));
    }
    // Pad to a square matrix so the SVD returns a full right basis.
    let rows = r.max(p);
    let mut padded = DMatrix::zeros(rows, p);
    padded.view_mut((0, 0), (r, p)).copy_from(l);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let max = svd
        .singular_values
        .iter()
        .fold(T::zero(), |a, &b| a.max(b));
    let tol = max * T::lit(RANK_TOLERANCE);
    let keep: Vec<usize> = (0..p)
        .filter(|&k| !(svd.singular_values[k] > tol))
        .collect();
    let rank = p - keep.len();
    let basis = DMatrix::from_fn(p, keep.len(), |i, j| v_t[(keep[j], i)]);
    (rank, basis)
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_eigenvalue<T: Scalar>(m: &DMatrix<T>) -> T {
    if m.nrows() == 0 {
        return T::zero();
    }
    SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .fold(T::infinity(), |a, &b| a.min(b))
}

pub fn outer<T: Scalar>(v: &[T]) -> DMatrix<T> {
    let n = v.len();
    DMatrix::from_fn(n, n, |i, j| v[i] * v[j])
}

pub fn inf_norm<T: Scalar>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |m, x| m.max(x.abs()))
}

pub fn to_dvector<T: Scalar>(v: &[T]) -> DVector<T> {
    DVector::from_column_slice(v)
}

/// Relative Frobenius distance `||a - b|| / ||b||`.
pub fn relative_frobenius<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>) -> f64 {
    ((a - b).norm() / b.norm()).as_f64()
}
