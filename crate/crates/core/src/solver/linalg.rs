//! Symmetric positive-definite factorization for the filter subproblem.
//!
//! The filter matrices are diagonal-plus-low-rank and never larger than the
//! AP count, so a plain Cholesky factorization with triangular solves is all
//! the linear algebra the solver needs. The factorization runs in place on
//! the lower triangle and its inner products stream over contiguous rows.

use alloc::vec::Vec;
use core::fmt;

use crate::mat::Mat;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LinalgError {
    /// The matrix is not positive definite; carries the failing pivot index.
    NotPositiveDefinite(usize),
}

impl fmt::Display for LinalgError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LinalgError::NotPositiveDefinite(i) => {
                write!(f, "matrix is not positive definite (pivot {i})")
            }
        }
    }
}

impl core::error::Error for LinalgError {}

/// Replaces the lower triangle of `a` with its Cholesky factor. Only the
/// lower triangle is read; the upper triangle is left untouched.
pub fn cholesky_in_place(a: &mut Mat) -> Result<(), LinalgError> {
    let n = a.rows();
    debug_assert_eq!(n, a.cols());
    let data = a.as_mut_slice();
    for i in 0..n {
        let (done, rest) = data.split_at_mut(i * n);
        let row_i = &mut rest[..n];
        for j in 0..i {
            let row_j = &done[j * n..j * n + n];
            let mut sum = row_i[j];
            for p in 0..j {
                sum -= row_i[p] * row_j[p];
            }
            row_i[j] = sum / row_j[j];
        }
        let mut sum = row_i[i];
        for p in 0..i {
            sum -= row_i[p] * row_i[p];
        }
        if sum <= 0.0 {
            return Err(LinalgError::NotPositiveDefinite(i));
        }
        row_i[i] = libm::sqrt(sum);
    }
    Ok(())
}

/// Solves `A x = b` in place given the factor produced by
/// [`cholesky_in_place`]: forward substitution on `L`, then back
/// substitution on `L^T`.
pub fn solve_with_factor(l: &Mat, b: &mut [f64]) {
    let n = l.rows();
    debug_assert_eq!(b.len(), n);
    for i in 0..n {
        let row = l.row(i);
        let mut sum = b[i];
        for p in 0..i {
            sum -= row[p] * b[p];
        }
        b[i] = sum / row[i];
    }
    for i in (0..n).rev() {
        let mut sum = b[i];
        for p in i + 1..n {
            sum -= l.at(p, i) * b[p];
        }
        b[i] = sum / l.at(i, i);
    }
}

/// Convenience wrapper: factorize a copy of `a` and solve for `b`.
pub fn cholesky_solve(a: &Mat, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
    let mut l = a.clone();
    cholesky_in_place(&mut l)?;
    let mut x = b.to_vec();
    solve_with_factor(&l, &mut x);
    Ok(x)
}
