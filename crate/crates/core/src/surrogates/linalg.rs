//! Minimal dense linear algebra for the Kriging fit: Cholesky factorization
//! and triangular solves, generic over the scalar type. Matrices here are
//! small (n up to a few hundred), so a plain row-major `Vec<Vec<F>>` is fine.

use crate::scalar::Real;

/// Lower-triangular Cholesky factor of a symmetric matrix, or `None` when a
/// pivot is not strictly positive.
#[allow(clippy::needless_range_loop)] // index form mirrors the recurrence
pub fn cholesky<F: Real>(a: &[Vec<F>]) -> Option<Vec<Vec<F>>> {
    let n = a.len();
    let mut l = vec![vec![F::zero(); n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i][j];
            for k in 0..j {
                sum = sum - l[i][k] * l[j][k];
            }
            if i == j {
                if sum <= F::zero() {
                    return None;
                }
                l[i][j] = sum.sqrt();
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    Some(l)
}

/// Solve `L L^T x = b` given the lower factor.
pub fn cho_solve<F: Real>(l: &[Vec<F>], b: &[F]) -> Vec<F> {
    let n = l.len();
    // forward: L z = b
    let mut z = vec![F::zero(); n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum = sum - l[i][k] * z[k];
        }
        z[i] = sum / l[i][i];
    }
    // backward: L^T x = z
    let mut x = vec![F::zero(); n];
    for i in (0..n).rev() {
        let mut sum = z[i];
        for k in i + 1..n {
            sum = sum - l[k][i] * x[k];
        }
        x[i] = sum / l[i][i];
    }
    x
}

/// `2 * sum(ln L_ii)`, the log-determinant of `L L^T`.
pub fn log_det_from_chol<F: Real>(l: &[Vec<F>]) -> F {
    let two = F::of(2.0);
    l.iter()
        .enumerate()
        .map(|(i, row)| row[i].ln())
        .fold(F::zero(), |acc, v| acc + v)
        * two
}

pub fn dot<F: Real>(a: &[F], b: &[F]) -> F {
    a.iter()
        .zip(b)
        .map(|(x, y)| *x * *y)
        .fold(F::zero(), |acc, v| acc + v)
}
