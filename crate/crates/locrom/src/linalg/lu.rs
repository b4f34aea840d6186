//! LU solve with partial pivoting.

use super::{DenseMatrix, LinalgError, LU_PIVOT_REL_TOL};

/// Solves `a * x = b` by LU factorization with partial pivoting.
///
/// Declares the matrix singular when a pivot falls below
/// `LU_PIVOT_REL_TOL * ||a||_F`.
pub fn lu_solve(a: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
    let n = a.rows();
    assert_eq!(a.cols(), n, "lu_solve expects a square matrix");
    assert_eq!(b.len(), n, "right-hand side length mismatch");

    let threshold = LU_PIVOT_REL_TOL * a.frobenius_norm();
    let mut lu = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();

    for k in 0..n {
        let mut pivot_row = k;
        let mut pivot_val = lu.get(k, k).abs();
        for i in k + 1..n {
            let v = lu.get(i, k).abs();
            if v > pivot_val {
                pivot_val = v;
                pivot_row = i;
            }
        }
        if pivot_val <= threshold {
            return Err(LinalgError::Singular {
                pivot: pivot_val,
                threshold,
            });
        }
        if pivot_row != k {
            perm.swap(k, pivot_row);
            for j in 0..n {
                let tmp = lu.get(k, j);
                lu.set(k, j, lu.get(pivot_row, j));
                lu.set(pivot_row, j, tmp);
            }
        }
        let pivot = lu.get(k, k);
        for i in k + 1..n {
            let factor = lu.get(i, k) / pivot;
            lu.set(i, k, factor);
            if factor == 0.0 {
                continue;
            }
            for j in k + 1..n {
                lu.set(i, j, lu.get(i, j) - factor * lu.get(k, j));
            }
        }
    }

    // Forward substitution on the permuted right-hand side, then back substitution.
    let mut y: Vec<f64> = perm.iter().map(|&p| b[p]).collect();
    for i in 1..n {
        let mut acc = y[i];
        for j in 0..i {
            acc -= lu.get(i, j) * y[j];
        }
        y[i] = acc;
    }
    for i in (0..n).rev() {
        let mut acc = y[i];
        for j in i + 1..n {
            acc -= lu.get(i, j) * y[j];
        }
        y[i] = acc / lu.get(i, i);
    }
    Ok(y)
}
