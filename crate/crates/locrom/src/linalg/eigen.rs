//! Symmetric eigensolve by cyclic Jacobi rotations.

use super::{DenseMatrix, LinalgError, SYMMETRY_REL_TOL};

const OFFDIAG_REL_TOL: f64 = 1e-14;
const MAX_SWEEPS: usize = 60;

/// Full eigendecomposition of a symmetric matrix.
///
/// Returns `(eigenvalues, eigenvectors)` sorted by ascending eigenvalue, with
/// unit eigenvectors as the columns of the second factor. Inputs whose
/// asymmetry exceeds `SYMMETRY_REL_TOL` (relative to the largest entry)
/// are rejected.
pub fn symmetric_eigen(a: &DenseMatrix) -> Result<(Vec<f64>, DenseMatrix), LinalgError> {
    let n = a.rows();
    assert_eq!(a.cols(), n, "symmetric_eigen expects a square matrix");
    let scale = a.max_abs().max(1.0);
    for i in 0..n {
        for j in i + 1..n {
            let deviation = (a.get(i, j) - a.get(j, i)).abs();
            if deviation > SYMMETRY_REL_TOL * scale {
                return Err(LinalgError::NotSymmetric {
                    row: i,
                    col: j,
                    deviation,
                });
            }
        }
    }

    let mut w = a.clone();
    // Symmetrize exactly so rotations preserve symmetry bit for bit.
    for i in 0..n {
        for j in i + 1..n {
            let avg = 0.5 * (w.get(i, j) + w.get(j, i));
            w.set(i, j, avg);
            w.set(j, i, avg);
        }
    }
    let mut v = DenseMatrix::identity(n);
    let frob = w.frobenius_norm().max(f64::MIN_POSITIVE);

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0_f64;
        for i in 0..n {
            for j in i + 1..n {
                off += 2.0 * w.get(i, j) * w.get(i, j);
            }
        }
        if off.sqrt() <= OFFDIAG_REL_TOL * frob {
            converged = true;
            break;
        }
        for p in 0..n.saturating_sub(1) {
            for q in p + 1..n {
                let apq = w.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let theta = (w.get(q, q) - w.get(p, p)) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                apply_two_sided_rotation(&mut w, p, q, c, s);
                for i in 0..n {
                    let vip = v.get(i, p);
                    let viq = v.get(i, q);
                    v.set(i, p, c * vip - s * viq);
                    v.set(i, q, s * vip + c * viq);
                }
            }
        }
    }
    if !converged {
        return Err(LinalgError::NoConvergence {
            algorithm: "symmetric Jacobi eigensolve",
            max_sweeps: MAX_SWEEPS,
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| w.get(i, i)).collect();
    order.sort_by(|&i, &j| diag[i].partial_cmp(&diag[j]).unwrap());

    let eigenvalues: Vec<f64> = order.iter().map(|&i| diag[i]).collect();
    let mut vectors = DenseMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.col_mut(dst).copy_from_slice(v.col(src));
        // Deterministic sign: largest-magnitude entry positive, first index wins ties.
        let col = vectors.col(dst);
        let mut idx = 0;
        let mut best = -1.0;
        for (i, &x) in col.iter().enumerate() {
            if x.abs() > best {
                best = x.abs();
                idx = i;
            }
        }
        if vectors.get(idx, dst) < 0.0 {
            for x in vectors.col_mut(dst) {
                *x = -*x;
            }
        }
    }
    Ok((eigenvalues, vectors))
}

fn apply_two_sided_rotation(w: &mut DenseMatrix, p: usize, q: usize, c: f64, s: f64) {
    let n = w.rows();
    for i in 0..n {
        let wip = w.get(i, p);
        let wiq = w.get(i, q);
        w.set(i, p, c * wip - s * wiq);
        w.set(i, q, s * wip + c * wiq);
    }
    for j in 0..n {
        let wpj = w.get(p, j);
        let wqj = w.get(q, j);
        w.set(p, j, c * wpj - s * wqj);
        w.set(q, j, s * wpj + c * wqj);
    }
}

/// Algebraically smallest eigenvalue of a symmetric matrix with its unit eigenvector.
pub fn smallest_eigenpair(a: &DenseMatrix) -> Result<(f64, Vec<f64>), LinalgError> {
    let (eigenvalues, vectors) = symmetric_eigen(a)?;
    Ok((eigenvalues[0], vectors.col(0).to_vec()))
}
