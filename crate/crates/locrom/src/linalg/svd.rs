//! Thin SVD via one-sided Jacobi applied on the thin side.

use super::{dot, norm2, DenseMatrix, LinalgError, RANK_REL_TOL};

/// Cross-column inner products below this fraction of the column-norm product
/// count as already orthogonal.
const JACOBI_ORTH_TOL: f64 = 1e-15;
const MAX_SWEEPS: usize = 60;

/// Thin singular value decomposition `A = left * diag(singular_values) * right^T`
/// with `r = min(rows, cols)` columns on each factor and singular values in
/// non-increasing order.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub left: DenseMatrix,
    pub singular_values: Vec<f64>,
    pub right: DenseMatrix,
}

impl ThinSvd {
    pub fn rank(&self) -> usize {
        let cutoff = self.singular_values.first().copied().unwrap_or(0.0) * RANK_REL_TOL;
        self.singular_values.iter().filter(|&&s| s > cutoff).count()
    }

    /// Reconstructs `left * diag(singular_values) * right^T`.
    pub fn reconstruct(&self) -> DenseMatrix {
        let mut scaled = self.left.clone();
        for (j, &s) in self.singular_values.iter().enumerate() {
            for v in scaled.col_mut(j) {
                *v *= s;
            }
        }
        scaled.matmul(&self.right.transpose())
    }
}

/// Computes the thin SVD of `a`.
///
/// Orthogonalizes the columns of the tall side by Jacobi rotations (the wide
/// case is handled by transposing), so the factorization is deterministic for
/// a given input. Column signs are normalized so the largest-magnitude entry
/// of each left singular vector is positive.
pub fn thin_svd(a: &DenseMatrix) -> Result<ThinSvd, LinalgError> {
    for j in 0..a.cols() {
        for i in 0..a.rows() {
            if !a.get(i, j).is_finite() {
                return Err(LinalgError::NonFinite { row: i, col: j });
            }
        }
    }
    if a.rows() >= a.cols() {
        thin_svd_tall(a)
    } else {
        let t = thin_svd_tall(&a.transpose())?;
        let mut svd = ThinSvd {
            left: t.right,
            singular_values: t.singular_values,
            right: t.left,
        };
        normalize_signs(&mut svd);
        Ok(svd)
    }
}

fn thin_svd_tall(a: &DenseMatrix) -> Result<ThinSvd, LinalgError> {
    let (n, m) = (a.rows(), a.cols());
    let mut b = a.clone();
    let mut v = DenseMatrix::identity(m);

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..m.saturating_sub(1) {
            for q in p + 1..m {
                let alpha = dot(b.col(p), b.col(p));
                let beta = dot(b.col(q), b.col(q));
                let gamma = dot(b.col(p), b.col(q));
                if gamma.abs() <= JACOBI_ORTH_TOL * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_columns(&mut b, p, q, c, s);
                rotate_columns(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(LinalgError::NoConvergence {
            algorithm: "one-sided Jacobi SVD",
            max_sweeps: MAX_SWEEPS,
        });
    }

    // Sort columns by singular value, descending; stable so ties keep input order.
    let mut order: Vec<usize> = (0..m).collect();
    let norms: Vec<f64> = (0..m).map(|j| norm2(b.col(j))).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap());

    let singular_values: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let sigma_max = singular_values.first().copied().unwrap_or(0.0);
    let zero_cutoff = sigma_max * RANK_REL_TOL;

    let mut left = DenseMatrix::zeros(n, m);
    let mut right = DenseMatrix::zeros(m, m);
    let mut pending_completion = Vec::new();
    for (dst, &src) in order.iter().enumerate() {
        right.col_mut(dst).copy_from_slice(v.col(src));
        let sigma = norms[src];
        if sigma > zero_cutoff && sigma > 0.0 {
            let col = b.col(src);
            let dst_col = left.col_mut(dst);
            for i in 0..n {
                dst_col[i] = col[i] / sigma;
            }
        } else {
            // Numerically zero direction: the left factor still needs a unit
            // column orthogonal to the others, filled in below.
            pending_completion.push(dst);
        }
    }
    for dst in pending_completion {
        let completion = orthonormal_completion(&left, dst, n);
        left.col_mut(dst).copy_from_slice(&completion);
    }

    let mut svd = ThinSvd {
        left,
        singular_values,
        right,
    };
    normalize_signs(&mut svd);
    Ok(svd)
}

fn rotate_columns(m: &mut DenseMatrix, p: usize, q: usize, c: f64, s: f64) {
    let rows = m.rows();
    for i in 0..rows {
        let xp = m.get(i, p);
        let xq = m.get(i, q);
        m.set(i, p, c * xp - s * xq);
        m.set(i, q, s * xp + c * xq);
    }
}

/// Unit vector orthogonal to every already-filled column of `left` except `skip`.
///
/// Tries each coordinate direction and keeps the one with the largest
/// residual after orthogonalization. Some candidate always has residual norm
/// at least `1/sqrt(n)`: the residual norms square-sum to `n - filled >= 1`.
fn orthonormal_completion(left: &DenseMatrix, skip: usize, n: usize) -> Vec<f64> {
    let orthogonalize = |v: &mut Vec<f64>| {
        // Two passes keep the result orthogonal even when the first pass
        // cancels most of the candidate.
        for _ in 0..2 {
            for j in 0..left.cols() {
                if j == skip {
                    continue;
                }
                let col = left.col(j);
                let proj = dot(v, col);
                if proj != 0.0 {
                    for i in 0..n {
                        v[i] -= proj * col[i];
                    }
                }
            }
        }
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    for candidate in 0..n {
        let mut v = vec![0.0; n];
        v[candidate] = 1.0;
        orthogonalize(&mut v);
        let nrm = norm2(&v);
        if nrm > 0.5 {
            for x in &mut v {
                *x /= nrm;
            }
            return v;
        }
        if best.as_ref().is_none_or(|(b, _)| nrm > *b) {
            best = Some((nrm, v));
        }
    }
    let (nrm, mut v) =
        best.expect("orthonormal completion must succeed for fewer columns than rows");
    assert!(
        nrm > 0.0,
        "orthonormal completion found no independent direction"
    );
    for x in &mut v {
        *x /= nrm;
    }
    orthogonalize(&mut v);
    let nrm = norm2(&v);
    for x in &mut v {
        *x /= nrm;
    }
    v
}

/// Flips paired left/right columns so each left column's largest-magnitude
/// entry is positive (first index wins ties), keeping the product unchanged.
fn normalize_signs(svd: &mut ThinSvd) {
    for j in 0..svd.left.cols() {
        let col = svd.left.col(j);
        let mut idx = 0;
        let mut best = -1.0;
        for (i, &x) in col.iter().enumerate() {
            if x.abs() > best {
                best = x.abs();
                idx = i;
            }
        }
        if svd.left.get(idx, j) < 0.0 {
            for x in svd.left.col_mut(j) {
                *x = -*x;
            }
            for x in svd.right.col_mut(j) {
                *x = -*x;
            }
        }
    }
}
