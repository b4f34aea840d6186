//! Minimal dense linear algebra at snapshot scale: a column-major matrix
//! type plus the three kernels the rest of the crate needs (thin SVD,
//! LU solve, smallest symmetric eigenpair).

mod eigen;
mod lu;
mod svd;

pub use eigen::{smallest_eigenpair, symmetric_eigen};
pub use lu::lu_solve;
pub use svd::{thin_svd, ThinSvd};

use thiserror::Error;

/// Relative pivot threshold below which an LU factorization is declared singular.
pub const LU_PIVOT_REL_TOL: f64 = 1e-14;
/// Allowed asymmetry (relative to the largest entry) for symmetric eigensolves.
pub const SYMMETRY_REL_TOL: f64 = 1e-12;
/// Singular values below this fraction of the largest one are treated as
/// numerically zero for rank decisions (the values themselves are reported as-is).
pub const RANK_REL_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix numerically singular: pivot {pivot:e} below threshold {threshold:e}")]
    Singular { pivot: f64, threshold: f64 },
    #[error("{algorithm} did not converge within {max_sweeps} sweeps")]
    NoConvergence {
        algorithm: &'static str,
        max_sweeps: usize,
    },
    #[error("matrix not symmetric: |a[{row},{col}] - a[{col},{row}]| = {deviation:e}")]
    NotSymmetric {
        row: usize,
        col: usize,
        deviation: f64,
    },
}

/// Dense column-major matrix of `f64` entries.
///
/// Constructors reject non-finite entries; mutation through [`set`](Self::set)
/// trusts the caller to keep that invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = DenseMatrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    /// Builds a matrix from a column-major entry vector.
    pub fn from_column_major(
        rows: usize,
        cols: usize,
        data: Vec<f64>,
    ) -> Result<Self, LinalgError> {
        if data.len() != rows * cols {
            return Err(LinalgError::DimensionMismatch(format!(
                "expected {} entries for a {}x{} matrix, got {}",
                rows * cols,
                rows,
                cols,
                data.len()
            )));
        }
        let m = DenseMatrix { rows, cols, data };
        m.check_finite()?;
        Ok(m)
    }

    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self, LinalgError> {
        let cols = columns.len();
        let rows = columns.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows * cols);
        for (j, c) in columns.iter().enumerate() {
            if c.len() != rows {
                return Err(LinalgError::DimensionMismatch(format!(
                    "column {} has length {}, expected {}",
                    j,
                    c.len(),
                    rows
                )));
            }
            data.extend_from_slice(c);
        }
        DenseMatrix::from_column_major(rows, cols, data)
    }

    fn check_finite(&self) -> Result<(), LinalgError> {
        for j in 0..self.cols {
            for i in 0..self.rows {
                if !self.get(i, j).is_finite() {
                    return Err(LinalgError::NonFinite { row: i, col: j });
                }
            }
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        debug_assert!(row < self.rows && col < self.cols);
        self.data[col * self.rows + row]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.rows && col < self.cols);
        self.data[col * self.rows + row] = value;
    }

    /// Contiguous view of column `j`.
    #[inline]
    pub fn col(&self, j: usize) -> &[f64] {
        debug_assert!(j < self.cols);
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    #[inline]
    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        debug_assert!(j < self.cols);
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn column_major_data(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = DenseMatrix::zeros(self.cols, self.rows);
        for j in 0..self.cols {
            for i in 0..self.rows {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(
            self.cols, other.rows,
            "matmul dimension mismatch: {}x{} * {}x{}",
            self.rows, self.cols, other.rows, other.cols
        );
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for j in 0..other.cols {
            let out_col = &mut out.data[j * self.rows..(j + 1) * self.rows];
            for l in 0..self.cols {
                let w = other.get(l, j);
                if w == 0.0 {
                    continue;
                }
                let a_col = self.col(l);
                for i in 0..self.rows {
                    out_col[i] += w * a_col[i];
                }
            }
        }
        out
    }

    pub fn mat_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len(), "mat_vec dimension mismatch");
        let mut out = vec![0.0; self.rows];
        for (j, &w) in v.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let col = self.col(j);
            for i in 0..self.rows {
                out[i] += w * col[i];
            }
        }
        out
    }

    /// `self^T * v` without forming the transpose.
    pub fn transpose_mat_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.rows, v.len(), "transpose_mat_vec dimension mismatch");
        (0..self.cols).map(|j| dot(self.col(j), v)).collect()
    }

    /// Keeps the first `l` columns.
    pub fn leading_columns(&self, l: usize) -> DenseMatrix {
        assert!(l <= self.cols, "cannot keep {} of {} columns", l, self.cols);
        DenseMatrix {
            rows: self.rows,
            cols: l,
            data: self.data[..self.rows * l].to_vec(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_column_major_rejects_non_finite() {
        let err = DenseMatrix::from_column_major(2, 2, vec![1.0, f64::NAN, 0.0, 1.0]);
        assert!(matches!(
            err,
            Err(LinalgError::NonFinite { row: 1, col: 0 })
        ));
    }

    #[test]
    fn from_column_major_rejects_bad_length() {
        assert!(matches!(
            DenseMatrix::from_column_major(2, 2, vec![1.0; 3]),
            Err(LinalgError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn matmul_matches_hand_computation() {
        let a = DenseMatrix::from_column_major(2, 2, vec![1.0, 3.0, 2.0, 4.0]).unwrap();
        let b = DenseMatrix::from_column_major(2, 2, vec![5.0, 7.0, 6.0, 8.0]).unwrap();
        let c = a.matmul(&b);
        // [[1,2],[3,4]] * [[5,6],[7,8]] = [[19,22],[43,50]]
        assert_eq!(c.get(0, 0), 19.0);
        assert_eq!(c.get(0, 1), 22.0);
        assert_eq!(c.get(1, 0), 43.0);
        assert_eq!(c.get(1, 1), 50.0);
    }

    #[test]
    fn transpose_mat_vec_agrees_with_explicit_transpose() {
        let a = DenseMatrix::from_column_major(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let v = vec![1.0, -1.0, 2.0];
        let direct = a.transpose_mat_vec(&v);
        let via_transpose = a.transpose().mat_vec(&v);
        assert_eq!(direct, via_transpose);
    }
}
