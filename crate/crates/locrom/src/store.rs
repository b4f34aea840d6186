//! On-disk formats: binary matrices (`LROMMAT1`), dense tensors (`LROMTEN1`),
//! and full-precision CSV mirrors.
//!
//! `LROMMAT1` layout: 8 magic bytes, `rows` and `cols` as little-endian u64,
//! then `rows * cols` little-endian f64 entries in column-major order. The
//! tensor container replaces the two dimension words with an order word
//! followed by one extent per axis; entries run with the first index fastest.
//! Both round-trip f64 payloads bit for bit.

use crate::linalg::{DenseMatrix, LinalgError};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use thiserror::Error;

pub const MATRIX_MAGIC: &[u8; 8] = b"LROMMAT1";
pub const TENSOR_MAGIC: &[u8; 8] = b"LROMTEN1";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: bad magic bytes (expected {expected:?})")]
    BadMagic { path: String, expected: String },
    #[error("{path}: corrupt header: {detail}")]
    CorruptHeader { path: String, detail: String },
    #[error("{path}: truncated payload: {detail}")]
    Truncated { path: String, detail: String },
    #[error("{path}: trailing bytes after payload")]
    TrailingBytes { path: String },
    #[error("{path}: payload invalid: {source}")]
    InvalidPayload {
        path: String,
        #[source]
        source: LinalgError,
    },
}

fn io_err(path: &Path, source: std::io::Error) -> StoreError {
    StoreError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Formats a float with 17 significant digits, enough to round-trip any f64.
pub fn fmt_full(x: f64) -> String {
    format!("{:.16e}", x)
}

pub fn write_matrix(path: &Path, m: &DenseMatrix) -> Result<(), StoreError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    (|| -> std::io::Result<()> {
        w.write_all(MATRIX_MAGIC)?;
        w.write_all(&(m.rows() as u64).to_le_bytes())?;
        w.write_all(&(m.cols() as u64).to_le_bytes())?;
        for &x in m.column_major_data() {
            w.write_all(&x.to_le_bytes())?;
        }
        w.flush()
    })()
    .map_err(|e| io_err(path, e))
}

pub fn read_matrix(path: &Path) -> Result<DenseMatrix, StoreError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 8];
    read_exact(&mut r, &mut magic, path, "magic bytes")?;
    if &magic != MATRIX_MAGIC {
        return Err(StoreError::BadMagic {
            path: path.display().to_string(),
            expected: String::from_utf8_lossy(MATRIX_MAGIC).into_owned(),
        });
    }
    let rows = read_u64(&mut r, path, "row count")? as usize;
    let cols = read_u64(&mut r, path, "column count")? as usize;
    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| StoreError::CorruptHeader {
            path: path.display().to_string(),
            detail: format!("{rows} x {cols} overflows"),
        })?;
    let data = read_f64_payload(&mut r, count, path)?;
    expect_eof(&mut r, path)?;
    DenseMatrix::from_column_major(rows, cols, data).map_err(|source| StoreError::InvalidPayload {
        path: path.display().to_string(),
        source,
    })
}

/// Dense tensor with entries stored first-index-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl DenseTensor {
    pub fn zeros(dims: Vec<usize>) -> Self {
        let len = dims.iter().product();
        DenseTensor {
            dims,
            data: vec![0.0; len],
        }
    }

    #[inline]
    pub fn offset(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.dims.len());
        let mut off = 0;
        let mut stride = 1;
        for (i, &d) in index.iter().zip(&self.dims) {
            debug_assert!(*i < d);
            off += i * stride;
            stride *= d;
        }
        off
    }

    #[inline]
    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[self.offset(index)]
    }

    #[inline]
    pub fn add(&mut self, index: &[usize], value: f64) {
        let off = self.offset(index);
        self.data[off] += value;
    }
}

pub fn write_tensor(path: &Path, t: &DenseTensor) -> Result<(), StoreError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    (|| -> std::io::Result<()> {
        w.write_all(TENSOR_MAGIC)?;
        w.write_all(&(t.dims.len() as u64).to_le_bytes())?;
        for &d in &t.dims {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for &x in &t.data {
            w.write_all(&x.to_le_bytes())?;
        }
        w.flush()
    })()
    .map_err(|e| io_err(path, e))
}

pub fn read_tensor(path: &Path) -> Result<DenseTensor, StoreError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 8];
    read_exact(&mut r, &mut magic, path, "magic bytes")?;
    if &magic != TENSOR_MAGIC {
        return Err(StoreError::BadMagic {
            path: path.display().to_string(),
            expected: String::from_utf8_lossy(TENSOR_MAGIC).into_owned(),
        });
    }
    let order = read_u64(&mut r, path, "tensor order")? as usize;
    if order == 0 || order > 8 {
        return Err(StoreError::CorruptHeader {
            path: path.display().to_string(),
            detail: format!("implausible tensor order {order}"),
        });
    }
    let mut dims = Vec::with_capacity(order);
    let mut count: usize = 1;
    for axis in 0..order {
        let d = read_u64(&mut r, path, "tensor extent")? as usize;
        count = count
            .checked_mul(d)
            .ok_or_else(|| StoreError::CorruptHeader {
                path: path.display().to_string(),
                detail: format!("extent product overflows at axis {axis}"),
            })?;
        dims.push(d);
    }
    let data = read_f64_payload(&mut r, count, path)?;
    expect_eof(&mut r, path)?;
    Ok(DenseTensor { dims, data })
}

fn read_exact<R: Read>(
    r: &mut R,
    buf: &mut [u8],
    path: &Path,
    what: &str,
) -> Result<(), StoreError> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            StoreError::Truncated {
                path: path.display().to_string(),
                detail: format!("while reading {what}"),
            }
        } else {
            io_err(path, e)
        }
    })
}

fn read_u64<R: Read>(r: &mut R, path: &Path, what: &str) -> Result<u64, StoreError> {
    let mut buf = [0u8; 8];
    read_exact(r, &mut buf, path, what)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64_payload<R: Read>(r: &mut R, count: usize, path: &Path) -> Result<Vec<f64>, StoreError> {
    let mut data = Vec::with_capacity(count);
    let mut buf = [0u8; 8];
    for i in 0..count {
        read_exact(r, &mut buf, path, &format!("entry {i} of {count}"))?;
        data.push(f64::from_le_bytes(buf));
    }
    Ok(data)
}

fn expect_eof<R: Read>(r: &mut R, path: &Path) -> Result<(), StoreError> {
    let mut probe = [0u8; 1];
    match r.read(&mut probe) {
        Ok(0) => Ok(()),
        Ok(_) => Err(StoreError::TrailingBytes {
            path: path.display().to_string(),
        }),
        Err(e) => Err(io_err(path, e)),
    }
}

/// Writes a matrix as CSV at full precision (one row per line, no header),
/// mirroring the binary artifact for human inspection.
pub fn write_matrix_csv(path: &Path, m: &DenseMatrix) -> Result<(), StoreError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    (|| -> std::io::Result<()> {
        for i in 0..m.rows() {
            let row: Vec<String> = (0..m.cols()).map(|j| fmt_full(m.get(i, j))).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        w.flush()
    })()
    .map_err(|e| io_err(path, e))
}
