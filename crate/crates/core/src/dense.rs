//! Dense matrices and their on-disk formats.
//!
//! In memory a [`DenseMatrix`] is an `nalgebra` matrix. On disk two formats
//! are supported, both row-major:
//!
//! * `DMAT` binary: the 4 magic bytes `DMAT`, then `m` and `n` as
//!   little-endian `u64`, then `m * n` little-endian `f64` values row by row.
//! * CSV: one matrix row per line, comma separated, no header, `.` as the
//!   decimal separator.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{MlrError, Result};

/// A plain real `m x n` matrix, the fitting target.
pub type DenseMatrix = DMatrix<f64>;

const DMAT_MAGIC: &[u8; 4] = b"DMAT";

pub fn ensure_finite(a: &DenseMatrix) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(MlrError::NonFiniteInput)
    }
}

/// Relative asymmetry `||A - A^T||_F / ||A||_F` (0 for the zero matrix).
pub fn asymmetry(a: &DenseMatrix) -> f64 {
    if a.nrows() != a.ncols() {
        return f64::INFINITY;
    }
    let norm = a.norm();
    if norm == 0.0 {
        return 0.0;
    }
    (a - a.transpose()).norm() / norm
}

pub fn ensure_symmetric(a: &DenseMatrix, tol: f64) -> Result<()> {
    let asym = asymmetry(a);
    if asym <= tol {
        Ok(())
    } else {
        Err(MlrError::NotSymmetric(asym))
    }
}

pub fn write_dmat<W: Write>(a: &DenseMatrix, mut w: W) -> Result<()> {
    w.write_all(DMAT_MAGIC)?;
    w.write_all(&(a.nrows() as u64).to_le_bytes())?;
    w.write_all(&(a.ncols() as u64).to_le_bytes())?;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            w.write_all(&a[(i, j)].to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_dmat<R: Read>(mut r: R) -> Result<DenseMatrix> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != DMAT_MAGIC {
        return Err(MlrError::Format("missing DMAT magic".into()));
    }
    let mut word = [0u8; 8];
    r.read_exact(&mut word)?;
    let m = u64::from_le_bytes(word) as usize;
    r.read_exact(&mut word)?;
    let n = u64::from_le_bytes(word) as usize;
    let len = m
        .checked_mul(n)
        .ok_or_else(|| MlrError::Format("matrix size overflows".into()))?;
    let mut values = Vec::with_capacity(len);
    for _ in 0..len {
        r.read_exact(&mut word)?;
        values.push(f64::from_le_bytes(word));
    }
    Ok(DenseMatrix::from_row_slice(m, n, &values))
}

pub fn write_csv<W: Write>(a: &DenseMatrix, mut w: W) -> Result<()> {
    for i in 0..a.nrows() {
        let line: Vec<String> = (0..a.ncols()).map(|j| format!("{}", a[(i, j)])).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

pub fn read_csv<R: Read>(r: R) -> Result<DenseMatrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|tok| {
                tok.trim().parse::<f64>().map_err(|e| {
                    MlrError::Format(format!("line {}: bad number {:?}: {e}", lineno + 1, tok))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(MlrError::Format(format!(
                    "line {}: expected {} columns, found {}",
                    lineno + 1,
                    first.len(),
                    row.len()
                )));
            }
        }
        rows.push(row);
    }
    let m = rows.len();
    let n = rows.first().map_or(0, Vec::len);
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(DenseMatrix::from_row_slice(m, n, &flat))
}

/// Load a matrix, choosing the format from the file extension (`.csv` or
/// anything else for `DMAT`).
pub fn load(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    let path = path.as_ref();
    let file = File::open(path)?;
    if is_csv(path) {
        read_csv(file)
    } else {
        read_dmat(BufReader::new(file))
    }
}

pub fn save(a: &DenseMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path)?);
    if is_csv(path) {
        write_csv(a, &mut w)?;
    } else {
        write_dmat(a, &mut w)?;
    }
    w.flush()?;
    Ok(())
}

fn is_csv(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dmat_layout_is_row_major() {
        let a = DenseMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let mut buf = Vec::new();
        write_dmat(&a, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"DMAT");
        assert_eq!(buf.len(), 4 + 16 + 6 * 8);
        let second = f64::from_le_bytes(buf[28..36].try_into().unwrap());
        assert_eq!(second, 2.0);
        assert_eq!(read_dmat(&buf[..]).unwrap(), a);
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let a = DenseMatrix::from_row_slice(2, 2, &[0.1, -1e-300, 1.0 / 3.0, 7.0]);
        let mut buf = Vec::new();
        write_csv(&a, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("0.1,"));
        assert_eq!(read_csv(&buf[..]).unwrap(), a);
    }

    #[test]
    fn csv_rejects_ragged_rows() {
        let err = read_csv("1,2\n3\n".as_bytes()).unwrap_err();
        assert!(matches!(err, MlrError::Format(_)));
    }

    #[test]
    fn bad_magic_is_rejected() {
        assert!(matches!(read_dmat(&b"XXXX"[..]), Err(MlrError::Format(_))));
    }

    #[test]
    fn non_finite_screening() {
        let mut a = DenseMatrix::zeros(2, 2);
        assert!(ensure_finite(&a).is_ok());
        a[(1, 0)] = f64::NAN;
        assert!(matches!(ensure_finite(&a), Err(MlrError::NonFiniteInput)));
    }
}
