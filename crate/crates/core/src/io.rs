//! On-disk formats for MLR matrices.
//!
//! Binary (`MLR1`), all integers `u32` and values `f64`, little-endian:
//!
//! ```text
//! "MLR1"
//! L
//! p_1 .. p_L
//! for each level: row sizes (p_l values), then column sizes (p_l values)
//! r_1 .. r_L
//! kind byte (0 general, 1 symmetric, 2 psd)
//! row_perm (m values), col_perm (n values)
//! symmetric only: one i8 sign per factor column, level-major then block-major
//! factors, level-major then block-major; per block the left factor
//!   column-major, then (general only) the right factor column-major
//! ```
//!
//! Symmetric right factors are `left * diag(signs)` and PSD right factors
//! equal the left ones, so they are not stored. The JSON variant holds the
//! same fields with factors as lists of rows.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{MlrError, Result};
use crate::hier::{HierPartition, Level};
use crate::mlr::{BlockFactors, Kind, MlrMatrix, RankAllocation};

const MAGIC: &[u8; 4] = b"MLR1";

fn put_u32<W: Write>(w: &mut W, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| MlrError::Format(format!("{v} does not fit in u32")))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_u32s<W: Write>(w: &mut W, vs: &[usize]) -> Result<()> {
    vs.iter().try_for_each(|&v| put_u32(w, v))
}

fn put_column_major<W: Write>(w: &mut W, m: &DMatrix<f64>) -> Result<()> {
    // nalgebra stores column-major already.
    for v in m.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_mlr<W: Write>(mlr: &MlrMatrix, mut w: W) -> Result<()> {
    let p = mlr.partition();
    w.write_all(MAGIC)?;
    put_u32(&mut w, p.num_levels())?;
    for level in p.levels() {
        put_u32(&mut w, level.num_blocks())?;
    }
    for level in p.levels() {
        put_u32s(&mut w, &level.row_sizes)?;
        put_u32s(&mut w, &level.col_sizes)?;
    }
    put_u32s(&mut w, mlr.ranks().ranks())?;
    w.write_all(&[mlr.kind().as_byte()])?;
    put_u32s(&mut w, p.row_perm())?;
    put_u32s(&mut w, p.col_perm())?;
    if mlr.kind() == Kind::Symmetric {
        for l in 0..mlr.num_levels() {
            for b in mlr.level_blocks(l) {
                for &s in &b.signs {
                    w.write_all(&[(if s < 0.0 { -1i8 } else { 1i8 }) as u8])?;
                }
            }
        }
    }
    for l in 0..mlr.num_levels() {
        for b in mlr.level_blocks(l) {
            put_column_major(&mut w, &b.left)?;
            if mlr.kind() == Kind::General {
                put_column_major(&mut w, &b.right)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => MlrError::Format("truncated MLR file".into()),
            _ => e.into(),
        })?;
        Ok(buf)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.bytes()?) as usize)
    }

    fn u32s(&mut self, n: usize) -> Result<Vec<usize>> {
        (0..n).map(|_| self.u32()).collect()
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
        let values = (0..rows * cols)
            .map(|_| Ok(f64::from_le_bytes(self.bytes()?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(DMatrix::from_vec(rows, cols, values))
    }
}

/// Sizes in the header are untrusted; refuse absurd ones before allocating.
const MAX_HEADER_COUNT: usize = 1 << 28;

pub fn read_mlr<R: Read>(r: R) -> Result<MlrMatrix> {
    let mut r = Reader { inner: r };
    if &r.bytes::<4>()? != MAGIC {
        return Err(MlrError::Format("missing MLR1 magic".into()));
    }
    let num_levels = r.u32()?;
    if num_levels == 0 || num_levels > 64 {
        return Err(MlrError::Format(format!("implausible level count {num_levels}")));
    }
    let counts = r.u32s(num_levels)?;
    if counts.iter().any(|&c| c > MAX_HEADER_COUNT) {
        return Err(MlrError::Format("implausible block count".into()));
    }
    let mut levels = Vec::with_capacity(num_levels);
    for &p in &counts {
        let row_sizes = r.u32s(p)?;
        let col_sizes = r.u32s(p)?;
        levels.push(Level { row_sizes, col_sizes });
    }
    let ranks = r.u32s(num_levels)?;
    let kind = Kind::from_byte(r.bytes::<1>()?[0])?;
    let m: usize = levels[0].row_sizes.iter().sum();
    let n: usize = levels[0].col_sizes.iter().sum();
    if m > MAX_HEADER_COUNT || n > MAX_HEADER_COUNT {
        return Err(MlrError::Format("implausible matrix size".into()));
    }
    let row_perm = r.u32s(m)?;
    let col_perm = r.u32s(n)?;
    let partition = HierPartition::new(levels, row_perm, col_perm).map_err(|e| MlrError::Format(e.to_string()))?;

    let mut signs: Vec<Vec<Vec<f64>>> = Vec::new();
    if kind == Kind::Symmetric {
        for (l, &p) in counts.iter().enumerate() {
            let mut level = Vec::with_capacity(p);
            for _ in 0..p {
                let s = (0..ranks[l])
                    .map(|_| match r.bytes::<1>()?[0] as i8 {
                        1 => Ok(1.0),
                        -1 => Ok(-1.0),
                        other => Err(MlrError::Format(format!("bad sign byte {other}"))),
                    })
                    .collect::<Result<Vec<_>>>()?;
                level.push(s);
            }
            signs.push(level);
        }
    }
    let mut blocks = Vec::with_capacity(num_levels);
    for l in 0..num_levels {
        let level = partition.level(l).clone();
        let mut lb = Vec::with_capacity(level.num_blocks());
        for (k, (&rows, &cols)) in level.row_sizes.iter().zip(&level.col_sizes).enumerate() {
            let left = r.matrix(rows, ranks[l])?;
            lb.push(match kind {
                Kind::General => BlockFactors {
                    left,
                    right: r.matrix(cols, ranks[l])?,
                    signs: Vec::new(),
                },
                Kind::Symmetric => BlockFactors::symmetric(left, std::mem::take(&mut signs[l][k])),
                Kind::Psd => BlockFactors::psd(left),
            });
        }
        blocks.push(lb);
    }
    if r.inner.read(&mut [0u8; 1])? != 0 {
        return Err(MlrError::Format("trailing bytes after MLR data".into()));
    }
    MlrMatrix::from_blocks(partition, RankAllocation::new(ranks), kind, blocks)
}

#[derive(Serialize, Deserialize)]
struct JsonBlock {
    left: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    right: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    signs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct JsonMlr {
    kind: Kind,
    levels: Vec<Level>,
    ranks: Vec<usize>,
    row_perm: Vec<usize>,
    col_perm: Vec<usize>,
    factors: Vec<Vec<JsonBlock>>,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_rows(rows: &[Vec<f64>], nrows: usize, ncols: usize) -> Result<DMatrix<f64>> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(MlrError::Format(format!("factor is not {nrows}x{ncols}")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn mlr_to_json(mlr: &MlrMatrix) -> Result<String> {
    let p = mlr.partition();
    let factors = (0..mlr.num_levels())
        .map(|l| {
            mlr.level_blocks(l)
                .iter()
                .map(|b| JsonBlock {
                    left: rows_of(&b.left),
                    right: (mlr.kind() == Kind::General).then(|| rows_of(&b.right)),
                    signs: b.signs.clone(),
                })
                .collect()
        })
        .collect();
    let doc = JsonMlr {
        kind: mlr.kind(),
        levels: p.levels().to_vec(),
        ranks: mlr.ranks().ranks().to_vec(),
        row_perm: p.row_perm().to_vec(),
        col_perm: p.col_perm().to_vec(),
        factors,
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

pub fn mlr_from_json(text: &str) -> Result<MlrMatrix> {
    let doc: JsonMlr = serde_json::from_str(text)?;
    let partition = HierPartition::new(doc.levels, doc.row_perm, doc.col_perm)?;
    if doc.factors.len() != partition.num_levels() || doc.ranks.len() != partition.num_levels() {
        return Err(MlrError::Format("factor or rank list length differs from level count".into()));
    }
    let mut blocks = Vec::with_capacity(doc.factors.len());
    for (l, level_blocks) in doc.factors.into_iter().enumerate() {
        let level = partition.level(l);
        if level_blocks.len() != level.num_blocks() {
            return Err(MlrError::Format(format!("level {} has the wrong number of blocks", l + 1)));
        }
        let r = doc.ranks[l];
        let mut lb = Vec::with_capacity(level_blocks.len());
        for (k, b) in level_blocks.into_iter().enumerate() {
            let left = from_rows(&b.left, level.row_sizes[k], r)?;
            lb.push(match doc.kind {
                Kind::General => {
                    let right = b
                        .right
                        .ok_or_else(|| MlrError::Format("general block without right factor".into()))?;
                    BlockFactors {
                        left,
                        right: from_rows(&right, level.col_sizes[k], r)?,
                        signs: Vec::new(),
                    }
                }
                Kind::Symmetric => BlockFactors::symmetric(left, b.signs),
                Kind::Psd => BlockFactors::psd(left),
            });
        }
        blocks.push(lb);
    }
    MlrMatrix::from_blocks(partition, RankAllocation::new(doc.ranks), doc.kind, blocks)
}

fn is_json(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

/// Save as JSON when the path ends in `.json`, else as binary `MLR1`.
pub fn save_mlr(mlr: &MlrMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if is_json(path) {
        std::fs::write(path, mlr_to_json(mlr)?)?;
        Ok(())
    } else {
        write_mlr(mlr, BufWriter::new(File::create(path)?))
    }
}

pub fn load_mlr(path: impl AsRef<Path>) -> Result<MlrMatrix> {
    let path = path.as_ref();
    if is_json(path) {
        mlr_from_json(&std::fs::read_to_string(path)?)
    } else {
        read_mlr(BufReader::new(File::open(path)?))
    }
}

pub fn load_partition(path: impl AsRef<Path>) -> Result<HierPartition> {
    HierPartition::from_json(&std::fs::read_to_string(path)?)
}

pub fn save_partition(p: &HierPartition, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, p.to_json()?)?;
    Ok(())
}
