//! Multilevel low rank matrices.
//!
//! An MLR matrix is `P (A^1 + ... + A^L) Q^T` where every `A^l` is block
//! diagonal with `p_l` blocks `B_{l,k} C_{l,k}^T` of rank at most `r_l`, and
//! the block structure of level `l` refines that of level `l - 1`.
//!
//! Within a level, blocks are processed in ascending order, and levels are
//! summed in ascending order. Every dense or matrix-vector evaluation in this
//! module follows that order, so results are bitwise reproducible.

use std::ops::{Index, Range};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dense::DenseMatrix;
use crate::error::{MlrError, Result};
use crate::hier::HierPartition;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    #[default]
    General,
    /// `C_{l,k} = B_{l,k} S_{l,k}` with a diagonal sign matrix `S_{l,k}`.
    Symmetric,
    /// `C_{l,k} = B_{l,k}`.
    Psd,
}

impl Kind {
    pub fn as_byte(self) -> u8 {
        match self {
            Kind::General => 0,
            Kind::Symmetric => 1,
            Kind::Psd => 2,
        }
    }

    pub fn from_byte(b: u8) -> Result<Kind> {
        match b {
            0 => Ok(Kind::General),
            1 => Ok(Kind::Symmetric),
            2 => Ok(Kind::Psd),
            _ => Err(MlrError::Format(format!("unknown kind byte {b}"))),
        }
    }

    pub fn is_symmetric(self) -> bool {
        self != Kind::General
    }
}

impl std::str::FromStr for Kind {
    type Err = MlrError;

    fn from_str(s: &str) -> Result<Kind> {
        match s.to_ascii_lowercase().as_str() {
            "general" => Ok(Kind::General),
            "symmetric" => Ok(Kind::Symmetric),
            "psd" => Ok(Kind::Psd),
            other => Err(MlrError::Config(format!("unknown kind {other:?}"))),
        }
    }
}

/// Per-level ranks `(r_1, ..., r_L)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RankAllocation(Vec<usize>);

impl RankAllocation {
    pub fn new(ranks: Vec<usize>) -> Self {
        RankAllocation(ranks)
    }

    /// All rank on level 1.
    pub fn top(total: usize, num_levels: usize) -> Self {
        let mut r = vec![0; num_levels];
        r[0] = total;
        RankAllocation(r)
    }

    /// All rank on the last level.
    pub fn bottom(total: usize, num_levels: usize) -> Self {
        let mut r = vec![0; num_levels];
        r[num_levels - 1] = total;
        RankAllocation(r)
    }

    /// `r_l ≈ total / L`, with the remainder going to the top levels.
    pub fn uniform(total: usize, num_levels: usize) -> Self {
        let base = total / num_levels;
        let extra = total % num_levels;
        RankAllocation((0..num_levels).map(|l| base + usize::from(l < extra)).collect())
    }

    pub fn ranks(&self) -> &[usize] {
        &self.0
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub(crate) fn set(&mut self, l: usize, r: usize) {
        self.0[l] = r;
    }
}

impl Index<usize> for RankAllocation {
    type Output = usize;

    fn index(&self, l: usize) -> &usize {
        &self.0[l]
    }
}

/// Factors of one block: `A_{l,k} = left * right^T`.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockFactors {
    pub left: DMatrix<f64>,
    pub right: DMatrix<f64>,
    /// Diagonal of `S_{l,k}` for symmetric matrices, empty otherwise.
    pub signs: Vec<f64>,
}

impl BlockFactors {
    pub fn zeros(rows: usize, cols: usize, rank: usize, kind: Kind) -> Self {
        BlockFactors {
            left: DMatrix::zeros(rows, rank),
            right: DMatrix::zeros(cols, rank),
            signs: if kind == Kind::Symmetric {
                vec![1.0; rank]
            } else {
                Vec::new()
            },
        }
    }

    /// Symmetric block `B diag(signs) B^T`.
    pub fn symmetric(left: DMatrix<f64>, signs: Vec<f64>) -> Self {
        let mut right = left.clone();
        for (j, s) in signs.iter().enumerate() {
            right.column_mut(j).scale_mut(*s);
        }
        BlockFactors { left, right, signs }
    }

    pub fn psd(left: DMatrix<f64>) -> Self {
        BlockFactors {
            right: left.clone(),
            left,
            signs: Vec::new(),
        }
    }

    pub fn rank(&self) -> usize {
        self.left.ncols()
    }

    pub fn product(&self) -> DMatrix<f64> {
        &self.left * self.right.transpose()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlrMatrix {
    partition: HierPartition,
    ranks: RankAllocation,
    kind: Kind,
    blocks: Vec<Vec<BlockFactors>>,
}

impl MlrMatrix {
    pub fn zeros(partition: HierPartition, ranks: RankAllocation, kind: Kind) -> Result<Self> {
        if ranks.len() != partition.num_levels() {
            return Err(MlrError::ShapeMismatch(format!(
                "{} ranks for {} levels",
                ranks.len(),
                partition.num_levels()
            )));
        }
        let blocks = (0..partition.num_levels())
            .map(|l| {
                let level = partition.level(l);
                level
                    .row_sizes
                    .iter()
                    .zip(&level.col_sizes)
                    .map(|(&m, &n)| BlockFactors::zeros(m, n, ranks[l], kind))
                    .collect()
            })
            .collect();
        let mlr = MlrMatrix {
            partition,
            ranks,
            kind,
            blocks,
        };
        mlr.validate()?;
        Ok(mlr)
    }

    pub fn from_blocks(
        partition: HierPartition,
        ranks: RankAllocation,
        kind: Kind,
        blocks: Vec<Vec<BlockFactors>>,
    ) -> Result<Self> {
        let mlr = MlrMatrix {
            partition,
            ranks,
            kind,
            blocks,
        };
        mlr.validate()?;
        Ok(mlr)
    }

    /// Plain rank-`r` matrix `left * right^T` as a one-level MLR matrix.
    pub fn low_rank(left: DMatrix<f64>, right: DMatrix<f64>) -> Result<Self> {
        let (m, n, r) = (left.nrows(), right.nrows(), left.ncols());
        let partition = HierPartition::bisection(m, n, 1)?;
        Self::from_blocks(
            partition,
            RankAllocation::new(vec![r]),
            Kind::General,
            vec![vec![BlockFactors {
                left,
                right,
                signs: Vec::new(),
            }]],
        )
    }

    /// Check every structural invariant, reporting the first violation.
    pub fn validate(&self) -> Result<()> {
        self.partition.validate()?;
        let num_levels = self.partition.num_levels();
        if self.ranks.len() != num_levels {
            return Err(MlrError::ShapeMismatch(format!(
                "{} ranks for {num_levels} levels",
                self.ranks.len()
            )));
        }
        if self.blocks.len() != num_levels {
            return Err(MlrError::ShapeMismatch(format!(
                "{} factor levels for {num_levels} partition levels",
                self.blocks.len()
            )));
        }
        for l in 0..num_levels {
            let level = self.partition.level(l);
            let r = self.ranks[l];
            if self.blocks[l].len() != level.num_blocks() {
                return Err(MlrError::ShapeMismatch(format!(
                    "level {}: {} factor blocks for {} partition blocks",
                    l + 1,
                    self.blocks[l].len(),
                    level.num_blocks()
                )));
            }
            for (k, b) in self.blocks[l].iter().enumerate() {
                let (m, n) = (level.row_sizes[k], level.col_sizes[k]);
                if b.left.shape() != (m, r) || b.right.shape() != (n, r) {
                    return Err(MlrError::ShapeMismatch(format!(
                        "block ({}, {}): factors are {:?} and {:?}, expected ({m}, {r}) and ({n}, {r})",
                        l + 1,
                        k + 1,
                        b.left.shape(),
                        b.right.shape()
                    )));
                }
            }
        }
        if self.kind.is_symmetric() {
            if !self.partition.is_symmetric() {
                return Err(MlrError::SymmetryViolation(
                    "symmetric kinds need identical row and column partitions".into(),
                ));
            }
            for (l, level) in self.blocks.iter().enumerate() {
                for (k, b) in level.iter().enumerate() {
                    let ok = match self.kind {
                        Kind::Psd => b.right == b.left,
                        _ => {
                            b.signs.len() == b.rank()
                                && b.signs.iter().all(|s| *s == 1.0 || *s == -1.0)
                                && b
                                    .left
                                    .column_iter()
                                    .zip(b.right.column_iter())
                                    .zip(&b.signs)
                                    .all(|((bl, cr), s)| bl.iter().zip(cr.iter()).all(|(x, y)| x * s == *y))
                        }
                    };
                    if !ok {
                        return Err(MlrError::SymmetryViolation(format!(
                            "block ({}, {}) does not satisfy the {:?} factor structure",
                            l + 1,
                            k + 1,
                            self.kind
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn partition(&self) -> &HierPartition {
        &self.partition
    }

    pub fn ranks(&self) -> &RankAllocation {
        &self.ranks
    }

    pub fn kind(&self) -> Kind {
        self.kind
    }

    pub fn nrows(&self) -> usize {
        self.partition.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.partition.ncols()
    }

    pub fn num_levels(&self) -> usize {
        self.partition.num_levels()
    }

    pub fn block(&self, l: usize, k: usize) -> &BlockFactors {
        &self.blocks[l][k]
    }

    pub fn level_blocks(&self, l: usize) -> &[BlockFactors] {
        &self.blocks[l]
    }

    pub(crate) fn level_blocks_mut(&mut self, l: usize) -> &mut Vec<BlockFactors> {
        &mut self.blocks[l]
    }

    pub(crate) fn into_parts(self) -> (HierPartition, RankAllocation, Kind, Vec<Vec<BlockFactors>>) {
        (self.partition, self.ranks, self.kind, self.blocks)
    }

    /// Replace all blocks of level `l`, changing its rank to `rank`.
    pub(crate) fn replace_level(&mut self, l: usize, rank: usize, blocks: Vec<BlockFactors>) {
        debug_assert_eq!(blocks.len(), self.partition.num_blocks(l));
        debug_assert!(blocks.iter().all(|b| b.rank() == rank));
        self.ranks.set(l, rank);
        self.blocks[l] = blocks;
    }

    /// Reset every factor to zero, keeping shapes.
    pub fn clear(&mut self) {
        for level in &mut self.blocks {
            for b in level.iter_mut() {
                b.left.fill(0.0);
                b.right.fill(0.0);
                b.signs.iter_mut().for_each(|s| *s = 1.0);
            }
        }
    }

    /// Resize to a new rank allocation; every factor is reset to zero.
    pub fn reset_ranks(&mut self, ranks: RankAllocation) -> Result<()> {
        *self = MlrMatrix::zeros(self.partition.clone(), ranks, self.kind)?;
        Ok(())
    }

    /// Number of stored real coefficients: `(m + n) r` in general and `m r`
    /// for symmetric kinds (sign bits are not counted).
    pub fn storage_count(&self) -> usize {
        let r = self.ranks.total();
        match self.kind {
            Kind::General => (self.nrows() + self.ncols()) * r,
            Kind::Symmetric | Kind::Psd => self.nrows() * r,
        }
    }

    /// Dense value of the contiguous form `A^1 + ... + A^L`.
    pub fn to_dense_contiguous(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.nrows(), self.ncols());
        self.accumulate_region(0..self.nrows(), 0..self.ncols(), None, 1.0, &mut out);
        out
    }

    /// Dense value `P (A^1 + ... + A^L) Q^T`.
    pub fn to_dense(&self) -> DenseMatrix {
        permute_from_contiguous(&self.to_dense_contiguous(), &self.partition)
    }

    /// Dense value of a single level `A^l` (contiguous form).
    pub fn level_dense_contiguous(&self, l: usize) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.nrows(), self.ncols());
        for ((rows, cols), b) in self.partition.blocks(l).into_iter().zip(&self.blocks[l]) {
            if b.rank() > 0 {
                out.view_mut((rows.start, cols.start), (rows.len(), cols.len()))
                    .gemm(1.0, &b.left, &b.right.transpose(), 0.0);
            }
        }
        out
    }

    /// Add `alpha * sum_{j != skip} A^j`, restricted to the contiguous region
    /// `rows x cols`, into `out`.
    pub(crate) fn accumulate_region(
        &self,
        rows: Range<usize>,
        cols: Range<usize>,
        skip: Option<usize>,
        alpha: f64,
        out: &mut DMatrix<f64>,
    ) {
        debug_assert_eq!(out.shape(), (rows.len(), cols.len()));
        for l in 0..self.num_levels() {
            if Some(l) == skip || self.ranks[l] == 0 {
                continue;
            }
            for ((br, bc), b) in self.partition.blocks(l).into_iter().zip(&self.blocks[l]) {
                let ir = br.start.max(rows.start)..br.end.min(rows.end);
                let ic = bc.start.max(cols.start)..bc.end.min(cols.end);
                if ir.is_empty() || ic.is_empty() {
                    continue;
                }
                let left = b.left.rows(ir.start - br.start, ir.len());
                let right = b.right.rows(ic.start - bc.start, ic.len());
                out.view_mut((ir.start - rows.start, ic.start - cols.start), (ir.len(), ic.len()))
                    .gemm(alpha, &left, &right.transpose(), 1.0);
            }
        }
    }

    /// `Â x`.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.matvec_counted(x).map(|(y, _)| y)
    }

    /// `Â x` together with the number of floating point multiplies and adds
    /// performed. Permutations cost nothing.
    pub fn matvec_counted(&self, x: &[f64]) -> Result<(Vec<f64>, u64)> {
        if x.len() != self.ncols() {
            return Err(MlrError::dims(self.ncols(), x.len()));
        }
        let xc: Vec<f64> = self.partition.col_perm().iter().map(|&j| x[j]).collect();
        let mut yc = vec![0.0; self.nrows()];
        let flops = contiguous_product(&self.partition, &self.blocks, &xc, &mut yc, false);
        let mut y = vec![0.0; self.nrows()];
        for (i, &p) in self.partition.row_perm().iter().enumerate() {
            y[p] = yc[i];
        }
        Ok((y, flops))
    }

    /// `Â^T y`.
    pub fn matvec_adjoint(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.matvec_adjoint_counted(y).map(|(x, _)| x)
    }

    pub fn matvec_adjoint_counted(&self, y: &[f64]) -> Result<(Vec<f64>, u64)> {
        if y.len() != self.nrows() {
            return Err(MlrError::dims(self.nrows(), y.len()));
        }
        let yc: Vec<f64> = self.partition.row_perm().iter().map(|&i| y[i]).collect();
        let mut xc = vec![0.0; self.ncols()];
        let flops = contiguous_product(&self.partition, &self.blocks, &yc, &mut xc, true);
        let mut x = vec![0.0; self.ncols()];
        for (j, &p) in self.partition.col_perm().iter().enumerate() {
            x[p] = xc[j];
        }
        Ok((x, flops))
    }

    /// MLR representation of `Â^T`: swap permutations, factors and block
    /// dimensions.
    pub fn transpose(&self) -> MlrMatrix {
        let blocks = self
            .blocks
            .iter()
            .map(|level| {
                level
                    .iter()
                    .map(|b| BlockFactors {
                        left: b.right.clone(),
                        right: b.left.clone(),
                        signs: b.signs.clone(),
                    })
                    .collect()
            })
            .collect();
        MlrMatrix {
            partition: self.partition.transpose(),
            ranks: self.ranks.clone(),
            kind: self.kind,
            blocks,
        }
    }

    /// Factor form `Â = P B̃ C̃^T Q^T`.
    pub fn factor_form(&self) -> FactorForm<'_> {
        let mut columns = Vec::new();
        let mut first_column = 0;
        for l in 0..self.num_levels() {
            let r = self.ranks[l];
            for (k, (rows, cols)) in self.partition.blocks(l).into_iter().enumerate() {
                columns.push(FactorColumnBlock {
                    level: l,
                    block: k,
                    rows,
                    cols,
                    first_column,
                    width: r,
                });
                first_column += r;
            }
        }
        FactorForm {
            mlr: self,
            columns,
            num_columns: first_column,
        }
    }

    /// Compressed two-matrix form: the `m x r` and `n x r` matrices holding
    /// the vertically stacked factors of each level, levels side by side.
    pub fn compressed_form(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let r = self.ranks.total();
        let mut b = DMatrix::zeros(self.nrows(), r);
        let mut c = DMatrix::zeros(self.ncols(), r);
        let mut col = 0;
        for l in 0..self.num_levels() {
            let rl = self.ranks[l];
            for ((rows, cols), f) in self.partition.blocks(l).into_iter().zip(&self.blocks[l]) {
                b.view_mut((rows.start, col), (rows.len(), rl)).copy_from(&f.left);
                c.view_mut((cols.start, col), (cols.len(), rl)).copy_from(&f.right);
            }
            col += rl;
        }
        (b, c)
    }
}

/// One column block of the factor form: columns
/// `first_column..first_column + width` of `B̃` hold `B_{level, block}` in
/// rows `rows` and are zero elsewhere (likewise for `C̃` with `cols`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FactorColumnBlock {
    pub level: usize,
    pub block: usize,
    pub rows: Range<usize>,
    pub cols: Range<usize>,
    pub first_column: usize,
    pub width: usize,
}

#[derive(Clone, Debug)]
pub struct FactorForm<'a> {
    mlr: &'a MlrMatrix,
    columns: Vec<FactorColumnBlock>,
    num_columns: usize,
}

impl<'a> FactorForm<'a> {
    /// `s = sum_l p_l r_l`.
    pub fn num_columns(&self) -> usize {
        self.num_columns
    }

    pub fn column_blocks(&self) -> &[FactorColumnBlock] {
        &self.columns
    }

    pub fn values(&self, c: &FactorColumnBlock) -> &'a BlockFactors {
        self.mlr.block(c.level, c.block)
    }

    pub fn dense_left(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.mlr.nrows(), self.num_columns);
        for c in &self.columns {
            out.view_mut((c.rows.start, c.first_column), (c.rows.len(), c.width))
                .copy_from(&self.values(c).left);
        }
        out
    }

    pub fn dense_right(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.mlr.ncols(), self.num_columns);
        for c in &self.columns {
            out.view_mut((c.cols.start, c.first_column), (c.cols.len(), c.width))
                .copy_from(&self.values(c).right);
        }
        out
    }
}

/// `out += (sum_l A^l) x` on the contiguous form, or its adjoint. Returns the
/// flop count: `(2 n_{l,k} - 1) r_l` for each `z = C^T x` and `2 m_{l,k} r_l`
/// for accumulating `B z` into the output.
fn contiguous_product(
    partition: &HierPartition,
    blocks: &[Vec<BlockFactors>],
    x: &[f64],
    out: &mut [f64],
    adjoint: bool,
) -> u64 {
    let mut flops = 0u64;
    let mut z = Vec::new();
    for (l, level) in blocks.iter().enumerate() {
        for ((rows, cols), b) in partition.blocks(l).into_iter().zip(level) {
            let r = b.rank();
            if r == 0 {
                continue;
            }
            let (inner, outer, input, output) = if adjoint {
                (&b.left, &b.right, rows, cols)
            } else {
                (&b.right, &b.left, cols, rows)
            };
            let xs = &x[input.clone()];
            z.clear();
            for j in 0..r {
                let col = inner.column(j);
                let mut acc = col[0] * xs[0];
                for (c, v) in col.iter().zip(xs).skip(1) {
                    acc += c * v;
                }
                z.push(acc);
            }
            flops += ((2 * input.len() - 1) * r) as u64;
            let ys = &mut out[output];
            for (j, zj) in z.iter().enumerate() {
                for (y, c) in ys.iter_mut().zip(outer.column(j).iter()) {
                    *y += c * zj;
                }
            }
            flops += (2 * ys.len() * r) as u64;
        }
    }
    flops
}

/// `Ã[i, j] = A[row_perm[i], col_perm[j]]`.
pub fn permute_to_contiguous(a: &DenseMatrix, partition: &HierPartition) -> Result<DenseMatrix> {
    if a.shape() != (partition.nrows(), partition.ncols()) {
        return Err(MlrError::dims(
            format!("{}x{}", partition.nrows(), partition.ncols()),
            format!("{}x{}", a.nrows(), a.ncols()),
        ));
    }
    let rp = partition.row_perm();
    let cp = partition.col_perm();
    Ok(DenseMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(rp[i], cp[j])]))
}

/// Inverse of [`permute_to_contiguous`].
pub fn permute_from_contiguous(contiguous: &DenseMatrix, partition: &HierPartition) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(contiguous.nrows(), contiguous.ncols());
    let rp = partition.row_perm();
    let cp = partition.col_perm();
    for j in 0..contiguous.ncols() {
        for i in 0..contiguous.nrows() {
            out[(rp[i], cp[j])] = contiguous[(i, j)];
        }
    }
    out
}

/// `y = A x` for a dense matrix, as a plain vector.
pub fn dense_matvec(a: &DenseMatrix, x: &[f64]) -> Vec<f64> {
    (a * DVector::from_column_slice(x)).iter().copied().collect()
}
