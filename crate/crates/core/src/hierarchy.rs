//! Full fitting: grow the hierarchical partition one level at a time by
//! dissecting the blocks of the current residual, refitting the factors
//! after each new level.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::dense::{ensure_finite, ensure_symmetric, DenseMatrix};
use crate::dissect::{dissect, DEFAULT_MAX_SWAPS};
use crate::error::{MlrError, Result};
use crate::fitting::{bcd_fit_contiguous, best_block, region_residual, FitConfig, FitReport, Init};
use crate::hier::{HierPartition, Level};
use crate::lowrank::SYMMETRY_TOL;
use crate::mlr::{BlockFactors, Kind, MlrMatrix, RankAllocation};

#[derive(Clone, Debug)]
pub struct HierarchyConfig {
    pub kind: Kind,
    /// Defaults to `⌈log2 min(m, n)⌉ + 1`.
    pub num_levels: Option<usize>,
    /// Per-level ranks; defaults to a uniform split of the total rank.
    pub ranks: Option<RankAllocation>,
    /// BCD settings used after each new level (`init` is ignored).
    pub fit: FitConfig,
    pub max_swaps: usize,
}

impl Default for HierarchyConfig {
    fn default() -> Self {
        HierarchyConfig {
            kind: Kind::General,
            num_levels: None,
            ranks: None,
            fit: FitConfig::default(),
            max_swaps: DEFAULT_MAX_SWAPS,
        }
    }
}

#[derive(Clone, Debug)]
pub struct HierarchyFit {
    /// Fitted matrix; its partition is the discovered hierarchy.
    pub mlr: MlrMatrix,
    /// Epochs of every per-level refit, in order.
    pub report: FitReport,
}

impl HierarchyFit {
    pub fn partition(&self) -> &HierPartition {
        self.mlr.partition()
    }
}

/// `⌈log2 min(m, n)⌉ + 1`.
pub fn default_num_levels(m: usize, n: usize) -> usize {
    let d = m.min(n).max(1);
    (usize::BITS - (d - 1).leading_zeros()) as usize + 1
}

/// New within-block orders and the next level's sizes, or `None` when no
/// block has at least 2 rows and 2 columns.
struct Split {
    level: Level,
    row_order: Vec<usize>,
    col_order: Vec<usize>,
}

fn split_leaves(r: &DenseMatrix, partition: &HierPartition, symmetric: bool, max_swaps: usize) -> Result<Option<Split>> {
    let leaves = partition.blocks(partition.num_levels() - 1);
    let dissections = leaves
        .par_iter()
        .map(|(rows, cols)| {
            if rows.len() < 2 || cols.len() < 2 {
                return Ok(None);
            }
            let block = r.view((rows.start, cols.start), (rows.len(), cols.len())).clone_owned();
            dissect(&block, symmetric, max_swaps).map(Some)
        })
        .collect::<Result<Vec<_>>>()?;
    if dissections.iter().all(Option::is_none) {
        return Ok(None);
    }
    let (m, n) = r.shape();
    let mut split = Split {
        level: Level {
            row_sizes: Vec::new(),
            col_sizes: Vec::new(),
        },
        row_order: (0..m).collect(),
        col_order: (0..n).collect(),
    };
    for ((rows, cols), d) in leaves.into_iter().zip(dissections) {
        match d {
            Some(d) => {
                for (t, i) in d.row_order().into_iter().enumerate() {
                    split.row_order[rows.start + t] = rows.start + i;
                }
                for (t, j) in d.col_order().into_iter().enumerate() {
                    split.col_order[cols.start + t] = cols.start + j;
                }
                split.level.row_sizes.extend(d.row_groups.iter().map(Vec::len));
                split.level.col_sizes.extend(d.col_groups.iter().map(Vec::len));
            }
            None => {
                split.level.row_sizes.push(rows.len());
                split.level.col_sizes.push(cols.len());
            }
        }
    }
    Ok(Some(split))
}

fn reorder_rows(f: &DMatrix<f64>, order: &[usize], start: usize) -> DMatrix<f64> {
    DMatrix::from_fn(f.nrows(), f.ncols(), |t, c| f[(order[start + t] - start, c)])
}

/// Build a hierarchy for `a` with total rank `r`: level 1 is the best
/// rank-`r_1` fit; each further level splits every block of the previous
/// level (with at least 2 rows and 2 columns) by dissecting the current
/// residual, reorders rows and columns within the block, and refits all
/// levels so far with warm-started BCD. Splitting stops early when no block
/// can be split; any rank left over goes to the last level.
pub fn build_hierarchy(a: &DenseMatrix, r: usize, cfg: &HierarchyConfig) -> Result<HierarchyFit> {
    ensure_finite(a)?;
    let kind = cfg.kind;
    let symmetric = kind.is_symmetric();
    if symmetric {
        ensure_symmetric(a, SYMMETRY_TOL)?;
    }
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Err(MlrError::Config("cannot build a hierarchy for an empty matrix".into()));
    }
    let ranks = match &cfg.ranks {
        Some(ranks) => {
            if ranks.total() != r {
                return Err(MlrError::Config(format!(
                    "rank allocation sums to {} but total rank {r} was requested",
                    ranks.total()
                )));
            }
            if cfg.num_levels.is_some_and(|l| l != ranks.len()) {
                return Err(MlrError::Config("rank allocation length differs from the level count".into()));
            }
            ranks.clone()
        }
        None => {
            let levels = cfg.num_levels.unwrap_or_else(|| default_num_levels(m, n));
            if levels == 0 {
                return Err(MlrError::Config("at least one level is required".into()));
            }
            RankAllocation::uniform(r, levels)
        }
    };
    let num_levels = ranks.len();

    let mut at = a.clone();
    let mut row_perm: Vec<usize> = (0..m).collect();
    let mut col_perm: Vec<usize> = (0..n).collect();
    let mut levels = vec![Level {
        row_sizes: vec![m],
        col_sizes: vec![n],
    }];
    let mut mlr = MlrMatrix::zeros(
        HierPartition::contiguous(levels.clone())?,
        RankAllocation::new(vec![ranks[0]]),
        kind,
    )?;
    let mut report = bcd_fit_contiguous(
        &at,
        &mut mlr,
        &FitConfig {
            init: Init::Zeros,
            ..cfg.fit.clone()
        },
    )?;
    let warm = FitConfig {
        init: Init::Given,
        ..cfg.fit.clone()
    };

    for l in 1..num_levels {
        let mut residual = at.clone();
        mlr.accumulate_region(0..m, 0..n, None, -1.0, &mut residual);
        let Some(split) = split_leaves(&residual, mlr.partition(), symmetric, cfg.max_swaps)? else {
            break;
        };
        let Split {
            level,
            row_order,
            col_order,
        } = split;
        at = DMatrix::from_fn(m, n, |i, j| at[(row_order[i], col_order[j])]);
        row_perm = row_order.iter().map(|&i| row_perm[i]).collect();
        col_perm = col_order.iter().map(|&j| col_perm[j]).collect();

        let old_partition = mlr.partition().clone();
        let (_, _, _, mut blocks) = mlr.into_parts();
        for (j, level_blocks) in blocks.iter_mut().enumerate() {
            for ((rows, cols), b) in old_partition.blocks(j).into_iter().zip(level_blocks.iter_mut()) {
                let left = reorder_rows(&b.left, &row_order, rows.start);
                let right = reorder_rows(&b.right, &col_order, cols.start);
                *b = BlockFactors {
                    left,
                    right,
                    signs: std::mem::take(&mut b.signs),
                };
            }
        }
        blocks.push(
            level
                .row_sizes
                .iter()
                .zip(&level.col_sizes)
                .map(|(&rs, &cs)| BlockFactors::zeros(rs, cs, ranks[l], kind))
                .collect(),
        );
        levels.push(level);
        let partition = HierPartition::new(levels.clone(), row_perm.clone(), col_perm.clone())?;
        mlr = MlrMatrix::from_blocks(partition, RankAllocation::new(ranks.ranks()[..=l].to_vec()), kind, blocks)?;
        let rep = bcd_fit_contiguous(&at, &mut mlr, &warm)?;
        report.extend(rep, false);
    }

    let realized = mlr.num_levels();
    let leftover: usize = ranks.ranks()[realized..].iter().sum();
    if leftover > 0 {
        let last = realized - 1;
        let rank = mlr.ranks()[last] + leftover;
        let grown = mlr
            .partition()
            .blocks(last)
            .into_iter()
            .enumerate()
            .map(|(k, (rows, cols))| {
                let res = region_residual(&at, &mlr, last, rows, cols);
                best_block(&res, rank, kind, Some(mlr.block(last, k)))
            })
            .collect::<Result<Vec<_>>>()?;
        mlr.replace_level(last, rank, grown);
        let rep = bcd_fit_contiguous(&at, &mut mlr, &warm)?;
        report.extend(rep, false);
    }
    report.initial_rel_error = 1.0;
    Ok(HierarchyFit { mlr, report })
}

/// Hierarchy from pairwise distances `dist[i, j]` between row objects `i`
/// and column objects `j` (for example target and source points of a
/// kernel matrix): recursive bipartite dissection of the closeness
/// `max(dist) - dist`, so nearby rows and columns end up in the same
/// block.
pub fn hierarchy_from_distances(dist: &DenseMatrix, num_levels: usize, max_swaps: usize) -> Result<HierPartition> {
    ensure_finite(dist)?;
    if num_levels == 0 {
        return Err(MlrError::Config("at least one level is required".into()));
    }
    let (m, n) = dist.shape();
    let dmax = dist.max();
    let mut closeness = dist.map(|d| dmax - d);
    let mut partition = HierPartition::bisection(m, n, 1)?;
    for _ in 1..num_levels {
        let Some(split) = split_leaves(&closeness, &partition, false, max_swaps)? else {
            break;
        };
        closeness = DMatrix::from_fn(m, n, |i, j| closeness[(split.row_order[i], split.col_order[j])]);
        let row_perm = split.row_order.iter().map(|&i| partition.row_perm()[i]).collect();
        let col_perm = split.col_order.iter().map(|&j| partition.col_perm()[j]).collect();
        let mut levels = partition.levels().to_vec();
        levels.push(split.level);
        partition = HierPartition::new(levels, row_perm, col_perm)?;
    }
    Ok(partition)
}
