//! Hierarchical row/column partitions.

use std::collections::BTreeSet;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{MlrError, Result};

/// Block sizes of one level of a hierarchical partition.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Level {
    pub row_sizes: Vec<usize>,
    pub col_sizes: Vec<usize>,
}

impl Level {
    pub fn num_blocks(&self) -> usize {
        self.row_sizes.len()
    }
}

/// A hierarchical partition of the rows and columns of an `m x n` matrix.
///
/// Blocks are contiguous after permutation: the contiguous matrix is
/// `Ã[i, j] = A[row_perm[i], col_perm[j]]`. Level 0 is a single block and
/// every level refines the one above it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawPartition", into = "RawPartition")]
pub struct HierPartition {
    levels: Vec<Level>,
    row_perm: Vec<usize>,
    col_perm: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct RawPartition {
    levels: Vec<Level>,
    row_perm: Vec<usize>,
    col_perm: Vec<usize>,
}

impl TryFrom<RawPartition> for HierPartition {
    type Error = MlrError;

    fn try_from(raw: RawPartition) -> Result<Self> {
        HierPartition::new(raw.levels, raw.row_perm, raw.col_perm)
    }
}

impl From<HierPartition> for RawPartition {
    fn from(p: HierPartition) -> Self {
        RawPartition {
            levels: p.levels,
            row_perm: p.row_perm,
            col_perm: p.col_perm,
        }
    }
}

impl HierPartition {
    pub fn new(levels: Vec<Level>, row_perm: Vec<usize>, col_perm: Vec<usize>) -> Result<Self> {
        let p = HierPartition {
            levels,
            row_perm,
            col_perm,
        };
        p.validate()?;
        Ok(p)
    }

    /// Partition with identity permutations.
    pub fn contiguous(levels: Vec<Level>) -> Result<Self> {
        let m = levels.first().map_or(0, |l| l.row_sizes.iter().sum());
        let n = levels.first().map_or(0, |l| l.col_sizes.iter().sum());
        Self::new(levels, (0..m).collect(), (0..n).collect())
    }

    /// Contiguous nested bisection: level `l` splits every block of level
    /// `l - 1` into two halves (the second half gets the extra index), as
    /// long as both its row and column counts are at least 2.
    pub fn bisection(m: usize, n: usize, num_levels: usize) -> Result<Self> {
        if num_levels == 0 {
            return Err(MlrError::Config("at least one level is required".into()));
        }
        let mut levels = vec![Level {
            row_sizes: vec![m],
            col_sizes: vec![n],
        }];
        for _ in 1..num_levels {
            let prev = levels.last().unwrap();
            let mut next = Level {
                row_sizes: Vec::new(),
                col_sizes: Vec::new(),
            };
            for (&rs, &cs) in prev.row_sizes.iter().zip(&prev.col_sizes) {
                if rs >= 2 && cs >= 2 {
                    next.row_sizes.extend([rs / 2, rs - rs / 2]);
                    next.col_sizes.extend([cs / 2, cs - cs / 2]);
                } else {
                    next.row_sizes.push(rs);
                    next.col_sizes.push(cs);
                }
            }
            levels.push(next);
        }
        Self::contiguous(levels)
    }

    /// Check every invariant, reporting the first violation.
    pub fn validate(&self) -> Result<()> {
        let first = self
            .levels
            .first()
            .ok_or_else(|| MlrError::ShapeMismatch("partition has no levels".into()))?;
        if first.num_blocks() != 1 {
            return Err(MlrError::ShapeMismatch(format!(
                "level 1 must be a single block, found {}",
                first.num_blocks()
            )));
        }
        let m = self.row_perm.len();
        let n = self.col_perm.len();
        for (l, level) in self.levels.iter().enumerate() {
            if level.row_sizes.len() != level.col_sizes.len() {
                return Err(MlrError::ShapeMismatch(format!(
                    "level {}: {} row blocks but {} column blocks",
                    l + 1,
                    level.row_sizes.len(),
                    level.col_sizes.len()
                )));
            }
            if level.row_sizes.iter().chain(&level.col_sizes).any(|&s| s == 0) {
                return Err(MlrError::ShapeMismatch(format!(
                    "level {}: empty blocks are not allowed",
                    l + 1
                )));
            }
            let rows: usize = level.row_sizes.iter().sum();
            let cols: usize = level.col_sizes.iter().sum();
            if rows != m || cols != n {
                return Err(MlrError::ShapeMismatch(format!(
                    "level {}: block sizes cover {rows}x{cols}, expected {m}x{n}",
                    l + 1
                )));
            }
        }
        for l in 1..self.levels.len() {
            let check = |coarse: &[usize], fine: &[usize], what: &str| -> Result<()> {
                let fine_cuts: BTreeSet<usize> = cuts(fine).collect();
                if let Some(c) = cuts(coarse).find(|c| !fine_cuts.contains(c)) {
                    return Err(MlrError::NotRefinement(format!(
                        "{what} cut {c} of level {} is missing from level {}",
                        l,
                        l + 1
                    )));
                }
                Ok(())
            };
            check(&self.levels[l - 1].row_sizes, &self.levels[l].row_sizes, "row")?;
            check(&self.levels[l - 1].col_sizes, &self.levels[l].col_sizes, "column")?;
        }
        check_permutation(&self.row_perm, "row")?;
        check_permutation(&self.col_perm, "column")?;
        Ok(())
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn nrows(&self) -> usize {
        self.row_perm.len()
    }

    pub fn ncols(&self) -> usize {
        self.col_perm.len()
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn level(&self, l: usize) -> &Level {
        &self.levels[l]
    }

    pub fn num_blocks(&self, l: usize) -> usize {
        self.levels[l].num_blocks()
    }

    pub fn row_perm(&self) -> &[usize] {
        &self.row_perm
    }

    pub fn col_perm(&self) -> &[usize] {
        &self.col_perm
    }

    /// Offsets `[0, m_1, m_1 + m_2, ..., m]` of the row blocks on level `l`.
    pub fn row_offsets(&self, l: usize) -> Vec<usize> {
        offsets(&self.levels[l].row_sizes)
    }

    pub fn col_offsets(&self, l: usize) -> Vec<usize> {
        offsets(&self.levels[l].col_sizes)
    }

    /// Contiguous row and column ranges of every block on level `l`.
    pub fn blocks(&self, l: usize) -> Vec<(Range<usize>, Range<usize>)> {
        let ro = self.row_offsets(l);
        let co = self.col_offsets(l);
        (0..self.num_blocks(l))
            .map(|k| (ro[k]..ro[k + 1], co[k]..co[k + 1]))
            .collect()
    }

    /// Square with identical row and column structure.
    pub fn is_symmetric(&self) -> bool {
        self.row_perm == self.col_perm
            && self.levels.iter().all(|l| l.row_sizes == l.col_sizes)
    }

    pub fn transpose(&self) -> HierPartition {
        HierPartition {
            levels: self
                .levels
                .iter()
                .map(|l| Level {
                    row_sizes: l.col_sizes.clone(),
                    col_sizes: l.row_sizes.clone(),
                })
                .collect(),
            row_perm: self.col_perm.clone(),
            col_perm: self.row_perm.clone(),
        }
    }

    /// Keep only the first `num_levels` levels.
    pub fn truncated(&self, num_levels: usize) -> HierPartition {
        HierPartition {
            levels: self.levels[..num_levels.clamp(1, self.levels.len())].to_vec(),
            row_perm: self.row_perm.clone(),
            col_perm: self.col_perm.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

pub(crate) fn offsets(sizes: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(sizes.len() + 1);
    out.push(0);
    let mut acc = 0;
    for &s in sizes {
        acc += s;
        out.push(acc);
    }
    out
}

fn cuts(sizes: &[usize]) -> impl Iterator<Item = usize> + '_ {
    let k = sizes.len();
    sizes[..k.saturating_sub(1)].iter().scan(0, |acc, &s| {
        *acc += s;
        Some(*acc)
    })
}

fn check_permutation(perm: &[usize], what: &str) -> Result<()> {
    let mut seen = vec![false; perm.len()];
    for &p in perm {
        if p >= perm.len() || std::mem::replace(&mut seen[p], true) {
            return Err(MlrError::BadPermutation(format!(
                "{what} permutation of length {} has bad or repeated entry {p}",
                perm.len()
            )));
        }
    }
    Ok(())
}

/// Inverse of a permutation given as an index map.
pub fn invert_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn ten_by_eight() -> HierPartition {
        HierPartition::contiguous(vec![
            Level {
                row_sizes: vec![10],
                col_sizes: vec![8],
            },
            Level {
                row_sizes: vec![4, 6],
                col_sizes: vec![4, 4],
            },
            Level {
                row_sizes: vec![2, 2, 4, 2],
                col_sizes: vec![2, 2, 2, 2],
            },
        ])
        .unwrap()
    }

    #[test]
    fn ten_by_eight_example_is_valid() {
        let p = ten_by_eight();
        assert_eq!(p.nrows(), 10);
        assert_eq!(p.ncols(), 8);
        assert_eq!(p.row_offsets(2), vec![0, 2, 4, 8, 10]);
    }

    #[test]
    fn missing_cut_is_not_a_refinement() {
        let levels = vec![
            Level {
                row_sizes: vec![7],
                col_sizes: vec![7],
            },
            Level {
                row_sizes: vec![3, 4],
                col_sizes: vec![3, 4],
            },
            Level {
                row_sizes: vec![2, 3, 2],
                col_sizes: vec![3, 2, 2],
            },
        ];
        let err = HierPartition::contiguous(levels).unwrap_err();
        assert!(matches!(err, MlrError::NotRefinement(_)), "{err}");
    }

    #[test]
    fn first_level_must_be_single_block() {
        let err = HierPartition::contiguous(vec![Level {
            row_sizes: vec![1, 1],
            col_sizes: vec![2],
        }])
        .unwrap_err();
        assert!(matches!(err, MlrError::ShapeMismatch(_)));
    }

    #[test]
    fn empty_blocks_rejected() {
        let err = HierPartition::contiguous(vec![
            Level {
                row_sizes: vec![2],
                col_sizes: vec![2],
            },
            Level {
                row_sizes: vec![2, 0],
                col_sizes: vec![1, 1],
            },
        ])
        .unwrap_err();
        assert!(matches!(err, MlrError::ShapeMismatch(_)));
    }

    #[test]
    fn repeated_permutation_entry_rejected() {
        let levels = vec![Level {
            row_sizes: vec![3],
            col_sizes: vec![2],
        }];
        let err = HierPartition::new(levels, vec![0, 1, 1], vec![1, 0]).unwrap_err();
        assert!(matches!(err, MlrError::BadPermutation(_)));
    }

    #[test]
    fn bisection_stops_at_single_columns() {
        let p = HierPartition::bisection(5, 4, 4).unwrap();
        assert_eq!(p.level(1).row_sizes, vec![2, 3]);
        assert_eq!(p.level(2).row_sizes, vec![1, 1, 1, 2]);
        assert_eq!(p.level(3).row_sizes, vec![1, 1, 1, 2]);
        assert_eq!(p.level(3).col_sizes, vec![1, 1, 1, 1]);
    }

    #[test]
    fn json_roundtrip_validates() {
        let p = ten_by_eight();
        let text = p.to_json().unwrap();
        assert!(text.contains("\"row_sizes\""));
        assert_eq!(HierPartition::from_json(&text).unwrap(), p);
        let broken = text.replacen("\"row_perm\": [\n    0,", "\"row_perm\": [\n    1,", 1);
        assert!(HierPartition::from_json(&broken).is_err());
    }

    #[test]
    fn inverse_permutation() {
        let perm = vec![2, 0, 3, 1];
        let inv = invert_permutation(&perm);
        for i in 0..4 {
            assert_eq!(inv[perm[i]], i);
        }
    }
}
