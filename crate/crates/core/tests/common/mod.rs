#![allow(dead_code)]

use mlr::hier::{HierPartition, Level};
use mlr::mlr::{Kind, MlrMatrix, RankAllocation};
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(m: usize, n: usize, seed: u64) -> DMatrix<f64> {
    let mut r = rng(seed);
    DMatrix::from_fn(m, n, |_, _| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut r))
}

pub fn symmetric(n: usize, seed: u64) -> DMatrix<f64> {
    let g = gaussian(n, n, seed);
    (&g + g.transpose()) * 0.5
}

pub fn psd(n: usize, seed: u64) -> DMatrix<f64> {
    let g = gaussian(n, n, seed);
    &g * g.transpose()
}

/// Target of the right symmetry for `kind`.
pub fn target(kind: Kind, m: usize, n: usize, seed: u64) -> DMatrix<f64> {
    match kind {
        Kind::General => gaussian(m, n, seed),
        Kind::Symmetric => symmetric(m, seed),
        Kind::Psd => psd(m, seed),
    }
}

pub fn kind_from(i: u8) -> Kind {
    [Kind::General, Kind::Symmetric, Kind::Psd][i as usize % 3]
}

/// Bisection partition with shuffled row and column permutations (shared
/// for symmetric kinds).
pub fn shuffled_partition(m: usize, n: usize, levels: usize, symmetric: bool, seed: u64) -> HierPartition {
    let base = HierPartition::bisection(m, n, levels).unwrap();
    let mut r = rng(seed ^ 0x5eed);
    let mut rows: Vec<usize> = (0..m).collect();
    rows.shuffle(&mut r);
    let cols = if symmetric {
        rows.clone()
    } else {
        let mut c: Vec<usize> = (0..n).collect();
        c.shuffle(&mut r);
        c
    };
    HierPartition::new(base.levels().to_vec(), rows, cols).unwrap()
}

/// `levels` copies of the single whole-matrix block.
pub fn single_block_levels(m: usize, n: usize, levels: usize) -> HierPartition {
    HierPartition::contiguous(
        (0..levels)
            .map(|_| Level {
                row_sizes: vec![m],
                col_sizes: vec![n],
            })
            .collect(),
    )
    .unwrap()
}

pub fn random_ranks(levels: usize, max: usize, seed: u64) -> RankAllocation {
    use rand::Rng;
    let mut r = rng(seed ^ 0xa11c);
    RankAllocation::new((0..levels).map(|_| r.random_range(0..=max)).collect())
}

pub fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let n = a.norm();
    (a - b).norm() / if n > 0.0 { n } else { 1.0 }
}

pub fn vec_rel_err(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let n: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    d / if n > 0.0 { n } else { 1.0 }
}

/// Random MLR on a shuffled bisection partition.
pub fn random_mlr(kind: Kind, m: usize, n: usize, levels: usize, seed: u64) -> (MlrMatrix, DMatrix<f64>) {
    let n = if kind.is_symmetric() { m } else { n };
    let p = shuffled_partition(m, n, levels, kind.is_symmetric(), seed);
    let levels = p.num_levels();
    mlr::matrices::planted_mlr(p, random_ranks(levels, 3, seed), kind, seed).unwrap()
}
