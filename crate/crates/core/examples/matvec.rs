//! Build an MLR matrix by hand and multiply with it.
//!
//! A matvec costs about `2 (m + n) r` flops, against `2 m n` for the dense
//! matrix.

use mlr::hier::HierPartition;
use mlr::matrices::planted_mlr;
use mlr::mlr::{dense_matvec, Kind, RankAllocation};

fn main() -> mlr::error::Result<()> {
    let (m, n) = (2048, 1536);
    let partition = HierPartition::bisection(m, n, 6)?;
    let ranks = RankAllocation::new(vec![8, 4, 4, 2, 2, 1]);
    let (a_mlr, a) = planted_mlr(partition, ranks, Kind::General, 7)?;

    let x: Vec<f64> = (0..n).map(|j| (j as f64 * 0.01).sin()).collect();
    let (y, flops) = a_mlr.matvec_counted(&x)?;
    let y_dense = dense_matvec(&a, &x);

    let err = y.iter().zip(&y_dense).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
    let norm = y_dense.iter().map(|v| v * v).sum::<f64>().sqrt();
    println!("{m}x{n}, ranks {:?}", a_mlr.ranks().ranks());
    println!("storage {} values (dense {})", a_mlr.storage_count(), m * n);
    println!("matvec flops {flops} (dense {})", 2 * m * n);
    println!("relative difference to dense product {:.2e}", err / norm);

    let yt = a_mlr.matvec_adjoint(&y)?;
    println!("adjoint product has length {}", yt.len());
    Ok(())
}
