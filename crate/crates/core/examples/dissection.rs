//! Split a noisy block-structured matrix into two co-clusters.

use mlr::dissect::{affinity, centered_affinity, dissect};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> mlr::error::Result<()> {
    let (m, n) = (40, 30);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let rows: Vec<bool> = (0..m).map(|_| rng.random()).collect();
    let cols: Vec<bool> = (0..n).map(|_| rng.random()).collect();
    let r = DMatrix::from_fn(m, n, |i, j| {
        let signal = if rows[i] == cols[j] { 1.0 } else { 0.0 };
        signal + 0.1 * (rng.random::<f64>() - 0.5)
    });

    let s = affinity(&r);
    println!("centered affinity sums to {:.1e}", centered_affinity(&s).sum());

    let d = dissect(&r, false, 1000)?;
    println!("rows: {:?} | {:?}", d.row_groups[0], d.row_groups[1]);
    println!("cols: {:?} | {:?}", d.col_groups[0], d.col_groups[1]);
    println!("within-group energy {:.3} of {:.3}", d.objective, s.sum());

    let agree = |got: &[Vec<usize>; 2], truth: &[bool]| {
        let hits = got[0].iter().filter(|&&i| truth[i]).count() + got[1].iter().filter(|&&i| !truth[i]).count();
        hits.max(truth.len() - hits)
    };
    println!("rows recovered {}/{m}, cols recovered {}/{n}", agree(&d.row_groups, &rows), agree(&d.col_groups, &cols));
    Ok(())
}
