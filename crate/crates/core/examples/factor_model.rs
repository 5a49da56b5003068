//! Fit a factor covariance `F F^T + D` as a two-level PSD MLR matrix and
//! recover the diagonal.

use mlr::matrices::{factor_cov_from_parts, factor_model};
use mlr::mlr::Kind;
use mlr::runner::baseline_lrd;

fn main() -> mlr::error::Result<()> {
    let (n, p) = (300, 5);
    let (f, d) = factor_model(n, p, 11)?;
    let cov = factor_cov_from_parts(&f, &d);

    let (err, fitted) = baseline_lrd(&cov, p + 1, Kind::Psd)?;
    println!("relative error {err:.2e}");

    let diag = fitted.level_dense_contiguous(1).diagonal();
    let worst = diag.iter().zip(&d).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("largest diagonal error {worst:.2e}, min diagonal {:.3}", diag.min());

    let full = fitted.to_dense();
    let max_diag = (0..n).map(|i| (full[(i, i)] - cov[(i, i)]).abs()).fold(0.0, f64::max);
    println!("diagonal of the fit vs the covariance: {max_diag:.2e}");
    Ok(())
}
