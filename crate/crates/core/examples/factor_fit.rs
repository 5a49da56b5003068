//! Fit factors for a fixed partition and rank allocation with block
//! coordinate descent, then compare with alternating least squares.

use mlr::fitting::{als_fit, bcd_fit, FitConfig};
use mlr::hier::HierPartition;
use mlr::matrices;
use mlr::mlr::{Kind, MlrMatrix, RankAllocation};

fn main() -> mlr::error::Result<()> {
    let a = matrices::dgt(400, 560, 3, 0.2, 1)?;
    let levels = 6;
    let partition = HierPartition::bisection(a.nrows(), a.ncols(), levels)?;
    let ranks = RankAllocation::uniform(24, levels);

    let cfg = FitConfig {
        eps_rel: 1e-3,
        ..FitConfig::default()
    };
    let mut bcd = MlrMatrix::zeros(partition.clone(), ranks.clone(), Kind::General)?;
    let report = bcd_fit(&a, &mut bcd, &cfg)?;
    println!("BCD: {:?} after {} epochs", report.termination, report.epochs_run());
    for e in report.epochs.iter().take(5) {
        println!("  epoch {:>2}  rel error {:.5}", e.epoch, e.rel_error);
    }
    println!("  final {:.5}", report.final_rel_error());

    let mut als = MlrMatrix::zeros(partition, ranks, Kind::General)?;
    let report = als_fit(&a, &mut als, &FitConfig { max_epochs: 30, ..cfg })?;
    println!("ALS: {:?} after {} epochs, final {:.5}", report.termination, report.epochs_run(), report.final_rel_error());
    Ok(())
}
