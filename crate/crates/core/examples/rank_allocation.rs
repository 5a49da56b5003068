//! Let rank exchange move rank between levels, starting from each of the
//! three standard allocations.

use mlr::fitting::FitConfig;
use mlr::hierarchy::{build_hierarchy, HierarchyConfig};
use mlr::matrices;
use mlr::mlr::{Kind, MlrMatrix, RankAllocation};
use mlr::rankalloc::{allocate_ranks, AllocConfig};
use mlr::runner::baseline_lr;

fn main() -> mlr::error::Result<()> {
    let a = matrices::fiedler(256, 1)?;
    let r = 12;
    let hier = build_hierarchy(&a, r, &HierarchyConfig {
        kind: Kind::Symmetric,
        ..HierarchyConfig::default()
    })?;
    let partition = hier.partition().clone();
    let levels = partition.num_levels();
    println!("low rank baseline {:.3e}", baseline_lr(&a, r, Kind::Symmetric)?);

    for (name, ranks) in [
        ("bottom", RankAllocation::bottom(r, levels)),
        ("uniform", RankAllocation::uniform(r, levels)),
        ("top", RankAllocation::top(r, levels)),
    ] {
        let mut mlr = MlrMatrix::zeros(partition.clone(), ranks, Kind::Symmetric)?;
        let cfg = AllocConfig {
            fit: FitConfig { eps_rel: 1e-3, ..FitConfig::default() },
            ..AllocConfig::default()
        };
        let report = allocate_ranks(&a, &mut mlr, &cfg)?;
        let exchanges = report.epochs.iter().filter(|e| e.exchange).count();
        println!(
            "{name:>7}: {:.3e} with ranks {:?} ({exchanges} exchanges, {:?})",
            report.final_rel_error(),
            mlr.ranks().ranks(),
            report.termination
        );
    }
    Ok(())
}
