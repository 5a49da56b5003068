//! Find a hierarchy by spectral dissection, fit it, and compare against the
//! low rank and low rank plus diagonal baselines at equal storage.

use mlr::fitting::{FitConfig, Init};
use mlr::hierarchy::{build_hierarchy, HierarchyConfig};
use mlr::matrices;
use mlr::mlr::Kind;
use mlr::rankalloc::{allocate_ranks, AllocConfig};
use mlr::runner::{baseline_lr, baseline_lrd};

fn main() -> mlr::error::Result<()> {
    let a = matrices::multiscale_kernel(384, 384, 3, 3, 0.9, 3)?;
    let r = 16;
    let mut hier = build_hierarchy(&a, r, &HierarchyConfig::default())?;
    println!(
        "hierarchy: {} levels, uniform ranks, rel error {:.4}",
        hier.mlr.num_levels(),
        hier.report.final_rel_error()
    );

    let cfg = AllocConfig {
        fit: FitConfig { init: Init::Given, eps_rel: 1e-3, ..FitConfig::default() },
        ..AllocConfig::default()
    };
    let report = allocate_ranks(&a, &mut hier.mlr, &cfg)?;
    println!("after rank exchange: {:.4}, ranks {:?}", report.final_rel_error(), hier.mlr.ranks().ranks());
    println!("low rank:            {:.4}", baseline_lr(&a, r, Kind::General)?);
    println!("low rank + diagonal: {:.4}", baseline_lrd(&a, r, Kind::General)?.0);
    Ok(())
}
