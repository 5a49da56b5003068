//! Write and read matrices, partitions and fitted MLR matrices.

use mlr::dense;
use mlr::fitting::{bcd_fit, FitConfig};
use mlr::hier::HierPartition;
use mlr::io;
use mlr::matrices::GeneratorSpec;
use mlr::mlr::{Kind, MlrMatrix, RankAllocation};

fn main() -> mlr::error::Result<()> {
    let dir = std::env::temp_dir().join("mlr-file-formats");
    std::fs::create_dir_all(&dir)?;

    let spec: GeneratorSpec = "graph_distance:n=200,avg_degree=6,seed=3".parse()?;
    let a = spec.generate()?;
    dense::save(&a, dir.join("a.dmat"))?;
    dense::save(&a, dir.join("a.csv"))?;
    assert_eq!(dense::load(dir.join("a.dmat"))?, a);

    let partition = HierPartition::bisection(200, 200, 5)?;
    io::save_partition(&partition, dir.join("partition.json"))?;
    let mut fit = MlrMatrix::zeros(io::load_partition(dir.join("partition.json"))?, RankAllocation::uniform(10, 5), Kind::Symmetric)?;
    let report = bcd_fit(&a, &mut fit, &FitConfig::default())?;
    println!("{spec}: rel error {:.4}", report.final_rel_error());

    io::save_mlr(&fit, dir.join("fit.bin"))?;
    io::save_mlr(&fit, dir.join("fit.json"))?;
    assert_eq!(io::load_mlr(dir.join("fit.bin"))?, fit);
    assert_eq!(io::load_mlr(dir.join("fit.json"))?, fit);
    for name in ["a.dmat", "a.csv", "fit.bin", "fit.json"] {
        println!("{name:>9}: {} bytes", std::fs::metadata(dir.join(name))?.len());
    }
    Ok(())
}
