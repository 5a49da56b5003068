//! Batch runs: load or generate a matrix, fit it, and write the results to
//! an output directory.
//!
//! Files written:
//!
//! * `report.json`: final and initial relative error, storage, termination
//!   and the final rank allocation;
//! * `trajectory.csv`: one row per BCD epoch (`epoch,rel_error,r_1..r_L,exchange`);
//! * `mlr.bin`: the fitted matrix in `MLR1` format, and `partition.json`;
//! * `lr.json` and, for square inputs, `lrd.json` with the low rank and low
//!   rank plus diagonal baselines, when requested.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dense::{self, ensure_finite, ensure_symmetric, DenseMatrix};
use crate::dissect::DEFAULT_MAX_SWAPS;
use crate::error::{MlrError, Result};
use crate::fitting::{bcd_fit, FitConfig, FitReport, Init, Termination};
use crate::hier::{HierPartition, Level};
use crate::hierarchy::{build_hierarchy, default_num_levels, HierarchyConfig};
use crate::io;
use crate::lowrank::{self, SYMMETRY_TOL};
use crate::matrices::GeneratorSpec;
use crate::mlr::{Kind, MlrMatrix, RankAllocation};
use crate::rankalloc::{allocate_ranks, AllocConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Fit factors for a fixed partition and allocation.
    FactorFit,
    /// Fixed partition, allocation chosen by rank exchange.
    RankAlloc,
    /// Partition found by dissection, then rank allocation.
    FullFit,
}

impl FromStr for Mode {
    type Err = MlrError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "factor_fit" => Ok(Mode::FactorFit),
            "rank_alloc" => Ok(Mode::RankAlloc),
            "full_fit" => Ok(Mode::FullFit),
            other => Err(MlrError::Config(format!("unknown mode {other:?}"))),
        }
    }
}

/// Initial rank allocation, or an MLR file whose partition, ranks and
/// factors are the starting point.
#[derive(Clone, Debug, PartialEq)]
pub enum InitAlloc {
    Bottom,
    Uniform,
    Top,
    File(PathBuf),
}

impl InitAlloc {
    pub fn ranks(&self, total: usize, num_levels: usize) -> Option<RankAllocation> {
        match self {
            InitAlloc::Bottom => Some(RankAllocation::bottom(total, num_levels)),
            InitAlloc::Uniform => Some(RankAllocation::uniform(total, num_levels)),
            InitAlloc::Top => Some(RankAllocation::top(total, num_levels)),
            InitAlloc::File(_) => None,
        }
    }
}

impl FromStr for InitAlloc {
    type Err = MlrError;

    /// `bottom`, `uniform`, `top` or `file:PATH`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bottom" => Ok(InitAlloc::Bottom),
            "uniform" => Ok(InitAlloc::Uniform),
            "top" => Ok(InitAlloc::Top),
            _ => match s.strip_prefix("file:") {
                Some(path) if !path.is_empty() => Ok(InitAlloc::File(path.into())),
                _ => Err(MlrError::Config(format!(
                    "unknown init {s:?} (expected bottom, uniform, top or file:PATH)"
                ))),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Input {
    Path(PathBuf),
    Generator(GeneratorSpec),
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub input: Input,
    pub mode: Mode,
    pub kind: Kind,
    /// Total rank `r`.
    pub rank: usize,
    pub init: InitAlloc,
    /// Defaults to 0.01 for factor fitting and 0.001 for rank allocation.
    pub eps_rel: Option<f64>,
    pub max_epochs: usize,
    pub q: usize,
    pub max_exchanges: usize,
    /// Level count; defaults to `⌈log2 min(m, n)⌉ + 1`.
    pub levels: Option<usize>,
    /// Externally supplied partition (JSON).
    pub partition: Option<PathBuf>,
    pub seed: u64,
    pub out: PathBuf,
    /// Also write `lr.json` and `lrd.json`.
    pub baselines: bool,
}

impl RunConfig {
    pub fn new(input: Input, mode: Mode, rank: usize, out: impl Into<PathBuf>) -> Self {
        RunConfig {
            input,
            mode,
            kind: Kind::General,
            rank,
            init: InitAlloc::Uniform,
            eps_rel: None,
            max_epochs: 100,
            q: 1,
            max_exchanges: 100,
            levels: None,
            partition: None,
            seed: 0,
            out: out.into(),
            baselines: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(MlrError::Config("rank must be at least 1".into()));
        }
        if self.q == 0 {
            return Err(MlrError::Config("q must be at least 1".into()));
        }
        if self.levels == Some(0) {
            return Err(MlrError::Config("at least one level is required".into()));
        }
        if self.mode == Mode::FullFit && self.partition.is_some() {
            return Err(MlrError::Config("full_fit finds its own partition; drop --partition".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunReport {
    pub mode: Mode,
    pub kind: Kind,
    pub input: String,
    pub m: usize,
    pub n: usize,
    pub rank: usize,
    pub num_levels: usize,
    pub ranks: Vec<usize>,
    pub initial_rel_error: f64,
    pub final_rel_error: f64,
    /// Stored coefficients of the fitted matrix.
    pub storage: usize,
    pub termination: Termination,
    pub epochs_run: usize,
    pub exchanges: usize,
    pub wall_time: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Baseline {
    pub rank: usize,
    pub rel_error: f64,
    pub storage: usize,
}

/// Relative error of the best rank-`r` approximation of the kind
/// (symmetric and PSD use the corresponding eigen-solvers).
pub fn baseline_lr(a: &DenseMatrix, r: usize, kind: Kind) -> Result<f64> {
    let norm2 = a.norm_squared();
    let fit = match kind {
        Kind::General => lowrank::best_rank_r(a, r)?,
        Kind::Symmetric => lowrank::best_rank_r_symmetric(a, r)?,
        Kind::Psd => lowrank::best_rank_r_psd(a, r)?,
    };
    let err = (a - &fit.left * fit.right.transpose()).norm_squared();
    Ok(if norm2 > 0.0 { (err / norm2).sqrt() } else { err.sqrt() })
}

/// Partition with one block on level 1 and `n` singleton blocks on level 2.
fn low_rank_plus_diagonal_partition(n: usize) -> Result<HierPartition> {
    HierPartition::contiguous(vec![
        Level {
            row_sizes: vec![n],
            col_sizes: vec![n],
        },
        Level {
            row_sizes: vec![1; n],
            col_sizes: vec![1; n],
        },
    ])
}

/// Low rank plus diagonal baseline: the two-level MLR with ranks
/// `(r - 1, 1)` and singleton blocks on level 2, fitted by BCD with
/// `eps_rel = 1e-6`. Symmetric kinds need a symmetric input; the PSD kind
/// gives the usual factor model `F F^T + diag(d)` with `d >= 0`.
pub fn baseline_lrd(a: &DenseMatrix, r: usize, kind: Kind) -> Result<(f64, MlrMatrix)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(MlrError::dims(format!("{n}x{n}"), format!("{n}x{}", a.ncols())));
    }
    if r == 0 {
        return Err(MlrError::Config("rank must be at least 1".into()));
    }
    if kind.is_symmetric() {
        ensure_symmetric(a, SYMMETRY_TOL)?;
    }
    let mut mlr = MlrMatrix::zeros(
        low_rank_plus_diagonal_partition(n)?,
        RankAllocation::new(vec![r - 1, 1]),
        kind,
    )?;
    let cfg = FitConfig {
        eps_rel: 1e-6,
        max_epochs: 10_000,
        ..FitConfig::default()
    };
    let report = bcd_fit(a, &mut mlr, &cfg)?;
    Ok((report.final_rel_error(), mlr))
}

fn load_input(cfg: &RunConfig) -> Result<(DenseMatrix, String)> {
    match &cfg.input {
        Input::Path(p) => Ok((dense::load(p)?, p.display().to_string())),
        Input::Generator(spec) => Ok((spec.generate()?, spec.to_string())),
    }
}

fn write_json<T: Serialize>(value: &T, path: PathBuf) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

/// Run a configured fit and write all outputs; returns the report that was
/// written to `report.json`.
pub fn run(cfg: &RunConfig) -> Result<RunReport> {
    cfg.validate()?;
    let (a, input_name) = load_input(cfg)?;
    ensure_finite(&a)?;
    if cfg.kind.is_symmetric() {
        ensure_symmetric(&a, SYMMETRY_TOL)?;
    }
    let (m, n) = a.shape();
    let r = cfg.rank;
    let fit_cfg = FitConfig {
        eps_rel: cfg.eps_rel.unwrap_or(0.01),
        max_epochs: cfg.max_epochs,
        ..FitConfig::default()
    };
    let alloc_cfg = AllocConfig {
        fit: FitConfig {
            eps_rel: cfg.eps_rel.unwrap_or(0.001),
            ..FitConfig::default()
        },
        q: cfg.q,
        max_exchanges: cfg.max_exchanges,
        ..AllocConfig::default()
    };

    let from_file = match &cfg.init {
        InitAlloc::File(path) => {
            let mlr = io::load_mlr(path)?;
            if mlr.kind() != cfg.kind {
                return Err(MlrError::Config(format!(
                    "initial MLR file has kind {:?}, run asked for {:?}",
                    mlr.kind(),
                    cfg.kind
                )));
            }
            if mlr.ranks().total() != r {
                return Err(MlrError::Config(format!(
                    "initial MLR file has total rank {}, run asked for {r}",
                    mlr.ranks().total()
                )));
            }
            Some(mlr)
        }
        _ => None,
    };

    let fixed_partition = || -> Result<HierPartition> {
        match &cfg.partition {
            Some(path) => io::load_partition(path),
            None => HierPartition::bisection(m, n, cfg.levels.unwrap_or_else(|| default_num_levels(m, n))),
        }
    };
    let initial = |partition: HierPartition| -> Result<MlrMatrix> {
        let levels = partition.num_levels();
        let ranks = cfg.init.ranks(r, levels).expect("file init handled separately");
        MlrMatrix::zeros(partition, ranks, cfg.kind)
    };

    let (mlr, report) = match cfg.mode {
        Mode::FactorFit => {
            let (mut mlr, init) = match from_file {
                Some(mlr) => (mlr, Init::Given),
                None => (initial(fixed_partition()?)?, Init::Zeros),
            };
            let report = bcd_fit(&a, &mut mlr, &FitConfig { init, ..fit_cfg })?;
            (mlr, report)
        }
        Mode::RankAlloc => {
            let (mut mlr, init) = match from_file {
                Some(mlr) => (mlr, Init::Given),
                None => (initial(fixed_partition()?)?, Init::Zeros),
            };
            let cfg = AllocConfig {
                fit: FitConfig { init, ..alloc_cfg.fit.clone() },
                ..alloc_cfg
            };
            let report = allocate_ranks(&a, &mut mlr, &cfg)?;
            (mlr, report)
        }
        Mode::FullFit => {
            let (mut mlr, init, mut report) = match from_file {
                Some(mlr) => (mlr, Init::Given, None),
                None => {
                    let hcfg = HierarchyConfig {
                        kind: cfg.kind,
                        num_levels: cfg.levels,
                        ranks: None,
                        fit: fit_cfg.clone(),
                        max_swaps: DEFAULT_MAX_SWAPS,
                    };
                    let built = build_hierarchy(&a, r, &hcfg)?;
                    // The hierarchy is grown with a uniform allocation, so
                    // its fit is the warm start for the uniform init.
                    if cfg.init == InitAlloc::Uniform {
                        (built.mlr, Init::Given, Some(built.report))
                    } else {
                        let mlr = initial(built.mlr.partition().clone())?;
                        (mlr, Init::Zeros, Some(built.report))
                    }
                }
            };
            let acfg = AllocConfig {
                fit: FitConfig { init, ..alloc_cfg.fit.clone() },
                ..alloc_cfg
            };
            let alloc = allocate_ranks(&a, &mut mlr, &acfg)?;
            let merged = match report.take() {
                Some(mut h) => {
                    let termination = alloc.termination;
                    let wall = h.wall_time + alloc.wall_time;
                    h.extend(alloc, false);
                    h.termination = termination;
                    h.wall_time = wall;
                    h
                }
                None => alloc,
            };
            (mlr, merged)
        }
    };
    write_outputs(cfg, &a, &input_name, &mlr, &report)
}

fn write_outputs(cfg: &RunConfig, a: &DenseMatrix, input_name: &str, mlr: &MlrMatrix, report: &FitReport) -> Result<RunReport> {
    fs::create_dir_all(&cfg.out)?;
    let out = &cfg.out;
    io::save_mlr(mlr, out.join("mlr.bin"))?;
    io::save_partition(mlr.partition(), out.join("partition.json"))?;
    report.write_trajectory_csv(None, BufWriter::new(File::create(out.join("trajectory.csv"))?))?;
    let run_report = RunReport {
        mode: cfg.mode,
        kind: cfg.kind,
        input: input_name.to_string(),
        m: a.nrows(),
        n: a.ncols(),
        rank: cfg.rank,
        num_levels: mlr.num_levels(),
        ranks: mlr.ranks().ranks().to_vec(),
        initial_rel_error: report.initial_rel_error,
        final_rel_error: report.final_rel_error(),
        storage: mlr.storage_count(),
        termination: report.termination,
        epochs_run: report.epochs_run(),
        exchanges: report.epochs.iter().filter(|e| e.exchange).count(),
        wall_time: report.wall_time,
        seed: cfg.seed,
    };
    write_json(&run_report, out.join("report.json"))?;
    if cfg.baselines {
        let storage = |r: usize| match cfg.kind {
            Kind::General => (a.nrows() + a.ncols()) * r,
            _ => a.nrows() * r,
        };
        let lr = Baseline {
            rank: cfg.rank,
            rel_error: baseline_lr(a, cfg.rank, cfg.kind)?,
            storage: storage(cfg.rank),
        };
        write_json(&lr, out.join("lr.json"))?;
        if a.is_square() {
            let (err, fitted) = baseline_lrd(a, cfg.rank, cfg.kind)?;
            let lrd = Baseline {
                rank: cfg.rank,
                rel_error: err,
                storage: fitted.storage_count(),
            };
            write_json(&lrd, out.join("lrd.json"))?;
        }
    }
    Ok(run_report)
}
