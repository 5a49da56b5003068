//! Command line front end: `mlr run` fits a matrix, `mlr gen` writes a test
//! matrix to disk.
//!
//! Exit codes: 0 on success, 2 for bad arguments, inputs or files, 3 when a
//! numerical step fails.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mlr::dense;
use mlr::error::{MlrError, Result};
use mlr::matrices::GeneratorSpec;
use mlr::mlr::Kind;
use mlr::runner::{self, InitAlloc, Input, Mode, RunConfig};

#[derive(Parser)]
#[command(name = "mlr", version, about = "Multilevel low rank matrix fitting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit an MLR approximation and write report.json, trajectory.csv and mlr.bin.
    Run(RunArgs),
    /// Generate a test matrix (CSV for a `.csv` path, DMAT otherwise).
    Gen(GenArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Input matrix (`.csv` or DMAT); mutually exclusive with --gen.
    #[arg(required_unless_present = "gen", conflicts_with = "gen")]
    input: Option<PathBuf>,
    /// Generator spec, e.g. `fiedler:n=512` or `dgt:m=500,n=700`.
    #[arg(long)]
    gen: Option<String>,
    /// factor_fit, rank_alloc or full_fit.
    #[arg(long, default_value = "factor_fit")]
    mode: Mode,
    /// general, symmetric or psd.
    #[arg(long, default_value = "general")]
    kind: Kind,
    /// Total rank.
    #[arg(long)]
    rank: usize,
    /// bottom, uniform, top or file:PATH (an MLR file to warm start from).
    #[arg(long, default_value = "uniform")]
    init: InitAlloc,
    /// Relative stopping tolerance (default 0.01 for factor_fit, 0.001 otherwise).
    #[arg(long)]
    eps_rel: Option<f64>,
    /// Maximum BCD epochs for factor_fit.
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    /// Rank units moved per exchange.
    #[arg(long, default_value_t = 1)]
    q: usize,
    #[arg(long, default_value_t = 100)]
    max_exchanges: usize,
    /// Number of levels (default ⌈log2 min(m, n)⌉ + 1).
    #[arg(long)]
    levels: Option<usize>,
    /// Partition file (JSON) for factor_fit and rank_alloc.
    #[arg(long)]
    partition: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Also compute the low rank and low rank plus diagonal baselines.
    #[arg(long)]
    baselines: bool,
}

#[derive(Args)]
struct GenArgs {
    /// Generator spec, e.g. `multiscale_kernel:n=512`.
    spec: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output matrix file.
    #[arg(long)]
    out: PathBuf,
}

fn run(args: RunArgs) -> Result<()> {
    let input = match (args.input, args.gen) {
        (Some(path), None) => Input::Path(path),
        (None, Some(spec)) => Input::Generator(GeneratorSpec::parse(&spec, args.seed)?),
        _ => return Err(MlrError::Config("give either an input file or --gen".into())),
    };
    let cfg = RunConfig {
        kind: args.kind,
        init: args.init,
        eps_rel: args.eps_rel,
        max_epochs: args.epochs,
        q: args.q,
        max_exchanges: args.max_exchanges,
        levels: args.levels,
        partition: args.partition,
        seed: args.seed,
        baselines: args.baselines,
        ..RunConfig::new(input, args.mode, args.rank, args.out)
    };
    let report = runner::run(&cfg)?;
    println!(
        "rel_error {:.6e} (initial {:.6e}), ranks {:?}, storage {}, {:?} after {} epochs",
        report.final_rel_error,
        report.initial_rel_error,
        report.ranks,
        report.storage,
        report.termination,
        report.epochs_run
    );
    Ok(())
}

fn gen(args: GenArgs) -> Result<()> {
    let spec = GeneratorSpec::parse(&args.spec, args.seed)?;
    let a = spec.generate()?;
    dense::save(&a, &args.out)?;
    println!("{spec}: {}x{} -> {}", a.nrows(), a.ncols(), args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Gen(args) => gen(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config_error() { 2 } else { 3 })
        }
    }
}
