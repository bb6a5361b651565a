use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use nonmarkov::experiment::{self, ExperimentConfig, ExperimentKind};

#[derive(Parser)]
#[command(name = "nonmarkov", version, about = "Average and pure non-Markovianity of spin-chain dynamics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Single estimate; writes the flux time series.
    Measure(Common),
    /// Sweep the mean coupling strength.
    SweepMu(Common),
    /// Sweep the coupling standard deviation.
    SweepSigma(Common),
    /// Relative error of the central-difference flux against step size.
    FdConvergence(Common),
    /// Dephasing toy model with idle spectator qubits.
    ToyScaling(Common),
}

#[derive(Args)]
struct Common {
    /// Flat TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of Haar-random state pairs.
    #[arg(long)]
    pairs: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
    /// Joint-register qubit cap (overrides NONMARKOV_MAX_QUBITS).
    #[arg(long)]
    max_qubits: Option<usize>,
    /// Suppress progress messages.
    #[arg(long, short)]
    quiet: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match cli.command {
        Command::Measure(a) => (ExperimentKind::Measure, a),
        Command::SweepMu(a) => (ExperimentKind::SweepMu, a),
        Command::SweepSigma(a) => (ExperimentKind::SweepSigma, a),
        Command::FdConvergence(a) => (ExperimentKind::FdConvergence, a),
        Command::ToyScaling(a) => (ExperimentKind::ToyScaling, a),
    };
    match run(kind, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(kind: ExperimentKind, args: Common) -> nonmarkov::Result<()> {
    if let Some(n) = args.max_qubits {
        nonmarkov::set_max_qubits(n);
    }
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    cfg.experiment = kind;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(pairs) = args.pairs {
        cfg.n_pairs = pairs;
    }
    if let Some(out) = args.out {
        cfg.out = out;
    }

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = args.workers {
        pool = pool.num_threads(n.max(1));
    }
    let pool = pool
        .build()
        .map_err(|e| nonmarkov::Error::Config(format!("thread pool: {e}")))?;
    let workers = pool.current_num_threads();

    let quiet = args.quiet;
    let progress = |msg: &str| {
        if !quiet {
            eprintln!("[{}] {msg}", kind.name());
        }
    };
    let start = Instant::now();
    let report = pool.install(|| experiment::run(&cfg, &progress))?;
    let wall = start.elapsed().as_secs_f64();
    let files = experiment::write_report(
        &report,
        &cfg.out,
        &[("wall_time_s", json!(wall)), ("workers", json!(workers))],
    )?;
    progress(&format!(
        "wrote {} and {} in {wall:.1} s",
        files.csv.display(),
        files.json.display()
    ));
    Ok(())
}
