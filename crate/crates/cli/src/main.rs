use std::fs::File;
use std::io::{self, BufWriter};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use subgen_cli::report::render_report;
use subgen_cli::{
    parse_grid, run_experiment, run_fixture_report, write_csv, Experiment, ExperimentConfig, ExperimentError,
    GPolicy, Partitioner, StrategyChoice,
};
use subgen_core::transmit::{DecodeMode, Strategy};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ExperimentArg {
    Tradeoff,
    Partitioners,
    Strategies,
    Merging,
    Fixtures,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StrategyArg {
    Sequential,
    SemiOnline,
    Both,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MergeArg {
    On,
    Off,
    Both,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DecodeArg {
    Idealized,
    Concrete,
}

/// Sweeps the sub-generation coding framework over receiver counts and
/// sub-generation sizes, writing mean/stderr rows as CSV.
#[derive(Debug, Parser)]
#[command(name = "subgen", version)]
struct Args {
    #[arg(long, value_enum, default_value = "tradeoff")]
    experiment: ExperimentArg,
    /// Packets per block.
    #[arg(long)]
    kt: Option<usize>,
    /// Receiver grid as a:b:step (inclusive) or a single count.
    #[arg(long)]
    receivers: Option<String>,
    /// Erasure probability.
    #[arg(long)]
    pe: Option<f64>,
    /// Trials per grid point.
    #[arg(long)]
    trials: Option<usize>,
    /// Comma-separated sub-generation sizes: integers or half/third/quarter/full.
    #[arg(long, value_delimiter = ',')]
    g: Option<Vec<String>>,
    /// Comma-separated partitioners: direct, smart, classic.
    #[arg(long, value_delimiter = ',')]
    partitioner: Option<Vec<String>>,
    #[arg(long, value_enum)]
    strategy: Option<StrategyArg>,
    /// Sub-generation merging for the semi-online strategy.
    #[arg(long, value_enum)]
    merge: Option<MergeArg>,
    #[arg(long, value_enum, default_value = "idealized")]
    decode_mode: DecodeArg,
    /// Field degree m of GF(2^m) for coded packets.
    #[arg(long, default_value_t = 8)]
    field_bits: u8,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output CSV path; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the slot trace of trial 0 at the first grid point.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write the demand matrix, IDNC solution and partitions of trial 0.
    #[arg(long)]
    dump_solution: Option<PathBuf>,
}

fn strategies(strategy: Option<StrategyArg>, merge: Option<MergeArg>, defaults: Vec<StrategyChoice>) -> Vec<StrategyChoice> {
    if strategy.is_none() && merge.is_none() {
        return defaults;
    }
    let kinds = match strategy.unwrap_or(StrategyArg::SemiOnline) {
        StrategyArg::Sequential => vec![Strategy::Sequential],
        StrategyArg::SemiOnline => vec![Strategy::SemiOnline],
        StrategyArg::Both => vec![Strategy::Sequential, Strategy::SemiOnline],
    };
    let merges = match merge.unwrap_or(MergeArg::Off) {
        MergeArg::On => vec![true],
        MergeArg::Off => vec![false],
        MergeArg::Both => vec![false, true],
    };
    kinds
        .into_iter()
        .flat_map(|strategy| merges.iter().map(move |&merging| StrategyChoice { strategy, merging }))
        .collect()
}

fn config(args: &Args, experiment: Experiment) -> Result<ExperimentConfig, ExperimentError> {
    let mut cfg = ExperimentConfig::new(experiment);
    if let Some(k) = args.kt {
        cfg.k_total = k;
    }
    if let Some(r) = &args.receivers {
        cfg.receivers = parse_grid(r)?;
    }
    if let Some(p) = args.pe {
        cfg.p_e = p;
    }
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    if let Some(g) = &args.g {
        cfg.g_policies = g.iter().map(|s| s.parse::<GPolicy>()).collect::<Result<_, _>>()?;
    }
    if let Some(p) = &args.partitioner {
        cfg.partitioners = p.iter().map(|s| s.parse::<Partitioner>()).collect::<Result<_, _>>()?;
    }
    cfg.strategies = strategies(args.strategy, args.merge, cfg.strategies.clone());
    cfg.decode_mode = match args.decode_mode {
        DecodeArg::Idealized => DecodeMode::Idealized,
        DecodeArg::Concrete => DecodeMode::Concrete,
    };
    cfg.field_bits = args.field_bits;
    cfg.seed = args.seed;
    Ok(cfg)
}

fn run_args(args: &Args) -> Result<bool, ExperimentError> {
    let experiment = match args.experiment {
        ExperimentArg::Fixtures => {
            let checks = run_fixture_report();
            print!("{}", render_report(&checks));
            return Ok(checks.iter().all(|c| c.passed()));
        }
        ExperimentArg::Tradeoff => Experiment::Tradeoff,
        ExperimentArg::Partitioners => Experiment::Partitioners,
        ExperimentArg::Strategies => Experiment::Strategies,
        ExperimentArg::Merging => Experiment::Merging,
    };
    let cfg = config(args, experiment)?;
    let output = run_experiment(&cfg)?;
    match &args.out {
        Some(path) => write_csv(&output.rows, BufWriter::new(File::create(path)?))?,
        None => write_csv(&output.rows, io::stdout().lock())?,
    }
    if let Some(path) = &args.trace {
        std::fs::write(path, output.trace.unwrap_or_default())?;
    }
    if let Some(path) = &args.dump_solution {
        std::fs::write(path, output.dump.unwrap_or_default())?;
    }
    Ok(true)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run_args(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
