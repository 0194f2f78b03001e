//! Parameter sweeps over the sub-generation coding framework.
//!
//! Every grid point draws `trials` systematic phases; each phase is scored
//! by every configured cell (g policy × partitioner × strategy) so that cells
//! are compared on identical demand matrices and erasure patterns. Output rows
//! are aggregated in trial order and sorted, so a fixed seed always gives the
//! same CSV regardless of thread count.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use subgen_core::idnc::{self, build_graph, reduce_diversity, IdncSolution};
use subgen_core::model::{demand_profile, run_systematic, ErasureChannel, ModelError, StateFeedbackMatrix};
use subgen_core::partition::{
    analytic_metrics, partition_classic, partition_direct, partition_smart, Partition, PartitionError,
};
use subgen_core::transmit::{measure, run, DecodeMode, Strategy, StrategyConfig, TransmitError};
use thiserror::Error;

pub mod report;

pub use report::{run_fixture_report, FixtureCheck};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid {field}: {msg}")]
    Config { field: &'static str, msg: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Transmit(#[from] TransmitError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn config_error(field: &'static str, msg: impl Into<String>) -> ExperimentError {
    ExperimentError::Config { field, msg: msg.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Experiment {
    /// Analytic completion time and delay across sub-generation sizes.
    Tradeoff,
    /// Analytic comparison of partitioning algorithms.
    Partitioners,
    /// Simulated sequential vs semi-online transmission.
    Strategies,
    /// Simulated semi-online transmission with and without merging.
    Merging,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Self::Tradeoff => "tradeoff",
            Self::Partitioners => "partitioners",
            Self::Strategies => "strategies",
            Self::Merging => "merging",
        }
    }

    /// Whether the coded phase is simulated under erasures.
    pub fn is_simulated(self) -> bool {
        matches!(self, Self::Strategies | Self::Merging)
    }
}

impl FromStr for Experiment {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tradeoff" => Ok(Self::Tradeoff),
            "partitioners" => Ok(Self::Partitioners),
            "strategies" => Ok(Self::Strategies),
            "merging" => Ok(Self::Merging),
            _ => Err(config_error("experiment", format!("unknown experiment {s:?}"))),
        }
    }
}

/// How the sub-generation size is chosen for an instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GPolicy {
    /// Fixed number of coding sets, capped at the instance's IDNC size.
    Absolute(usize),
    /// Share of the instance's IDNC size, rounded, at least one.
    Fraction(&'static str, f64),
}

impl GPolicy {
    pub const HALF: Self = Self::Fraction("half", 0.5);
    pub const THIRD: Self = Self::Fraction("third", 1.0 / 3.0);
    pub const QUARTER: Self = Self::Fraction("quarter", 0.25);
    pub const FULL: Self = Self::Fraction("full", 1.0);

    pub fn resolve(self, u_idnc: usize) -> usize {
        match self {
            Self::Absolute(g) => g.min(u_idnc).max(1),
            Self::Fraction(_, f) => ((f * u_idnc as f64).round() as usize).clamp(1, u_idnc.max(1)),
        }
    }
}

impl fmt::Display for GPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Absolute(g) => write!(f, "{g}"),
            Self::Fraction(name, _) => f.write_str(name),
        }
    }
}

impl FromStr for GPolicy {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "half" => Ok(Self::HALF),
            "third" => Ok(Self::THIRD),
            "quarter" => Ok(Self::QUARTER),
            "full" => Ok(Self::FULL),
            _ => match s.parse::<usize>() {
                Ok(g) if g >= 1 => Ok(Self::Absolute(g)),
                _ => Err(config_error("g", format!("expected a positive integer or half/third/quarter/full, got {s:?}"))),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Partitioner {
    Direct,
    Smart,
    Classic,
}

impl Partitioner {
    pub fn name(self) -> &'static str {
        match self {
            Self::Direct => "direct",
            Self::Smart => "smart",
            Self::Classic => "classic",
        }
    }
}

impl FromStr for Partitioner {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "direct" => Ok(Self::Direct),
            "smart" => Ok(Self::Smart),
            "classic" => Ok(Self::Classic),
            _ => Err(config_error("partitioner", format!("unknown partitioner {s:?}"))),
        }
    }
}

/// A transmission strategy with its merging switch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StrategyChoice {
    pub strategy: Strategy,
    pub merging: bool,
}

impl StrategyChoice {
    pub const SEQUENTIAL: Self = Self {
        strategy: Strategy::Sequential,
        merging: false,
    };
    pub const SEMI_ONLINE: Self = Self {
        strategy: Strategy::SemiOnline,
        merging: false,
    };
    pub const MERGING: Self = Self {
        strategy: Strategy::SemiOnline,
        merging: true,
    };
}

pub fn strategy_name(strategy: Strategy) -> &'static str {
    match strategy {
        Strategy::Sequential => "sequential",
        Strategy::SemiOnline => "semi-online",
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub k_total: usize,
    pub receivers: Vec<usize>,
    pub p_e: f64,
    pub trials: usize,
    pub g_policies: Vec<GPolicy>,
    pub partitioners: Vec<Partitioner>,
    /// Ignored by the analytic experiments.
    pub strategies: Vec<StrategyChoice>,
    pub decode_mode: DecodeMode,
    pub field_bits: u8,
    pub seed: u64,
}

impl ExperimentConfig {
    /// Defaults of each study: 20 packets, 5 to 50 receivers, 20% erasures,
    /// 500 trials.
    pub fn new(experiment: Experiment) -> Self {
        let (g_policies, partitioners, strategies) = match experiment {
            Experiment::Tradeoff => (
                vec![
                    GPolicy::Absolute(1),
                    GPolicy::Absolute(2),
                    GPolicy::Absolute(3),
                    GPolicy::Absolute(4),
                    GPolicy::HALF,
                    GPolicy::FULL,
                ],
                vec![Partitioner::Direct],
                vec![],
            ),
            Experiment::Partitioners => (
                vec![GPolicy::QUARTER, GPolicy::HALF],
                vec![Partitioner::Direct, Partitioner::Smart],
                vec![],
            ),
            Experiment::Strategies => (
                vec![GPolicy::THIRD, GPolicy::HALF, GPolicy::FULL],
                vec![Partitioner::Smart],
                vec![StrategyChoice::SEQUENTIAL, StrategyChoice::SEMI_ONLINE],
            ),
            Experiment::Merging => (
                vec![GPolicy::THIRD, GPolicy::HALF],
                vec![Partitioner::Smart],
                vec![StrategyChoice::SEMI_ONLINE, StrategyChoice::MERGING],
            ),
        };
        Self {
            experiment,
            k_total: 20,
            receivers: (5..=50).step_by(5).collect(),
            p_e: 0.2,
            trials: 500,
            g_policies,
            partitioners,
            strategies,
            decode_mode: DecodeMode::Idealized,
            field_bits: 8,
            seed: 1,
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.k_total == 0 {
            return Err(config_error("kt", "need at least one packet"));
        }
        if self.receivers.is_empty() || self.receivers.contains(&0) {
            return Err(config_error("receivers", "grid must be non-empty with positive counts"));
        }
        if !(0.0..1.0).contains(&self.p_e) {
            return Err(config_error("pe", format!("{} is outside [0, 1)", self.p_e)));
        }
        if self.trials == 0 {
            return Err(config_error("trials", "need at least one trial"));
        }
        if self.g_policies.is_empty() {
            return Err(config_error("g", "need at least one policy"));
        }
        if self.partitioners.is_empty() {
            return Err(config_error("partitioner", "need at least one partitioner"));
        }
        if self.experiment.is_simulated() {
            if self.strategies.is_empty() {
                return Err(config_error("strategy", "need at least one strategy"));
            }
            for s in &self.strategies {
                self.strategy_config(*s)
                    .validate()
                    .map_err(|e| config_error("strategy", e.to_string()))?;
            }
        }
        Ok(())
    }

    pub fn strategy_config(&self, choice: StrategyChoice) -> StrategyConfig {
        StrategyConfig {
            strategy: choice.strategy,
            merging: choice.merging,
            decode_mode: self.decode_mode,
            field_bits: self.field_bits,
            ..StrategyConfig::default()
        }
    }

    /// Channel of trial `trial` at `n` receivers; shared by every cell.
    pub fn channel(&self, n: usize, trial: usize) -> Result<ErasureChannel, ExperimentError> {
        Ok(ErasureChannel::new(self.p_e, self.seed)?
            .for_trial(n as u64)
            .for_trial(trial as u64))
    }
}

/// One aggregated output line.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub experiment: &'static str,
    pub n_receivers: usize,
    pub g_policy: String,
    pub partitioner: &'static str,
    pub strategy: &'static str,
    pub merging: &'static str,
    pub metric: &'static str,
    pub mean: f64,
    pub stderr: f64,
    pub trials: usize,
    pub seed: u64,
}

pub const CSV_HEADER: [&str; 11] = [
    "experiment",
    "n_receivers",
    "g_policy",
    "partitioner",
    "strategy",
    "merging",
    "metric",
    "mean",
    "stderr",
    "trials",
    "seed",
];

/// Cell identity within one grid point, in output sort order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct CellKey {
    g_policy: String,
    partitioner: &'static str,
    strategy: &'static str,
    merging: &'static str,
    metric: &'static str,
}

/// Everything one systematic instance contributes.
struct TrialOutcome {
    values: Vec<(CellKey, f64)>,
    trace: Option<String>,
    dump: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentOutput {
    pub rows: Vec<Row>,
    /// Slot trace of the first simulated cell of trial 0 at the first grid
    /// point.
    pub trace: Option<String>,
    /// Demand matrix, IDNC solution and partitions of that same instance.
    pub dump: Option<String>,
}

/// The instance's IDNC solution: exact when small enough, heuristic
/// otherwise.
pub fn idnc_solution(sfm: &StateFeedbackMatrix) -> IdncSolution {
    idnc::solve(&build_graph(sfm), sfm)
}

pub fn build_partition(
    partitioner: Partitioner,
    solution: &IdncSolution,
    g: usize,
    sfm: &StateFeedbackMatrix,
) -> Result<Partition, PartitionError> {
    match partitioner {
        Partitioner::Direct => partition_direct(solution, g, sfm),
        Partitioner::Smart => partition_smart(solution, g, sfm),
        Partitioner::Classic => partition_classic(sfm, g.min(sfm.n_packets())),
    }
}

fn run_trial(cfg: &ExperimentConfig, n: usize, trial: usize, capture: bool) -> Result<TrialOutcome, ExperimentError> {
    let channel = cfg.channel(n, trial)?;
    let analytic = !cfg.experiment.is_simulated();
    let mut out = TrialOutcome {
        values: Vec::new(),
        trace: None,
        dump: None,
    };
    let sfm = match run_systematic(cfg.k_total, n, &channel) {
        Ok(sfm) => Some(sfm),
        Err(ModelError::DegenerateOutcome) => None,
        Err(e) => return Err(e.into()),
    };
    let solution = sfm.as_ref().map(idnc_solution);
    let reduced = match &solution {
        Some(s) if !analytic => Some(reduce_diversity(s).expect("solutions have no redundant sets")),
        _ => None,
    };
    if capture {
        if let (Some(sfm), Some(sol)) = (&sfm, &solution) {
            out.dump = Some(format!("# demand\n{sfm}# idnc solution\n{sol}"));
        }
    }
    for &policy in &cfg.g_policies {
        for &partitioner in &cfg.partitioners {
            let key = |strategy, merging, metric| CellKey {
                g_policy: policy.to_string(),
                partitioner: partitioner.name(),
                strategy,
                merging,
                metric,
            };
            let partition = match (&sfm, &solution) {
                (Some(sfm), Some(sol)) => {
                    let g = policy.resolve(sol.cardinality());
                    let base = match &reduced {
                        Some(r) if g >= 2 => r,
                        _ => sol,
                    };
                    Some((sfm, build_partition(partitioner, base, g, sfm)?))
                }
                _ => None,
            };
            if capture {
                if let (Some(dump), Some((_, p))) = (out.dump.as_mut(), &partition) {
                    dump.push_str(&format!("# partition g={policy} {}\n{p}", partitioner.name()));
                }
            }
            if analytic {
                let (u, d) = match &partition {
                    Some((sfm, p)) => {
                        let m = analytic_metrics(p, sfm);
                        (m.u_g as f64, m.d_g)
                    }
                    None => (0.0, 0.0),
                };
                out.values.push((key("analytic", "off", "completion"), u));
                out.values.push((key("analytic", "off", "delay"), d));
                if cfg.experiment == Experiment::Tradeoff {
                    let w = sfm.as_ref().map_or(0, |s| demand_profile(s).w_max);
                    let u_idnc = solution.as_ref().map_or(0, IdncSolution::cardinality);
                    out.values.push((key("analytic", "off", "u_idnc"), u_idnc as f64));
                    out.values.push((key("analytic", "off", "u_rlnc"), w as f64));
                }
                continue;
            }
            for &choice in &cfg.strategies {
                let merging = if choice.merging { "on" } else { "off" };
                let name = strategy_name(choice.strategy);
                let (u, d) = match &partition {
                    Some((sfm, p)) => {
                        let log = run(p, sfm, &channel, &cfg.strategy_config(choice))?;
                        if capture && out.trace.is_none() {
                            out.trace = Some(log.trace_csv());
                        }
                        let (u, d) = measure(&log)?;
                        (u as f64, d)
                    }
                    None => (0.0, 0.0),
                };
                out.values.push((key(name, merging, "completion"), u));
                out.values.push((key(name, merging, "delay"), d));
            }
        }
    }
    Ok(out)
}

/// Runs the sweep and returns sorted rows.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput, ExperimentError> {
    cfg.validate()?;
    let jobs: Vec<(usize, usize)> = cfg
        .receivers
        .iter()
        .flat_map(|&n| (0..cfg.trials).map(move |t| (n, t)))
        .collect();
    let first = jobs[0];
    let outcomes: Vec<TrialOutcome> = jobs
        .par_iter()
        .map(|&(n, t)| run_trial(cfg, n, t, (n, t) == first))
        .collect::<Result<_, _>>()?;

    let mut samples: BTreeMap<(usize, CellKey), Vec<f64>> = BTreeMap::new();
    let mut output = ExperimentOutput::default();
    for (&(n, _), outcome) in jobs.iter().zip(outcomes) {
        for (key, v) in outcome.values {
            samples.entry((n, key)).or_default().push(v);
        }
        output.trace = output.trace.or(outcome.trace);
        output.dump = output.dump.or(outcome.dump);
    }
    output.rows = samples
        .into_iter()
        .map(|((n, key), values)| {
            let (mean, stderr) = mean_stderr(&values);
            Row {
                experiment: cfg.experiment.name(),
                n_receivers: n,
                g_policy: key.g_policy,
                partitioner: key.partitioner,
                strategy: key.strategy,
                merging: key.merging,
                metric: key.metric,
                mean,
                stderr,
                trials: values.len(),
                seed: cfg.seed,
            }
        })
        .collect();
    Ok(output)
}

/// Sample mean and standard error (sample deviation over √n).
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn write_csv<W: Write>(rows: &[Row], out: W) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.experiment.to_string(),
            r.n_receivers.to_string(),
            r.g_policy.clone(),
            r.partitioner.to_string(),
            r.strategy.to_string(),
            r.merging.to_string(),
            r.metric.to_string(),
            format!("{:.6}", r.mean),
            format!("{:.6}", r.stderr),
            r.trials.to_string(),
            r.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Parses `a:b:step` (inclusive) or a single count.
pub fn parse_grid(s: &str) -> Result<Vec<usize>, ExperimentError> {
    let bad = || config_error("receivers", format!("expected a:b:step or a count, got {s:?}"));
    let parts: Vec<usize> = s
        .split(':')
        .map(|p| p.trim().parse::<usize>().map_err(|_| bad()))
        .collect::<Result<_, _>>()?;
    match parts.as_slice() {
        [n] => Ok(vec![*n]),
        [a, b] => Ok((*a..=*b).collect()),
        [a, b, step] if *step > 0 && a <= b => Ok((*a..=*b).step_by(*step).collect()),
        _ => Err(bad()),
    }
}
