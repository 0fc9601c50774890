//! Experiment cells: one replay under one load setting, reduced to per-task
//! rows and a summary. Also the horizon/accuracy sweep over trace families.

use std::fmt;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::horizon::{decide_horizon, HorizonError, HorizonPolicy, UpdateMagnitudes};
use crate::simrun::{self, Arrivals, Event, SimConfig, SimError, TaskOutcome};
use crate::task::TaskId;
use crate::waitacct::{WaitError, WaitLedger};
use crate::workload::{poisson_arrivals, TaskTrace, WorkloadError};

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("no traces to replay")]
    NoTraces,
    #[error("fleet size must be at least 1")]
    EmptyFleet,
    #[error("trace {0} has no update magnitudes")]
    MissingMagnitudes(TaskId),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Wait(#[from] WaitError),
    #[error(transparent)]
    Horizon(#[from] HorizonError),
    #[error("writing output: {0}")]
    Io(#[from] std::io::Error),
    #[error("writing CSV: {0}")]
    Csv(#[from] csv::Error),
}

/// Online Poisson arrivals (tasks per second) or an offline fleet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Load {
    Rate(f64),
    Fleet(usize),
}

impl fmt::Display for Load {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Load::Rate(r) => write!(f, "rate={r}"),
            Load::Fleet(n) => write!(f, "fleet={n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub sim: SimConfig,
    pub load: Load,
    /// Seeds arrivals and trace sampling.
    pub seed: u64,
    /// Replay this many tasks drawn with replacement from the traces instead
    /// of each trace once.
    pub tasks: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskRow {
    pub task_id: TaskId,
    pub scheduler: String,
    pub rate_or_fleet: String,
    pub latency_us: u64,
    pub wait_us: u64,
    pub offloaded_rounds: usize,
    pub total_rounds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scheduler: String,
    pub load: Load,
    pub seed: u64,
    pub tasks: usize,
    pub avg_latency_us: f64,
    pub p25_latency_us: u64,
    pub p90_latency_us: u64,
    pub p95_latency_us: u64,
    pub avg_wait_us: f64,
    pub offload_fraction: f64,
    pub success_fraction: f64,
    pub stall_us: u64,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub rows: Vec<TaskRow>,
    pub summary: Summary,
    pub outcomes: Vec<TaskOutcome>,
    pub events: Vec<Event>,
    pub config: ExperimentConfig,
}

/// Nearest-rank percentile of ascending `sorted`: the value at rank
/// `ceil(p/100 * n)`, or rank 1 for `p = 0`.
pub fn nearest_rank(sorted: &[u64], p: f64) -> Option<u64> {
    if sorted.is_empty() || !(0.0..=100.0).contains(&p) {
        return None;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    Some(sorted[rank.clamp(1, sorted.len()) - 1])
}

/// Picks `count` traces with replacement, suffixing ids so they stay unique.
pub fn sample_traces(traces: &[TaskTrace], count: usize, seed: u64) -> Vec<TaskTrace> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = count.saturating_sub(1).to_string().len();
    (0..count)
        .map(|k| {
            let mut t = traces[rng.random_range(0..traces.len())].clone();
            t.task_id = TaskId(format!("{}~{:0width$}", t.task_id, k));
            t
        })
        .collect()
}

pub fn run_experiment(traces: &[TaskTrace], cfg: &ExperimentConfig) -> Result<ExperimentResult, ExperimentError> {
    if traces.is_empty() {
        return Err(ExperimentError::NoTraces);
    }
    let sampled;
    let traces = match cfg.tasks {
        Some(n) => {
            sampled = sample_traces(traces, n, cfg.seed);
            &sampled[..]
        }
        None => traces,
    };
    let arrivals = match cfg.load {
        Load::Rate(rate) => Arrivals::Timed(poisson_arrivals(rate, traces.len(), cfg.seed)?),
        Load::Fleet(0) => return Err(ExperimentError::EmptyFleet),
        Load::Fleet(n) => Arrivals::Fleet { slots: n },
    };
    let mut sim = cfg.sim.clone();
    sim.seed = cfg.seed;
    let out = simrun::run(traces, &arrivals, &sim)?;

    let scheduler = sim.scheduler.policy.name().to_string();
    let load = cfg.load.to_string();
    let mut rows = Vec::with_capacity(out.tasks.len());
    for t in &out.tasks {
        let wait = WaitLedger::from_timelines(&t.timelines())?.total();
        rows.push(TaskRow {
            task_id: t.task_id.clone(),
            scheduler: scheduler.clone(),
            rate_or_fleet: load.clone(),
            latency_us: t.latency().as_micros(),
            wait_us: wait.as_micros(),
            offloaded_rounds: t.offloaded_rounds(),
            total_rounds: t.rounds.len(),
        });
    }
    let summary = summarize(&rows, &out.tasks, scheduler, cfg);
    Ok(ExperimentResult {
        rows,
        summary,
        outcomes: out.tasks,
        events: out.events,
        config: cfg.clone(),
    })
}

fn summarize(rows: &[TaskRow], outcomes: &[TaskOutcome], scheduler: String, cfg: &ExperimentConfig) -> Summary {
    let n = rows.len().max(1) as f64;
    let mut lat: Vec<u64> = rows.iter().map(|r| r.latency_us).collect();
    lat.sort_unstable();
    let pct = |p| nearest_rank(&lat, p).unwrap_or(0);
    let rounds: usize = rows.iter().map(|r| r.total_rounds).sum();
    let offloaded: usize = rows.iter().map(|r| r.offloaded_rounds).sum();
    Summary {
        scheduler,
        load: cfg.load,
        seed: cfg.seed,
        tasks: rows.len(),
        avg_latency_us: lat.iter().map(|&v| v as f64).sum::<f64>() / n,
        p25_latency_us: pct(25.0),
        p90_latency_us: pct(90.0),
        p95_latency_us: pct(95.0),
        avg_wait_us: rows.iter().map(|r| r.wait_us as f64).sum::<f64>() / n,
        offload_fraction: if rounds == 0 { 0.0 } else { offloaded as f64 / rounds as f64 },
        success_fraction: outcomes.iter().filter(|t| t.success).count() as f64 / n,
        stall_us: outcomes
            .iter()
            .flat_map(|t| &t.rounds)
            .map(|r| r.stall.as_micros())
            .sum(),
    }
}

/// Writes rows as CSV, preceded by `# generated <timestamp>` when given.
pub fn write_csv<W: Write>(rows: &[TaskRow], timestamp: Option<&str>, mut out: W) -> Result<(), ExperimentError> {
    if let Some(ts) = timestamp {
        writeln!(out, "# generated {ts}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoRow {
    pub policy: String,
    pub parameter: f64,
    pub mean_horizon: f64,
    pub success_fraction: f64,
}

/// Mean horizon each policy would choose over every recorded round, with the
/// family's success fraction passed through unchanged.
pub fn pareto(traces: &[TaskTrace], policies: &[HorizonPolicy]) -> Result<Vec<ParetoRow>, ExperimentError> {
    if traces.is_empty() {
        return Err(ExperimentError::NoTraces);
    }
    let mut chunks: Vec<&UpdateMagnitudes> = Vec::new();
    for t in traces {
        for r in &t.rounds {
            chunks.push(
                r.update_magnitudes
                    .as_ref()
                    .ok_or_else(|| ExperimentError::MissingMagnitudes(t.task_id.clone()))?,
            );
        }
    }
    let success = traces.iter().filter(|t| t.success).count() as f64 / traces.len() as f64;
    policies
        .iter()
        .map(|p| {
            p.validate()?;
            let total = chunks
                .iter()
                .try_fold(0u64, |acc, u| decide_horizon(p, u).map(|h| acc + u64::from(h)))?;
            Ok(ParetoRow {
                policy: p.label().to_string(),
                parameter: p.parameter(),
                mean_horizon: total as f64 / chunks.len() as f64,
                success_fraction: success,
            })
        })
        .collect()
}

pub fn write_pareto_csv<W: Write>(rows: &[ParetoRow], out: W) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
