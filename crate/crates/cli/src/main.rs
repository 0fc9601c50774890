//! `kairos`: generate synthetic traces, replay them through the serving
//! simulator, and sweep horizon policies.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kairos::experiment::{pareto, run_experiment, write_csv, write_pareto_csv, ExperimentConfig, Load};
use kairos::horizon::HorizonPolicy;
use kairos::platform::{EngineProfile, NetworkModel, Tier};
use kairos::scheduler::{SchedulerConfig, SchedulingPolicy};
use kairos::simrun::{write_event_log, PlanningTrigger, SimConfig};
use kairos::time::Duration;
use kairos::workload::{load_traces, store_traces, synthesize_family, SyntheticSpec, TaskTrace};
use serde_json::json;

#[derive(Parser)]
#[command(name = "kairos", version, about = "Wait-aware scheduling simulator for action-chunking robot policies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a trace family from a workload spec.
    GenTraces(GenArgs),
    /// Replay traces under one scheduler and load setting.
    Run(RunArgs),
    /// Mean horizon per policy over a trace family, for accuracy/efficiency curves.
    Pareto(ParetoArgs),
}

#[derive(Args)]
struct PolicyArgs {
    /// Horizon policy: `confidence` or `static`.
    #[arg(long, default_value = "confidence")]
    policy: String,
    #[arg(long, default_value_t = 0.4)]
    threshold: f64,
    #[arg(long, default_value_t = 5)]
    min_horizon: u32,
    /// Horizon for the static policy.
    #[arg(long, default_value_t = 25)]
    horizon: u32,
}

impl PolicyArgs {
    fn policy(&self) -> Result<HorizonPolicy, CliError> {
        match self.policy.as_str() {
            "confidence" => Ok(HorizonPolicy::confidence(self.threshold, self.min_horizon)),
            "static" => Ok(HorizonPolicy::Static { horizon: self.horizon }),
            other => Err(CliError::usage(format!("unknown horizon policy '{other}' (expected confidence or static)"))),
        }
    }
}

#[derive(Args)]
struct GenArgs {
    /// Workload spec (JSON).
    #[arg(long)]
    spec: PathBuf,
    #[command(flatten)]
    policy: PolicyArgs,
    /// Chunk generation latency assumed when placing triggers.
    #[arg(long, default_value_t = 150)]
    gen_latency_ms: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory; traces go to `traces.jsonl` inside it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Trace file, or a directory of `.jsonl` files read in name order.
    #[arg(long)]
    traces: PathBuf,
    #[arg(long, default_value = "kairos")]
    scheduler: SchedulingPolicy,
    /// Poisson arrival rate in tasks per second.
    #[arg(long, conflicts_with = "fleet", required_unless_present = "fleet")]
    rate: Option<f64>,
    /// Number of robots running tasks back to back.
    #[arg(long)]
    fleet: Option<usize>,
    #[arg(long, default_value_t = 10)]
    buckets: u32,
    #[arg(long, default_value_t = 5)]
    aging: u32,
    /// Observation age in ms beyond which a dispatched request is refetched.
    #[arg(long)]
    stale_ms: Option<u64>,
    /// Edge engine profile (JSON). Defaults to a single 150 ms batch-1 engine.
    #[arg(long)]
    edge_profile: Option<PathBuf>,
    /// Cloud engine profile (JSON). Omit for edge-only serving.
    #[arg(long)]
    cloud_profile: Option<PathBuf>,
    /// Edge-to-cloud link (JSON). Defaults to a 100 ms one-way WAN.
    #[arg(long)]
    network: Option<PathBuf>,
    /// Robot-to-edge link (JSON). Omit for a co-located edge.
    #[arg(long)]
    edge_network: Option<PathBuf>,
    /// Plan on a fixed period instead of on events.
    #[arg(long)]
    interval_ms: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Replay this many tasks sampled with replacement from the traces.
    #[arg(long)]
    tasks: Option<usize>,
    /// Output directory for `results.csv` and `summary.json`.
    #[arg(long)]
    out: PathBuf,
    /// Omit the timestamp line from the CSV.
    #[arg(long)]
    no_timestamp: bool,
    /// Also write the event log as `events.jsonl`.
    #[arg(long)]
    events: bool,
}

#[derive(Args)]
struct ParetoArgs {
    #[arg(long)]
    traces: PathBuf,
    /// Static horizons to evaluate, comma separated.
    #[arg(long, value_delimiter = ',')]
    static_horizons: Vec<u32>,
    /// Confidence thresholds to evaluate, comma separated.
    #[arg(long, value_delimiter = ',')]
    thresholds: Vec<f64>,
    #[arg(long, default_value_t = 5)]
    min_horizon: u32,
    /// Output CSV file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug)]
struct CliError {
    kind: &'static str,
    message: String,
    context: serde_json::Value,
}

impl CliError {
    fn new(kind: &'static str, message: impl ToString) -> Self {
        CliError {
            kind,
            message: message.to_string(),
            context: serde_json::Value::Null,
        }
    }

    fn usage(message: impl ToString) -> Self {
        Self::new("usage", message)
    }

    fn with_context(mut self, context: serde_json::Value) -> Self {
        self.context = context;
        self
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::new("io", format!("{}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenTraces(a) => gen_traces(&a),
        Command::Run(a) => run(&a),
        Command::Pareto(a) => run_pareto(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let obj = json!({ "error": { "kind": e.kind, "message": e.message, "context": e.context } });
            eprintln!("{obj}");
            ExitCode::FAILURE
        }
    }
}

fn gen_traces(a: &GenArgs) -> Result<(), CliError> {
    let spec = SyntheticSpec::load(&a.spec).map_err(|e| CliError::new("workload", e))?;
    let policy = a.policy.policy()?;
    let traces = synthesize_family(&spec, &policy, Duration::from_millis(a.gen_latency_ms), a.seed)
        .map_err(|e| CliError::new("workload", e))?;
    fs::create_dir_all(&a.out).map_err(io_err(&a.out))?;
    let path = a.out.join("traces.jsonl");
    store_traces(&traces, &path).map_err(|e| CliError::new("trace", e))?;
    println!("wrote {} traces to {}", traces.len(), path.display());
    Ok(())
}

fn read_trace_input(path: &Path) -> Result<Vec<TaskTrace>, CliError> {
    let files = if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .map_err(io_err(path))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        files.sort();
        files
    } else {
        vec![path.to_path_buf()]
    };
    let mut traces = Vec::new();
    for f in &files {
        let more = load_traces(f)
            .map_err(|e| CliError::new("trace", e).with_context(json!({ "file": f.display().to_string() })))?;
        traces.extend(more);
    }
    if traces.is_empty() {
        return Err(CliError::new("trace", format!("no traces found in {}", path.display())));
    }
    Ok(traces)
}

fn load_profile(path: &Path, tier: Tier) -> Result<EngineProfile, CliError> {
    let p = EngineProfile::load(path)
        .map_err(|e| CliError::new("platform", e).with_context(json!({ "file": path.display().to_string() })))?;
    if p.tier() != tier {
        return Err(CliError::new("platform", format!("{} is a {:?} profile, expected {:?}", path.display(), p.tier(), tier)));
    }
    Ok(p)
}

fn load_network(path: &Path) -> Result<NetworkModel, CliError> {
    NetworkModel::load(path)
        .map_err(|e| CliError::new("platform", e).with_context(json!({ "file": path.display().to_string() })))
}

fn default_edge() -> EngineProfile {
    EngineProfile::new(Tier::Edge, 1, 1, vec![(1, 150_000)], 1).expect("valid built-in profile")
}

fn run(a: &RunArgs) -> Result<(), CliError> {
    let traces = read_trace_input(&a.traces)?;
    let load = match (a.rate, a.fleet) {
        (Some(r), None) => Load::Rate(r),
        (None, Some(n)) => Load::Fleet(n),
        _ => return Err(CliError::usage("give exactly one of --rate or --fleet")),
    };
    let scheduler = SchedulerConfig {
        policy: a.scheduler,
        buckets: a.buckets,
        aging: a.aging,
        stale_threshold: a.stale_ms.map(Duration::from_millis),
        ..SchedulerConfig::default()
    };
    let edge = match &a.edge_profile {
        Some(p) => load_profile(p, Tier::Edge)?,
        None => default_edge(),
    };
    let mut sim = SimConfig::new(scheduler, edge);
    sim.cloud = a.cloud_profile.as_deref().map(|p| load_profile(p, Tier::Cloud)).transpose()?;
    if let Some(p) = &a.network {
        sim.cloud_network = load_network(p)?;
    }
    sim.edge_network = a.edge_network.as_deref().map(load_network).transpose()?;
    if let Some(ms) = a.interval_ms {
        sim.trigger = PlanningTrigger::Interval(Duration::from_millis(ms));
    }
    let cfg = ExperimentConfig {
        sim,
        load,
        seed: a.seed,
        tasks: a.tasks,
    };
    let cell = json!({ "scheduler": a.scheduler.name(), "load": load.to_string(), "seed": a.seed });
    let result = run_experiment(&traces, &cfg).map_err(|e| CliError::new("experiment", e).with_context(cell))?;

    fs::create_dir_all(&a.out).map_err(io_err(&a.out))?;
    let csv_path = a.out.join("results.csv");
    let stamp = (!a.no_timestamp).then(unix_timestamp);
    let file = File::create(&csv_path).map_err(io_err(&csv_path))?;
    write_csv(&result.rows, stamp.as_deref(), BufWriter::new(file)).map_err(|e| CliError::new("io", e))?;

    let summary_path = a.out.join("summary.json");
    let summary = json!({ "summary": result.summary, "config": result.config });
    let mut f = BufWriter::new(File::create(&summary_path).map_err(io_err(&summary_path))?);
    serde_json::to_writer_pretty(&mut f, &summary).map_err(|e| CliError::new("io", e))?;
    writeln!(f).and_then(|_| f.flush()).map_err(io_err(&summary_path))?;

    if a.events {
        let path = a.out.join("events.jsonl");
        let file = File::create(&path).map_err(io_err(&path))?;
        let mut w = BufWriter::new(file);
        write_event_log(&result.events, &mut w)
            .and_then(|_| w.flush())
            .map_err(io_err(&path))?;
    }
    let s = &result.summary;
    println!(
        "{} {}: {} tasks, avg {:.3}s, p25 {:.3}s, p95 {:.3}s, offload {:.3}",
        s.scheduler,
        s.load,
        s.tasks,
        s.avg_latency_us / 1e6,
        s.p25_latency_us as f64 / 1e6,
        s.p95_latency_us as f64 / 1e6,
        s.offload_fraction
    );
    Ok(())
}

fn unix_timestamp() -> String {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
        .to_string()
}

fn run_pareto(a: &ParetoArgs) -> Result<(), CliError> {
    if a.static_horizons.is_empty() && a.thresholds.is_empty() {
        return Err(CliError::usage("give --static-horizons and/or --thresholds"));
    }
    let traces = read_trace_input(&a.traces)?;
    let policies: Vec<HorizonPolicy> = a
        .static_horizons
        .iter()
        .map(|&horizon| HorizonPolicy::Static { horizon })
        .chain(a.thresholds.iter().map(|&t| HorizonPolicy::confidence(t, a.min_horizon)))
        .collect();
    let rows = pareto(&traces, &policies).map_err(|e| CliError::new("pareto", e))?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let file = File::create(&a.out).map_err(io_err(&a.out))?;
    write_pareto_csv(&rows, BufWriter::new(file)).map_err(|e| CliError::new("io", e))?;
    println!("wrote {} rows to {}", rows.len(), a.out.display());
    Ok(())
}
