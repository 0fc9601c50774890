//! Execution-aware serving for robot policy inference.
//!
//! The crate holds the pieces of the serving loop and the tools to evaluate
//! it offline:
//!
//! - [`horizon`]: how many actions of a generated chunk to execute.
//! - [`waitacct`]: per-task wait ratio from generation and execution timelines.
//! - [`scheduler`]: wait-ratio bucketing with aging, plus FIFO and LAS baselines.
//! - [`platform`]: batched engine latency profiles and network links.
//! - [`workload`]: trace format, synthetic trace generation, arrival processes.
//! - [`simrun`]: deterministic discrete-event replay of traces.

pub mod experiment;
pub mod horizon;
pub mod platform;
pub mod scheduler;
pub mod simrun;
pub mod task;
pub mod time;
pub mod waitacct;
pub mod workload;

pub use horizon::{decide_horizon, threshold_horizon, HorizonError, HorizonPolicy, UpdateMagnitudes};
pub use platform::{Direction, EngineProfile, NetworkModel, PlatformError, Tier};
pub use scheduler::{DispatchPlan, ScheduleError, SchedulerConfig, SchedulingPolicy};
pub use simrun::{Arrivals, PlanningTrigger, SimConfig, SimError, SimOutput, TaskOutcome};
pub use task::{ActionChunk, PendingRequest, RoundTimeline, TaskId, TaskState};
pub use time::{ControlRate, Duration, Interval, TimePoint};
pub use waitacct::{wait_ratio, WaitError, WaitLedger};
pub use workload::{SyntheticSpec, TaskTrace, TraceError};
