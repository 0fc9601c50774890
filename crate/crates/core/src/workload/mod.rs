//! Workload: trace files, arrival processes, synthetic traces and the
//! round-optimal horizon analysis.

mod analysis;
mod arrivals;
mod synth;
mod trace;

pub use analysis::{cosine_similarity, round_optimal_horizon};
pub use arrivals::poisson_arrivals;
pub use synth::{synthesize_family, synthesize_trace, trigger_index, Range, SyntheticSpec};
pub use trace::{
    load_traces, parse_trace_line, read_traces, store_traces, write_traces, RoundRecord,
    TaskTrace, TraceError, Violation,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WorkloadError {
    #[error("arrival rate must be positive and finite, got {0}")]
    InvalidRate(f64),
    #[error("invalid workload spec: {0}")]
    InvalidSpec(String),
}
