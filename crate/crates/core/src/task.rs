//! Tasks, rounds and generation requests.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::time::{exec_duration, ControlRate, Duration, Interval, TimePoint};

/// Opaque task identifier. Ordered lexicographically for tiebreaks.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TaskId(pub String);

impl TaskId {
    pub fn new(id: impl Into<String>) -> Self {
        TaskId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for TaskId {
    fn from(s: &str) -> Self {
        TaskId(s.to_string())
    }
}

/// One generated chunk and the prefix of it retained for execution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActionChunk {
    chunk_size: u32,
    rate: ControlRate,
    horizon: u32,
}

impl ActionChunk {
    /// `None` unless `1 <= horizon <= chunk_size`.
    pub fn new(chunk_size: u32, rate: ControlRate, horizon: u32) -> Option<Self> {
        (horizon >= 1 && horizon <= chunk_size).then_some(ActionChunk {
            chunk_size,
            rate,
            horizon,
        })
    }

    pub fn chunk_size(&self) -> u32 {
        self.chunk_size
    }

    pub fn horizon(&self) -> u32 {
        self.horizon
    }

    pub fn rate(&self) -> ControlRate {
        self.rate
    }

    pub fn exec_duration(&self) -> Duration {
        exec_duration(self.horizon, self.rate)
    }
}

/// Generation and execution intervals of one round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundTimeline {
    pub round_id: u32,
    pub gen: Interval,
    pub exec: Interval,
    pub horizon_used: u32,
}

impl RoundTimeline {
    /// Checks ordering of the two phases: a chunk cannot execute before it exists.
    pub fn is_causal(&self) -> bool {
        self.gen.start <= self.gen.end
            && self.exec.start <= self.exec.end
            && self.exec.start >= self.gen.end
    }
}

/// Server-side record of one task, built from request metadata.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskState {
    pub task_id: TaskId,
    pub rate: ControlRate,
    /// Issue time of the task's first request.
    pub t_start: TimePoint,
    pub timelines: Vec<RoundTimeline>,
    /// Consecutive planning rounds in which this task's request was not selected.
    pub skipped: u32,
    pub accumulated_generation: Duration,
}

impl TaskState {
    pub fn new(task_id: TaskId, rate: ControlRate, t_start: TimePoint) -> Self {
        TaskState {
            task_id,
            rate,
            t_start,
            timelines: Vec::new(),
            skipped: 0,
            accumulated_generation: Duration::ZERO,
        }
    }

    /// Appends the next completed round. Rounds must arrive in order without gaps.
    pub fn push_round(&mut self, round: RoundTimeline) -> Result<(), TimelineError> {
        let expected = self.timelines.len() as u32;
        if round.round_id != expected {
            return Err(TimelineError::OutOfOrder {
                task_id: self.task_id.clone(),
                expected,
                got: round.round_id,
            });
        }
        if !round.is_causal() {
            return Err(TimelineError::NotCausal {
                task_id: self.task_id.clone(),
                round_id: round.round_id,
            });
        }
        self.timelines.push(round);
        Ok(())
    }

    pub fn last_round(&self) -> Option<&RoundTimeline> {
        self.timelines.last()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TimelineError {
    #[error("task {task_id}: expected round {expected}, got round {got}")]
    OutOfOrder {
        task_id: TaskId,
        expected: u32,
        got: u32,
    },
    #[error("task {task_id} round {round_id}: execution starts before generation ends")]
    NotCausal { task_id: TaskId, round_id: u32 },
}

/// Execution progress of the previous round, piggybacked on a request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LastExecInfo {
    pub exec_start: TimePoint,
    pub remaining_actions: u32,
}

/// One outstanding generation request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingRequest {
    pub task_id: TaskId,
    pub round_id: u32,
    /// Client timestamp at which the request was issued.
    pub issued_at: TimePoint,
    /// Time the request reached the scheduler; used for arrival-order tiebreaks.
    pub arrived_at: TimePoint,
    pub obs_captured_at: TimePoint,
    /// `None` for a task's first round.
    pub last_exec_info: Option<LastExecInfo>,
    pub obs_payload_bytes: u64,
    pub action_payload_bytes: u64,
    pub skipped: u32,
}

/// End of the previous round's execution, reconstructed from the piggybacked
/// remaining-action count and the request's issue time.
pub fn exec_end_from_piggyback(req: &PendingRequest, rate: ControlRate) -> TimePoint {
    let remaining = req.last_exec_info.map_or(0, |info| info.remaining_actions);
    req.issued_at + exec_duration(remaining, rate)
}
