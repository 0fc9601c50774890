//! Simulation event log.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::platform::Tier;
use crate::task::TaskId;
use crate::time::TimePoint;

/// Event kinds in same-instant processing order: completions before the
/// work they unblock, and planning after every arrival at that instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    BatchCompleted,
    ChunkDelivered,
    ExecCompleted,
    StallStarted,
    StallEnded,
    ExecStarted,
    TaskCompleted,
    TaskArrival,
    RequestIssued,
    RequestReceived,
    PlanInvoked,
    BatchStarted,
    ObsRefetched,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub at: TimePoint,
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<TaskId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub round: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tier: Option<Tier>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch: Option<u64>,
    /// Batch size for batch events, dispatched count for plans.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size: Option<u32>,
}

impl Event {
    pub(crate) fn new(at: TimePoint, kind: EventKind) -> Self {
        Event {
            at,
            kind,
            task: None,
            round: None,
            tier: None,
            batch: None,
            size: None,
        }
    }

    pub(crate) fn for_round(at: TimePoint, kind: EventKind, task: &TaskId, round: u32) -> Self {
        Event {
            task: Some(task.clone()),
            round: Some(round),
            ..Event::new(at, kind)
        }
    }

    /// Total order of the log: time, kind, then subject.
    pub fn sort_key(&self) -> (TimePoint, EventKind, &str, u32, u64) {
        (
            self.at,
            self.kind,
            self.task.as_ref().map_or("", |t| t.as_str()),
            self.round.unwrap_or(0),
            self.batch.unwrap_or(0),
        )
    }
}

pub fn write_event_log<W: Write>(events: &[Event], writer: W) -> std::io::Result<()> {
    let mut w = std::io::BufWriter::new(writer);
    for e in events {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}
