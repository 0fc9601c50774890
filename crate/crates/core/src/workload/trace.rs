//! JSON Lines trace files: one [`TaskTrace`] per line.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::horizon::UpdateMagnitudes;
use crate::task::TaskId;
use crate::time::ControlRate;

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed trace record: {source}")]
    Malformed {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: task {task_id}{}: {reason}", round_id.map(|r| format!(" round {r}")).unwrap_or_default())]
    Invalid {
        line: usize,
        task_id: TaskId,
        round_id: Option<u32>,
        reason: String,
    },
}

/// Recorded history of one task, the unit of replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTrace")]
pub struct TaskTrace {
    pub task_id: TaskId,
    pub control_hz: ControlRate,
    pub obs_payload_bytes: u64,
    pub action_payload_bytes: u64,
    /// Outcome of the isolated recording run.
    pub success: bool,
    pub rounds: Vec<RoundRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round_id: u32,
    /// Index into the previous round's executed prefix at which this round's
    /// request is issued. Always 0 for round 0, which is issued on arrival.
    pub trigger_action_index: u32,
    pub recorded_horizon: u32,
    pub chunk_size: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub update_magnitudes: Option<UpdateMagnitudes>,
    /// Executed actions, one vector per action.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action_trajectory: Option<Vec<Vec<f64>>>,
}

/// A trace invariant violation, without file position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub round_id: Option<u32>,
    pub reason: String,
}

impl TaskTrace {
    pub fn validate(&self) -> Result<(), Violation> {
        let fail = |round_id: Option<u32>, reason: String| Err(Violation { round_id, reason });
        if self.rounds.is_empty() {
            return fail(None, "trace has no rounds".into());
        }
        let mut prev_horizon = None;
        for (idx, round) in self.rounds.iter().enumerate() {
            let rid = Some(round.round_id);
            if round.round_id as usize != idx {
                return fail(rid, format!("round ids must be contiguous from 0; expected {idx}"));
            }
            if round.recorded_horizon == 0 || round.recorded_horizon > round.chunk_size {
                return fail(
                    rid,
                    format!(
                        "recorded_horizon {} outside 1..={}",
                        round.recorded_horizon, round.chunk_size
                    ),
                );
            }
            match prev_horizon {
                None if round.trigger_action_index != 0 => {
                    return fail(rid, "round 0 must have trigger_action_index 0".into());
                }
                Some(h) if round.trigger_action_index >= h => {
                    return fail(
                        rid,
                        format!(
                            "trigger_action_index {} must be below the previous horizon {h}",
                            round.trigger_action_index
                        ),
                    );
                }
                _ => {}
            }
            if let Some(u) = &round.update_magnitudes {
                if u.chunk_size() != round.chunk_size as usize {
                    return fail(
                        rid,
                        format!(
                            "update_magnitudes has {} actions, chunk_size is {}",
                            u.chunk_size(),
                            round.chunk_size
                        ),
                    );
                }
            }
            if let Some(traj) = &round.action_trajectory {
                if traj.len() != round.recorded_horizon as usize {
                    return fail(
                        rid,
                        format!(
                            "action_trajectory has {} actions, recorded_horizon is {}",
                            traj.len(),
                            round.recorded_horizon
                        ),
                    );
                }
                let dim = traj[0].len();
                if dim == 0 || traj.iter().any(|a| a.len() != dim) {
                    return fail(rid, "action_trajectory vectors must share a non-zero dimension".into());
                }
                if traj.iter().flatten().any(|v| !v.is_finite()) {
                    return fail(rid, "action_trajectory has non-finite entries".into());
                }
            }
            prev_horizon = Some(round.recorded_horizon);
        }
        Ok(())
    }

    pub fn total_actions(&self) -> u64 {
        self.rounds.iter().map(|r| u64::from(r.recorded_horizon)).sum()
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrace {
    task_id: TaskId,
    control_hz: u32,
    obs_payload_bytes: u64,
    action_payload_bytes: u64,
    success: bool,
    rounds: Vec<RawRound>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRound {
    round_id: u32,
    trigger_action_index: u32,
    recorded_horizon: u32,
    chunk_size: u32,
    #[serde(default)]
    update_magnitudes: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    action_trajectory: Option<Vec<Vec<f64>>>,
}

/// Shape-level failure converting a raw record, before invariant checks.
struct ConvertError {
    task_id: TaskId,
    violation: Violation,
}

impl std::fmt::Display for ConvertError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "task {}: {}", self.task_id, self.violation.reason)
    }
}

fn convert(raw: RawTrace) -> Result<TaskTrace, ConvertError> {
    let task_id = raw.task_id;
    let err = |round_id, reason: String| ConvertError {
        task_id: task_id.clone(),
        violation: Violation { round_id, reason },
    };
    let control_hz =
        ControlRate::new(raw.control_hz).ok_or_else(|| err(None, "control_hz must be positive".into()))?;
    let mut rounds = Vec::with_capacity(raw.rounds.len());
    for r in raw.rounds {
        let update_magnitudes = r
            .update_magnitudes
            .map(UpdateMagnitudes::new)
            .transpose()
            .map_err(|e| err(Some(r.round_id), format!("update_magnitudes: {e}")))?;
        rounds.push(RoundRecord {
            round_id: r.round_id,
            trigger_action_index: r.trigger_action_index,
            recorded_horizon: r.recorded_horizon,
            chunk_size: r.chunk_size,
            update_magnitudes,
            action_trajectory: r.action_trajectory,
        });
    }
    let trace = TaskTrace {
        task_id: task_id.clone(),
        control_hz,
        obs_payload_bytes: raw.obs_payload_bytes,
        action_payload_bytes: raw.action_payload_bytes,
        success: raw.success,
        rounds,
    };
    trace.validate().map_err(|violation| ConvertError {
        task_id: task_id.clone(),
        violation,
    })?;
    Ok(trace)
}

impl TryFrom<RawTrace> for TaskTrace {
    type Error = String;
    fn try_from(raw: RawTrace) -> Result<Self, Self::Error> {
        convert(raw).map_err(|e| e.to_string())
    }
}

/// Parses one JSONL record. `line` is only used for error positions.
pub fn parse_trace_line(text: &str, line: usize) -> Result<TaskTrace, TraceError> {
    let raw: RawTrace =
        serde_json::from_str(text).map_err(|source| TraceError::Malformed { line, source })?;
    convert(raw).map_err(|e| TraceError::Invalid {
        line,
        task_id: e.task_id,
        round_id: e.violation.round_id,
        reason: e.violation.reason,
    })
}

/// Parses a whole JSONL stream. Blank lines are skipped.
pub fn read_traces<R: Read>(reader: R) -> Result<Vec<TaskTrace>, TraceError> {
    let mut traces = Vec::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = idx + 1;
        let text = line.map_err(|source| TraceError::Io {
            path: format!("line {line_no}"),
            source,
        })?;
        if text.trim().is_empty() {
            continue;
        }
        traces.push(parse_trace_line(&text, line_no)?);
    }
    Ok(traces)
}

pub fn write_traces<W: Write>(traces: &[TaskTrace], writer: W) -> std::io::Result<()> {
    let mut w = BufWriter::new(writer);
    for trace in traces {
        serde_json::to_writer(&mut w, trace)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TraceError + '_ {
    move |source| TraceError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Loads a `.jsonl` file, or every `.jsonl` file of a directory in name order.
pub fn load_traces(path: &Path) -> Result<Vec<TaskTrace>, TraceError> {
    if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .map_err(io_err(path))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        files.sort();
        let mut all = Vec::new();
        for file in files {
            all.extend(load_trace_file(&file)?);
        }
        Ok(all)
    } else {
        load_trace_file(path)
    }
}

fn load_trace_file(path: &Path) -> Result<Vec<TaskTrace>, TraceError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    read_traces(file).map_err(|e| match e {
        TraceError::Io { source, .. } => TraceError::Io {
            path: path.display().to_string(),
            source,
        },
        other => other,
    })
}

/// Writes traces to `path`, validating each first.
pub fn store_traces(traces: &[TaskTrace], path: &Path) -> Result<(), TraceError> {
    for (idx, trace) in traces.iter().enumerate() {
        trace.validate().map_err(|v| TraceError::Invalid {
            line: idx + 1,
            task_id: trace.task_id.clone(),
            round_id: v.round_id,
            reason: v.reason,
        })?;
    }
    let file = fs::File::create(path).map_err(io_err(path))?;
    write_traces(traces, file).map_err(io_err(path))
}
