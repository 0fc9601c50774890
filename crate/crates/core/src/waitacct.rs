//! Per-round wait measurement and the wait-ratio priority signal.
//!
//! A round is generation-dominated when its generation phase is at least as
//! long as its execution phase. For such a round the wait before the next
//! round is measured on the generation side (end of this generation to start
//! of the next one); otherwise it is measured on the execution side.

use serde::{Deserialize, Serialize};

use crate::task::RoundTimeline;
use crate::time::{Duration, Interval, TimePoint};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WaitError {
    #[error("next round's {phase} phase starts at {next} before this round's at {this}")]
    OutOfOrder {
        phase: &'static str,
        this: TimePoint,
        next: TimePoint,
    },
    #[error("wait ratio needs t_now > t_start (t_start={t_start}, t_now={t_now})")]
    EmptyLifetime { t_start: TimePoint, t_now: TimePoint },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DominantPhase {
    Generation,
    Execution,
}

pub fn dominant_phase(gen: &Interval, exec: &Interval) -> DominantPhase {
    if gen.len() >= exec.len() {
        DominantPhase::Generation
    } else {
        DominantPhase::Execution
    }
}

/// Wait between round `j` and round `j + 1`, measured on round `j`'s
/// dominant side. Negative gaps count as zero.
pub fn round_wait(
    gen: &Interval,
    exec: &Interval,
    gen_next: &Interval,
    exec_next: &Interval,
) -> Result<Duration, WaitError> {
    if gen_next.start < gen.start {
        return Err(WaitError::OutOfOrder {
            phase: "generation",
            this: gen.start,
            next: gen_next.start,
        });
    }
    if exec_next.start < exec.start {
        return Err(WaitError::OutOfOrder {
            phase: "execution",
            this: exec.start,
            next: exec_next.start,
        });
    }
    Ok(match dominant_phase(gen, exec) {
        DominantPhase::Generation => gen_next.start.saturating_since(gen.end),
        DominantPhase::Execution => exec_next.start.saturating_since(exec.end),
    })
}

/// Lower bound on the wait after the last recorded round while the next
/// round's generation has not started by `now`.
pub fn provisional_wait(last: &RoundTimeline, now: TimePoint) -> Duration {
    match dominant_phase(&last.gen, &last.exec) {
        DominantPhase::Generation => now.saturating_since(last.gen.end),
        DominantPhase::Execution => now.saturating_since(last.exec.end),
    }
}

/// Per-round waits of one task.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WaitLedger {
    waits: Vec<Duration>,
    total: Duration,
}

impl WaitLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Waits between every pair of consecutive rounds. The last round has none.
    pub fn from_timelines(rounds: &[RoundTimeline]) -> Result<Self, WaitError> {
        let mut ledger = WaitLedger::new();
        for pair in rounds.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            ledger.push(round_wait(&a.gen, &a.exec, &b.gen, &b.exec)?);
        }
        Ok(ledger)
    }

    pub fn push(&mut self, wait: Duration) {
        self.waits.push(wait);
        self.total += wait;
    }

    pub fn waits(&self) -> &[Duration] {
        &self.waits
    }

    pub fn total(&self) -> Duration {
        self.total
    }
}

/// `total_wait / (t_now - t_start)`, clamped to `[0, 1]`.
pub fn wait_ratio(total_wait: Duration, t_start: TimePoint, t_now: TimePoint) -> Result<f64, WaitError> {
    if t_now <= t_start {
        return Err(WaitError::EmptyLifetime { t_start, t_now });
    }
    let lifetime = t_now.saturating_since(t_start);
    let ratio = total_wait.as_micros() as f64 / lifetime.as_micros() as f64;
    Ok(ratio.clamp(0.0, 1.0))
}
