//! Synthetic trace generation.
//!
//! Update magnitudes follow a per-action geometric decay over diffusion steps
//! with multiplicative noise. Each round has an uncertainty onset: actions at
//! or past it are uncertain with probability `uncertain_fraction`, and an
//! uncertain action's final update is bumped above `(1 + design_threshold)`
//! times its earlier mean. Onsets drift between rounds around a per-task
//! level, so consecutive rounds have similar horizons.
//!
//! This is a fixture generator for the horizon policy and the simulator. It
//! makes no claim about the statistics of real diffusion models.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::trace::{RoundRecord, TaskTrace};
use super::WorkloadError;
use crate::horizon::{decide_horizon, HorizonPolicy, UpdateMagnitudes};
use crate::task::TaskId;
use crate::time::{exec_duration, ControlRate, Duration};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range<T> {
    pub min: T,
    pub max: T,
}

impl<T: PartialOrd + Copy> Range<T> {
    pub fn fixed(v: T) -> Self {
        Range { min: v, max: v }
    }

    fn is_ordered(&self) -> bool {
        self.min <= self.max
    }
}

/// Configuration of a synthetic trace family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub tasks: usize,
    #[serde(default = "default_prefix")]
    pub task_id_prefix: String,
    pub control_hz: u32,
    pub chunk_size: u32,
    pub diffusion_steps: u32,
    /// Total executed actions per task; rounds are emitted until reached.
    pub action_budget: Range<u64>,
    /// Per-task mean uncertainty onset, as an action index.
    pub onset: Range<u32>,
    /// Largest per-round change of the onset.
    #[serde(default)]
    pub onset_jitter: u32,
    pub uncertain_fraction: f64,
    pub decay: Range<f64>,
    #[serde(default)]
    pub noise: f64,
    #[serde(default = "default_design_threshold")]
    pub design_threshold: f64,
    #[serde(default = "default_bump_max")]
    pub bump_max: f64,
    #[serde(default = "default_success_rate")]
    pub success_rate: f64,
    pub obs_payload_bytes: u64,
    pub action_payload_bytes: u64,
    /// Action vector dimension for recorded trajectories; 0 records none.
    #[serde(default)]
    pub action_dim: usize,
    #[serde(default = "default_true")]
    pub record_magnitudes: bool,
}

fn default_prefix() -> String {
    "task".into()
}
fn default_design_threshold() -> f64 {
    0.4
}
fn default_bump_max() -> f64 {
    2.5
}
fn default_success_rate() -> f64 {
    1.0
}
fn default_true() -> bool {
    true
}

impl SyntheticSpec {
    pub fn from_json(text: &str) -> Result<Self, WorkloadError> {
        let spec: SyntheticSpec =
            serde_json::from_str(text).map_err(|e| WorkloadError::InvalidSpec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, WorkloadError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| WorkloadError::InvalidSpec(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn rate(&self) -> Result<ControlRate, WorkloadError> {
        ControlRate::new(self.control_hz)
            .ok_or_else(|| WorkloadError::InvalidSpec("control_hz must be positive".into()))
    }

    pub fn validate(&self) -> Result<(), WorkloadError> {
        let bad = |m: &str| Err(WorkloadError::InvalidSpec(m.to_string()));
        self.rate()?;
        if self.chunk_size == 0 {
            return bad("chunk_size must be positive");
        }
        if self.diffusion_steps < 2 {
            return bad("diffusion_steps must be at least 2");
        }
        if !self.action_budget.is_ordered() || self.action_budget.min == 0 {
            return bad("action_budget must satisfy 1 <= min <= max");
        }
        if !self.onset.is_ordered() {
            return bad("onset must satisfy min <= max");
        }
        if !(0.0..=1.0).contains(&self.uncertain_fraction) {
            return bad("uncertain_fraction must lie in [0, 1]");
        }
        if !(self.decay.is_ordered() && self.decay.min > 0.0 && self.decay.max < 1.0) {
            return bad("decay must satisfy 0 < min <= max < 1");
        }
        if !(0.0..1.0).contains(&self.noise) {
            return bad("noise must lie in [0, 1)");
        }
        if !(self.design_threshold.is_finite() && self.design_threshold >= 0.0) {
            return bad("design_threshold must be >= 0");
        }
        if !(self.bump_max.is_finite() && self.bump_max > 1.0 + self.design_threshold) {
            return bad("bump_max must exceed 1 + design_threshold");
        }
        if !(0.0..=1.0).contains(&self.success_rate) {
            return bad("success_rate must lie in [0, 1]");
        }
        Ok(())
    }
}

/// Trigger index for the round after one executing `horizon` actions: issue
/// so the next chunk lands as the prefix runs out, and never at or past the
/// end of the prefix.
pub fn trigger_index(horizon: u32, gen_latency: Duration, rate: ControlRate) -> u32 {
    let lead = rate.actions_covering(gen_latency).min(u64::from(horizon)) as u32;
    (horizon - lead).min(horizon.saturating_sub(1))
}

fn sample_magnitudes(
    spec: &SyntheticSpec,
    onset: u32,
    rng: &mut ChaCha8Rng,
) -> Result<UpdateMagnitudes, WorkloadError> {
    let steps = spec.diffusion_steps as usize;
    let n = spec.chunk_size as usize;
    let mut rows = vec![vec![0.0; n]; steps];
    for a in 0..n {
        let base = rng.random_range(0.5..1.5);
        let decay = if spec.decay.min < spec.decay.max {
            rng.random_range(spec.decay.min..spec.decay.max)
        } else {
            spec.decay.min
        };
        for (k, row) in rows.iter_mut().enumerate() {
            let jitter = if spec.noise > 0.0 {
                1.0 + rng.random_range(-spec.noise..spec.noise)
            } else {
                1.0
            };
            row[a] = base * decay.powi(k as i32) * jitter;
        }
        let earlier_mean = rows[..steps - 1].iter().map(|r| r[a]).sum::<f64>() / (steps - 1) as f64;
        let uncertain = a as u32 >= onset && rng.random_bool(spec.uncertain_fraction);
        let last = &mut rows[steps - 1][a];
        if uncertain {
            let lo = 1.0 + spec.design_threshold;
            // (lo, bump_max]
            let bump = spec.bump_max - (spec.bump_max - lo) * rng.random::<f64>();
            *last = bump * earlier_mean;
        } else {
            *last = last.min(earlier_mean);
        }
    }
    UpdateMagnitudes::new(rows).map_err(|e| WorkloadError::InvalidSpec(e.to_string()))
}

/// Synthesizes one task trace.
pub fn synthesize_trace(
    spec: &SyntheticSpec,
    task_id: TaskId,
    policy: &HorizonPolicy,
    gen_latency: Duration,
    seed: u64,
) -> Result<TaskTrace, WorkloadError> {
    spec.validate()?;
    policy
        .validate()
        .map_err(|e| WorkloadError::InvalidSpec(e.to_string()))?;
    let rate = spec.rate()?;
    let full_chunk = exec_duration(spec.chunk_size, rate);
    if gen_latency >= full_chunk {
        return Err(WorkloadError::InvalidSpec(format!(
            "generation latency {gen_latency} is not shorter than a full chunk ({full_chunk})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Separate stream so magnitudes do not depend on the chosen horizons.
    let mut traj_rng = ChaCha8Rng::seed_from_u64(task_seed(seed, u64::MAX));
    let budget = rng.random_range(spec.action_budget.min..=spec.action_budget.max);
    let level = rng.random_range(spec.onset.min..=spec.onset.max);
    let mut onset = level;
    let success = rng.random_bool(spec.success_rate);

    let mut rounds = Vec::new();
    let mut executed = 0u64;
    let mut prev_horizon: Option<u32> = None;
    while executed < budget {
        if spec.onset_jitter > 0 {
            let j = i64::from(spec.onset_jitter);
            let toward_level = (i64::from(level) - i64::from(onset)).signum();
            let next = i64::from(onset) + rng.random_range(-j..=j) + toward_level;
            onset = next.clamp(i64::from(spec.onset.min), i64::from(spec.onset.max)) as u32;
        }
        let u = sample_magnitudes(spec, onset, &mut rng)?;
        let horizon = decide_horizon(policy, &u).map_err(|e| WorkloadError::InvalidSpec(e.to_string()))?;
        let trajectory = (spec.action_dim > 0).then(|| {
            (0..horizon)
                .map(|_| (0..spec.action_dim).map(|_| traj_rng.random_range(-1.0..1.0)).collect())
                .collect()
        });
        rounds.push(RoundRecord {
            round_id: rounds.len() as u32,
            trigger_action_index: prev_horizon.map_or(0, |h| trigger_index(h, gen_latency, rate)),
            recorded_horizon: horizon,
            chunk_size: spec.chunk_size,
            update_magnitudes: spec.record_magnitudes.then_some(u),
            action_trajectory: trajectory,
        });
        executed += u64::from(horizon);
        prev_horizon = Some(horizon);
    }
    Ok(TaskTrace {
        task_id,
        control_hz: rate,
        obs_payload_bytes: spec.obs_payload_bytes,
        action_payload_bytes: spec.action_payload_bytes,
        success,
        rounds,
    })
}

/// Synthesizes `spec.tasks` traces; task `i` is seeded from `seed` and `i`.
pub fn synthesize_family(
    spec: &SyntheticSpec,
    policy: &HorizonPolicy,
    gen_latency: Duration,
    seed: u64,
) -> Result<Vec<TaskTrace>, WorkloadError> {
    let width = spec.tasks.saturating_sub(1).to_string().len().max(4);
    (0..spec.tasks)
        .map(|i| {
            let id = TaskId(format!("{}-{:0width$}", spec.task_id_prefix, i));
            synthesize_trace(spec, id, policy, gen_latency, task_seed(seed, i as u64))
        })
        .collect()
}

fn task_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer over the pair
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::horizon::threshold_horizon;

    pub(crate) fn spec() -> SyntheticSpec {
        SyntheticSpec {
            tasks: 5,
            task_id_prefix: "task".into(),
            control_hz: 30,
            chunk_size: 50,
            diffusion_steps: 8,
            action_budget: Range { min: 200, max: 400 },
            onset: Range { min: 10, max: 45 },
            onset_jitter: 4,
            uncertain_fraction: 0.5,
            decay: Range { min: 0.5, max: 0.9 },
            noise: 0.05,
            design_threshold: 0.4,
            bump_max: 2.5,
            success_rate: 0.8,
            obs_payload_bytes: 300_000,
            action_payload_bytes: 2_000,
            action_dim: 0,
            record_magnitudes: true,
        }
    }

    fn hz30() -> ControlRate {
        ControlRate::new(30).unwrap()
    }

    #[test]
    fn trigger_examples() {
        assert_eq!(trigger_index(30, Duration::from_millis(400), hz30()), 18);
        assert_eq!(trigger_index(30, Duration::ZERO, hz30()), 29);
        assert_eq!(trigger_index(5, Duration::from_millis(400), hz30()), 0);
        assert_eq!(trigger_index(1, Duration::ZERO, hz30()), 0);
    }

    #[test]
    fn traces_are_valid_and_meet_budget() {
        let family = synthesize_family(&spec(), &HorizonPolicy::default(), Duration::from_millis(200), 9).unwrap();
        assert_eq!(family.len(), 5);
        for t in &family {
            t.validate().unwrap();
            let total = t.total_actions();
            let last = u64::from(t.rounds.last().unwrap().recorded_horizon);
            assert!(total >= 200 && total - last < 400);
        }
    }

    #[test]
    fn bumped_actions_trip_at_design_threshold() {
        let s = spec();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for onset in [0, 7, 30, 49] {
            let u = sample_magnitudes(&s, onset, &mut rng).unwrap();
            assert!(threshold_horizon(&u, s.design_threshold) >= onset);
            // certain actions never trip, even at t = 0
            assert!(threshold_horizon(&u, 0.0) >= onset);
        }
    }

    #[test]
    fn static_full_chunk_without_uncertainty() {
        let mut s = spec();
        s.uncertain_fraction = 0.0;
        let t = synthesize_trace(&s, TaskId::from("x"), &HorizonPolicy::Static { horizon: 50 }, Duration::from_millis(100), 1).unwrap();
        assert!(t.rounds.iter().all(|r| r.recorded_horizon == 50));
    }

    #[test]
    fn zero_latency_triggers_at_last_action() {
        let t = synthesize_trace(&spec(), TaskId::from("x"), &HorizonPolicy::default(), Duration::ZERO, 4).unwrap();
        for w in t.rounds.windows(2) {
            assert_eq!(w[1].trigger_action_index, w[0].recorded_horizon - 1);
        }
    }

    #[test]
    fn rejects_latency_longer_than_chunk() {
        let err = synthesize_trace(&spec(), TaskId::from("x"), &HorizonPolicy::default(), exec_duration(50, hz30()), 1);
        assert!(err.is_err());
    }

    #[test]
    fn seeded_determinism() {
        let a = synthesize_family(&spec(), &HorizonPolicy::default(), Duration::from_millis(200), 9).unwrap();
        let b = synthesize_family(&spec(), &HorizonPolicy::default(), Duration::from_millis(200), 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn trajectories_recorded_on_request() {
        let mut s = spec();
        s.action_dim = 7;
        let t = synthesize_trace(&s, TaskId::from("x"), &HorizonPolicy::default(), Duration::from_millis(200), 2).unwrap();
        t.validate().unwrap();
        assert!(t.rounds.iter().all(|r| r.action_trajectory.as_ref().unwrap()[0].len() == 7));
    }

    #[test]
    fn spec_json_validation() {
        let json = serde_json::to_string(&spec()).unwrap();
        assert_eq!(SyntheticSpec::from_json(&json).unwrap(), spec());
        let bad = json.replace("\"diffusion_steps\":8", "\"diffusion_steps\":1");
        assert!(SyntheticSpec::from_json(&bad).is_err());
    }
}
