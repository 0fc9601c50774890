//! Execution-aware request scheduling and the FIFO / least-attained baselines.
//!
//! One planning round runs three phases over the pending requests:
//!
//! 1. Every request's task gets a wait ratio, which picks one of `B`
//!    equal-width buckets. Each `A` consecutive skips promote the request
//!    one bucket.
//! 2. Buckets are drained from highest to lowest. Within a bucket, requests
//!    are ordered by estimated execution latency scaled by `(1 + skipped)`,
//!    longest first.
//! 3. The head of the order fills the edge tier. Each remaining request goes
//!    to the cloud only if its estimated cloud completion, network included,
//!    beats its estimated completion behind the edge queue.
//!
//! The baselines replace phases 1 and 2 with a single sort key and share
//! phase 3, so policies differ only in ordering.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::horizon::DEFAULT_MIN_HORIZON;
use crate::platform::{split_batches, Direction, EngineProfile, NetworkModel};
use crate::task::{PendingRequest, TaskId, TaskState};
use crate::time::{exec_duration, Duration, TimePoint};
use crate::waitacct::{provisional_wait, wait_ratio, WaitError, WaitLedger};

pub const DEFAULT_BUCKETS: u32 = 10;
pub const DEFAULT_AGING: u32 = 5;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScheduleError {
    #[error("pending request references unknown task {0}")]
    UnknownTask(TaskId),
    #[error("task {0} has more than one pending request")]
    DuplicateRequest(TaskId),
    #[error("scheduler config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Wait(#[from] WaitError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulingPolicy {
    Kairos,
    Fifo,
    Las,
}

impl SchedulingPolicy {
    pub fn name(self) -> &'static str {
        match self {
            SchedulingPolicy::Kairos => "kairos",
            SchedulingPolicy::Fifo => "fifo",
            SchedulingPolicy::Las => "las",
        }
    }
}

impl std::str::FromStr for SchedulingPolicy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "kairos" => Ok(SchedulingPolicy::Kairos),
            "fifo" => Ok(SchedulingPolicy::Fifo),
            "las" => Ok(SchedulingPolicy::Las),
            other => Err(format!("unknown scheduler '{other}' (expected kairos, fifo or las)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchedulerConfig {
    pub policy: SchedulingPolicy,
    /// Wait-ratio bucket count `B`.
    pub buckets: u32,
    /// Skips per bucket promotion `A`. `u32::MAX` disables aging promotion.
    pub aging: u32,
    /// Observation age beyond which a dispatched request is refetched.
    /// `None` means one batch-1 edge inference latency.
    pub stale_threshold: Option<Duration>,
    /// Horizon used for the execution estimate of a task with no completed round.
    pub cold_start_horizon: u32,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        SchedulerConfig {
            policy: SchedulingPolicy::Kairos,
            buckets: DEFAULT_BUCKETS,
            aging: DEFAULT_AGING,
            stale_threshold: None,
            cold_start_horizon: DEFAULT_MIN_HORIZON,
        }
    }
}

impl SchedulerConfig {
    pub fn with_policy(policy: SchedulingPolicy) -> Self {
        SchedulerConfig {
            policy,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), ScheduleError> {
        if self.buckets == 0 {
            return Err(ScheduleError::InvalidConfig("bucket count must be >= 1".into()));
        }
        if self.aging == 0 {
            return Err(ScheduleError::InvalidConfig("aging interval must be >= 1".into()));
        }
        if self.cold_start_horizon == 0 {
            return Err(ScheduleError::InvalidConfig("cold-start horizon must be >= 1".into()));
        }
        Ok(())
    }
}

/// Bucket for a wait ratio in `[0, 1]`, with aging promotion.
pub fn assign_bucket(wr: f64, skipped: u32, cfg: &SchedulerConfig) -> u32 {
    let top = cfg.buckets - 1;
    let mut bucket = ((wr.clamp(0.0, 1.0) * f64::from(cfg.buckets)).floor() as u32).min(top);
    if skipped >= cfg.aging {
        bucket = top.min(bucket.saturating_add(skipped / cfg.aging));
    }
    bucket
}

/// Duration of the task's most recent completed execution, or the cold-start
/// estimate when there is none.
pub fn estimate_exec_latency(task: &TaskState, cold_start_horizon: u32) -> Duration {
    match task.last_round() {
        Some(round) => round.exec.len(),
        None => exec_duration(cold_start_horizon, task.rate),
    }
}

/// `|E_last| * (1 + skipped)`, the aged execution estimate.
pub fn aged_estimate(exec_estimate: Duration, skipped: u32) -> u128 {
    u128::from(exec_estimate.as_micros()) * (1 + u128::from(skipped))
}

fn arrival_then_id(a: &PendingRequest, b: &PendingRequest) -> Ordering {
    a.arrived_at
        .cmp(&b.arrived_at)
        .then_with(|| a.task_id.cmp(&b.task_id))
}

/// Sorts one bucket by aged execution estimate, longest first; ties go to the
/// earlier arrival, then the smaller task id.
pub fn order_within_bucket(mut requests: Vec<(PendingRequest, Duration)>) -> Vec<PendingRequest> {
    requests.sort_by(|(ra, ea), (rb, eb)| {
        aged_estimate(*eb, rb.skipped)
            .cmp(&aged_estimate(*ea, ra.skipped))
            .then_with(|| arrival_then_id(ra, rb))
    });
    requests.into_iter().map(|(r, _)| r).collect()
}

/// Wait ratio of a task at `now`, counting the open wait after its last
/// recorded round.
pub fn task_wait_ratio(task: &TaskState, now: TimePoint) -> Result<f64, WaitError> {
    if now <= task.t_start {
        return Ok(0.0);
    }
    let ledger = WaitLedger::from_timelines(&task.timelines)?;
    let open = task
        .last_round()
        .map_or(Duration::ZERO, |last| provisional_wait(last, now));
    wait_ratio(ledger.total() + open, task.t_start, now)
}

/// Priority order of the pending set under `cfg.policy`.
pub fn order_requests(
    pending: Vec<PendingRequest>,
    states: &HashMap<TaskId, TaskState>,
    now: TimePoint,
    cfg: &SchedulerConfig,
) -> Result<Vec<PendingRequest>, ScheduleError> {
    let mut seen = HashSet::new();
    for req in &pending {
        if !states.contains_key(&req.task_id) {
            return Err(ScheduleError::UnknownTask(req.task_id.clone()));
        }
        if !seen.insert(&req.task_id) {
            return Err(ScheduleError::DuplicateRequest(req.task_id.clone()));
        }
    }
    let state = |r: &PendingRequest| &states[&r.task_id];
    let mut pending = pending;
    match cfg.policy {
        SchedulingPolicy::Fifo => {
            pending.sort_by(arrival_then_id);
            Ok(pending)
        }
        SchedulingPolicy::Las => {
            pending.sort_by(|a, b| {
                state(a)
                    .accumulated_generation
                    .cmp(&state(b).accumulated_generation)
                    .then_with(|| arrival_then_id(a, b))
            });
            Ok(pending)
        }
        SchedulingPolicy::Kairos => {
            let mut buckets: Vec<Vec<(PendingRequest, Duration)>> =
                vec![Vec::new(); cfg.buckets as usize];
            for req in pending {
                let task = state(&req);
                let wr = task_wait_ratio(task, now)?;
                let b = assign_bucket(wr, req.skipped, cfg);
                let est = estimate_exec_latency(task, cfg.cold_start_horizon);
                buckets[b as usize].push((req, est));
            }
            Ok(buckets
                .into_iter()
                .rev()
                .flat_map(order_within_bucket)
                .collect())
        }
    }
}

/// What the scheduler can see of one serving tier at planning time.
#[derive(Debug, Clone)]
pub struct TierView<'a> {
    pub profile: &'a EngineProfile,
    /// Remaining busy time of each instance; zero means idle.
    pub busy: Vec<Duration>,
}

impl<'a> TierView<'a> {
    pub fn idle(profile: &'a EngineProfile) -> Self {
        TierView {
            profile,
            busy: vec![Duration::ZERO; profile.instances() as usize],
        }
    }

    pub fn idle_instances(&self) -> usize {
        self.busy.iter().filter(|d| **d == Duration::ZERO).count()
    }

    /// Requests this tier can take now: the per-round capacity, limited to
    /// what idle instances can start immediately.
    pub fn dispatch_capacity(&self) -> usize {
        (self.profile.capacity() as usize)
            .min(self.idle_instances() * self.profile.max_batch() as usize)
    }
}

#[derive(Debug, Clone)]
pub struct CloudView<'a> {
    pub tier: TierView<'a>,
    pub network: &'a NetworkModel,
}

#[derive(Debug, Clone)]
pub struct PlacementContext<'a> {
    pub edge: TierView<'a>,
    pub cloud: Option<CloudView<'a>>,
    /// Client-to-edge link; `None` for a co-located edge.
    pub edge_network: Option<&'a NetworkModel>,
}

/// Result of one planning round.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DispatchPlan {
    pub edge: Vec<PendingRequest>,
    pub cloud: Vec<PendingRequest>,
    pub deferred: Vec<PendingRequest>,
    /// Dispatched tasks whose observation is stale and must be refetched.
    pub refetch: Vec<TaskId>,
}

impl DispatchPlan {
    pub fn dispatched(&self) -> impl Iterator<Item = &PendingRequest> {
        self.edge.iter().chain(self.cloud.iter())
    }

    pub fn len(&self) -> usize {
        self.edge.len() + self.cloud.len() + self.deferred.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn edge_down(ctx: &PlacementContext<'_>, req: &PendingRequest) -> Duration {
    ctx.edge_network
        .map_or(Duration::ZERO, |n| n.transfer_time(req.action_payload_bytes, Direction::Down))
}

/// Edge completion estimate for a request queued behind this round's edge
/// batches and `deferred_ahead` requests already left for later rounds.
fn edge_delay(ctx: &PlacementContext<'_>, edge_batches: &[u32], deferred_ahead: usize, req: &PendingRequest) -> Duration {
    let profile = ctx.edge.profile;
    let mb = profile.max_batch() as usize;
    let mut ahead = edge_batches.to_vec();
    ahead.extend(std::iter::repeat_n(profile.max_batch(), deferred_ahead / mb));
    let own = (deferred_ahead % mb + 1) as u32;
    profile.completion_after(&ctx.edge.busy, &ahead, own) + edge_down(ctx, req)
}

fn cloud_estimate(cloud: &CloudView<'_>, placed: usize, req: &PendingRequest) -> Duration {
    let profile = cloud.tier.profile;
    let mb = profile.max_batch() as usize;
    let ahead = vec![profile.max_batch(); placed / mb];
    let own = (placed % mb + 1) as u32;
    let compute = profile.completion_after(&cloud.tier.busy, &ahead, own);
    cloud
        .network
        .cloud_round_trip(req.obs_payload_bytes, req.action_payload_bytes, compute)
}

/// Splits an ordered request list between edge, cloud and deferral.
pub fn place(ordered: Vec<PendingRequest>, ctx: &PlacementContext<'_>) -> DispatchPlan {
    let edge_cap = ctx.edge.dispatch_capacity().min(ordered.len());
    let mut iter = ordered.into_iter();
    let edge: Vec<PendingRequest> = iter.by_ref().take(edge_cap).collect();
    let edge_batches = split_batches(edge.len(), ctx.edge.profile.max_batch());
    let cloud_cap = ctx.cloud.as_ref().map_or(0, |c| c.tier.dispatch_capacity());

    let mut cloud = Vec::new();
    let mut deferred = Vec::new();
    for req in iter {
        let offload = match &ctx.cloud {
            Some(c) if cloud.len() < cloud_cap => {
                cloud_estimate(c, cloud.len(), &req) < edge_delay(ctx, &edge_batches, deferred.len(), &req)
            }
            _ => false,
        };
        if offload {
            cloud.push(req);
        } else {
            deferred.push(req);
        }
    }
    DispatchPlan {
        edge,
        cloud,
        deferred,
        refetch: Vec::new(),
    }
}

/// One planning round: order, place, mark stale observations and update skip
/// counters on both the plan's requests and the task states.
pub fn plan(
    pending: Vec<PendingRequest>,
    states: &mut HashMap<TaskId, TaskState>,
    ctx: &PlacementContext<'_>,
    now: TimePoint,
    cfg: &SchedulerConfig,
) -> Result<DispatchPlan, ScheduleError> {
    cfg.validate()?;
    let ordered = order_requests(pending, states, now, cfg)?;
    let mut plan = place(ordered, ctx);

    let stale = cfg
        .stale_threshold
        .unwrap_or_else(|| ctx.edge.profile.latency_unchecked(1));
    plan.refetch = plan
        .dispatched()
        .filter(|r| now.saturating_since(r.obs_captured_at) > stale)
        .map(|r| r.task_id.clone())
        .collect();

    for req in plan.edge.iter_mut().chain(plan.cloud.iter_mut()) {
        req.skipped = 0;
        if let Some(st) = states.get_mut(&req.task_id) {
            st.skipped = 0;
        }
    }
    for req in plan.deferred.iter_mut() {
        req.skipped += 1;
        if let Some(st) = states.get_mut(&req.task_id) {
            st.skipped = req.skipped;
        }
    }
    Ok(plan)
}

pub fn plan_fifo(
    pending: Vec<PendingRequest>,
    states: &mut HashMap<TaskId, TaskState>,
    ctx: &PlacementContext<'_>,
    now: TimePoint,
    cfg: &SchedulerConfig,
) -> Result<DispatchPlan, ScheduleError> {
    let cfg = SchedulerConfig {
        policy: SchedulingPolicy::Fifo,
        ..*cfg
    };
    plan(pending, states, ctx, now, &cfg)
}

pub fn plan_las(
    pending: Vec<PendingRequest>,
    states: &mut HashMap<TaskId, TaskState>,
    ctx: &PlacementContext<'_>,
    now: TimePoint,
    cfg: &SchedulerConfig,
) -> Result<DispatchPlan, ScheduleError> {
    let cfg = SchedulerConfig {
        policy: SchedulingPolicy::Las,
        ..*cfg
    };
    plan(pending, states, ctx, now, &cfg)
}
