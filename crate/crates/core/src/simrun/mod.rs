//! Deterministic discrete-event replay of task traces against the scheduler
//! and the engine models.
//!
//! Each replayed task issues round 0 on arrival and every later round when
//! execution of the previous chunk reaches the recorded trigger index. A
//! chunk executes exactly its recorded horizon. If the next chunk has not
//! been delivered when the prefix runs out, the robot stalls until delivery.
//!
//! The scheduler side only sees what a real server would: its own dispatch
//! and delivery times, plus the execution start and remaining-action count
//! piggybacked on each request. [`SimOutput::server_states`] holds the task
//! records rebuilt from that metadata; [`SimOutput::tasks`] holds ground truth.

mod event;

pub use event::{write_event_log, Event, EventKind};

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::platform::{split_batches, Direction, EngineProfile, NetworkModel, Tier};
use crate::scheduler::{self, CloudView, PlacementContext, ScheduleError, SchedulerConfig, TierView};
use crate::task::{
    exec_end_from_piggyback, LastExecInfo, PendingRequest, RoundTimeline, TaskId, TaskState, TimelineError,
};
use crate::time::{exec_duration, Duration, Interval, TimePoint};
use crate::workload::TaskTrace;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("{traces} traces but {arrivals} arrival times")]
    CountMismatch { traces: usize, arrivals: usize },
    #[error("duplicate task id {0}")]
    DuplicateTask(TaskId),
    #[error("trace {task_id} is invalid: {reason}")]
    InvalidTrace { task_id: TaskId, reason: String },
    #[error("simulation config: {0}")]
    InvalidConfig(String),
    #[error("no progress at {at} with {pending} pending requests and {unfinished} unfinished tasks")]
    Livelock {
        at: TimePoint,
        pending: usize,
        unfinished: usize,
    },
    #[error("event budget of {0} exhausted")]
    EventBudget(u64),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Timeline(#[from] TimelineError),
}

/// When the scheduler's planning loop runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "interval_us")]
pub enum PlanningTrigger {
    /// On request arrival while a tier is idle, and on every batch completion
    /// with work pending.
    EventDriven,
    /// Every fixed interval while requests are pending.
    Interval(Duration),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    pub scheduler: SchedulerConfig,
    pub edge: EngineProfile,
    pub cloud: Option<EngineProfile>,
    /// Link between the edge site and the cloud tier.
    pub cloud_network: NetworkModel,
    /// Link between robots and the edge site; `None` when co-located.
    pub edge_network: Option<NetworkModel>,
    pub trigger: PlanningTrigger,
    pub seed: u64,
    pub max_events: u64,
}

impl SimConfig {
    pub fn new(scheduler: SchedulerConfig, edge: EngineProfile) -> Self {
        SimConfig {
            scheduler,
            edge,
            cloud: None,
            cloud_network: NetworkModel::wan_testbed(),
            edge_network: None,
            trigger: PlanningTrigger::EventDriven,
            seed: 0,
            max_events: 200_000_000,
        }
    }

    fn validate(&self) -> Result<(), SimError> {
        self.scheduler.validate()?;
        if self.edge.tier() != Tier::Edge {
            return Err(SimError::InvalidConfig("edge profile is labelled as a cloud tier".into()));
        }
        if let Some(c) = &self.cloud {
            if c.tier() != Tier::Cloud {
                return Err(SimError::InvalidConfig("cloud profile is labelled as an edge tier".into()));
            }
        }
        if let PlanningTrigger::Interval(d) = self.trigger {
            if d == Duration::ZERO {
                return Err(SimError::InvalidConfig("planning interval must be positive".into()));
            }
        }
        Ok(())
    }
}

/// How replayed tasks enter the system.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Arrivals {
    /// Trace `i` arrives at time `i`.
    Timed(Vec<TimePoint>),
    /// `slots` robots run the traces back-to-back in input order; each slot
    /// starts the next unstarted trace when its current task completes.
    Fleet { slots: usize },
}

/// Ground truth for one replayed round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundOutcome {
    pub round_id: u32,
    pub tier: Tier,
    pub issued_at: TimePoint,
    pub gen: Interval,
    pub exec: Interval,
    pub horizon: u32,
    pub refetched: bool,
    /// Robot idle time right before this round's execution.
    pub stall: Duration,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskOutcome {
    pub task_id: TaskId,
    pub trace_index: usize,
    pub arrival: TimePoint,
    pub completion: TimePoint,
    pub success: bool,
    pub rounds: Vec<RoundOutcome>,
}

impl TaskOutcome {
    /// First request to last executed action.
    pub fn latency(&self) -> Duration {
        self.completion.saturating_since(self.arrival)
    }

    pub fn offloaded_rounds(&self) -> usize {
        self.rounds.iter().filter(|r| r.tier == Tier::Cloud).count()
    }

    /// Timelines as recorded directly by the simulator.
    pub fn timelines(&self) -> Vec<RoundTimeline> {
        self.rounds
            .iter()
            .map(|r| RoundTimeline {
                round_id: r.round_id,
                gen: r.gen,
                exec: r.exec,
                horizon_used: r.horizon,
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub events: Vec<Event>,
    /// Outcomes in trace order.
    pub tasks: Vec<TaskOutcome>,
    /// Scheduler-side records rebuilt from request metadata.
    pub server_states: BTreeMap<TaskId, TaskState>,
    pub plans: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Action {
    Arrive { trace: usize },
    Issue { trace: usize, round: u32 },
    Receive { trace: usize, round: u32 },
    Plan,
    BatchStart { batch: u64 },
    BatchComplete { batch: u64 },
    Deliver { trace: usize, round: u32 },
    ExecStart { trace: usize, round: u32 },
    ExecComplete { trace: usize, round: u32 },
    StallStart { trace: usize, round: u32 },
    StallEnd { trace: usize, round: u32 },
    Complete { trace: usize },
    Refetched { trace: usize, round: u32 },
    /// A cloud instance can take a new batch: its current batch will be done
    /// by the time a fresh upload lands.
    CloudReady,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct QueueKey {
    at: TimePoint,
    kind: EventKind,
    subject: String,
    round: u32,
    batch: u64,
    seq: u64,
}

#[derive(Debug, Clone, Default)]
struct RoundRun {
    issued_at: Option<TimePoint>,
    dispatched_at: Option<TimePoint>,
    tier: Option<Tier>,
    refetch_delay: Duration,
    delivered_at: Option<TimePoint>,
    exec_start: Option<TimePoint>,
    exec_end: Option<TimePoint>,
    stall: Duration,
}

#[derive(Debug)]
struct TaskRun {
    id: TaskId,
    arrival: TimePoint,
    rounds: Vec<RoundRun>,
    /// Set while the robot has exhausted round `r - 1` and waits for chunk `r`.
    stalled_for: Option<(u32, TimePoint)>,
    done: Option<TimePoint>,
}

#[derive(Debug)]
struct Batch {
    tier: Tier,
    instance: usize,
    members: Vec<(usize, u32)>,
}

struct TierState {
    profile: EngineProfile,
    busy_until: Vec<Option<TimePoint>>,
    /// Shortest time for a request to reach an instance after dispatch. An
    /// instance finishing within this lead can already be handed a batch.
    lead: Duration,
}

impl TierState {
    fn new(profile: EngineProfile, lead: Duration) -> Self {
        let n = profile.instances() as usize;
        TierState {
            profile,
            busy_until: vec![None; n],
            lead,
        }
    }

    fn available(&self, now: TimePoint) -> impl Iterator<Item = usize> + '_ {
        let ready = now + self.lead;
        self.busy_until
            .iter()
            .enumerate()
            .filter(move |(_, b)| b.is_none_or(|t| t <= ready))
            .map(|(i, _)| i)
    }

    fn has_idle(&self, now: TimePoint) -> bool {
        self.available(now).next().is_some()
    }

    fn view(&self, now: TimePoint) -> TierView<'_> {
        let ready = now + self.lead;
        TierView {
            profile: &self.profile,
            busy: self
                .busy_until
                .iter()
                .map(|b| b.map_or(Duration::ZERO, |t| t.saturating_since(ready)))
                .collect(),
        }
    }
}

struct Sim<'a> {
    cfg: &'a SimConfig,
    traces: &'a [TaskTrace],
    queue: BTreeMap<QueueKey, Action>,
    seq: u64,
    now: TimePoint,
    events: Vec<Event>,
    runs: Vec<Option<TaskRun>>,
    index_of: HashMap<TaskId, usize>,
    pending: Vec<PendingRequest>,
    server: HashMap<TaskId, TaskState>,
    /// Server-side generation intervals per trace, from dispatch and delivery.
    server_gen: Vec<Vec<Interval>>,
    edge: TierState,
    cloud: Option<TierState>,
    batches: HashMap<u64, Batch>,
    next_batch: u64,
    plan_at: Option<TimePoint>,
    plans: u64,
    /// Next trace to start in fleet mode; `None` for timed arrivals.
    next_fleet: Option<usize>,
    unfinished: usize,
}

pub fn run(traces: &[TaskTrace], arrivals: &Arrivals, cfg: &SimConfig) -> Result<SimOutput, SimError> {
    cfg.validate()?;
    let mut index_of = HashMap::new();
    for (i, t) in traces.iter().enumerate() {
        t.validate().map_err(|v| SimError::InvalidTrace {
            task_id: t.task_id.clone(),
            reason: v.reason,
        })?;
        if index_of.insert(t.task_id.clone(), i).is_some() {
            return Err(SimError::DuplicateTask(t.task_id.clone()));
        }
    }
    let cloud_lead = traces
        .iter()
        .map(|t| cfg.cloud_network.transfer_time(t.obs_payload_bytes, Direction::Up))
        .min()
        .unwrap_or_default();
    let mut sim = Sim {
        cfg,
        traces,
        queue: BTreeMap::new(),
        seq: 0,
        now: TimePoint::ZERO,
        events: Vec::new(),
        runs: traces.iter().map(|_| None).collect(),
        index_of,
        pending: Vec::new(),
        server: HashMap::new(),
        server_gen: vec![Vec::new(); traces.len()],
        edge: TierState::new(cfg.edge.clone(), Duration::ZERO),
        cloud: cfg.cloud.clone().map(|p| TierState::new(p, cloud_lead)),
        batches: HashMap::new(),
        next_batch: 0,
        plan_at: None,
        plans: 0,
        next_fleet: None,
        unfinished: traces.len(),
    };
    match arrivals {
        Arrivals::Timed(times) => {
            if times.len() != traces.len() {
                return Err(SimError::CountMismatch {
                    traces: traces.len(),
                    arrivals: times.len(),
                });
            }
            for (i, &at) in times.iter().enumerate() {
                sim.push(at, Action::Arrive { trace: i });
            }
        }
        Arrivals::Fleet { slots } => {
            if *slots == 0 {
                return Err(SimError::InvalidConfig("fleet needs at least one slot".into()));
            }
            sim.next_fleet = Some(0);
            for _ in 0..(*slots).min(traces.len()) {
                sim.start_next_fleet_task(TimePoint::ZERO);
            }
        }
    }
    sim.run_loop()?;
    sim.finish()
}

impl<'a> Sim<'a> {
    fn push(&mut self, at: TimePoint, action: Action) {
        let (kind, subject, round, batch) = match &action {
            Action::Arrive { trace } => (EventKind::TaskArrival, *trace, 0, 0),
            Action::Issue { trace, round } => (EventKind::RequestIssued, *trace, *round, 0),
            Action::Receive { trace, round } => (EventKind::RequestReceived, *trace, *round, 0),
            Action::Plan => (EventKind::PlanInvoked, usize::MAX, 0, 0),
            Action::BatchStart { batch } => (EventKind::BatchStarted, usize::MAX, 0, *batch),
            Action::BatchComplete { batch } => (EventKind::BatchCompleted, usize::MAX, 0, *batch),
            Action::Deliver { trace, round } => (EventKind::ChunkDelivered, *trace, *round, 0),
            Action::ExecStart { trace, round } => (EventKind::ExecStarted, *trace, *round, 0),
            Action::ExecComplete { trace, round } => (EventKind::ExecCompleted, *trace, *round, 0),
            Action::StallStart { trace, round } => (EventKind::StallStarted, *trace, *round, 0),
            Action::StallEnd { trace, round } => (EventKind::StallEnded, *trace, *round, 0),
            Action::Complete { trace } => (EventKind::TaskCompleted, *trace, 0, 0),
            Action::Refetched { trace, round } => (EventKind::ObsRefetched, *trace, *round, 0),
            Action::CloudReady => (EventKind::BatchCompleted, usize::MAX, 0, u64::MAX),
        };
        let subject = if subject == usize::MAX {
            String::new()
        } else {
            self.traces[subject].task_id.0.clone()
        };
        debug_assert!(at >= self.now);
        self.seq += 1;
        self.queue.insert(
            QueueKey {
                at,
                kind,
                subject,
                round,
                batch,
                seq: self.seq,
            },
            action,
        );
    }

    fn run_loop(&mut self) -> Result<(), SimError> {
        let mut processed = 0u64;
        while let Some((key, action)) = self.queue.pop_first() {
            processed += 1;
            if processed > self.cfg.max_events {
                return Err(SimError::EventBudget(self.cfg.max_events));
            }
            self.now = key.at;
            self.handle(action)?;
        }
        if self.unfinished > 0 {
            return Err(SimError::Livelock {
                at: self.now,
                pending: self.pending.len(),
                unfinished: self.unfinished,
            });
        }
        Ok(())
    }

    fn run_mut(&mut self, trace: usize) -> &mut TaskRun {
        self.runs[trace].as_mut().expect("task has arrived")
    }

    fn log_round(&mut self, kind: EventKind, trace: usize, round: u32) {
        let id = self.traces[trace].task_id.clone();
        self.events.push(Event::for_round(self.now, kind, &id, round));
    }

    fn start_next_fleet_task(&mut self, at: TimePoint) {
        if let Some(trace) = self.next_fleet.filter(|&i| i < self.traces.len()) {
            self.next_fleet = Some(trace + 1);
            self.push(at, Action::Arrive { trace });
        }
    }

    fn handle(&mut self, action: Action) -> Result<(), SimError> {
        match action {
            Action::Arrive { trace } => {
                self.runs[trace] = Some(TaskRun {
                    id: self.traces[trace].task_id.clone(),
                    arrival: self.now,
                    rounds: vec![RoundRun::default(); self.traces[trace].rounds.len()],
                    stalled_for: None,
                    done: None,
                });
                self.log_round(EventKind::TaskArrival, trace, 0);
                self.push(self.now, Action::Issue { trace, round: 0 });
            }
            Action::Issue { trace, round } => self.issue(trace, round),
            Action::Receive { trace, round } => self.receive(trace, round)?,
            Action::Plan => self.plan()?,
            Action::BatchStart { batch } => {
                let b = &self.batches[&batch];
                let mut e = Event::new(self.now, EventKind::BatchStarted);
                e.tier = Some(b.tier);
                e.batch = Some(batch);
                e.size = Some(b.members.len() as u32);
                self.events.push(e);
            }
            Action::BatchComplete { batch } => self.complete_batch(batch),
            Action::Deliver { trace, round } => self.deliver(trace, round),
            Action::ExecStart { trace, round } => self.exec_start(trace, round),
            Action::ExecComplete { trace, round } => self.exec_complete(trace, round),
            Action::StallStart { trace, round } => self.log_round(EventKind::StallStarted, trace, round),
            Action::StallEnd { trace, round } => self.log_round(EventKind::StallEnded, trace, round),
            Action::Complete { trace } => self.complete_task(trace)?,
            Action::Refetched { trace, round } => self.log_round(EventKind::ObsRefetched, trace, round),
            Action::CloudReady => self.request_plan(),
        }
        Ok(())
    }

    fn issue(&mut self, trace: usize, round: u32) {
        let now = self.now;
        self.log_round(EventKind::RequestIssued, trace, round);
        self.run_mut(trace).rounds[round as usize].issued_at = Some(now);
        let up = self.cfg.edge_network.map_or(Duration::ZERO, |n| {
            n.transfer_time(self.traces[trace].obs_payload_bytes, Direction::Up)
        });
        self.push(now + up, Action::Receive { trace, round });
    }

    fn receive(&mut self, trace: usize, round: u32) -> Result<(), SimError> {
        self.log_round(EventKind::RequestReceived, trace, round);
        let t = &self.traces[trace];
        let run = self.runs[trace].as_ref().expect("task has arrived");
        let rr = &run.rounds[round as usize];
        let issued_at = rr.issued_at.expect("issued before received");
        let last_exec_info = (round > 0).then(|| {
            let prev = &run.rounds[round as usize - 1];
            let horizon = t.rounds[round as usize - 1].recorded_horizon;
            LastExecInfo {
                exec_start: prev.exec_start.expect("previous round executing"),
                remaining_actions: horizon - t.rounds[round as usize].trigger_action_index,
            }
        });
        let req = PendingRequest {
            task_id: t.task_id.clone(),
            round_id: round,
            issued_at,
            arrived_at: self.now,
            obs_captured_at: issued_at,
            last_exec_info,
            obs_payload_bytes: t.obs_payload_bytes,
            action_payload_bytes: t.action_payload_bytes,
            skipped: 0,
        };
        if round == 0 {
            self.server
                .insert(t.task_id.clone(), TaskState::new(t.task_id.clone(), t.control_hz, issued_at));
        } else {
            self.record_previous_round(trace, &req, round - 1)?;
        }
        self.pending.push(req);
        self.request_plan();
        Ok(())
    }

    /// Completes the server record of `round` from piggybacked metadata.
    fn record_previous_round(&mut self, trace: usize, req: &PendingRequest, round: u32) -> Result<(), SimError> {
        let t = &self.traces[trace];
        let info = req.last_exec_info.expect("piggyback present");
        let exec = Interval::new(info.exec_start, exec_end_from_piggyback(req, t.control_hz))
            .expect("execution end follows start");
        let timeline = RoundTimeline {
            round_id: round,
            gen: self.server_gen[trace][round as usize],
            exec,
            horizon_used: t.rounds[round as usize].recorded_horizon,
        };
        let state = self.server.get_mut(&t.task_id).expect("task registered on round 0");
        state.push_round(timeline)?;
        Ok(())
    }

    fn any_tier_idle(&self) -> bool {
        let now = self.now;
        self.edge.has_idle(now) || self.cloud.as_ref().is_some_and(|c| c.has_idle(now))
    }

    fn request_plan(&mut self) {
        if self.pending.is_empty() || self.plan_at.is_some() {
            return;
        }
        let at = match self.cfg.trigger {
            PlanningTrigger::EventDriven => {
                if !self.any_tier_idle() {
                    return;
                }
                self.now
            }
            PlanningTrigger::Interval(step) => {
                let s = step.as_micros();
                TimePoint(self.now.as_micros().div_ceil(s) * s)
            }
        };
        self.plan_at = Some(at);
        self.push(at, Action::Plan);
    }

    fn plan(&mut self) -> Result<(), SimError> {
        self.plan_at = None;
        let now = self.now;
        let pending = std::mem::take(&mut self.pending);
        let edge_view = self.edge.view(now);
        let cloud_view = self.cloud.as_ref().map(|c| CloudView {
            tier: c.view(now),
            network: &self.cfg.cloud_network,
        });
        let ctx = PlacementContext {
            edge: edge_view,
            cloud: cloud_view,
            edge_network: self.cfg.edge_network.as_ref(),
        };
        let plan = scheduler::plan(pending, &mut self.server, &ctx, now, &self.cfg.scheduler)?;
        self.plans += 1;
        let mut e = Event::new(now, EventKind::PlanInvoked);
        e.size = Some((plan.edge.len() + plan.cloud.len()) as u32);
        self.events.push(e);

        let refetch_delay = self.cfg.edge_network.map(|n| {
            move |obs: u64| n.transfer_time(0, Direction::Down) + n.transfer_time(obs, Direction::Up)
        });
        for (tier, reqs) in [(Tier::Edge, plan.edge), (Tier::Cloud, plan.cloud)] {
            let mut members = Vec::with_capacity(reqs.len());
            for req in reqs {
                let trace = self.index_of[&req.task_id];
                let stale = plan.refetch.contains(&req.task_id);
                let delay = match (&refetch_delay, stale) {
                    (Some(f), true) => f(req.obs_payload_bytes),
                    _ => Duration::ZERO,
                };
                let rr = &mut self.run_mut(trace).rounds[req.round_id as usize];
                rr.dispatched_at = Some(now);
                rr.tier = Some(tier);
                rr.refetch_delay = delay;
                if stale {
                    self.push(now + delay, Action::Refetched { trace, round: req.round_id });
                }
                members.push((trace, req.round_id));
            }
            self.start_batches(tier, members);
        }
        self.pending = plan.deferred;
        if let PlanningTrigger::Interval(step) = self.cfg.trigger {
            if !self.pending.is_empty() {
                self.plan_at = Some(now + step);
                self.push(now + step, Action::Plan);
            }
        }
        Ok(())
    }

    fn start_batches(&mut self, tier: Tier, members: Vec<(usize, u32)>) {
        if members.is_empty() {
            return;
        }
        let now = self.now;
        let state = match tier {
            Tier::Edge => &self.edge,
            Tier::Cloud => self.cloud.as_ref().expect("cloud placement needs a cloud tier"),
        };
        let sizes = split_batches(members.len(), state.profile.max_batch());
        let mut rest = members.into_iter();
        for size in sizes {
            let group: Vec<(usize, u32)> = rest.by_ref().take(size as usize).collect();
            let upload = match tier {
                Tier::Edge => Duration::ZERO,
                Tier::Cloud => group
                    .iter()
                    .map(|&(t, _)| {
                        self.cfg
                            .cloud_network
                            .transfer_time(self.traces[t].obs_payload_bytes, Direction::Up)
                    })
                    .max()
                    .unwrap_or_default(),
            };
            let state = match tier {
                Tier::Edge => &mut self.edge,
                Tier::Cloud => self.cloud.as_mut().expect("cloud tier"),
            };
            let instance = state
                .available(now)
                .next()
                .expect("placement never exceeds idle capacity");
            let start = now + upload;
            let compute = state.profile.latency_unchecked(size);
            let done = start + compute;
            state.busy_until[instance] = Some(done);
            let ready = now + upload.saturating_sub(state.lead) + compute;
            let id = self.next_batch;
            self.next_batch += 1;
            self.batches.insert(
                id,
                Batch {
                    tier,
                    instance,
                    members: group,
                },
            );
            self.push(start, Action::BatchStart { batch: id });
            self.push(done, Action::BatchComplete { batch: id });
            if tier == Tier::Cloud && ready < done {
                self.push(ready, Action::CloudReady);
            }
        }
    }

    fn complete_batch(&mut self, id: u64) {
        let batch = self.batches.remove(&id).expect("batch in flight");
        let mut e = Event::new(self.now, EventKind::BatchCompleted);
        e.tier = Some(batch.tier);
        e.batch = Some(id);
        e.size = Some(batch.members.len() as u32);
        self.events.push(e);
        let now = self.now;
        let state = match batch.tier {
            Tier::Edge => &mut self.edge,
            Tier::Cloud => self.cloud.as_mut().expect("cloud tier"),
        };
        // A pipelined batch may already hold this instance.
        if state.busy_until[batch.instance] == Some(now) {
            state.busy_until[batch.instance] = None;
        }
        for (trace, round) in batch.members {
            let bytes = self.traces[trace].action_payload_bytes;
            let down = match batch.tier {
                Tier::Edge => self
                    .cfg
                    .edge_network
                    .map_or(Duration::ZERO, |n| n.transfer_time(bytes, Direction::Down)),
                Tier::Cloud => self.cfg.cloud_network.transfer_time(bytes, Direction::Down),
            };
            let delay = self.run_mut(trace).rounds[round as usize].refetch_delay;
            self.push(self.now + down + delay, Action::Deliver { trace, round });
        }
        self.request_plan();
    }

    fn deliver(&mut self, trace: usize, round: u32) {
        let now = self.now;
        self.log_round(EventKind::ChunkDelivered, trace, round);
        let run = self.run_mut(trace);
        let rr = &mut run.rounds[round as usize];
        rr.delivered_at = Some(now);
        let gen = Interval::new(rr.dispatched_at.expect("dispatched"), now).expect("delivery after dispatch");
        let stalled = run.stalled_for;
        self.server_gen[trace].push(gen);
        let id = &self.traces[trace].task_id;
        if let Some(st) = self.server.get_mut(id) {
            st.accumulated_generation += gen.len();
        }
        if round == 0 {
            self.push(now, Action::ExecStart { trace, round });
        } else if let Some((r, since)) = stalled {
            debug_assert_eq!(r, round);
            let run = self.run_mut(trace);
            run.stalled_for = None;
            run.rounds[round as usize].stall = now.saturating_since(since);
            self.push(now, Action::StallEnd { trace, round });
            self.push(now, Action::ExecStart { trace, round });
        }
    }

    fn exec_start(&mut self, trace: usize, round: u32) {
        let now = self.now;
        self.log_round(EventKind::ExecStarted, trace, round);
        let t = &self.traces[trace];
        let horizon = t.rounds[round as usize].recorded_horizon;
        let end = now + exec_duration(horizon, t.control_hz);
        let next_issue = t.rounds.get(round as usize + 1).map(|next| {
            // Counted back from the prefix end so the piggybacked remaining
            // count reproduces the end time exactly.
            let remaining = horizon - next.trigger_action_index;
            TimePoint(end.as_micros() - exec_duration(remaining, t.control_hz).as_micros())
        });
        let rr = &mut self.run_mut(trace).rounds[round as usize];
        rr.exec_start = Some(now);
        rr.exec_end = Some(end);
        self.push(end, Action::ExecComplete { trace, round });
        if let Some(at) = next_issue {
            self.push(at, Action::Issue { trace, round: round + 1 });
        }
    }

    fn exec_complete(&mut self, trace: usize, round: u32) {
        let now = self.now;
        self.log_round(EventKind::ExecCompleted, trace, round);
        let last = round as usize + 1 == self.traces[trace].rounds.len();
        if last {
            self.push(now, Action::Complete { trace });
            return;
        }
        let next = round + 1;
        let run = self.run_mut(trace);
        if run.rounds[next as usize].delivered_at.is_some() {
            self.push(now, Action::ExecStart { trace, round: next });
        } else {
            run.stalled_for = Some((next, now));
            self.push(now, Action::StallStart { trace, round: next });
        }
    }

    fn complete_task(&mut self, trace: usize) -> Result<(), SimError> {
        let now = self.now;
        self.log_round(EventKind::TaskCompleted, trace, 0);
        let t = &self.traces[trace];
        let last = t.rounds.len() as u32 - 1;
        let exec_start = self.runs[trace].as_ref().expect("arrived").rounds[last as usize]
            .exec_start
            .expect("executed");
        // Completion report: the final round's start and zero remaining actions.
        let report = PendingRequest {
            task_id: t.task_id.clone(),
            round_id: last + 1,
            issued_at: now,
            arrived_at: now,
            obs_captured_at: now,
            last_exec_info: Some(LastExecInfo {
                exec_start,
                remaining_actions: 0,
            }),
            obs_payload_bytes: 0,
            action_payload_bytes: 0,
            skipped: 0,
        };
        self.record_previous_round(trace, &report, last)?;
        self.run_mut(trace).done = Some(now);
        self.unfinished -= 1;
        self.start_next_fleet_task(now);
        Ok(())
    }

    fn finish(self) -> Result<SimOutput, SimError> {
        let tasks = self
            .runs
            .into_iter()
            .enumerate()
            .map(|(i, run)| {
                let run = run.expect("every task ran");
                let rounds = run
                    .rounds
                    .iter()
                    .enumerate()
                    .map(|(r, rr)| RoundOutcome {
                        round_id: r as u32,
                        tier: rr.tier.expect("dispatched"),
                        issued_at: rr.issued_at.expect("issued"),
                        gen: Interval::new(rr.dispatched_at.expect("dispatched"), rr.delivered_at.expect("delivered"))
                            .expect("ordered"),
                        exec: Interval::new(rr.exec_start.expect("executed"), rr.exec_end.expect("executed"))
                            .expect("ordered"),
                        horizon: self.traces[i].rounds[r].recorded_horizon,
                        refetched: rr.refetch_delay > Duration::ZERO,
                        stall: rr.stall,
                    })
                    .collect();
                TaskOutcome {
                    task_id: run.id,
                    trace_index: i,
                    arrival: run.arrival,
                    completion: run.done.expect("completed"),
                    success: self.traces[i].success,
                    rounds,
                }
            })
            .collect();
        Ok(SimOutput {
            events: self.events,
            tasks,
            server_states: self.server.into_iter().collect(),
            plans: self.plans,
        })
    }
}
