//! Synchronous single-server model: every generation takes one unit, a task
//! issues its next request the moment its previous chunk finishes executing,
//! and the server runs one request at a time. Wait is queueing delay.

use std::collections::HashMap;

use kairos::platform::{EngineProfile, Tier};
use kairos::scheduler::{plan, PlacementContext, SchedulerConfig, SchedulingPolicy, TierView};
use kairos::task::{LastExecInfo, PendingRequest, RoundTimeline, TaskId, TaskState};
use kairos::time::{ControlRate, Duration, Interval, TimePoint};

pub const UNIT: u64 = 1_000_000;

#[derive(Debug, Clone)]
pub struct Instance {
    pub arrivals: Vec<u64>,
    /// Execution time of each round, in microseconds.
    pub execs: Vec<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Run {
    pub total_wait: u64,
    /// (task, round) in dispatch order.
    pub order: Vec<(usize, usize)>,
    pub completion: Vec<u64>,
}

enum Step {
    Done(Run),
    Choose(usize),
}

fn id(task: usize) -> TaskId {
    TaskId(format!("task{}", task + 1))
}

/// Replays the instance, asking `choose` for the index of the pending
/// request to serve whenever the server is idle with work waiting. Pending
/// requests are presented in issue order.
fn simulate(
    inst: &Instance,
    choose: &mut dyn FnMut(u64, &[(usize, usize, u64)], &[Vec<(u64, u64)>]) -> Option<usize>,
) -> Step {
    let n = inst.arrivals.len();
    let mut next_issue: Vec<Option<u64>> = inst.arrivals.iter().map(|&a| Some(a)).collect();
    let mut next_round = vec![0usize; n];
    let mut pending: Vec<(usize, usize, u64)> = Vec::new();
    let mut dispatched: Vec<Vec<(u64, u64)>> = vec![Vec::new(); n];
    let mut free_at = 0u64;
    let mut run = Run {
        total_wait: 0,
        order: Vec::new(),
        completion: vec![0; n],
    };
    let mut now = 0u64;
    loop {
        for task in 0..n {
            if let Some(at) = next_issue[task].filter(|&at| at <= now) {
                pending.push((task, next_round[task], at));
                next_issue[task] = None;
            }
        }
        pending.sort_by_key(|&(task, _, at)| (at, task));
        if free_at <= now && !pending.is_empty() {
            let k = match choose(now, &pending, &dispatched) {
                Some(k) => k,
                None => return Step::Choose(pending.len()),
            };
            let (task, round, issued) = pending.remove(k);
            run.total_wait += now - issued;
            run.order.push((task, round));
            let exec = inst.execs[task][round];
            dispatched[task].push((now, exec));
            free_at = now + UNIT;
            let end = free_at + exec;
            next_round[task] += 1;
            if next_round[task] < inst.execs[task].len() {
                next_issue[task] = Some(end);
            } else {
                run.completion[task] = end;
            }
            continue;
        }
        let next = next_issue
            .iter()
            .flatten()
            .copied()
            .chain((!pending.is_empty()).then_some(free_at))
            .min();
        match next {
            Some(t) => now = t,
            None => return Step::Done(run),
        }
    }
}

/// Every complete dispatch order and its outcome.
pub fn enumerate(inst: &Instance) -> Vec<Run> {
    let mut out = Vec::new();
    let mut stack: Vec<Vec<usize>> = vec![Vec::new()];
    while let Some(prefix) = stack.pop() {
        let mut pos = 0;
        let step = simulate(inst, &mut |_, _, _| {
            let r = prefix.get(pos).copied();
            pos += 1;
            r
        });
        match step {
            Step::Done(run) => out.push(run),
            Step::Choose(k) => {
                for c in (0..k).rev() {
                    let mut p = prefix.clone();
                    p.push(c);
                    stack.push(p);
                }
            }
        }
    }
    out
}

/// Replays the instance with the library planner choosing at each decision.
pub fn with_policy(inst: &Instance, policy: SchedulingPolicy) -> Run {
    let rate = ControlRate::new(30).unwrap();
    let profile = EngineProfile::new(Tier::Edge, 1, 1, vec![(1, UNIT)], 1).unwrap();
    let cfg = SchedulerConfig {
        stale_threshold: Some(Duration(u64::MAX)),
        ..SchedulerConfig::with_policy(policy)
    };
    let mut skipped: HashMap<TaskId, u32> = HashMap::new();
    let step = simulate(inst, &mut |now, pending, dispatched| {
        let mut states = HashMap::new();
        let mut reqs = Vec::new();
        for &(task, round, issued) in pending {
            let tid = id(task);
            let mut st = TaskState::new(tid.clone(), rate, TimePoint(inst.arrivals[task]));
            for (r, &(start, exec)) in dispatched[task].iter().enumerate() {
                let g = Interval::new(TimePoint(start), TimePoint(start + UNIT)).unwrap();
                let e = Interval::new(g.end, TimePoint(start + UNIT + exec)).unwrap();
                st.push_round(RoundTimeline { round_id: r as u32, gen: g, exec: e, horizon_used: 1 }).unwrap();
                st.accumulated_generation = st.accumulated_generation + g.len();
            }
            st.skipped = skipped.get(&tid).copied().unwrap_or(0);
            let last_exec_info = dispatched[task].last().map(|&(start, _)| LastExecInfo {
                exec_start: TimePoint(start + UNIT),
                remaining_actions: 0,
            });
            reqs.push(PendingRequest {
                task_id: tid.clone(),
                round_id: round as u32,
                issued_at: TimePoint(issued),
                arrived_at: TimePoint(issued),
                obs_captured_at: TimePoint(issued),
                last_exec_info,
                obs_payload_bytes: 0,
                action_payload_bytes: 0,
                skipped: st.skipped,
            });
            states.insert(tid, st);
        }
        let ctx = PlacementContext {
            edge: TierView::idle(&profile),
            cloud: None,
            edge_network: None,
        };
        let p = plan(reqs, &mut states, &ctx, TimePoint(now), &cfg).unwrap();
        for r in &p.deferred {
            skipped.insert(r.task_id.clone(), r.skipped);
        }
        let chosen = &p.edge[0].task_id;
        skipped.insert(chosen.clone(), 0);
        pending.iter().position(|&(task, _, _)| &id(task) == chosen)
    });
    match step {
        Step::Done(run) => run,
        Step::Choose(_) => unreachable!("planner always picks"),
    }
}
