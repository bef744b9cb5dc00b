//! Discrete-event execution of explicit per-processor schedules.
//!
//! This is the cross-check for the closed-form phase model. Each processor
//! walks an op list: `Run` issues a task into a pool, the pool starts tasks on
//! free threads once their inputs are present locally (lowest op position
//! first), and the blocking ops (`Fence`, `Wait`, `Sync`) stall issue.
//! Transfers leave their sender once the element exists there, the earliest
//! send time has passed and, for epoch-tagged transfers, both ends have posted
//! that epoch. Transfers that leave together from one sender to one receiver
//! form a single message; it reaches the receiver's port `alpha` later and the
//! port drains messages in arrival order at `beta` per element.

use alloc::collections::{BTreeMap, BTreeSet, BinaryHeap};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Reverse;

use crate::avoid::MacroStepPlan;
use crate::cover::{validate_cover, CoverError, LevelCover};
use crate::graph::{NodeId, TaskGraph, TaskSet};

use super::{CostModel, SimError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Op {
    Run(NodeId),
    /// Wait until every issued task of this processor has finished.
    Fence,
    /// Post the transfers of an epoch.
    Post(u32),
    /// Wait until every epoch transfer addressed here has been delivered.
    Wait(u32),
    /// Local fence followed by a barrier across all processors.
    Sync,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ProcSchedule {
    pub proc: usize,
    pub ops: Vec<Op>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Transfer {
    pub element: NodeId,
    pub from: usize,
    pub to: usize,
    pub earliest_send: u64,
    pub epoch: Option<u32>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct OracleInput {
    pub schedules: Vec<ProcSchedule>,
    pub transfers: Vec<Transfer>,
    /// Data present on each processor at time 0.
    pub initial: Vec<TaskSet>,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum OracleError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("bad schedule: {0}")]
    BadSchedule(String),
    #[error("deadlock at time {time}: {}", .frontier.join("; "))]
    Deadlock { time: u64, frontier: Vec<String> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Event {
    TaskDone { proc: usize, task: NodeId },
    AtPort(usize),
    Delivered(usize),
    Wake,
}

struct Message {
    to: usize,
    epoch: Option<u32>,
    elements: Vec<NodeId>,
}

#[derive(Default)]
struct ProcState {
    ops: Vec<Op>,
    pc: usize,
    pool: BTreeSet<(usize, NodeId)>,
    running: usize,
    available: Vec<bool>,
    posted: BTreeSet<u32>,
    finished_at: Option<u64>,
    port_busy: bool,
    port_queue: BTreeSet<(u64, usize, usize)>,
}

impl ProcState {
    fn idle(&self) -> bool {
        self.pool.is_empty() && self.running == 0
    }

    fn at_sync(&self) -> bool {
        self.ops.get(self.pc) == Some(&Op::Sync) && self.idle()
    }
}

/// Runs the schedules and returns the makespan: the time the last processor
/// has issued all its ops and finished all its tasks.
pub fn event_sim_oracle(g: &TaskGraph, input: &OracleInput, m: &CostModel) -> Result<u64, OracleError> {
    m.check_nodes(g.nprocs())?;
    let np = g.nprocs();
    let n = g.len();
    let mut procs: Vec<ProcState> = (0..np)
        .map(|_| ProcState {
            available: vec![false; n],
            ..ProcState::default()
        })
        .collect();
    for sched in &input.schedules {
        let st = procs
            .get_mut(sched.proc)
            .ok_or_else(|| OracleError::BadSchedule(format!("no processor {}", sched.proc)))?;
        for op in &sched.ops {
            if let Op::Run(v) = op {
                g.check(*v).map_err(SimError::from)?;
            }
        }
        st.ops.extend_from_slice(&sched.ops);
    }
    for (p, set) in input.initial.iter().enumerate() {
        let st = procs
            .get_mut(p)
            .ok_or_else(|| OracleError::BadSchedule(format!("initial data for processor {p}")))?;
        for &v in set {
            g.check(v).map_err(SimError::from)?;
            st.available[v.index()] = true;
        }
    }
    let mut outstanding: BTreeMap<(usize, u32), usize> = BTreeMap::new();
    let mut events: BinaryHeap<Reverse<(u64, Event)>> = BinaryHeap::new();
    for t in &input.transfers {
        if t.from >= np || t.to >= np {
            return Err(OracleError::BadSchedule(format!(
                "transfer {} -> {} outside {np} processors",
                t.from, t.to
            )));
        }
        g.check(t.element).map_err(SimError::from)?;
        if let Some(e) = t.epoch {
            *outstanding.entry((t.to, e)).or_default() += 1;
        }
        if t.earliest_send > 0 {
            events.push(Reverse((t.earliest_send, Event::Wake)));
        }
    }
    let mut pending: Vec<Transfer> = input.transfers.clone();
    let mut messages: Vec<Message> = Vec::new();
    let threads = m.threads as usize;
    let mut now = 0u64;

    loop {
        loop {
            let mut progress = false;
            while let Some(&Reverse((t, ev))) = events.peek() {
                if t != now {
                    break;
                }
                events.pop();
                progress = true;
                match ev {
                    Event::TaskDone { proc, task } => {
                        procs[proc].running -= 1;
                        procs[proc].available[task.index()] = true;
                    }
                    Event::AtPort(i) => {
                        let msg = &messages[i];
                        procs[msg.to].port_queue.insert((now, i, msg.elements.len()));
                    }
                    Event::Delivered(i) => {
                        let msg = &messages[i];
                        let st = &mut procs[msg.to];
                        st.port_busy = false;
                        for &v in &msg.elements {
                            st.available[v.index()] = true;
                        }
                        if let Some(e) = msg.epoch {
                            *outstanding.get_mut(&(msg.to, e)).expect("counted") -= msg.elements.len();
                        }
                    }
                    Event::Wake => {}
                }
            }

            for st in procs.iter_mut() {
                if st.port_busy {
                    continue;
                }
                if let Some(first) = st.port_queue.pop_first() {
                    let (_, i, len) = first;
                    st.port_busy = true;
                    events.push(Reverse((now + m.beta * len as u64, Event::Delivered(i))));
                    progress = true;
                }
            }

            // Issue ops.
            let all_at_sync = procs.iter().all(ProcState::at_sync);
            for (p, st) in procs.iter_mut().enumerate() {
                while let Some(&op) = st.ops.get(st.pc) {
                    let pass = match op {
                        Op::Run(v) => {
                            st.pool.insert((st.pc, v));
                            true
                        }
                        Op::Fence => st.idle(),
                        Op::Post(e) => {
                            st.posted.insert(e);
                            true
                        }
                        Op::Wait(e) => outstanding.get(&(p, e)).is_none_or(|&c| c == 0),
                        Op::Sync => all_at_sync,
                    };
                    if !pass {
                        break;
                    }
                    st.pc += 1;
                    progress = true;
                    if op == Op::Sync {
                        // One barrier release per round.
                        break;
                    }
                }
            }

            // Start ready tasks, lowest op position first.
            for (p, st) in procs.iter_mut().enumerate() {
                while st.running < threads {
                    let ready = st
                        .pool
                        .iter()
                        .copied()
                        .find(|&(_, v)| g.preds(v).iter().all(|u| st.available[u.index()]));
                    let Some(item) = ready else { break };
                    st.pool.remove(&item);
                    st.running += 1;
                    let task = item.1;
                    events.push(Reverse((now + g.weight(task), Event::TaskDone { proc: p, task })));
                    progress = true;
                }
            }

            // Depart transfers.
            let mut departing: BTreeMap<(usize, usize, Option<u32>), Vec<NodeId>> = BTreeMap::new();
            pending.retain(|t| {
                let ready = now >= t.earliest_send
                    && procs[t.from].available[t.element.index()]
                    && t.epoch.is_none_or(|e| {
                        procs[t.from].posted.contains(&e) && procs[t.to].posted.contains(&e)
                    });
                if ready {
                    departing.entry((t.from, t.to, t.epoch)).or_default().push(t.element);
                }
                !ready
            });
            for ((_, to, epoch), mut elements) in departing {
                elements.sort_unstable();
                events.push(Reverse((now + m.alpha, Event::AtPort(messages.len()))));
                messages.push(Message { to, epoch, elements });
                progress = true;
            }

            for st in procs.iter_mut() {
                if st.finished_at.is_none() && st.pc == st.ops.len() && st.idle() {
                    st.finished_at = Some(now);
                }
            }
            if !progress {
                break;
            }
        }

        if procs.iter().all(|st| st.finished_at.is_some()) {
            return Ok(procs.iter().filter_map(|st| st.finished_at).max().unwrap_or(0));
        }
        match events.peek() {
            Some(&Reverse((t, _))) => now = t,
            None => return Err(deadlock(g, &procs, now)),
        }
    }
}

fn deadlock(g: &TaskGraph, procs: &[ProcState], now: u64) -> OracleError {
    let frontier = procs
        .iter()
        .enumerate()
        .filter(|(_, st)| st.finished_at.is_none())
        .map(|(p, st)| {
            let waiting: Vec<&str> = st.pool.iter().map(|&(_, v)| g.id(v).as_str()).collect();
            format!(
                "processor {p} at op {} {:?}, waiting tasks [{}]",
                st.pc,
                st.ops.get(st.pc),
                waiting.join(", ")
            )
        })
        .collect();
    OracleError::Deadlock { time: now, frontier }
}

/// Appends `set` level by level, fencing after each internal dependency level.
fn push_levels(g: &TaskGraph, set: &TaskSet, ops: &mut Vec<Op>) {
    let mut order: Vec<NodeId> = set.iter().copied().collect();
    order.sort_by_key(|&v| (g.level(v), v));
    let mut depth: BTreeMap<NodeId, usize> = BTreeMap::new();
    let mut layers: Vec<Vec<NodeId>> = Vec::new();
    for v in order {
        let d = g
            .preds(v)
            .iter()
            .filter_map(|u| depth.get(u))
            .map(|&d| d + 1)
            .max()
            .unwrap_or(0);
        depth.insert(v, d);
        if layers.len() <= d {
            layers.resize(d + 1, Vec::new());
        }
        layers[d].push(v);
    }
    for mut layer in layers {
        layer.sort_unstable();
        ops.extend(layer.into_iter().map(Op::Run));
        ops.push(Op::Fence);
    }
}

fn owned_sources(g: &TaskGraph) -> Vec<TaskSet> {
    let mut out = vec![TaskSet::new(); g.nprocs()];
    for v in g.nodes().filter(|&v| g.is_source(v)) {
        out[g.proc(v)].insert(v);
    }
    out
}

/// The plan executed exactly as the phase model assumes: `l1`, post, `l2`,
/// wait, `l3`, then a global barrier per macro-step.
pub fn phase_schedule(g: &TaskGraph, plan: &MacroStepPlan) -> OracleInput {
    let np = g.nprocs();
    let mut schedules: Vec<ProcSchedule> = (0..np)
        .map(|proc| ProcSchedule { proc, ops: Vec::new() })
        .collect();
    let mut transfers = Vec::new();
    for step in &plan.steps {
        let s = &step.split;
        let epoch = step.index as u32;
        for (p, sched) in schedules.iter_mut().enumerate() {
            let ps = &s.procs[p];
            push_levels(g, &ps.l1, &mut sched.ops);
            sched.ops.push(Op::Post(epoch));
            push_levels(g, &ps.l2, &mut sched.ops);
            sched.ops.push(Op::Wait(epoch));
            push_levels(g, &s.l3_compute(p), &mut sched.ops);
            sched.ops.push(Op::Sync);
        }
        for (&(from, to), set) in &s.recv {
            transfers.extend(set.iter().map(|&element| Transfer {
                element,
                from,
                to,
                earliest_send: 0,
                epoch: Some(epoch),
            }));
        }
    }
    OracleInput {
        schedules,
        transfers,
        initial: owned_sources(g),
    }
}

/// The same work and messages with every barrier removed: tasks start as soon
/// as their inputs exist and elements leave as soon as they are produced.
pub fn eager_schedule(g: &TaskGraph, plan: &MacroStepPlan) -> OracleInput {
    let mut input = phase_schedule(g, plan);
    for sched in &mut input.schedules {
        sched.ops.retain(|op| matches!(op, Op::Run(_)));
    }
    for t in &mut input.transfers {
        t.epoch = None;
    }
    input
}

/// Per cover level: exchange every remote predecessor, barrier, compute,
/// barrier.
pub fn naive_schedule(g: &TaskGraph, c: &LevelCover) -> Result<OracleInput, SimError> {
    let report = validate_cover(g, c)?;
    if !report.valid {
        return Err(CoverError::InvalidCover(report.violations.len()).into());
    }
    let np = g.nprocs();
    let mut schedules: Vec<ProcSchedule> = (0..np)
        .map(|proc| ProcSchedule { proc, ops: Vec::new() })
        .collect();
    let mut transfers = Vec::new();
    let levels: BTreeSet<u32> = c.blocks().keys().map(|&(k, _)| k).collect();
    for k in levels {
        for (p, sched) in schedules.iter_mut().enumerate() {
            let block = c.block(k, p).cloned().unwrap_or_default();
            let remote: TaskSet = block
                .iter()
                .flat_map(|&v| g.preds(v).iter().copied())
                .filter(|&u| g.proc(u) != p)
                .collect();
            transfers.extend(remote.into_iter().map(|element| Transfer {
                element,
                from: g.proc(element),
                to: p,
                earliest_send: 0,
                epoch: Some(k),
            }));
            let work: TaskSet = block.into_iter().filter(|&v| !g.is_source(v)).collect();
            sched.ops.extend([Op::Post(k), Op::Wait(k), Op::Sync]);
            push_levels(g, &work, &mut sched.ops);
            sched.ops.push(Op::Sync);
        }
    }
    Ok(OracleInput {
        schedules,
        transfers,
        initial: owned_sources(g),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::avoid::blocked_transform;
    use crate::generators::{per_level_cover, stencil_1d, StencilShape};
    use crate::graph::Task;
    use crate::sim::{simulate_blocked, simulate_naive};

    #[test]
    fn chain_on_one_thread() {
        let tasks = vec![Task::new("a", 0), Task::new("b", 0), Task::new("c", 0)];
        let g = TaskGraph::build(tasks, &[("a".into(), "b".into()), ("b".into(), "c".into())], 1).unwrap();
        let input = OracleInput {
            schedules: vec![ProcSchedule {
                proc: 0,
                ops: g.nodes().map(Op::Run).collect(),
            }],
            ..OracleInput::default()
        };
        let m = CostModel::new(0, 0, 1, 1).unwrap();
        assert_eq!(event_sim_oracle(&g, &input, &m), Ok(3));
    }

    #[test]
    fn missing_transfer_deadlocks() {
        let tasks = vec![Task::new("a", 0), Task::new("b", 1)];
        let g = TaskGraph::build(tasks, &[("a".into(), "b".into())], 2).unwrap();
        let input = OracleInput {
            schedules: vec![
                ProcSchedule { proc: 0, ops: vec![Op::Run(NodeId(0))] },
                ProcSchedule { proc: 1, ops: vec![Op::Run(NodeId(1))] },
            ],
            ..OracleInput::default()
        };
        let m = CostModel::new(1, 0, 1, 2).unwrap();
        match event_sim_oracle(&g, &input, &m) {
            Err(OracleError::Deadlock { frontier, .. }) => {
                assert_eq!(frontier.len(), 1);
                assert!(frontier[0].contains("[b]"), "{frontier:?}");
            }
            other => panic!("expected deadlock, got {other:?}"),
        }
    }

    #[test]
    fn s8_phase_schedule_matches_model() {
        let g = stencil_1d(StencilShape::new(8, 2, 2, 1)).unwrap();
        let c = per_level_cover(&g);
        for b in 1..=2 {
            let plan = blocked_transform(&g, &c, b).unwrap();
            for (alpha, beta, w) in [(0, 1, 3), (10, 0, 4), (3, 2, 1), (0, 0, 2)] {
                let m = CostModel::new(alpha, beta, w, 2).unwrap();
                let model = simulate_blocked(&plan, &g, &m).unwrap().total;
                assert_eq!(event_sim_oracle(&g, &phase_schedule(&g, &plan), &m), Ok(model));
                let eager = event_sim_oracle(&g, &eager_schedule(&g, &plan), &m).unwrap();
                assert!(eager <= model, "eager {eager} > phase {model}");
            }
        }
        let m = CostModel::new(10, 0, 4, 2).unwrap();
        let naive = simulate_naive(&c, &g, &m).unwrap().total;
        assert_eq!(event_sim_oracle(&g, &naive_schedule(&g, &c).unwrap(), &m), Ok(naive));
    }

    #[test]
    fn eager_sends_can_block_the_port() {
        // Sends hoisted from later steps reach the FIFO port first and delay
        // data the current step needs, so dropping barriers is not free once
        // each element costs port time.
        let procs = [1, 1, 0, 1, 0, 0, 1, 0, 1, 1, 0, 0, 1, 0];
        let edges = [
            (0, 2), (1, 2), (2, 3), (1, 4), (2, 5), (4, 5), (2, 7), (4, 7), (1, 8), (5, 8), (2, 9),
            (3, 9), (4, 9), (5, 9), (1, 10), (3, 10), (5, 10), (6, 10), (0, 11), (3, 11), (6, 11),
            (4, 12), (7, 12), (6, 13), (7, 13),
        ];
        let tasks = procs.iter().enumerate().map(|(i, &p)| Task::new(format!("t{i}"), p)).collect();
        let edges: Vec<_> = edges
            .iter()
            .map(|&(a, b)| (format!("t{a}").into(), format!("t{b}").into()))
            .collect();
        let g = TaskGraph::build(tasks, &edges, 2).unwrap();
        let plan = blocked_transform(&g, &per_level_cover(&g), 1).unwrap();
        let m = CostModel::new(0, 1, 2, 2).unwrap();
        assert_eq!(simulate_blocked(&plan, &g, &m).unwrap().total, 11);
        assert_eq!(event_sim_oracle(&g, &phase_schedule(&g, &plan), &m), Ok(11));
        assert_eq!(event_sim_oracle(&g, &eager_schedule(&g, &plan), &m), Ok(13));
        let free = CostModel::new(0, 0, 2, 2).unwrap();
        let phase = simulate_blocked(&plan, &g, &free).unwrap().total;
        assert!(event_sim_oracle(&g, &eager_schedule(&g, &plan), &free).unwrap() <= phase);
    }
}
