use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::{self, Write as _};

use crate::avoid::MacroStepPlan;
use crate::cover::{validate_cover, CoverError, LevelCover};
use crate::graph::{NodeId, TaskGraph, TaskSet};

use super::{CostModel, SimError};

/// Work of a task set bucketed by dependency depth inside the set.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LevelProfile {
    weights: Vec<u64>,
    tasks: usize,
}

impl LevelProfile {
    pub fn of(g: &TaskGraph, set: &TaskSet) -> Self {
        let mut order: Vec<NodeId> = set.iter().copied().collect();
        order.sort_by_key(|&v| (g.level(v), v));
        let mut depth: BTreeMap<NodeId, usize> = BTreeMap::new();
        let mut weights: Vec<u64> = Vec::new();
        for v in order {
            let d = g
                .preds(v)
                .iter()
                .filter_map(|u| depth.get(u))
                .map(|&d| d + 1)
                .max()
                .unwrap_or(0);
            depth.insert(v, d);
            if weights.len() <= d {
                weights.resize(d + 1, 0);
            }
            weights[d] += g.weight(v);
        }
        LevelProfile {
            weights,
            tasks: set.len(),
        }
    }

    pub fn tasks(&self) -> usize {
        self.tasks
    }

    /// Number of internal dependency levels.
    pub fn depth(&self) -> usize {
        self.weights.len()
    }

    /// Level-by-level execution on `threads` workers: `Σ ⌈W_l / threads⌉`.
    pub fn time(&self, threads: u32) -> u64 {
        let w = u64::from(threads.max(1));
        self.weights.iter().map(|&x| x.div_ceil(w)).sum()
    }
}

/// Parallel time of `set` on `threads` workers, levelling the induced
/// subgraph by internal dependency depth.
pub fn parallel_time(g: &TaskGraph, set: &TaskSet, threads: u32) -> Result<u64, SimError> {
    if threads == 0 {
        return Err(SimError::ZeroThreads);
    }
    g.check_all(set)?;
    Ok(LevelProfile::of(g, set).time(threads))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PhaseRow {
    pub proc: usize,
    pub k1_tasks: usize,
    pub k1_pt: u64,
    pub recv_elems: usize,
    pub recv_time: u64,
    pub k2_tasks: usize,
    pub k2_pt: u64,
    pub k3_tasks: usize,
    pub k3_pt: u64,
    /// Time `k3` waits for data beyond the end of `k2`.
    pub stall: u64,
    pub total: u64,
}

impl PhaseRow {
    /// The middle term: receiving overlaps the `k2` work.
    pub fn overlapped(&self) -> u64 {
        self.k2_pt.max(self.recv_time)
    }

    fn same_phases(&self, other: &PhaseRow) -> bool {
        PhaseRow { proc: 0, ..*self } == PhaseRow { proc: 0, ..*other }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StepTrace {
    pub index: usize,
    pub rows: Vec<PhaseRow>,
    /// Slowest processor; macro-steps end on a global boundary.
    pub total: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PhaseTrace {
    pub steps: Vec<StepTrace>,
    pub total: u64,
}

impl PhaseTrace {
    pub fn nprocs(&self) -> usize {
        self.steps.first().map_or(0, |s| s.rows.len())
    }

    /// Rows of one node across all macro-steps.
    pub fn node_rows(&self, p: usize) -> impl Iterator<Item = &PhaseRow> + '_ {
        self.steps.iter().filter_map(move |s| s.rows.get(p))
    }

    /// The per-node execution listing.
    pub fn listing(&self, p: usize) -> String {
        let rows: Vec<&PhaseRow> = self.node_rows(p).collect();
        let nsteps = rows.len();
        let uniform = rows.windows(2).all(|w| w[0].same_phases(w[1]));
        let mut out = String::new();
        let _ = writeln!(out, "Graph on node {p},");
        let _ = writeln!(out, "    execution of {nsteps} macro steps:");
        let shown: &[&PhaseRow] = if uniform && nsteps > 0 { &rows[..1] } else { &rows };
        for (s, r) in shown.iter().enumerate() {
            if shown.len() > 1 {
                let _ = writeln!(out, "macro step {s}:");
            }
            let _ = writeln!(out, "k1 local execution: {}", r.k1_tasks);
            let _ = writeln!(out, "  parallel time: {}", r.k1_pt);
            let _ = writeln!(out, "k3 receive: {}", r.recv_time);
            let _ = writeln!(out, "k2 local execution: {}", r.k2_tasks);
            let _ = writeln!(out, "  parallel time: {}", r.k2_pt);
            let _ = writeln!(out, "k3 local execution: {}", r.k3_tasks);
            let _ = writeln!(out, "  parallel time: {}", r.k3_pt);
        }
        let total: u64 = rows.iter().map(|r| r.total).sum();
        let term = |r: &PhaseRow| alloc::format!("({}+{}+{})", r.k1_pt, r.overlapped(), r.k3_pt);
        if uniform && nsteps > 0 {
            let _ = writeln!(out, "total parallel time : {nsteps}*{} = {total}", term(rows[0]));
        } else {
            let terms: Vec<String> = rows.iter().map(|r| term(r)).collect();
            let sum = if terms.is_empty() { "0".into() } else { terms.join("+") };
            let _ = writeln!(out, "total parallel time : {sum} = {total}");
        }
        let _ = writeln!(out, "overlap analysis:");
        for r in shown {
            let _ = writeln!(out, "  {} tasks to recv, {} k2 parallel time", r.recv_elems, r.k2_pt);
        }
        out
    }
}

impl fmt::Display for PhaseTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in 0..self.nprocs() {
            if p > 0 {
                writeln!(f)?;
            }
            f.write_str(&self.listing(p))?;
        }
        writeln!(f)?;
        write!(f, "simulated total: {}", self.total)
    }
}

#[derive(Clone, Debug, Default)]
struct ProcPhases {
    k1: LevelProfile,
    k2: LevelProfile,
    k3: LevelProfile,
    /// `(sender, elements)`.
    incoming: Vec<(usize, usize)>,
}

/// A verified plan reduced to what the cost model needs, so one plan can be
/// evaluated under many cost models cheaply.
#[derive(Clone, Debug)]
pub struct BlockedProfile {
    nprocs: usize,
    steps: Vec<Vec<ProcPhases>>,
}

impl BlockedProfile {
    pub fn new(g: &TaskGraph, plan: &MacroStepPlan) -> Result<Self, SimError> {
        let violations = plan.verify(g);
        if !violations.is_empty() {
            return Err(SimError::MalformedPlan(violations.len()));
        }
        let steps = plan
            .steps
            .iter()
            .map(|st| {
                let s = &st.split;
                (0..s.nprocs())
                    .map(|p| ProcPhases {
                        k1: LevelProfile::of(g, &s.procs[p].l1),
                        k2: LevelProfile::of(g, &s.procs[p].l2),
                        k3: LevelProfile::of(g, &s.l3_compute(p)),
                        incoming: s
                            .incoming(p)
                            .filter(|(_, set)| !set.is_empty())
                            .map(|(q, set)| (q, set.len()))
                            .collect(),
                    })
                    .collect()
            })
            .collect();
        Ok(BlockedProfile {
            nprocs: g.nprocs(),
            steps,
        })
    }

    pub fn simulate(&self, m: &CostModel) -> Result<PhaseTrace, SimError> {
        m.check_nodes(self.nprocs)?;
        let mut trace = PhaseTrace::default();
        for (index, procs) in self.steps.iter().enumerate() {
            let k1: Vec<u64> = procs.iter().map(|ph| ph.k1.time(m.threads)).collect();
            let mut rows = Vec::with_capacity(procs.len());
            for (p, ph) in procs.iter().enumerate() {
                let recv_elems: usize = ph.incoming.iter().map(|&(_, n)| n).sum();
                let recv_time = receive_window(k1[p], &k1, &ph.incoming, m);
                let k2_pt = ph.k2.time(m.threads);
                let k3_pt = ph.k3.time(m.threads);
                rows.push(PhaseRow {
                    proc: p,
                    k1_tasks: ph.k1.tasks(),
                    k1_pt: k1[p],
                    recv_elems,
                    recv_time,
                    k2_tasks: ph.k2.tasks(),
                    k2_pt,
                    k3_tasks: ph.k3.tasks(),
                    k3_pt,
                    stall: recv_time.saturating_sub(k2_pt),
                    total: k1[p] + k2_pt.max(recv_time) + k3_pt,
                });
            }
            let total = rows.iter().map(|r| r.total).max().unwrap_or(0);
            trace.total += total;
            trace.steps.push(StepTrace { index, rows, total });
        }
        Ok(trace)
    }
}

/// Time from the end of the receiver's `k1` until its last element arrives.
/// A message leaves once both sides have finished `k1`; latencies overlap
/// while a single receive port serialises the per-element cost.
fn receive_window(own_k1: u64, k1: &[u64], incoming: &[(usize, usize)], m: &CostModel) -> u64 {
    if incoming.is_empty() {
        return 0;
    }
    let mut msgs: Vec<(u64, usize, usize)> = incoming
        .iter()
        .map(|&(q, n)| (own_k1.max(k1[q]), q, n))
        .collect();
    msgs.sort_unstable();
    let mut port = 0u64;
    for (depart, _, n) in msgs {
        port = (depart + m.alpha).max(port) + m.beta * n as u64;
    }
    port - own_k1
}

pub fn simulate_blocked(plan: &MacroStepPlan, g: &TaskGraph, m: &CostModel) -> Result<PhaseTrace, SimError> {
    m.check_nodes(g.nprocs())?;
    BlockedProfile::new(g, plan)?.simulate(m)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct NaiveRow {
    pub proc: usize,
    pub tasks: usize,
    pub pt: u64,
    pub recv_elems: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NaiveLevel {
    pub k: u32,
    pub rows: Vec<NaiveRow>,
    /// Unoverlapped message phase before the level computes.
    pub comm_time: u64,
    pub compute_time: u64,
    pub total: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NaiveTrace {
    pub levels: Vec<NaiveLevel>,
    pub total: u64,
}

impl fmt::Display for NaiveTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "naive execution of {} levels:", self.levels.len())?;
        for l in &self.levels {
            writeln!(
                f,
                "level {}: receive {} + compute {} = {}",
                l.k, l.comm_time, l.compute_time, l.total
            )?;
        }
        write!(f, "total parallel time : {}", self.total)
    }
}

/// Per processor of one level: (processor, computed work, remote elements).
type LevelBlocks = Vec<(usize, LevelProfile, usize)>;

#[derive(Clone, Debug)]
pub struct NaiveProfile {
    nprocs: usize,
    levels: Vec<(u32, LevelBlocks)>,
}

impl NaiveProfile {
    /// Sources are initial data and never charged.
    pub fn new(g: &TaskGraph, c: &LevelCover) -> Result<Self, SimError> {
        let report = validate_cover(g, c)?;
        if !report.valid {
            return Err(CoverError::InvalidCover(report.violations.len()).into());
        }
        let mut levels: Vec<(u32, LevelBlocks)> = Vec::new();
        for (&(k, p), block) in c.blocks() {
            let work: TaskSet = block.iter().copied().filter(|&v| !g.is_source(v)).collect();
            let remote: TaskSet = block
                .iter()
                .flat_map(|&v| g.preds(v).iter().copied())
                .filter(|&u| g.proc(u) != p)
                .collect();
            let entry = (p, LevelProfile::of(g, &work), remote.len());
            match levels.last_mut() {
                Some((last, rows)) if *last == k => rows.push(entry),
                _ => levels.push((k, alloc::vec![entry])),
            }
        }
        Ok(NaiveProfile {
            nprocs: g.nprocs(),
            levels,
        })
    }

    pub fn simulate(&self, m: &CostModel) -> Result<NaiveTrace, SimError> {
        m.check_nodes(self.nprocs)?;
        let mut trace = NaiveTrace::default();
        for (k, entries) in &self.levels {
            let rows: Vec<NaiveRow> = entries
                .iter()
                .map(|(p, prof, recv)| NaiveRow {
                    proc: *p,
                    tasks: prof.tasks(),
                    pt: prof.time(m.threads),
                    recv_elems: *recv,
                })
                .collect();
            let max_recv = rows.iter().map(|r| r.recv_elems).max().unwrap_or(0);
            let comm_time = if max_recv > 0 {
                m.alpha + m.beta * max_recv as u64
            } else {
                0
            };
            let compute_time = rows.iter().map(|r| r.pt).max().unwrap_or(0);
            let total = comm_time + compute_time;
            trace.total += total;
            trace.levels.push(NaiveLevel {
                k: *k,
                rows,
                comm_time,
                compute_time,
                total,
            });
        }
        Ok(trace)
    }
}

/// One unoverlapped message phase per cover level, then the level's work.
pub fn simulate_naive(c: &LevelCover, g: &TaskGraph, m: &CostModel) -> Result<NaiveTrace, SimError> {
    m.check_nodes(g.nprocs())?;
    NaiveProfile::new(g, c)?.simulate(m)
}
