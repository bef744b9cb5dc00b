//! Communication-avoiding splitting of a distributed task graph.
//!
//! For every processor `p` the split derives
//!
//! * `l0`: data present before the step (initial conditions or results of the
//!   previous macro-step),
//! * `l4`: target tasks computable from `l0` alone,
//! * `l5`: everything needed anywhere to produce the target,
//! * `l1 = (l4 ∩ ⋃_{q≠p} l5_q) - l0`: local tasks some other processor needs,
//!   computed first and sent,
//! * `l2 = l4 - l1`: purely local work that overlaps the sends,
//! * `l3`: the halo closure computed after remote data arrives.
//!
//! Remote tasks that are available as another processor's `l0` or `l1` are
//! received rather than recomputed; everything else in the halo closure is
//! recomputed locally, which is where redundant work comes from.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::cover::{validate_cover, CoverError, LevelCover};
use crate::graph::{GraphError, NodeId, Task, TaskGraph, TaskSet};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ProcSplit {
    /// The tasks `L_p` this processor must produce.
    pub target: TaskSet,
    pub l0: TaskSet,
    pub l1: TaskSet,
    pub l2: TaskSet,
    /// Halo closure; includes remote initial data obtained by message.
    pub l3: TaskSet,
    pub l4: TaskSet,
    pub l5: TaskSet,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AvoidSplit {
    pub procs: Vec<ProcSplit>,
    /// Elements sent from `q` to `p`, keyed `(q, p)`. Only nonempty entries.
    pub recv: BTreeMap<(usize, usize), TaskSet>,
}

impl AvoidSplit {
    pub fn nprocs(&self) -> usize {
        self.procs.len()
    }

    /// Everything `p` receives, from any sender.
    pub fn received(&self, p: usize) -> TaskSet {
        self.recv
            .iter()
            .filter(|(&(_, to), _)| to == p)
            .flat_map(|(_, s)| s.iter().copied())
            .collect()
    }

    pub fn incoming(&self, p: usize) -> impl Iterator<Item = (usize, &TaskSet)> + '_ {
        self.recv
            .iter()
            .filter(move |(&(_, to), _)| to == p)
            .map(|(&(from, _), s)| (from, s))
    }

    /// The part of `l3` that `p` computes itself.
    pub fn l3_compute(&self, p: usize) -> TaskSet {
        let received = self.received(p);
        self.procs[p].l3.difference(&received).copied().collect()
    }

    /// All tasks `p` executes in this split.
    pub fn computed(&self, p: usize) -> TaskSet {
        let s = &self.procs[p];
        let mut out: TaskSet = s.l1.union(&s.l2).copied().collect();
        out.extend(self.l3_compute(p));
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum SplitError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Cover(#[from] CoverError),
    #[error("expected one target and one initial set per processor ({expected}), got {got}")]
    ProcCount { expected: usize, got: usize },
    #[error("target task {task} of processor {proc} is owned by processor {owner}")]
    TargetNotOwned {
        task: String,
        proc: usize,
        owner: usize,
    },
    #[error("processor {proc} needs initial datum {task} that no processor holds")]
    Unreachable { task: String, proc: usize },
    #[error("block size must be at least 1")]
    BadBlockSize,
    #[error("cover is not leveled: task {0} is not in the block of its dependency depth")]
    NotLeveled(String),
    #[error("split is not well-formed ({0} violations)")]
    MalformedSplit(usize),
    #[error("task {task} is computed twice on processor {proc}")]
    DuplicateInstance { task: String, proc: usize },
}

/// Per-task bookkeeping shared by all processors of one split.
struct Holders {
    /// Processors whose `l0` holds the task.
    initial: Vec<Vec<usize>>,
    /// Processor whose `l1` holds the task.
    sent: Vec<Option<usize>>,
}

impl Holders {
    /// Processor `p` can obtain `v` by message from the returned sender.
    fn sender_for(&self, g: &TaskGraph, v: NodeId, p: usize) -> Option<usize> {
        if let Some(q) = self.sent[v.index()].filter(|&q| q != p) {
            return Some(q);
        }
        let holders = &self.initial[v.index()];
        let owner = g.proc(v);
        if owner != p && holders.contains(&owner) {
            return Some(owner);
        }
        holders.iter().copied().find(|&q| q != p)
    }
}

/// Derives `l0..l5`, the communicated sets, and the halo for every processor.
///
/// `targets[p]` must be owned by `p`; `initial[p]` is data already present on
/// `p` and is never recomputed.
pub fn split(g: &TaskGraph, targets: &[TaskSet], initial: &[TaskSet]) -> Result<AvoidSplit, SplitError> {
    let np = g.nprocs();
    for got in [targets.len(), initial.len()] {
        if got != np {
            return Err(SplitError::ProcCount { expected: np, got });
        }
    }
    for (p, set) in targets.iter().enumerate() {
        g.check_all(set)?;
        if let Some(&v) = set.iter().find(|&&v| g.proc(v) != p) {
            return Err(SplitError::TargetNotOwned {
                task: g.id(v).0.clone(),
                proc: p,
                owner: g.proc(v),
            });
        }
    }
    for set in initial {
        g.check_all(set)?;
    }

    let n = g.len();
    let mut holders = Holders {
        initial: vec![Vec::new(); n],
        sent: vec![None; n],
    };
    for (p, set) in initial.iter().enumerate() {
        for v in set {
            holders.initial[v.index()].push(p);
        }
    }
    let is_initial = |v: NodeId| !holders.initial[v.index()].is_empty();

    let mut procs: Vec<ProcSplit> = Vec::with_capacity(np);
    let mut l5_count = vec![0u32; n];
    for p in 0..np {
        let l0 = initial[p].clone();
        let target = targets[p].clone();

        // Least fixed point; one pass in dependency order suffices.
        let mut order: Vec<NodeId> = target.iter().copied().filter(|v| !l0.contains(v)).collect();
        order.sort_by_key(|&v| (g.level(v), v));
        let mut l4 = TaskSet::new();
        for v in order {
            if g.preds(v).iter().all(|u| l0.contains(u) || l4.contains(u)) {
                l4.insert(v);
            }
        }

        let mut l5 = g.closure_until(&target, is_initial);
        l5.extend(l0.iter().copied());
        for v in &l5 {
            l5_count[v.index()] += 1;
        }
        procs.push(ProcSplit {
            target,
            l0,
            l4,
            l5,
            ..ProcSplit::default()
        });
    }

    for s in procs.iter_mut() {
        let needed_elsewhere = |v: &NodeId| l5_count[v.index()] > u32::from(s.l5.contains(v));
        s.l1 = s
            .l4
            .iter()
            .copied()
            .filter(|v| needed_elsewhere(v) && !s.l0.contains(v))
            .collect();
        s.l2 = s.l4.difference(&s.l1).copied().collect();
    }
    for (p, s) in procs.iter().enumerate() {
        for v in &s.l1 {
            holders.sent[v.index()] = Some(p);
        }
    }

    // Walk back from the target: take local data, local work, or a message,
    // and recompute only what no processor can send.
    let mut recv: BTreeMap<(usize, usize), TaskSet> = BTreeMap::new();
    for (p, s) in procs.iter_mut().enumerate() {
        let mut seen = BTreeSet::new();
        let mut stack: Vec<NodeId> = s.target.iter().copied().collect();
        while let Some(v) = stack.pop() {
            if !seen.insert(v) || s.l0.contains(&v) {
                continue;
            }
            if s.l4.contains(&v) {
                stack.extend_from_slice(g.preds(v));
            } else if let Some(q) = holders.sender_for(g, v, p) {
                recv.entry((q, p)).or_default().insert(v);
                if holders.sent[v.index()].is_none() {
                    s.l3.insert(v);
                }
            } else if g.is_source(v) {
                return Err(SplitError::Unreachable {
                    task: g.id(v).0.clone(),
                    proc: p,
                });
            } else {
                s.l3.insert(v);
                stack.extend_from_slice(g.preds(v));
            }
        }
    }

    Ok(AvoidSplit { procs, recv })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum SplitCheck {
    /// `l1 ∪ l2` depend only on `l0 ∪ l4`.
    NoSync,
    /// `l3` is computable from local data, local work and received elements.
    Halo,
    /// The target is produced.
    Coverage,
    /// `l1` precedes `l2` precedes `l3`.
    Order,
    /// Received elements are held by the sender and not owned by the receiver.
    Transfer,
    /// `l1`, `l2`, `l3` overlap or `l4 ≠ l1 ∪ l2`.
    Structure,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitViolation {
    pub check: SplitCheck,
    pub proc: usize,
    pub task: NodeId,
    pub witness: Option<NodeId>,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WellFormedReport {
    pub ok: bool,
    pub violations: Vec<SplitViolation>,
}

pub fn verify_well_formed(g: &TaskGraph, s: &AvoidSplit) -> WellFormedReport {
    let mut out = Vec::new();
    let mut flag = |check, proc, task, witness, detail: String| {
        out.push(SplitViolation {
            check,
            proc,
            task,
            witness,
            detail,
        })
    };
    if s.nprocs() != g.nprocs() {
        return WellFormedReport {
            ok: false,
            violations: vec![SplitViolation {
                check: SplitCheck::Structure,
                proc: 0,
                task: NodeId(0),
                witness: None,
                detail: format!("split has {} processors, graph {}", s.nprocs(), g.nprocs()),
            }],
        };
    }
    let remote_initial = |p: usize, v: NodeId| {
        s.procs
            .iter()
            .enumerate()
            .any(|(q, other)| q != p && other.l0.contains(&v))
    };

    for (p, ps) in s.procs.iter().enumerate() {
        let received = s.received(p);
        let l3c = s.l3_compute(p);
        let l4: TaskSet = ps.l1.union(&ps.l2).copied().collect();

        for (a, b, name) in [(&ps.l1, &ps.l2, "l1/l2"), (&ps.l1, &ps.l3, "l1/l3"), (&ps.l2, &ps.l3, "l2/l3")] {
            if let Some(&v) = a.intersection(b).next() {
                flag(SplitCheck::Structure, p, v, None, format!("{name} overlap"));
            }
        }
        if l4 != ps.l4 {
            let v = *l4.symmetric_difference(&ps.l4).next().unwrap();
            flag(SplitCheck::Structure, p, v, None, "l4 differs from l1 ∪ l2".into());
        }

        for &v in l4.iter() {
            if let Some(&u) = g.preds(v).iter().find(|u| !ps.l0.contains(u) && !l4.contains(u)) {
                flag(
                    SplitCheck::NoSync,
                    p,
                    v,
                    Some(u),
                    format!("depends on {} outside l0 ∪ l4", g.id(u)),
                );
            }
        }
        for &v in &ps.l1 {
            if let Some(&u) = g.preds(v).iter().find(|u| ps.l2.contains(u) || ps.l3.contains(u)) {
                flag(SplitCheck::Order, p, v, Some(u), "l1 task depends on later subset".into());
            }
        }
        for &v in &ps.l2 {
            if let Some(&u) = g.preds(v).iter().find(|u| ps.l3.contains(u)) {
                flag(SplitCheck::Order, p, v, Some(u), "l2 task depends on l3".into());
            }
        }

        let available = |u: &NodeId| {
            ps.l0.contains(u)
                || l4.contains(u)
                || received.contains(u)
                || (l3c.contains(u) && !remote_initial(p, *u))
        };
        for &v in &l3c {
            if let Some(&u) = g.preds(v).iter().find(|u| !available(u)) {
                flag(
                    SplitCheck::Halo,
                    p,
                    v,
                    Some(u),
                    format!("predecessor {} is neither local, computed nor received", g.id(u)),
                );
            }
        }

        for v in ps.target.difference(&ps.l0) {
            if !l4.contains(v) && !l3c.contains(v) {
                flag(SplitCheck::Coverage, p, *v, None, "target task is never computed".into());
            }
        }

        for (q, set) in s.incoming(p) {
            for &v in set {
                let sender = &s.procs[q];
                if g.proc(v) == p {
                    flag(SplitCheck::Transfer, p, v, None, "receives its own task".into());
                } else if !sender.l0.contains(&v) && !sender.l1.contains(&v) {
                    flag(
                        SplitCheck::Transfer,
                        p,
                        v,
                        None,
                        format!("processor {q} neither holds nor sends it first"),
                    );
                }
            }
        }
    }
    out.sort_by_key(|v| (v.proc, v.check, v.task));
    WellFormedReport {
        ok: out.is_empty(),
        violations: out,
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ProcRedundancy {
    /// Tasks the processor owns and must produce.
    pub native: usize,
    /// Tasks it actually executes.
    pub computed: usize,
    pub redundant: usize,
    /// `redundant / native`, zero when nothing is native.
    pub ratio: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RedundancyReport {
    pub procs: Vec<ProcRedundancy>,
    pub native: usize,
    pub computed: usize,
    pub redundant: usize,
    /// Tasks executed on two or more processors.
    pub duplicated: usize,
}

impl RedundancyReport {
    fn absorb(&mut self, other: &RedundancyReport) {
        if self.procs.len() < other.procs.len() {
            self.procs.resize(other.procs.len(), ProcRedundancy::default());
        }
        for (mine, theirs) in self.procs.iter_mut().zip(&other.procs) {
            mine.native += theirs.native;
            mine.computed += theirs.computed;
            mine.redundant += theirs.redundant;
            mine.ratio = ratio(mine.redundant, mine.native);
        }
        self.native += other.native;
        self.computed += other.computed;
        self.redundant += other.redundant;
        self.duplicated += other.duplicated;
    }
}

fn ratio(redundant: usize, native: usize) -> f64 {
    if native == 0 {
        0.0
    } else {
        redundant as f64 / native as f64
    }
}

pub fn redundancy(g: &TaskGraph, s: &AvoidSplit) -> Result<RedundancyReport, SplitError> {
    let report = verify_well_formed(g, s);
    if !report.ok {
        return Err(SplitError::MalformedSplit(report.violations.len()));
    }
    Ok(redundancy_unchecked(s))
}

fn redundancy_unchecked(s: &AvoidSplit) -> RedundancyReport {
    let mut out = RedundancyReport::default();
    let mut times: BTreeMap<NodeId, usize> = BTreeMap::new();
    for (p, ps) in s.procs.iter().enumerate() {
        let computed = s.computed(p);
        for &v in &computed {
            *times.entry(v).or_default() += 1;
        }
        let native = ps.target.difference(&ps.l0).count();
        let redundant = computed.len().saturating_sub(native);
        out.procs.push(ProcRedundancy {
            native,
            computed: computed.len(),
            redundant,
            ratio: ratio(redundant, native),
        });
        out.native += native;
        out.computed += computed.len();
        out.redundant += redundant;
    }
    out.duplicated = times.values().filter(|&&c| c >= 2).count();
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MacroStep {
    pub index: usize,
    /// Inclusive range of canonical levels computed in this step.
    pub levels: (u32, u32),
    pub split: AvoidSplit,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MacroStepPlan {
    pub block: u32,
    pub steps: Vec<MacroStep>,
}

impl MacroStepPlan {
    pub fn redundancy(&self) -> RedundancyReport {
        let mut total = RedundancyReport::default();
        for step in &self.steps {
            total.absorb(&redundancy_unchecked(&step.split));
        }
        total
    }

    /// Verifies every step; violations are tagged with their step index.
    pub fn verify(&self, g: &TaskGraph) -> Vec<(usize, SplitViolation)> {
        self.steps
            .iter()
            .flat_map(|st| {
                verify_well_formed(g, &st.split)
                    .violations
                    .into_iter()
                    .map(move |v| (st.index, v))
            })
            .collect()
    }
}

/// Groups the canonical levels `1..=kmax` into macro-steps of `block` levels
/// and splits each step. Level 0 is initial data. The initial set of a step
/// holds every earlier task of the processor that a task of the step consumes.
pub fn blocked_transform(g: &TaskGraph, c: &LevelCover, block: u32) -> Result<MacroStepPlan, SplitError> {
    if block == 0 {
        return Err(SplitError::BadBlockSize);
    }
    let report = validate_cover(g, c)?;
    if !report.valid {
        return Err(CoverError::InvalidCover(report.violations.len()).into());
    }
    for (&(k, _), set) in c.blocks() {
        if let Some(&v) = set.iter().find(|&&v| g.level(v) != k) {
            return Err(SplitError::NotLeveled(g.id(v).0.clone()));
        }
    }

    let kmax = g.max_level();
    let mut by_level: Vec<Vec<NodeId>> = vec![Vec::new(); kmax as usize + 1];
    for v in g.nodes() {
        by_level[g.level(v) as usize].push(v);
    }
    let np = g.nprocs();
    let nsteps = kmax.div_ceil(block);
    let mut steps = Vec::with_capacity(nsteps as usize);
    for s in 0..nsteps {
        let lo = s * block + 1;
        let hi = ((s + 1) * block).min(kmax);
        let mut targets = vec![TaskSet::new(); np];
        let mut initial = vec![TaskSet::new(); np];
        for level in lo..=hi {
            for &v in &by_level[level as usize] {
                targets[g.proc(v)].insert(v);
                for &u in g.preds(v) {
                    if g.level(u) < lo {
                        initial[g.proc(u)].insert(u);
                    }
                }
            }
        }
        steps.push(MacroStep {
            index: s as usize,
            levels: (lo, hi),
            split: split(g, &targets, &initial)?,
        });
    }
    Ok(MacroStepPlan { block, steps })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Volume {
    /// Nonempty ordered `(q, p)` pairs.
    pub messages: usize,
    pub elements: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CommVolume {
    pub per_step: Vec<Volume>,
    pub total: Volume,
}

pub fn communicated_volume(plan: &MacroStepPlan) -> CommVolume {
    let mut out = CommVolume::default();
    for step in &plan.steps {
        let v = Volume {
            messages: step.split.recv.values().filter(|s| !s.is_empty()).count(),
            elements: step.split.recv.values().map(|s| s.len()).sum(),
        };
        out.total.messages += v.messages;
        out.total.elements += v.elements;
        out.per_step.push(v);
    }
    out
}

/// A plan unfolded into a graph where every redundant execution is its own
/// task (`id@p`), with the cover that runs, per macro-step `s`, `l1` at level
/// `3s+1`, `l2` at `3s+2` and the computed part of `l3` at `3s+3`. Sources sit
/// at level 0.
#[derive(Clone, Debug)]
pub struct ExpandedPlan {
    pub graph: TaskGraph,
    pub cover: LevelCover,
}

pub fn expand_plan(g: &TaskGraph, plan: &MacroStepPlan) -> Result<ExpandedPlan, SplitError> {
    let n = g.len();
    let mut tasks: Vec<Task> = g.tasks().to_vec();
    let mut preds: Vec<Vec<NodeId>> = vec![Vec::new(); n];
    let mut copies: BTreeMap<(NodeId, usize), NodeId> = BTreeMap::new();
    let mut cover = LevelCover::new();
    for v in g.nodes().filter(|&v| g.is_source(v)) {
        cover.insert(0, g.proc(v), [v]);
    }

    for step in &plan.steps {
        let split = &step.split;
        for p in 0..split.nprocs() {
            let computed = split.computed(p);
            for &v in &computed {
                if g.proc(v) == p {
                    continue;
                }
                if copies.contains_key(&(v, p)) {
                    return Err(SplitError::DuplicateInstance {
                        task: g.id(v).0.clone(),
                        proc: p,
                    });
                }
                let mut t = g.task(v).clone();
                t.id = format!("{}@{p}", g.id(v)).into();
                t.proc = p;
                copies.insert((v, p), NodeId(tasks.len() as u32));
                tasks.push(t);
                preds.push(Vec::new());
            }
        }
        for p in 0..split.nprocs() {
            let ps = &split.procs[p];
            let received = split.received(p);
            let computed = split.computed(p);
            let instance = |v: NodeId| -> Option<NodeId> {
                if ps.l0.contains(&v) || received.contains(&v) {
                    Some(v)
                } else if computed.contains(&v) {
                    Some(if g.proc(v) == p { v } else { copies[&(v, p)] })
                } else {
                    None
                }
            };
            let k = 3 * step.index as u32;
            let l3c = split.l3_compute(p);
            for (offset, set) in [(1, &ps.l1), (2, &ps.l2), (3, &l3c)] {
                let mut block = Vec::with_capacity(set.len());
                for &v in set {
                    let me = instance(v).expect("computed task has an instance");
                    let mut list = Vec::with_capacity(g.preds(v).len());
                    for &u in g.preds(v) {
                        list.push(instance(u).ok_or(SplitError::MalformedSplit(1))?);
                    }
                    preds[me.index()] = list;
                    block.push(me);
                }
                cover.insert(k + offset, p, block);
            }
        }
    }
    let graph = TaskGraph::from_adjacency(tasks, preds, g.nprocs())?;
    Ok(ExpandedPlan { graph, cover })
}
