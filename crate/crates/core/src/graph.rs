//! Distributed task graphs and the primitive relations every analysis uses:
//! immediate predecessors, synchronization points, bases and predecessor
//! closures.

use alloc::collections::{BTreeMap, BTreeSet, BinaryHeap};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Reverse;
use core::fmt;

/// Dense handle of a task inside one [`TaskGraph`]. Ordering follows the
/// graph's task order, which is the canonical iteration order everywhere.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Ordered set of tasks of one graph.
pub type TaskSet = BTreeSet<NodeId>;

/// External, user-visible task identifier.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TaskId(pub String);

impl TaskId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for TaskId {
    fn from(s: &str) -> Self {
        TaskId(s.into())
    }
}

impl From<String> for TaskId {
    fn from(s: String) -> Self {
        TaskId(s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Task {
    pub id: TaskId,
    pub proc: usize,
    /// Work units; one unit-weight task costs one time unit.
    pub weight: u64,
    pub label: Option<String>,
}

impl Task {
    pub fn new(id: impl Into<TaskId>, proc: usize) -> Self {
        Task {
            id: id.into(),
            proc,
            weight: 1,
            label: None,
        }
    }

    pub fn with_weight(mut self, weight: u64) -> Self {
        self.weight = weight;
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum GraphError {
    #[error("dependency cycle through tasks {}", join_ids(.0))]
    Cycle(Vec<TaskId>),
    #[error("edge ({pred}, {succ}) references unknown task {missing}")]
    DanglingEdge {
        pred: TaskId,
        succ: TaskId,
        missing: TaskId,
    },
    #[error("task {id} is assigned to processor {proc} but the graph has {nprocs}")]
    BadProc { id: TaskId, proc: usize, nprocs: usize },
    #[error("duplicate task id {0}")]
    DuplicateId(TaskId),
    #[error("a graph needs at least one processor")]
    NoProcessors,
    #[error("unknown task {0}")]
    UnknownTask(String),
}

fn join_ids(ids: &[TaskId]) -> String {
    let mut out = String::new();
    for (i, id) in ids.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push_str(id.as_str());
    }
    out
}

/// Immutable DAG of tasks partitioned over `nprocs` processors.
#[derive(Clone, Debug)]
pub struct TaskGraph {
    tasks: Vec<Task>,
    preds: Vec<Vec<NodeId>>,
    succs: Vec<Vec<NodeId>>,
    nprocs: usize,
    index: BTreeMap<TaskId, NodeId>,
    topo: Vec<NodeId>,
    levels: Vec<u32>,
}

impl PartialEq for TaskGraph {
    fn eq(&self, other: &Self) -> bool {
        self.nprocs == other.nprocs && self.tasks == other.tasks && self.preds == other.preds
    }
}

impl Eq for TaskGraph {}

impl TaskGraph {
    /// Validates tasks and edges and caches a deterministic topological order.
    /// Repeated edges collapse into one.
    pub fn build(
        tasks: Vec<Task>,
        edges: &[(TaskId, TaskId)],
        nprocs: usize,
    ) -> Result<Self, GraphError> {
        if nprocs == 0 {
            return Err(GraphError::NoProcessors);
        }
        let mut index = BTreeMap::new();
        for (i, t) in tasks.iter().enumerate() {
            if index.insert(t.id.clone(), NodeId(i as u32)).is_some() {
                return Err(GraphError::DuplicateId(t.id.clone()));
            }
            if t.proc >= nprocs {
                return Err(GraphError::BadProc {
                    id: t.id.clone(),
                    proc: t.proc,
                    nprocs,
                });
            }
        }
        let n = tasks.len();
        let mut preds = vec![Vec::new(); n];
        let mut succs = vec![Vec::new(); n];
        for (a, b) in edges {
            let lookup = |x: &TaskId| {
                index.get(x).copied().ok_or_else(|| GraphError::DanglingEdge {
                    pred: a.clone(),
                    succ: b.clone(),
                    missing: x.clone(),
                })
            };
            let (pa, pb) = (lookup(a)?, lookup(b)?);
            preds[pb.index()].push(pa);
            succs[pa.index()].push(pb);
        }
        for list in preds.iter_mut().chain(succs.iter_mut()) {
            list.sort_unstable();
            list.dedup();
        }
        Self::from_parts(tasks, preds, succs, nprocs, index)
    }

    /// Builds from dense adjacency; `preds[i]` lists the predecessors of task `i`.
    /// Used by generators that already know their indices.
    pub(crate) fn from_adjacency(
        tasks: Vec<Task>,
        mut preds: Vec<Vec<NodeId>>,
        nprocs: usize,
    ) -> Result<Self, GraphError> {
        if nprocs == 0 {
            return Err(GraphError::NoProcessors);
        }
        let n = tasks.len();
        let mut index = BTreeMap::new();
        for (i, t) in tasks.iter().enumerate() {
            if index.insert(t.id.clone(), NodeId(i as u32)).is_some() {
                return Err(GraphError::DuplicateId(t.id.clone()));
            }
            if t.proc >= nprocs {
                return Err(GraphError::BadProc {
                    id: t.id.clone(),
                    proc: t.proc,
                    nprocs,
                });
            }
        }
        let mut succs = vec![Vec::new(); n];
        for (i, list) in preds.iter_mut().enumerate() {
            list.sort_unstable();
            list.dedup();
            for p in list.iter() {
                succs[p.index()].push(NodeId(i as u32));
            }
        }
        Self::from_parts(tasks, preds, succs, nprocs, index)
    }

    fn from_parts(
        tasks: Vec<Task>,
        preds: Vec<Vec<NodeId>>,
        succs: Vec<Vec<NodeId>>,
        nprocs: usize,
        index: BTreeMap<TaskId, NodeId>,
    ) -> Result<Self, GraphError> {
        let n = tasks.len();
        // Kahn with a min-heap so the order only depends on task positions.
        let mut indeg: Vec<usize> = preds.iter().map(Vec::len).collect();
        let mut heap: BinaryHeap<Reverse<NodeId>> = (0..n)
            .filter(|&i| indeg[i] == 0)
            .map(|i| Reverse(NodeId(i as u32)))
            .collect();
        let mut topo = Vec::with_capacity(n);
        let mut levels = vec![0u32; n];
        while let Some(Reverse(v)) = heap.pop() {
            topo.push(v);
            for &s in &succs[v.index()] {
                levels[s.index()] = levels[s.index()].max(levels[v.index()] + 1);
                indeg[s.index()] -= 1;
                if indeg[s.index()] == 0 {
                    heap.push(Reverse(s));
                }
            }
        }
        if topo.len() < n {
            let cycle = find_cycle(&preds, &indeg);
            return Err(GraphError::Cycle(
                cycle.into_iter().map(|v| tasks[v.index()].id.clone()).collect(),
            ));
        }
        Ok(TaskGraph {
            tasks,
            preds,
            succs,
            nprocs,
            index,
            topo,
            levels,
        })
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn nprocs(&self) -> usize {
        self.nprocs
    }

    pub fn edge_count(&self) -> usize {
        self.preds.iter().map(Vec::len).sum()
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn task(&self, v: NodeId) -> &Task {
        &self.tasks[v.index()]
    }

    pub fn id(&self, v: NodeId) -> &TaskId {
        &self.tasks[v.index()].id
    }

    pub fn proc(&self, v: NodeId) -> usize {
        self.tasks[v.index()].proc
    }

    pub fn weight(&self, v: NodeId) -> u64 {
        self.tasks[v.index()].weight
    }

    pub fn node(&self, id: &str) -> Option<NodeId> {
        self.index.get(&TaskId::from(id)).copied()
    }

    /// Like [`node`](Self::node) but with an `UnknownTask` error.
    pub fn lookup(&self, id: &str) -> Result<NodeId, GraphError> {
        self.node(id).ok_or_else(|| GraphError::UnknownTask(id.into()))
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.tasks.len() as u32).map(NodeId)
    }

    /// All edges as `(pred, succ)`, grouped by successor.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.nodes()
            .flat_map(move |s| self.preds[s.index()].iter().map(move |&p| (p, s)))
    }

    pub fn contains(&self, v: NodeId) -> bool {
        v.index() < self.tasks.len()
    }

    pub fn check(&self, v: NodeId) -> Result<(), GraphError> {
        if self.contains(v) {
            Ok(())
        } else {
            Err(GraphError::UnknownTask(alloc::format!("#{}", v.0)))
        }
    }

    pub fn check_all<'a>(&self, set: impl IntoIterator<Item = &'a NodeId>) -> Result<(), GraphError> {
        set.into_iter().try_for_each(|&v| self.check(v))
    }

    /// Slice form of the predecessor relation, sorted.
    pub fn preds(&self, v: NodeId) -> &[NodeId] {
        &self.preds[v.index()]
    }

    pub fn succs(&self, v: NodeId) -> &[NodeId] {
        &self.succs[v.index()]
    }

    pub fn is_source(&self, v: NodeId) -> bool {
        self.preds[v.index()].is_empty()
    }

    /// Tasks owned by processor `p` (the set `C_p`).
    pub fn owned(&self, p: usize) -> TaskSet {
        self.nodes().filter(|&v| self.proc(v) == p).collect()
    }

    pub fn topo_order(&self) -> &[NodeId] {
        &self.topo
    }

    /// Depth of a task: 0 for sources, otherwise one more than its deepest predecessor.
    pub fn level(&self, v: NodeId) -> u32 {
        self.levels[v.index()]
    }

    pub fn max_level(&self) -> u32 {
        self.levels.iter().copied().max().unwrap_or(0)
    }

    pub fn immediate_predecessors(&self, v: NodeId) -> Result<TaskSet, GraphError> {
        self.check(v)?;
        Ok(self.preds(v).iter().copied().collect())
    }

    /// Immediate predecessors living on another processor.
    pub fn sync_points(&self, v: NodeId) -> Result<TaskSet, GraphError> {
        self.check(v)?;
        let p = self.proc(v);
        Ok(self
            .preds(v)
            .iter()
            .copied()
            .filter(|&u| self.proc(u) != p)
            .collect())
    }

    /// Tasks of `set` with at least one predecessor outside `set`.
    pub fn base(&self, set: &TaskSet) -> Result<TaskSet, GraphError> {
        self.check_all(set)?;
        Ok(set
            .iter()
            .copied()
            .filter(|&v| self.preds(v).iter().any(|u| !set.contains(u)))
            .collect())
    }

    /// Smallest superset of `set` closed under taking predecessors.
    pub fn pred_closure(&self, set: &TaskSet) -> Result<TaskSet, GraphError> {
        self.check_all(set)?;
        Ok(self.closure_until(set, |_| false))
    }

    /// Predecessor closure that includes but does not expand tasks for which
    /// `stop` holds.
    pub(crate) fn closure_until(&self, set: &TaskSet, stop: impl Fn(NodeId) -> bool) -> TaskSet {
        let mut out = set.clone();
        let mut stack: Vec<NodeId> = set.iter().copied().collect();
        while let Some(v) = stack.pop() {
            if stop(v) {
                continue;
            }
            for &u in self.preds(v) {
                if out.insert(u) {
                    stack.push(u);
                }
            }
        }
        out
    }

    /// Canonical leveling: `level(t)` for every task, indexed by task position.
    pub fn topological_levels(&self) -> &[u32] {
        &self.levels
    }
}

// Every node with remaining in-degree lies on or downstream of a cycle;
// walking predecessors among them must revisit a node.
fn find_cycle(preds: &[Vec<NodeId>], indeg: &[usize]) -> Vec<NodeId> {
    let stuck = |v: NodeId| indeg[v.index()] > 0;
    let start = match (0..preds.len() as u32).map(NodeId).find(|&v| stuck(v)) {
        Some(v) => v,
        None => return Vec::new(),
    };
    let mut seen = BTreeMap::new();
    let mut path = Vec::new();
    let mut v = start;
    loop {
        if let Some(&pos) = seen.get(&v) {
            let mut cycle: Vec<NodeId> = path[pos..].to_vec();
            cycle.sort_unstable();
            return cycle;
        }
        seen.insert(v, path.len());
        path.push(v);
        v = *preds[v.index()]
            .iter()
            .find(|&&u| stuck(u))
            .expect("stuck node has a stuck predecessor");
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn ids(g: &TaskGraph, set: &TaskSet) -> Vec<String> {
        set.iter().map(|&v| g.id(v).to_string()).collect()
    }

    fn chain() -> TaskGraph {
        let tasks = vec![Task::new("a", 0), Task::new("b", 0), Task::new("c", 0)];
        let edges = [("a".into(), "b".into()), ("b".into(), "c".into())];
        TaskGraph::build(tasks, &edges, 1).unwrap()
    }

    #[test]
    fn empty_graph_is_valid() {
        let g = TaskGraph::build(vec![], &[], 1).unwrap();
        assert!(g.is_empty());
        assert_eq!(g.max_level(), 0);
    }

    #[test]
    fn two_cycle_is_rejected() {
        let tasks = vec![Task::new("a", 0), Task::new("b", 0)];
        let edges = [("a".into(), "b".into()), ("b".into(), "a".into())];
        match TaskGraph::build(tasks, &edges, 1) {
            Err(GraphError::Cycle(c)) => assert_eq!(c, vec![TaskId::from("a"), TaskId::from("b")]),
            other => panic!("expected cycle, got {other:?}"),
        }
    }

    #[test]
    fn self_loop_is_a_cycle() {
        let edges = [("a".into(), "a".into())];
        assert!(matches!(
            TaskGraph::build(vec![Task::new("a", 0)], &edges, 1),
            Err(GraphError::Cycle(_))
        ));
    }

    #[test]
    fn construction_errors() {
        let dup = TaskGraph::build(vec![Task::new("a", 0), Task::new("a", 0)], &[], 1);
        assert_eq!(dup.unwrap_err(), GraphError::DuplicateId("a".into()));
        let bad = TaskGraph::build(vec![Task::new("a", 2)], &[], 2);
        assert!(matches!(bad, Err(GraphError::BadProc { proc: 2, .. })));
        let dangling = TaskGraph::build(vec![Task::new("a", 0)], &[("a".into(), "z".into())], 1);
        assert!(matches!(dangling, Err(GraphError::DanglingEdge { missing, .. }) if missing.as_str() == "z"));
    }

    #[test]
    fn chain_levels_and_closure() {
        let g = chain();
        assert_eq!(g.topological_levels(), &[0, 1, 2]);
        let c = g.lookup("c").unwrap();
        let closure = g.pred_closure(&[c].into_iter().collect()).unwrap();
        assert_eq!(ids(&g, &closure), ["a", "b", "c"]);
        let a = g.lookup("a").unwrap();
        assert!(g.immediate_predecessors(a).unwrap().is_empty());
    }

    #[test]
    fn base_of_whole_graph_is_empty() {
        let g = chain();
        let all: TaskSet = g.nodes().collect();
        assert!(g.base(&all).unwrap().is_empty());
        let c = g.lookup("c").unwrap();
        let single: TaskSet = [c].into_iter().collect();
        assert_eq!(g.base(&single).unwrap(), single);
    }

    #[test]
    fn unknown_task() {
        let g = chain();
        assert!(matches!(g.sync_points(NodeId(9)), Err(GraphError::UnknownTask(_))));
        assert!(g.lookup("zz").is_err());
    }

    #[test]
    fn single_processor_has_no_sync_points() {
        let g = chain();
        for v in g.nodes() {
            assert!(g.sync_points(v).unwrap().is_empty());
        }
    }
}
