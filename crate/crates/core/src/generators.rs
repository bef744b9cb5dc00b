//! Canonical task graphs: the 1D heat-equation stencil, random DAGs for
//! property tests, and the per-level covering of a leveled graph.

use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cover::LevelCover;
use crate::graph::{GraphError, NodeId, Task, TaskGraph};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Boundary {
    Dirichlet,
    Periodic,
}

impl core::str::FromStr for Boundary {
    type Err = GenError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dirichlet" => Ok(Boundary::Dirichlet),
            "periodic" => Ok(Boundary::Periodic),
            other => Err(GenError::BadShape(format!("unknown boundary {other:?}"))),
        }
    }
}

impl core::fmt::Display for Boundary {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(match self {
            Boundary::Dirichlet => "dirichlet",
            Boundary::Periodic => "periodic",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StencilShape {
    pub points: usize,
    pub procs: usize,
    pub steps: usize,
    pub radius: usize,
    pub boundary: Boundary,
}

impl StencilShape {
    pub fn new(points: usize, procs: usize, steps: usize, radius: usize) -> Self {
        StencilShape {
            points,
            procs,
            steps,
            radius,
            boundary: Boundary::Dirichlet,
        }
    }

    pub fn periodic(mut self) -> Self {
        self.boundary = Boundary::Periodic;
        self
    }

    /// Processor owning grid point `i` (contiguous, balanced blocks).
    pub fn owner(&self, i: usize) -> usize {
        i * self.procs / self.points
    }

    /// Position of task `(i, t)` in the generated graph.
    pub fn node(&self, i: usize, t: usize) -> NodeId {
        NodeId((t * self.points + i) as u32)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum GenError {
    #[error("bad shape: {0}")]
    BadShape(alloc::string::String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// One task per `(point, time level)`. Level-0 tasks are zero-weight sources
/// holding the initial condition; task `(i, t)` depends on `(j, t-1)` for
/// `|i - j| <= radius`, clipped (dirichlet) or wrapped (periodic).
pub fn stencil_1d(shape: StencilShape) -> Result<TaskGraph, GenError> {
    let StencilShape {
        points: n,
        procs,
        steps,
        radius: r,
        boundary,
    } = shape;
    if n == 0 || procs == 0 || steps == 0 || r == 0 {
        return Err(GenError::BadShape(
            "points, procs, steps and radius must all be at least 1".into(),
        ));
    }
    if procs > n {
        return Err(GenError::BadShape(format!("{procs} processors for {n} points")));
    }
    if boundary == Boundary::Periodic && r >= n {
        return Err(GenError::BadShape(format!(
            "periodic radius {r} wraps onto itself with {n} points"
        )));
    }
    let mut tasks = Vec::with_capacity(n * (steps + 1));
    let mut preds = Vec::with_capacity(n * (steps + 1));
    for t in 0..=steps {
        for i in 0..n {
            tasks.push(
                Task::new(format!("{i}:{t}"), shape.owner(i))
                    .with_weight(if t == 0 { 0 } else { 1 })
                    .with_label(format!("({i},{t})")),
            );
            let mut list = Vec::new();
            if t > 0 {
                match boundary {
                    Boundary::Dirichlet => {
                        for j in i.saturating_sub(r)..=(i + r).min(n - 1) {
                            list.push(shape.node(j, t - 1));
                        }
                    }
                    Boundary::Periodic => {
                        for d in 0..=2 * r {
                            let j = (i + n + d - r) % n;
                            list.push(shape.node(j, t - 1));
                        }
                    }
                }
            }
            preds.push(list);
        }
    }
    Ok(TaskGraph::from_adjacency(tasks, preds, procs)?)
}

/// `L_{k,p}` = tasks of processor `p` at canonical level `k`. Only blocks that
/// hold at least one task are created.
pub fn per_level_cover(g: &TaskGraph) -> LevelCover {
    let mut c = LevelCover::new();
    for v in g.nodes() {
        c.insert(g.level(v), g.proc(v), [v]);
    }
    c
}

/// Seeded random DAG: edges only run from lower to higher task position, each
/// present with probability `p_edge`; processors drawn uniformly.
pub fn random_dag(n: usize, p_edge: f64, procs: usize, seed: u64) -> Result<TaskGraph, GenError> {
    if procs == 0 {
        return Err(GraphError::NoProcessors.into());
    }
    let p_edge = if p_edge.is_nan() { 0.0 } else { p_edge.clamp(0.0, 1.0) };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tasks: Vec<Task> = (0..n)
        .map(|i| Task::new(format!("t{i}"), rng.gen_range(0..procs)))
        .collect();
    let preds = (0..n)
        .map(|j| {
            (0..j)
                .filter(|_| rng.gen_bool(p_edge))
                .map(|i| NodeId(i as u32))
                .collect()
        })
        .collect();
    Ok(TaskGraph::from_adjacency(tasks, preds, procs)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cover::validate_cover;
    use alloc::string::ToString;

    fn s8() -> (StencilShape, TaskGraph) {
        let shape = StencilShape::new(8, 2, 2, 1);
        (shape, stencil_1d(shape).unwrap())
    }

    #[test]
    fn smallest_stencil() {
        let g = stencil_1d(StencilShape::new(1, 1, 1, 1)).unwrap();
        assert_eq!((g.len(), g.edge_count()), (2, 1));
    }

    #[test]
    fn s8_counts_and_ownership() {
        let (shape, g) = s8();
        assert_eq!(g.len(), 24);
        assert_eq!(g.edge_count(), 44);
        for i in 0..8 {
            assert_eq!(g.proc(shape.node(i, 0)), usize::from(i >= 4));
        }
        let v = shape.node(1, 1);
        assert_eq!(g.id(v).to_string(), "1:1");
        assert_eq!(g.task(v).label.as_deref(), Some("(1,1)"));
        for i in 0..8 {
            for t in 0..=2 {
                assert_eq!(g.level(shape.node(i, t)), t as u32);
            }
        }
    }

    #[test]
    fn periodic_in_degree() {
        let g = stencil_1d(StencilShape::new(4, 1, 1, 1).periodic()).unwrap();
        for v in g.nodes().filter(|&v| g.level(v) == 1) {
            assert_eq!(g.preds(v).len(), 3);
        }
    }

    #[test]
    fn bad_shapes() {
        assert!(matches!(stencil_1d(StencilShape::new(2, 4, 1, 1)), Err(GenError::BadShape(_))));
        assert!(matches!(
            stencil_1d(StencilShape::new(3, 1, 1, 3).periodic()),
            Err(GenError::BadShape(_))
        ));
        assert!(stencil_1d(StencilShape::new(3, 1, 0, 1)).is_err());
    }

    #[test]
    fn per_level_cover_of_s8() {
        let (_, g) = s8();
        let c = per_level_cover(&g);
        assert_eq!(c.len(), 6);
        assert!(c.blocks().values().all(|s| s.len() == 4));
        assert!(validate_cover(&g, &c).unwrap().valid);
    }

    #[test]
    fn per_level_cover_small_cases() {
        let single = TaskGraph::build(alloc::vec![Task::new("a", 0)], &[], 1).unwrap();
        assert_eq!(per_level_cover(&single).len(), 1);
        let tasks = alloc::vec![Task::new("a", 0), Task::new("b", 0), Task::new("c", 0)];
        let chain = TaskGraph::build(tasks, &[("a".into(), "b".into()), ("b".into(), "c".into())], 1).unwrap();
        let c = per_level_cover(&chain);
        assert_eq!(c.len(), 3);
        assert!(c.blocks().values().all(|s| s.len() == 1));
    }

    #[test]
    fn random_dag_is_deterministic() {
        assert!(random_dag(0, 0.5, 2, 1).unwrap().is_empty());
        let a = random_dag(30, 0.2, 3, 7).unwrap();
        let b = random_dag(30, 0.2, 3, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 30);
        assert_ne!(a, random_dag(30, 0.2, 3, 8).unwrap());
    }
}
