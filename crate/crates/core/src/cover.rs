//! Two-parameter coverings `{L_{k,p}}` of a task graph ("local computations"),
//! their validation, bases, granularity, and the stricter condition under
//! which communication overlaps computation.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::graph::{GraphError, NodeId, TaskGraph, TaskSet};

/// Block index: level `k` and processor `p`.
pub type BlockKey = (u32, usize);

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LevelCover {
    blocks: BTreeMap<BlockKey, TaskSet>,
}

impl LevelCover {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds tasks to block `(k, p)`, creating it (possibly empty) if absent.
    pub fn insert(&mut self, k: u32, p: usize, tasks: impl IntoIterator<Item = NodeId>) {
        self.blocks.entry((k, p)).or_default().extend(tasks);
    }

    pub fn block(&self, k: u32, p: usize) -> Option<&TaskSet> {
        self.blocks.get(&(k, p))
    }

    pub fn blocks(&self) -> &BTreeMap<BlockKey, TaskSet> {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn kmax(&self) -> Option<u32> {
        self.blocks.keys().map(|&(k, _)| k).max()
    }

    /// Union `L_k` over processors.
    pub fn level(&self, k: u32) -> TaskSet {
        self.blocks
            .range((k, 0)..=(k, usize::MAX))
            .flat_map(|(_, s)| s.iter().copied())
            .collect()
    }

    /// Smallest `k` of any block containing each task; `None` if uncovered.
    fn min_levels(&self, n: usize) -> Vec<Option<u32>> {
        let mut out = alloc::vec![None; n];
        for (&(k, _), set) in &self.blocks {
            for v in set {
                let slot: &mut Option<u32> = &mut out[v.index()];
                *slot = Some(slot.map_or(k, |old| old.min(k)));
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Condition {
    /// Per-processor union equals the processor's tasks.
    Partition = 1,
    /// Predecessors sit in the same or an earlier level.
    Ordering = 2,
    /// Remote predecessors sit in a strictly earlier level.
    RemoteEarlier = 3,
}

impl Condition {
    pub fn number(self) -> u8 {
        self as u8
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub condition: Condition,
    pub task: NodeId,
    pub witness: NodeId,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoverReport {
    pub valid: bool,
    pub violations: Vec<Violation>,
    pub granularity: usize,
    pub overlap_ok: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum CoverError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("task {task} appears in blocks k={first} and k={second} of processor {proc}")]
    OverlappingBlocks {
        task: String,
        proc: usize,
        first: u32,
        second: u32,
    },
    #[error("cover has no blocks")]
    EmptyCover,
    #[error("cover is not a valid set of local computations ({0} violations)")]
    InvalidCover(usize),
}

fn check_tasks(g: &TaskGraph, c: &LevelCover) -> Result<(), CoverError> {
    for set in c.blocks.values() {
        g.check_all(set)?;
    }
    Ok(())
}

/// Checks the three local-computation conditions, reporting one witness (the
/// smallest) per violating task and condition.
pub fn validate_cover(g: &TaskGraph, c: &LevelCover) -> Result<CoverReport, CoverError> {
    check_tasks(g, c)?;
    let n = g.len();

    // Level of each task within its own processor's blocks.
    let mut own: Vec<Option<u32>> = alloc::vec![None; n];
    let mut violations = Vec::new();
    for (&(k, p), set) in &c.blocks {
        for &v in set {
            if g.proc(v) != p {
                violations.push(Violation {
                    condition: Condition::Partition,
                    task: v,
                    witness: v,
                    detail: format!("placed on processor {p} but owned by processor {}", g.proc(v)),
                });
                continue;
            }
            if let Some(first) = own[v.index()] {
                return Err(CoverError::OverlappingBlocks {
                    task: g.id(v).0.clone(),
                    proc: p,
                    first,
                    second: k,
                });
            }
            own[v.index()] = Some(k);
        }
    }
    for v in g.nodes() {
        if own[v.index()].is_none() {
            violations.push(Violation {
                condition: Condition::Partition,
                task: v,
                witness: v,
                detail: format!("not covered by any block of processor {}", g.proc(v)),
            });
        }
    }

    let kmin = c.min_levels(n);
    for (&(k, p), set) in &c.blocks {
        for &v in set {
            let later = g
                .preds(v)
                .iter()
                .copied()
                .find(|u| kmin[u.index()].is_none_or(|j| j > k));
            if let Some(w) = later {
                violations.push(Violation {
                    condition: Condition::Ordering,
                    task: v,
                    witness: w,
                    detail: match kmin[w.index()] {
                        Some(j) => format!("predecessor sits in level {j} > {k}"),
                        None => "predecessor is not covered".into(),
                    },
                });
            }
            let remote = g
                .preds(v)
                .iter()
                .copied()
                .filter(|&u| g.proc(u) != p)
                .find(|u| kmin[u.index()].is_none_or(|j| j >= k));
            if let Some(w) = remote {
                violations.push(Violation {
                    condition: Condition::RemoteEarlier,
                    task: v,
                    witness: w,
                    detail: match kmin[w.index()] {
                        Some(j) => format!(
                            "remote predecessor on processor {} sits in level {j}, not before {k}",
                            g.proc(w)
                        ),
                        None => "remote predecessor is not covered".into(),
                    },
                });
            }
        }
    }
    violations.sort_by_key(|x| (x.condition, x.task, x.witness));
    violations.dedup_by_key(|x| (x.condition, x.task));

    let overlap_ok = overlap_witnesses(g, c).is_empty();
    Ok(CoverReport {
        valid: violations.is_empty(),
        violations,
        granularity: c.blocks.values().map(|s| s.len()).min().unwrap_or(0),
        overlap_ok,
    })
}

fn require_valid(g: &TaskGraph, c: &LevelCover) -> Result<(), CoverError> {
    let report = validate_cover(g, c)?;
    if report.valid {
        Ok(())
    } else {
        Err(CoverError::InvalidCover(report.violations.len()))
    }
}

/// `B_{k,p}` for every block.
pub fn bases_of_cover(
    g: &TaskGraph,
    c: &LevelCover,
) -> Result<BTreeMap<BlockKey, TaskSet>, CoverError> {
    c.blocks
        .iter()
        .map(|(&key, set)| Ok((key, g.base(set)?)))
        .collect()
}

/// Minimum block size; present-but-empty blocks count as zero.
pub fn granularity(c: &LevelCover) -> Result<usize, CoverError> {
    c.blocks
        .values()
        .map(|s| s.len())
        .min()
        .ok_or(CoverError::EmptyCover)
}

/// A remote predecessor of a base task that is only one level earlier.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OverlapWitness {
    pub k: u32,
    pub p: usize,
    pub task: NodeId,
    pub witness: NodeId,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OverlapReport {
    pub holds: bool,
    pub witnesses: Vec<OverlapWitness>,
}

fn overlap_witnesses(g: &TaskGraph, c: &LevelCover) -> Vec<OverlapWitness> {
    let kmin = c.min_levels(g.len());
    let mut out = Vec::new();
    for (&(k, p), set) in &c.blocks {
        // Only base tasks can have predecessors outside the block.
        for &v in set {
            for &u in g.preds(v) {
                if g.proc(u) == p || set.contains(&u) {
                    continue;
                }
                let early_enough = matches!(kmin[u.index()], Some(j) if j + 2 <= k);
                if !early_enough {
                    out.push(OverlapWitness {
                        k,
                        p,
                        task: v,
                        witness: u,
                    });
                }
            }
        }
    }
    out
}

/// True iff every remote predecessor of every base lies at least two levels
/// back, so sends for level `k` can be posted during level `k-2`.
pub fn check_overlap_condition(g: &TaskGraph, c: &LevelCover) -> Result<OverlapReport, CoverError> {
    require_valid(g, c)?;
    let witnesses = overlap_witnesses(g, c);
    Ok(OverlapReport {
        holds: witnesses.is_empty(),
        witnesses,
    })
}

/// Whether all blocks of level `k` can run without waiting on each other:
/// each predecessor is local or sits in an earlier level.
pub fn independent_executability(g: &TaskGraph, c: &LevelCover, k: u32) -> Result<bool, CoverError> {
    require_valid(g, c)?;
    Ok(independent_unchecked(g, c, k))
}

pub(crate) fn independent_unchecked(g: &TaskGraph, c: &LevelCover, k: u32) -> bool {
    let kmin = c.min_levels(g.len());
    c.blocks
        .range((k, 0)..=(k, usize::MAX))
        .all(|(&(_, p), set)| {
            set.iter().all(|&v| {
                g.preds(v)
                    .iter()
                    .all(|&u| g.proc(u) == p || matches!(kmin[u.index()], Some(j) if j < k))
            })
        })
}
