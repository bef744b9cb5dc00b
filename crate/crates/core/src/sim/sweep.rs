//! Strong-scaling sweeps: one fixed graph evaluated for every combination of
//! latency, block size and thread count.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::avoid::blocked_transform;
use crate::cover::LevelCover;
use crate::graph::TaskGraph;

use super::{BlockedProfile, CostModel, NaiveProfile, SimError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Variant {
    Naive,
    Blocked(u32),
}

impl Variant {
    pub fn block(&self) -> Option<u32> {
        match self {
            Variant::Naive => None,
            Variant::Blocked(b) => Some(*b),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Naive => "naive",
            Variant::Blocked(_) => "blocked",
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Scenario {
    pub blocks: Vec<u32>,
    pub alphas: Vec<u64>,
    pub beta: u64,
    pub threads: Vec<u32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct SweepRow {
    pub alpha: u64,
    pub variant: Variant,
    pub threads: u32,
    pub total: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SweepMeta {
    /// Free-form description of the graph, e.g. its generator parameters.
    pub graph: String,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SweepTable {
    pub meta: SweepMeta,
    pub beta: u64,
    /// Sorted by `(alpha, variant, threads)`.
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn total(&self, alpha: u64, variant: Variant, threads: u32) -> Option<u64> {
        self.rows
            .iter()
            .find(|r| r.alpha == alpha && r.variant == variant && r.threads == threads)
            .map(|r| r.total)
    }

    /// Smallest swept thread count from which `blocked(b)` is strictly faster
    /// than naive at every larger swept count.
    pub fn crossover(&self, alpha: u64, b: u32) -> Option<u32> {
        let threads: BTreeSet<u32> = self.rows.iter().filter(|r| r.alpha == alpha).map(|r| r.threads).collect();
        let mut from = None;
        for &w in threads.iter().rev() {
            let naive = self.total(alpha, Variant::Naive, w)?;
            let blocked = self.total(alpha, Variant::Blocked(b), w)?;
            if blocked < naive {
                from = Some(w);
            } else {
                break;
            }
        }
        from
    }
}

pub fn strong_scaling_sweep(
    g: &TaskGraph,
    c: &LevelCover,
    scenario: &Scenario,
    meta: SweepMeta,
) -> Result<SweepTable, SimError> {
    let blocks: BTreeSet<u32> = scenario.blocks.iter().copied().collect();
    let alphas: BTreeSet<u64> = scenario.alphas.iter().copied().collect();
    let threads: BTreeSet<u32> = scenario.threads.iter().copied().collect();
    if threads.contains(&0) {
        return Err(SimError::ZeroThreads);
    }
    let naive = NaiveProfile::new(g, c)?;
    let mut blocked = Vec::with_capacity(blocks.len());
    for &b in &blocks {
        let plan = blocked_transform(g, c, b)?;
        blocked.push((b, BlockedProfile::new(g, &plan)?));
    }
    let mut rows = Vec::new();
    for &alpha in &alphas {
        for &w in &threads {
            let m = CostModel::new(alpha, scenario.beta, w, g.nprocs())?;
            rows.push(SweepRow {
                alpha,
                variant: Variant::Naive,
                threads: w,
                total: naive.simulate(&m)?.total,
            });
            for (b, profile) in &blocked {
                rows.push(SweepRow {
                    alpha,
                    variant: Variant::Blocked(*b),
                    threads: w,
                    total: profile.simulate(&m)?.total,
                });
            }
        }
    }
    rows.sort();
    Ok(SweepTable {
        meta,
        beta: scenario.beta,
        rows,
    })
}
