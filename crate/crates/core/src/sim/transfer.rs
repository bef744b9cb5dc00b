//! Send/receive descriptors hoisted to the earliest macro-step at which they
//! can be posted, and the receive-buffer space they occupy.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::avoid::MacroStepPlan;
use crate::graph::{NodeId, TaskGraph};

use super::SimError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Descriptor {
    pub element: NodeId,
    pub from: usize,
    pub to: usize,
    /// Macro-step in which the sender produces the element; initial data is
    /// available from step 0.
    pub posted_at: usize,
    /// Macro-step whose `k3` reads the element.
    pub consumed_at: usize,
    pub buffer_elements: usize,
}

impl Descriptor {
    /// Steps during which the receive buffer is held, inclusive.
    pub fn live_interval(&self) -> (usize, usize) {
        (self.posted_at, self.consumed_at)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TransferSchedule {
    pub descriptors: Vec<Descriptor>,
    /// Per processor, the largest number of buffered elements live in any step.
    pub peak_buffer: Vec<usize>,
}

pub fn transfer_schedule(plan: &MacroStepPlan, g: &TaskGraph) -> Result<TransferSchedule, SimError> {
    let violations = plan.verify(g);
    if !violations.is_empty() {
        return Err(SimError::MalformedPlan(violations.len()));
    }
    // First step in which each processor computes each task.
    let mut produced: BTreeMap<(usize, NodeId), usize> = BTreeMap::new();
    for step in &plan.steps {
        for p in 0..step.split.nprocs() {
            for v in step.split.computed(p) {
                produced.entry((p, v)).or_insert(step.index);
            }
        }
    }
    let mut descriptors = Vec::new();
    for step in &plan.steps {
        for (&(from, to), set) in &step.split.recv {
            for &element in set {
                descriptors.push(Descriptor {
                    element,
                    from,
                    to,
                    posted_at: produced.get(&(from, element)).copied().unwrap_or(0),
                    consumed_at: step.index,
                    buffer_elements: 1,
                });
            }
        }
    }
    descriptors.sort_by_key(|d| (d.posted_at, d.from, d.to, d.element));

    let nsteps = plan.steps.len();
    let mut live = vec![vec![0usize; nsteps]; g.nprocs()];
    for d in &descriptors {
        for slot in &mut live[d.to][d.posted_at..=d.consumed_at] {
            *slot += d.buffer_elements;
        }
    }
    let peak_buffer = live.iter().map(|row| row.iter().copied().max().unwrap_or(0)).collect();
    Ok(TransferSchedule {
        descriptors,
        peak_buffer,
    })
}
