use crate::avoid::SplitError;
use crate::cover::CoverError;
use crate::graph::GraphError;

/// Time is measured in task units: a unit-weight task takes 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CostModel {
    /// Message latency.
    pub alpha: u64,
    /// Transfer cost per element.
    pub beta: u64,
    /// Worker threads per node.
    pub threads: u32,
    /// Node count; must equal the graph's processor count.
    pub nodes: usize,
}

impl CostModel {
    pub fn new(alpha: u64, beta: u64, threads: u32, nodes: usize) -> Result<Self, SimError> {
        let m = CostModel {
            alpha,
            beta,
            threads,
            nodes,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.threads == 0 {
            return Err(SimError::ZeroThreads);
        }
        Ok(())
    }

    pub(crate) fn check_nodes(&self, nprocs: usize) -> Result<(), SimError> {
        self.validate()?;
        if self.nodes != nprocs {
            return Err(SimError::NodeMismatch {
                model: self.nodes,
                graph: nprocs,
            });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Cover(#[from] CoverError),
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error("thread count must be at least 1")]
    ZeroThreads,
    #[error("cost model has {model} nodes but the graph has {graph} processors")]
    NodeMismatch { model: usize, graph: usize },
    #[error("plan is malformed: {0} violations")]
    MalformedPlan(usize),
}
