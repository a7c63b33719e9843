//! Built-in analytical executors: ranking, cycle enumeration, components,
//! neighborhoods, and exact tabular aggregation.
//!
//! Every function here is pure over immutable inputs, so any number may run
//! concurrently during DAG execution.

pub mod components;
pub mod cycles;
pub mod flows;
pub mod pagerank;
pub mod topk;
pub mod traversal;

pub use components::{connected_components, ComponentMode};
pub use cycles::{enumerate_cycles, CycleOptions, EdgeFilter, CYCLE_CAP, LENGTH_CAP};
pub use flows::{aggregate_flows, Fsum};
pub use pagerank::{pagerank, personalized_pagerank, PageRankOptions, PageRankResult};
pub use topk::top_k;
pub use traversal::khop;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AlgoError {
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("seed set is empty")]
    EmptySeedSet,
    #[error("node id {0} out of range")]
    InvalidNode(u32),
    #[error("cycle length bounds invalid: {0}")]
    LengthBoundError(String),
    #[error("no numeric amount column: {0}")]
    MissingWeightColumn(String),
}
