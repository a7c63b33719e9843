//! gaw-core: turn a declarative analytical question over raw tabular data into a
//! validated multi-stage graph-analytics workflow, execute it over built-in
//! verifiable graph algorithms, and distill the results into an evidence-backed
//! report.
//!
//! The crate is organized around the stages of that pipeline:
//!
//! - [`knowledge`] — hierarchical algorithm knowledge base with coarse-to-fine
//!   retrieval and usefulness feedback
//! - [`planner`] — intent-to-DAG planning, validation, and feedback-driven
//!   refinement
//! - [`registry`] — tool descriptors, schema-validated invocation, result
//!   distillation, and the wire-protocol server
//! - [`construct`] — task-aware schema derivation, property-graph extraction,
//!   and execution-ready graph layouts
//! - [`algo`] — the built-in analytical executors (ranking, cycles,
//!   components, neighborhoods, aggregation)
//! - [`coordinator`] — the pluggable decision boundary: a deterministic rule
//!   table or a remote chat-completion endpoint
//! - [`pipeline`] — end-to-end orchestration, dataset generation, and the
//!   compounding-failure bench

pub mod algo;
pub mod construct;
pub mod coordinator;
pub mod knowledge;
pub mod pipeline;
pub mod planner;
pub mod registry;
pub mod text;
pub mod values;

pub use construct::csr::CsrGraph;
pub use construct::PropertyGraph;
pub use coordinator::{Coordinator, MockCoordinator};
pub use knowledge::KnowledgeGraph;
pub use pipeline::{PipelineError, RunConfig};
pub use values::{ToolValue, ValueKind};
