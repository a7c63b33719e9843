//! Graph construction: task-aware schemas over raw tabular sources, property
//! graph extraction, and execution-ready representations (CSR layouts,
//! projections, stage-scoped views).

pub mod catalog;
pub mod csr;
pub mod extract;
pub mod project;
pub mod property;
pub mod schema;
pub mod view;

pub use catalog::{ColumnRole, ColumnSpec, ColumnType, SourceCatalog, SourceEntry};
pub use csr::CsrGraph;
pub use extract::{extract, load_sources, LoadedSource};
pub use project::{project, TwoHopSpec};
pub use property::{Direction, EdgeTable, NodeTable, PropertyGraph, SkippedRow, Weighting};
pub use schema::{
    classify_task, fallback_schema, EntitySpec, FilterOp, FilterPredicate, RelationSpec,
    SchemaSpec, TaskKind,
};
pub use view::{materialize_stage_input, StageGraphView};

use crate::values::ValueKind;

#[derive(Debug, thiserror::Error)]
pub enum ConstructError {
    #[error("i/o: {0}")]
    Io(String),
    #[error("catalog mismatch: {0}")]
    CatalogMismatch(String),
    #[error("schema inference failed: {0}")]
    SchemaInferenceFailed(String),
    #[error("extraction failed: {0}")]
    ExtractionError(String),
    #[error("unknown relation: {0}")]
    UnknownRelation(String),
    #[error("relation {0} has no weight column")]
    MissingWeightColumn(String),
    #[error("projection mismatch: {0}")]
    ProjectionMismatch(String),
    #[error("expected {expected}, got {got}")]
    KindMismatch { expected: String, got: ValueKind },
    #[error("node id {0} out of range")]
    InvalidNode(u32),
}
