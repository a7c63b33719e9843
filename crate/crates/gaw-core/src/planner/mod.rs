//! Intent-to-DAG planning: the coordinator proposes a stage decomposition,
//! knowledge retrieval and the tool registry turn each stage into a concrete
//! invocation, and the result is a validated task DAG plus a trace of every
//! decision made along the way.
//!
//! Validation is data, not control flow: `validate_dag` returns every
//! violation it finds so a caller (or a refinement round) sees the full
//! picture at once.

pub mod dag;
pub mod plan;

pub use dag::{selector_result_kind, topological_order, validate_dag, Violation};
pub use plan::{plan, refine, ChosenTool, PlanTrace, StageTrace, TraceCandidate};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coordinator::CoordinatorError;
use crate::knowledge::KnowledgeError;
use crate::registry::ParamValue;

/// Maximum refinement rounds before the loop gives up.
pub const R_MAX: usize = 3;

/// Hard cap on one stage-goal descriptor, shared with the plan schema.
pub const MAX_DESCRIPTOR_CHARS: usize = 256;

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error("planning failed: {0}")]
    PlanningFailed(String),
    /// No retrieval candidate maps onto a registered tool whose slots match
    /// the stage bindings. Carries the partial trace so the plan artifact
    /// can still be persisted for debugging.
    #[error("no registered tool fits stage {stage:?}; candidates considered: {candidates:?}")]
    NoToolForStage {
        stage: String,
        candidates: Vec<String>,
        trace: Box<PlanTrace>,
    },
    #[error("dag is cyclic; nodes on cycles: {0:?}")]
    CyclicDag(Vec<String>),
    #[error("refinement exhausted at round {round}")]
    RefinementExhausted {
        round: usize,
        feedback: Vec<ExecutionFeedback>,
    },
    #[error("dag failed validation: {0:?}")]
    InvalidDag(Vec<Violation>),
    #[error(transparent)]
    Coordinator(#[from] CoordinatorError),
    #[error(transparent)]
    Knowledge(#[from] KnowledgeError),
}

/// The interpreted question: raw text plus the coordinator's decomposition
/// and the datasets the plan touches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Intent {
    pub raw_query: String,
    pub task_descriptors: Vec<String>,
    pub dataset_refs: Vec<String>,
}

/// Dependency flavor carried by a DAG edge: bulk data, a scalar parameter,
/// or a gate that can prune the consumer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DepKind {
    Data,
    Parameter,
    Decision,
}

/// How an upstream output is reshaped before it feeds a downstream slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Selector {
    /// The producer's output as-is.
    Value,
    /// Node membership of the output (cycle sets flatten to their union).
    NodeSet,
    /// Subgraph induced by the output's nodes.
    InducedGraph,
    /// Edge table induced by the output's nodes.
    InducedEdgeTable,
    /// Singleton node set holding the best-scoring node.
    TopNode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Binding {
    /// A relation of the extracted property graph, materialized to whatever
    /// representation the slot expects.
    SourceDataset { dataset: String },
    StageOutput { producer: String, selector: Selector },
    Literal { value: serde_json::Value },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskNode {
    pub id: String,
    pub goal: String,
    pub tool_name: String,
    pub params: BTreeMap<String, ParamValue>,
    pub input_bindings: BTreeMap<String, Binding>,
    pub output_name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TaskEdge {
    pub producer: String,
    pub consumer: String,
    pub dep_kind: DepKind,
}

/// Invariants (enforced by `validate_dag`, relied on by the executor):
/// acyclic, every StageOutput binding mirrored by a Data or Parameter edge,
/// and exactly one terminal report node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskDag {
    pub nodes: Vec<TaskNode>,
    pub edges: Vec<TaskEdge>,
    pub report_node: String,
}

impl TaskDag {
    pub fn node(&self, id: &str) -> Option<&TaskNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn node_ids(&self) -> Vec<&str> {
        self.nodes.iter().map(|n| n.id.as_str()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Error,
    LowQuality,
    Ok,
}

/// Per-node execution verdict driving refinement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionFeedback {
    pub node_id: String,
    pub outcome: Outcome,
    pub detail: String,
    /// Named quality metrics; required (non-empty) for LowQuality.
    #[serde(default)]
    pub metrics: BTreeMap<String, f64>,
}

impl ExecutionFeedback {
    pub fn ok(node_id: impl Into<String>) -> Self {
        ExecutionFeedback {
            node_id: node_id.into(),
            outcome: Outcome::Ok,
            detail: String::new(),
            metrics: BTreeMap::new(),
        }
    }

    pub fn error(node_id: impl Into<String>, detail: impl Into<String>) -> Self {
        ExecutionFeedback {
            node_id: node_id.into(),
            outcome: Outcome::Error,
            detail: detail.into(),
            metrics: BTreeMap::new(),
        }
    }

    pub fn low_quality(
        node_id: impl Into<String>,
        detail: impl Into<String>,
        metrics: &[(&str, f64)],
    ) -> Self {
        ExecutionFeedback {
            node_id: node_id.into(),
            outcome: Outcome::LowQuality,
            detail: detail.into(),
            metrics: metrics.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    /// LowQuality without a named metric is malformed feedback.
    pub fn validate(&self) -> Result<(), String> {
        if self.outcome == Outcome::LowQuality && self.metrics.is_empty() {
            return Err(format!(
                "low-quality feedback for {} must name at least one metric",
                self.node_id
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn descriptor_cap_matches_the_plan_schema() {
        assert_eq!(MAX_DESCRIPTOR_CHARS, crate::coordinator::MAX_GOAL_CHARS);
    }

    #[test]
    fn low_quality_feedback_requires_a_metric() {
        assert!(ExecutionFeedback::low_quality("s1", "empty", &[]).validate().is_err());
        assert!(ExecutionFeedback::low_quality("s1", "empty", &[("item_count", 0.0)])
            .validate()
            .is_ok());
        assert!(ExecutionFeedback::ok("s1").validate().is_ok());
    }

    #[test]
    fn bindings_serialize_with_a_kind_tag() {
        let b = Binding::StageOutput { producer: "s1".into(), selector: Selector::TopNode };
        let v = serde_json::to_value(&b).unwrap();
        assert_eq!(v["kind"], "StageOutput");
        assert_eq!(v["selector"], "TopNode");
        let back: Binding = serde_json::from_value(v).unwrap();
        assert_eq!(back, b);
    }
}
