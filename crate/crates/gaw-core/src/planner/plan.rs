//! From intent text to a validated DAG: the coordinator decomposes, the
//! knowledge base nominates algorithms per stage, the registry filters them
//! down to invocable tools, and everything decided on the way is recorded in
//! a trace that persists alongside the plan.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::coordinator::{
    validate_response, Coordinator, CoordinatorError, CoordinatorRequest, Role,
};
use crate::knowledge::{ExpansionRequest, KnowledgeGraph, Level, Relation};
use crate::registry::{ParamValue, ToolRegistry};

use super::{
    validate_dag, Binding, DepKind, ExecutionFeedback, Intent, Outcome, PlannerError, Selector,
    TaskDag, TaskEdge, TaskNode, R_MAX,
};

/// Stage-goal retrieval breadth: wide enough to surface algorithms from the
/// top three families, narrow enough to keep the trace readable.
const RETRIEVAL_K: usize = 6;

/// One retrieval candidate as the planner judged it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceCandidate {
    pub knowledge_id: String,
    /// Registry tool the knowledge entry names, if any.
    pub tool: Option<String>,
    pub score: f64,
    /// Category and family path from retrieval.
    pub trail: Vec<String>,
    pub registered: bool,
    /// Whether the tool's input slots exactly match the stage bindings.
    pub slot_fit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChosenTool {
    pub knowledge_id: String,
    pub tool: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTrace {
    pub index: usize,
    pub goal: String,
    pub suggested_family: String,
    pub candidates: Vec<TraceCandidate>,
    pub chosen: Option<ChosenTool>,
}

/// Everything decided during planning, persisted as part of plan.json.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanTrace {
    pub intent: Intent,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub focus_name: Option<String>,
    /// Raw coordinator exchanges, one entry per attempt.
    pub transcripts: Vec<String>,
    pub stages: Vec<StageTrace>,
    /// Knowledge gaps hit during planning, for offline curation.
    pub expansion_requests: Vec<ExpansionRequest>,
}

/// Coordinator plan document (already schema-validated at the boundary).
#[derive(Debug, Deserialize)]
struct PlanDoc {
    #[serde(default)]
    #[allow(dead_code)]
    version: Option<String>,
    #[serde(default)]
    focus_name: Option<String>,
    stages: Vec<StageDoc>,
}

#[derive(Debug, Deserialize)]
struct StageDoc {
    goal: String,
    suggested_family: String,
    #[serde(default)]
    bindings: BTreeMap<String, Value>,
    #[serde(default)]
    params: BTreeMap<String, Value>,
    #[serde(default)]
    gate_on: Option<usize>,
    #[serde(default)]
    report: bool,
    output: String,
}

fn stage_id(index: usize) -> String {
    format!("s{}", index + 1)
}

fn param_from_json(name: &str, value: &Value) -> Result<ParamValue, PlannerError> {
    match value {
        Value::Bool(b) => Ok(ParamValue::Bool(*b)),
        Value::String(s) => Ok(ParamValue::Str(s.clone())),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                Ok(ParamValue::Int(i))
            } else if let Some(f) = n.as_f64() {
                Ok(ParamValue::Float(f))
            } else {
                Err(PlannerError::PlanningFailed(format!("param {name}: unrepresentable number")))
            }
        }
        other => Err(PlannerError::PlanningFailed(format!(
            "param {name}: expected a scalar, got {other}"
        ))),
    }
}

fn binding_from_json(slot: &str, value: &Value) -> Result<Binding, PlannerError> {
    let fail = |msg: &str| PlannerError::PlanningFailed(format!("binding {slot}: {msg}"));
    let kind = value
        .get("kind")
        .and_then(Value::as_str)
        .ok_or_else(|| fail("missing kind"))?;
    match kind {
        "SourceDataset" => {
            let dataset = value
                .get("ref")
                .and_then(Value::as_str)
                .ok_or_else(|| fail("missing ref"))?;
            Ok(Binding::SourceDataset { dataset: dataset.to_string() })
        }
        "StageOutput" => {
            let stage = value
                .get("stage")
                .and_then(Value::as_u64)
                .ok_or_else(|| fail("missing stage index"))?;
            let selector: Selector =
                serde_json::from_value(value.get("selector").cloned().unwrap_or(Value::Null))
                    .map_err(|e| fail(&format!("bad selector: {e}")))?;
            Ok(Binding::StageOutput { producer: stage_id(stage as usize), selector })
        }
        "Literal" => {
            let literal = value.get("value").cloned().ok_or_else(|| fail("missing value"))?;
            Ok(Binding::Literal { value: literal })
        }
        other => Err(fail(&format!("unknown kind {other}"))),
    }
}

/// Plans a run: coordinator decomposition, per-stage knowledge retrieval,
/// registry filtering, and full structural validation of the result.
pub fn plan(
    intent_text: &str,
    kg: &KnowledgeGraph,
    registry: &ToolRegistry,
    coordinator: &dyn Coordinator,
) -> Result<(TaskDag, PlanTrace), PlannerError> {
    if registry.is_empty() {
        return Err(PlannerError::PlanningFailed("the tool registry is empty".into()));
    }
    let context = serde_json::json!({
        "tools": registry.names(),
        "families": kg.nodes_at(Level::Family).map(|n| n.id.clone()).collect::<Vec<_>>(),
    });
    let request = CoordinatorRequest::new(Role::Plan, intent_text, context);
    let response = coordinator.complete(&request).map_err(|e| match e {
        CoordinatorError::SchemaValidationFailed { .. } => {
            PlannerError::PlanningFailed(format!("coordinator: {e}"))
        }
        other => PlannerError::Coordinator(other),
    })?;
    // Coordinators are expected to hand back schema-valid documents, but the
    // planner is the last line before a DAG is built from one.
    validate_response(&request.schema_id, &response.value)
        .map_err(|e| PlannerError::PlanningFailed(format!("coordinator reply rejected: {e}")))?;
    let doc: PlanDoc = serde_json::from_value(response.value.clone())
        .map_err(|e| PlannerError::PlanningFailed(format!("unreadable plan document: {e}")))?;
    if doc.stages.is_empty() {
        return Err(PlannerError::PlanningFailed("plan document has no stages".into()));
    }

    let dataset_refs: BTreeSet<String> = doc
        .stages
        .iter()
        .flat_map(|s| s.bindings.values())
        .filter_map(|b| {
            match (
                b.get("kind").and_then(Value::as_str),
                b.get("ref").and_then(Value::as_str),
            ) {
                (Some("SourceDataset"), Some(r)) => Some(r.to_string()),
                _ => None,
            }
        })
        .collect();
    let mut trace = PlanTrace {
        intent: Intent {
            raw_query: intent_text.to_string(),
            task_descriptors: doc.stages.iter().map(|s| s.goal.clone()).collect(),
            dataset_refs: dataset_refs.into_iter().collect(),
        },
        focus_name: doc.focus_name.clone(),
        transcripts: response.transcripts.clone(),
        stages: Vec::new(),
        expansion_requests: Vec::new(),
    };

    let mut nodes = Vec::with_capacity(doc.stages.len());
    for (index, stage) in doc.stages.iter().enumerate() {
        let retrieval = kg.retrieve(&stage.goal, RETRIEVAL_K)?;
        let bound_slots: BTreeSet<&str> = stage.bindings.keys().map(String::as_str).collect();

        // When retrieval surfaced the suggested family, the choice is
        // restricted to it: a tool from another family that merely accepts
        // the same inputs is not an answer to this stage. Other families
        // stay in the trace as considered-but-ineligible.
        let (preferred, rest): (Vec<_>, Vec<_>) = retrieval
            .candidates
            .iter()
            .partition(|c| c.trail.get(1).map(String::as_str) == Some(&stage.suggested_family));
        let eligible: BTreeSet<&str> = if preferred.is_empty() {
            rest.iter().map(|c| c.id.as_str()).collect()
        } else {
            preferred.iter().map(|c| c.id.as_str()).collect()
        };

        let mut chosen: Option<ChosenTool> = None;
        let mut considered = Vec::new();
        for candidate in preferred.iter().chain(rest.iter()) {
            let tool_attr = kg
                .node(&candidate.id)
                .and_then(|n| n.attributes.get("tool"))
                .cloned();
            let descriptor = tool_attr.as_deref().and_then(|t| registry.describe(t));
            let slot_fit = descriptor
                .map(|d| {
                    let declared: BTreeSet<&str> =
                        d.inputs.iter().map(|s| s.name.as_str()).collect();
                    declared == bound_slots
                })
                .unwrap_or(false);
            considered.push(TraceCandidate {
                knowledge_id: candidate.id.clone(),
                tool: tool_attr.clone(),
                score: candidate.score,
                trail: candidate.trail.clone(),
                registered: descriptor.is_some(),
                slot_fit,
            });
            if chosen.is_none() && slot_fit && eligible.contains(candidate.id.as_str()) {
                chosen = Some(ChosenTool {
                    knowledge_id: candidate.id.clone(),
                    tool: tool_attr.expect("slot_fit implies a tool"),
                });
            }
        }

        trace.stages.push(StageTrace {
            index,
            goal: stage.goal.clone(),
            suggested_family: stage.suggested_family.clone(),
            candidates: considered.clone(),
            chosen: chosen.clone(),
        });

        let Some(chosen) = chosen else {
            trace
                .expansion_requests
                .push(kg.expand_stub(&stage.goal, Some(&stage.suggested_family)));
            return Err(PlannerError::NoToolForStage {
                stage: stage_id(index),
                candidates: considered.into_iter().map(|c| c.knowledge_id).collect(),
                trace: Box::new(trace),
            });
        };

        let mut params = BTreeMap::new();
        for (name, value) in &stage.params {
            params.insert(name.clone(), param_from_json(name, value)?);
        }
        let mut input_bindings = BTreeMap::new();
        for (slot, value) in &stage.bindings {
            input_bindings.insert(slot.clone(), binding_from_json(slot, value)?);
        }
        nodes.push(TaskNode {
            id: stage_id(index),
            goal: stage.goal.clone(),
            tool_name: chosen.tool,
            params,
            input_bindings,
            output_name: stage.output.clone(),
        });
    }

    let mut edges = BTreeSet::new();
    for (index, stage) in doc.stages.iter().enumerate() {
        let consumer = stage_id(index);
        for binding in nodes[index].input_bindings.values() {
            if let Binding::StageOutput { producer, selector } = binding {
                let dep_kind = match selector {
                    Selector::TopNode => DepKind::Parameter,
                    _ => DepKind::Data,
                };
                edges.insert(TaskEdge {
                    producer: producer.clone(),
                    consumer: consumer.clone(),
                    dep_kind,
                });
            }
        }
        if let Some(gate) = stage.gate_on {
            edges.insert(TaskEdge {
                producer: stage_id(gate),
                consumer: consumer.clone(),
                dep_kind: DepKind::Decision,
            });
        }
    }

    let report_nodes: Vec<usize> = doc
        .stages
        .iter()
        .enumerate()
        .filter(|(_, s)| s.report)
        .map(|(i, _)| i)
        .collect();
    let [report_index] = report_nodes.as_slice() else {
        return Err(PlannerError::PlanningFailed(format!(
            "plan document designates {} report stages",
            report_nodes.len()
        )));
    };

    let dag = TaskDag {
        nodes,
        edges: edges.into_iter().collect(),
        report_node: stage_id(*report_index),
    };
    let violations = validate_dag(&dag, registry);
    if !violations.is_empty() {
        return Err(PlannerError::InvalidDag(violations));
    }
    Ok((dag, trace))
}

/// Serializable digest of a DAG for the refinement context: node identity,
/// tool, and current parameters only.
fn dag_digest(dag: &TaskDag) -> Value {
    let nodes: Vec<Value> = dag
        .nodes
        .iter()
        .map(|n| {
            serde_json::json!({
                "id": n.id,
                "tool": n.tool_name,
                "params": n.params,
            })
        })
        .collect();
    serde_json::json!({"nodes": nodes})
}

fn outcome_str(outcome: Outcome) -> &'static str {
    match outcome {
        Outcome::Error => "Error",
        Outcome::LowQuality => "LowQuality",
        Outcome::Ok => "Ok",
    }
}

/// Looks up the knowledge node advertising `tool` via its tool attribute.
fn knowledge_entry_for_tool<'k>(
    kg: &'k KnowledgeGraph,
    tool: &str,
) -> Option<&'k crate::knowledge::KnowledgeNode> {
    kg.nodes_at(Level::Algorithm)
        .find(|n| n.attributes.get("tool").map(String::as_str) == Some(tool))
}

/// Revises a DAG on execution feedback. The revision touches only flagged
/// nodes: parameter changes, or tool substitution along a VariantOf relation.
/// Unflagged nodes keep their ids, so completed stage outputs stay reusable.
pub fn refine(
    dag: &TaskDag,
    feedback: &[ExecutionFeedback],
    kg: &KnowledgeGraph,
    registry: &ToolRegistry,
    coordinator: &dyn Coordinator,
    round: usize,
) -> Result<TaskDag, PlannerError> {
    if round >= R_MAX {
        return Err(PlannerError::RefinementExhausted { round, feedback: feedback.to_vec() });
    }
    for fb in feedback {
        fb.validate().map_err(PlannerError::PlanningFailed)?;
    }
    if feedback.iter().all(|fb| fb.outcome == Outcome::Ok) {
        return Ok(dag.clone());
    }

    let feedback_json: Vec<Value> = feedback
        .iter()
        .map(|fb| {
            serde_json::json!({
                "node_id": fb.node_id,
                "outcome": outcome_str(fb.outcome),
                "detail": fb.detail,
                "metrics": fb.metrics,
            })
        })
        .collect();
    let context = serde_json::json!({
        "dag": dag_digest(dag),
        "feedback": feedback_json,
    });
    let request = CoordinatorRequest::new(Role::Refine, "", context);
    let response = coordinator.complete(&request).map_err(|e| match e {
        CoordinatorError::SchemaValidationFailed { .. } => {
            PlannerError::PlanningFailed(format!("coordinator: {e}"))
        }
        other => PlannerError::Coordinator(other),
    })?;
    validate_response(&request.schema_id, &response.value)
        .map_err(|e| PlannerError::PlanningFailed(format!("coordinator reply rejected: {e}")))?;

    let flagged: BTreeSet<&str> = feedback
        .iter()
        .filter(|fb| fb.outcome != Outcome::Ok)
        .map(|fb| fb.node_id.as_str())
        .collect();
    let mut revised = dag.clone();
    let empty = vec![];
    let actions = response
        .value
        .get("actions")
        .and_then(Value::as_array)
        .unwrap_or(&empty);
    for action in actions {
        let node_id = action
            .get("node")
            .and_then(Value::as_str)
            .ok_or_else(|| PlannerError::PlanningFailed("action without node".into()))?;
        if !flagged.contains(node_id) {
            return Err(PlannerError::PlanningFailed(format!(
                "refinement touches {node_id}, which carried no flag"
            )));
        }
        let node = revised
            .nodes
            .iter_mut()
            .find(|n| n.id == node_id)
            .ok_or_else(|| {
                PlannerError::PlanningFailed(format!("refinement names unknown node {node_id}"))
            })?;
        match action.get("action").and_then(Value::as_str) {
            Some("reset_param") => {
                let param = action
                    .get("param")
                    .and_then(Value::as_str)
                    .ok_or_else(|| PlannerError::PlanningFailed("reset_param without param".into()))?;
                let default = registry
                    .describe(&node.tool_name)
                    .and_then(|d| d.param(param))
                    .and_then(|spec| spec.default.clone());
                match default {
                    Some(value) => {
                        node.params.insert(param.to_string(), value);
                    }
                    None => {
                        node.params.remove(param);
                    }
                }
            }
            Some("set_param") => {
                let param = action
                    .get("param")
                    .and_then(Value::as_str)
                    .ok_or_else(|| PlannerError::PlanningFailed("set_param without param".into()))?;
                let value = action
                    .get("value")
                    .ok_or_else(|| PlannerError::PlanningFailed("set_param without value".into()))?;
                node.params
                    .insert(param.to_string(), param_from_json(param, value)?);
            }
            Some("substitute_tool") => {
                let new_tool = action
                    .get("tool")
                    .and_then(Value::as_str)
                    .ok_or_else(|| PlannerError::PlanningFailed("substitute without tool".into()))?;
                let old_entry = knowledge_entry_for_tool(kg, &node.tool_name).ok_or_else(|| {
                    PlannerError::PlanningFailed(format!(
                        "tool {} has no knowledge entry to pivot from",
                        node.tool_name
                    ))
                })?;
                let new_entry = knowledge_entry_for_tool(kg, new_tool).ok_or_else(|| {
                    PlannerError::PlanningFailed(format!(
                        "substitute tool {new_tool} has no knowledge entry"
                    ))
                })?;
                let variants = kg.edges().iter().any(|e| {
                    e.relation == Relation::VariantOf
                        && ((e.src == old_entry.id && e.dst == new_entry.id)
                            || (e.src == new_entry.id && e.dst == old_entry.id))
                });
                if !variants {
                    return Err(PlannerError::PlanningFailed(format!(
                        "substituting {} with {new_tool} crosses family variants",
                        node.tool_name
                    )));
                }
                node.tool_name = new_tool.to_string();
            }
            other => {
                return Err(PlannerError::PlanningFailed(format!(
                    "unknown refinement action {other:?}"
                )))
            }
        }
    }

    let violations = validate_dag(&revised, registry);
    if !violations.is_empty() {
        return Err(PlannerError::InvalidDag(violations));
    }
    Ok(revised)
}
