//! The coordinator is the pluggable decision boundary of the engine: stage
//! decomposition, extraction-schema derivation, refinement directives, and
//! report narration all cross this one interface.
//!
//! Two implementations ship: a deterministic rule table for offline runs and
//! tests, and a remote client for chat-completion-compatible endpoints. Both
//! return structured JSON validated against a published per-role schema, and
//! both refuse context payloads that exceed the configured budget before
//! anything leaves the process.

pub mod mock;
pub mod remote;

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::construct::SchemaSpec;

pub use mock::MockCoordinator;
pub use remote::{RemoteConfig, RemoteCoordinator};

/// Default ceiling on serialized request context, in characters. Distillation
/// budgets upstream are sized so that a full four-stage evidence set fits.
pub const DEFAULT_CONTEXT_BUDGET: usize = 16_000;

/// Upper bound on stages in one decomposition; plans beyond this are a sign
/// the coordinator misunderstood the task, not that the task is large.
pub const MAX_PLAN_STAGES: usize = 16;

/// Hard cap on one stage goal, mirrored by the planner's intent contract.
pub const MAX_GOAL_CHARS: usize = 256;

/// Placeholder in plan params and literals for the focus entity's account
/// key, resolved against extracted entity attributes at execution time.
/// Coordinators see only the display name from the query, never the data.
pub const FOCUS_KEY_PLACEHOLDER: &str = "@focus_key";

/// Selector vocabulary for bindings that reference an upstream stage output.
pub const SELECTORS: [&str; 5] = [
    "Value",
    "NodeSet",
    "InducedGraph",
    "InducedEdgeTable",
    "TopNode",
];

#[derive(Debug, Error)]
pub enum CoordinatorError {
    /// The response failed schema validation twice; both raw transcripts are
    /// retained for the run log.
    #[error("response for {schema_id} failed validation after retry: {detail}")]
    SchemaValidationFailed {
        schema_id: String,
        detail: String,
        transcripts: Vec<String>,
    },
    #[error("coordinator transport: {0}")]
    TransportError(String),
    /// The serialized request context exceeded the configured budget. Raised
    /// at the boundary, before any payload is sent anywhere.
    #[error("context payload of {payload_chars} chars exceeds budget of {budget_chars}")]
    BudgetExceeded {
        payload_chars: usize,
        budget_chars: usize,
    },
}

/// The four decision points routed through the coordinator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    Plan,
    Schema,
    Refine,
    Report,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Plan => "plan",
            Role::Schema => "schema",
            Role::Refine => "refine",
            Role::Report => "report",
        }
    }

    /// Identifier of the response schema this role must satisfy.
    pub fn schema_id(self) -> &'static str {
        match self {
            Role::Plan => "plan.v1",
            Role::Schema => "schema.v1",
            Role::Refine => "refine.v1",
            Role::Report => "report.v1",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One request across the decision boundary.
///
/// `context` carries everything the coordinator may look at: catalog
/// excerpts, retrieval candidates, distilled stage evidence. It is always a
/// pre-distilled digest; the budget check rejects anything larger.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoordinatorRequest {
    pub role: Role,
    /// The user's question, or the stage goal under refinement.
    pub intent: String,
    pub context: Value,
    pub schema_id: String,
}

impl CoordinatorRequest {
    pub fn new(role: Role, intent: impl Into<String>, context: Value) -> Self {
        CoordinatorRequest {
            role,
            intent: intent.into(),
            context,
            schema_id: role.schema_id().to_string(),
        }
    }

    /// Size of the payload as counted against the context budget.
    pub fn payload_chars(&self) -> usize {
        let ctx = serde_json::to_string(&self.context).unwrap_or_default();
        self.intent.chars().count() + ctx.chars().count()
    }
}

/// A validated coordinator decision plus the raw exchange that produced it.
///
/// `transcripts` holds one entry per attempt (two when the first reply failed
/// validation and the retry succeeded), verbatim, for the run log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoordinatorResponse {
    pub value: Value,
    pub transcripts: Vec<String>,
}

pub trait Coordinator: Send + Sync {
    fn complete(&self, request: &CoordinatorRequest) -> Result<CoordinatorResponse, CoordinatorError>;
}

/// Boundary assertion shared by every implementation: no request context
/// larger than the budget leaves the process.
pub fn enforce_budget(
    request: &CoordinatorRequest,
    budget_chars: usize,
) -> Result<(), CoordinatorError> {
    let payload_chars = request.payload_chars();
    if payload_chars > budget_chars {
        return Err(CoordinatorError::BudgetExceeded {
            payload_chars,
            budget_chars,
        });
    }
    Ok(())
}

/// Validates a structured response against the named schema. Returns a
/// human-readable reason on failure; remote retries append it verbatim.
pub fn validate_response(schema_id: &str, value: &Value) -> Result<(), String> {
    match schema_id {
        "plan.v1" => validate_plan_v1(value),
        "schema.v1" => validate_schema_v1(value),
        "refine.v1" => validate_refine_v1(value),
        "report.v1" => validate_report_v1(value),
        other => Err(format!("unknown response schema {other}")),
    }
}

fn as_object<'v>(
    value: &'v Value,
    what: &str,
) -> Result<&'v serde_json::Map<String, Value>, String> {
    value
        .as_object()
        .ok_or_else(|| format!("{what} must be a JSON object"))
}

fn req_str<'v>(
    obj: &'v serde_json::Map<String, Value>,
    key: &str,
    what: &str,
) -> Result<&'v str, String> {
    match obj.get(key).and_then(Value::as_str) {
        Some(s) if !s.is_empty() => Ok(s),
        Some(_) => Err(format!("{what}: {key} must be non-empty")),
        None => Err(format!("{what}: missing string field {key}")),
    }
}

fn check_keys(
    obj: &serde_json::Map<String, Value>,
    allowed: &[&str],
    what: &str,
) -> Result<(), String> {
    for key in obj.keys() {
        if !allowed.contains(&key.as_str()) {
            return Err(format!("{what}: unknown field {key}"));
        }
    }
    Ok(())
}

/// Stage decomposition: a list of goal/family/binding stage descriptors with
/// exactly one report stage, back-references only, and scalar params.
fn validate_plan_v1(value: &Value) -> Result<(), String> {
    let top = as_object(value, "plan")?;
    check_keys(top, &["version", "focus_name", "stages"], "plan")?;
    if let Some(v) = top.get("focus_name") {
        if !v.as_str().map(|s| !s.is_empty()).unwrap_or(false) {
            return Err("plan: focus_name must be a non-empty string".into());
        }
    }
    let stages = top
        .get("stages")
        .and_then(Value::as_array)
        .ok_or("plan: missing stages array")?;
    if stages.is_empty() {
        return Err("plan: stages must be non-empty".into());
    }
    if stages.len() > MAX_PLAN_STAGES {
        return Err(format!("plan: {} stages exceed limit {MAX_PLAN_STAGES}", stages.len()));
    }
    let mut outputs = std::collections::BTreeSet::new();
    let mut report_stages = 0usize;
    for (i, stage) in stages.iter().enumerate() {
        let what = format!("stage {i}");
        let obj = as_object(stage, &what)?;
        check_keys(
            obj,
            &["goal", "suggested_family", "output", "bindings", "params", "gate_on", "report"],
            &what,
        )?;
        let goal = req_str(obj, "goal", &what)?;
        if goal.chars().count() > MAX_GOAL_CHARS {
            return Err(format!("{what}: goal exceeds {MAX_GOAL_CHARS} chars"));
        }
        req_str(obj, "suggested_family", &what)?;
        let output = req_str(obj, "output", &what)?;
        if !output.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_') {
            return Err(format!("{what}: output {output} must be lower_snake_case"));
        }
        if !outputs.insert(output.to_string()) {
            return Err(format!("{what}: duplicate output name {output}"));
        }
        if let Some(bindings) = obj.get("bindings") {
            let bindings = as_object(bindings, &format!("{what} bindings"))?;
            for (slot, binding) in bindings {
                validate_binding(binding, i, &format!("{what} binding {slot}"))?;
            }
        }
        if let Some(params) = obj.get("params") {
            let params = as_object(params, &format!("{what} params"))?;
            for (name, v) in params {
                if !(v.is_string() || v.is_number() || v.is_boolean()) {
                    return Err(format!("{what}: param {name} must be a scalar"));
                }
            }
        }
        if let Some(gate) = obj.get("gate_on") {
            let g = gate
                .as_u64()
                .ok_or_else(|| format!("{what}: gate_on must be a stage index"))?;
            if g as usize >= i {
                return Err(format!("{what}: gate_on {g} must reference an earlier stage"));
            }
        }
        match obj.get("report") {
            None => {}
            Some(Value::Bool(true)) => report_stages += 1,
            Some(Value::Bool(false)) => {}
            Some(_) => return Err(format!("{what}: report must be a bool")),
        }
    }
    if report_stages != 1 {
        return Err(format!("plan: expected exactly one report stage, found {report_stages}"));
    }
    Ok(())
}

fn validate_binding(binding: &Value, stage_index: usize, what: &str) -> Result<(), String> {
    let obj = as_object(binding, what)?;
    let kind = req_str(obj, "kind", what)?;
    match kind {
        "SourceDataset" => {
            check_keys(obj, &["kind", "ref"], what)?;
            req_str(obj, "ref", what)?;
        }
        "StageOutput" => {
            check_keys(obj, &["kind", "stage", "selector"], what)?;
            let s = obj
                .get("stage")
                .and_then(Value::as_u64)
                .ok_or_else(|| format!("{what}: missing stage index"))?;
            if s as usize >= stage_index {
                return Err(format!("{what}: stage {s} is not an earlier stage"));
            }
            let selector = req_str(obj, "selector", what)?;
            if !SELECTORS.contains(&selector) {
                return Err(format!("{what}: unknown selector {selector}"));
            }
        }
        "Literal" => {
            check_keys(obj, &["kind", "value"], what)?;
            if !obj.contains_key("value") {
                return Err(format!("{what}: literal binding needs a value"));
            }
        }
        other => return Err(format!("{what}: unknown binding kind {other}")),
    }
    Ok(())
}

/// Extraction schema: must deserialize into the construct-layer `SchemaSpec`
/// and name at least one entity and one relation. Catalog-level validation
/// (columns exist, types line up) happens downstream where the catalog is.
fn validate_schema_v1(value: &Value) -> Result<(), String> {
    let spec: SchemaSpec = serde_json::from_value(value.clone())
        .map_err(|e| format!("schema: not a valid extraction spec: {e}"))?;
    if spec.entities.is_empty() {
        return Err("schema: entities must be non-empty".into());
    }
    if spec.relations.is_empty() {
        return Err("schema: relations must be non-empty".into());
    }
    Ok(())
}

/// Refinement directives: a possibly-empty action list over named DAG nodes.
fn validate_refine_v1(value: &Value) -> Result<(), String> {
    let top = as_object(value, "refinement")?;
    check_keys(top, &["actions"], "refinement")?;
    let actions = top
        .get("actions")
        .and_then(Value::as_array)
        .ok_or("refinement: missing actions array")?;
    for (i, action) in actions.iter().enumerate() {
        let what = format!("action {i}");
        let obj = as_object(action, &what)?;
        req_str(obj, "node", &what)?;
        let kind = req_str(obj, "action", &what)?;
        match kind {
            "reset_param" => {
                check_keys(obj, &["node", "action", "param"], &what)?;
                req_str(obj, "param", &what)?;
            }
            "set_param" => {
                check_keys(obj, &["node", "action", "param", "value"], &what)?;
                req_str(obj, "param", &what)?;
                match obj.get("value") {
                    Some(v) if v.is_string() || v.is_number() || v.is_boolean() => {}
                    _ => return Err(format!("{what}: set_param needs a scalar value")),
                }
            }
            "substitute_tool" => {
                check_keys(obj, &["node", "action", "tool"], &what)?;
                req_str(obj, "tool", &what)?;
            }
            other => return Err(format!("{what}: unknown action {other}")),
        }
    }
    Ok(())
}

/// Report narration: non-empty narrative and verdict, optional highlights.
fn validate_report_v1(value: &Value) -> Result<(), String> {
    let top = as_object(value, "report")?;
    check_keys(top, &["narrative", "verdict", "highlights"], "report")?;
    req_str(top, "narrative", "report")?;
    req_str(top, "verdict", "report")?;
    if let Some(h) = top.get("highlights") {
        let items = h.as_array().ok_or("report: highlights must be an array")?;
        if !items.iter().all(Value::is_string) {
            return Err("report: highlights must be strings".into());
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn budget_counts_intent_and_context_chars() {
        let req = CoordinatorRequest::new(Role::Plan, "abcde", json!({"k": "vvvvv"}));
        // {"k":"vvvvv"} is 13 chars; intent adds 5.
        assert_eq!(req.payload_chars(), 18);
        assert!(enforce_budget(&req, 18).is_ok());
        let err = enforce_budget(&req, 17).unwrap_err();
        match err {
            CoordinatorError::BudgetExceeded { payload_chars, budget_chars } => {
                assert_eq!((payload_chars, budget_chars), (18, 17));
            }
            other => panic!("expected budget error, got {other:?}"),
        }
    }

    #[test]
    fn roles_map_to_versioned_schema_ids() {
        assert_eq!(Role::Plan.schema_id(), "plan.v1");
        assert_eq!(Role::Report.schema_id(), "report.v1");
        assert!(validate_response("nope.v9", &json!({})).is_err());
    }

    #[test]
    fn minimal_plan_passes_and_offenders_are_named() {
        let good = json!({
            "version": "plan.v1",
            "stages": [{
                "goal": "rank accounts",
                "suggested_family": "f.ranking",
                "bindings": {"graph": {"kind": "SourceDataset", "ref": "transfer"}},
                "params": {},
                "report": true,
                "output": "ranking"
            }]
        });
        validate_response("plan.v1", &good).unwrap();

        let forward = json!({
            "stages": [
                {"goal": "g", "suggested_family": "f", "output": "a",
                 "bindings": {"x": {"kind": "StageOutput", "stage": 0, "selector": "NodeSet"}},
                 "report": true}
            ]
        });
        let err = validate_response("plan.v1", &forward).unwrap_err();
        assert!(err.contains("stage 0"), "{err}");
        assert!(err.contains("earlier"), "{err}");
    }

    #[test]
    fn refine_accepts_an_empty_action_list() {
        validate_response("refine.v1", &json!({"actions": []})).unwrap();
        let err = validate_response(
            "refine.v1",
            &json!({"actions": [{"node": "s1", "action": "delete_node"}]}),
        )
        .unwrap_err();
        assert!(err.contains("delete_node"), "{err}");
    }
}
