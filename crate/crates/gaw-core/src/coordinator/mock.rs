//! Deterministic coordinator: a versioned rule table over normalized intent
//! keywords. Identical requests produce byte-identical responses, which makes
//! every pipeline built on top of it reproducible end-to-end.
//!
//! The table is deliberately small. It is not trying to understand language;
//! it maps recognizable analytical intents onto decomposition templates whose
//! structure downstream validation can hold to the same standard as a remote
//! model's output.

use serde_json::{json, Map, Value};

use crate::construct::{classify_task, fallback_schema, ColumnRole, SourceCatalog, TaskKind};
use crate::text::tokenize;

use super::{
    enforce_budget, validate_response, Coordinator, CoordinatorError, CoordinatorRequest,
    CoordinatorResponse, Role, DEFAULT_CONTEXT_BUDGET,
};

/// Bump when template shapes change; recorded in every transcript.
pub const RULE_TABLE_VERSION: &str = "v1";

pub use super::FOCUS_KEY_PLACEHOLDER;

pub struct MockCoordinator {
    budget_chars: usize,
}

impl Default for MockCoordinator {
    fn default() -> Self {
        Self::new()
    }
}

impl MockCoordinator {
    pub fn new() -> Self {
        MockCoordinator { budget_chars: DEFAULT_CONTEXT_BUDGET }
    }

    pub fn with_budget(budget_chars: usize) -> Self {
        MockCoordinator { budget_chars }
    }
}

impl Coordinator for MockCoordinator {
    fn complete(&self, request: &CoordinatorRequest) -> Result<CoordinatorResponse, CoordinatorError> {
        enforce_budget(request, self.budget_chars)?;
        let (rule, value) = match request.role {
            Role::Plan => plan_rules(&request.intent),
            Role::Schema => schema_rule(&request.intent, &request.context)?,
            Role::Refine => refine_rules(&request.context),
            Role::Report => report_rule(&request.context),
        };
        debug_assert!(
            validate_response(&request.schema_id, &value).is_ok(),
            "rule {rule} produced an invalid {} response",
            request.schema_id
        );
        let transcript = format!(
            "mock/{RULE_TABLE_VERSION} role={} rule={rule} -> {}",
            request.role,
            serde_json::to_string(&value).expect("templates serialize")
        );
        Ok(CoordinatorResponse { value, transcripts: vec![transcript] })
    }
}

/// True when any keyword occurs as a whole token of the normalized intent.
fn mentions(tokens: &[String], keywords: &[&str]) -> bool {
    tokens.iter().any(|t| keywords.contains(&t.as_str()))
}

/// Relation label the plan binds against, matching the schema templates for
/// the same intent.
fn relation_for(intent: &str) -> &'static str {
    match classify_task(intent) {
        TaskKind::MoneyFlow => "transfer",
        TaskKind::Purchase => "purchase",
    }
}

/// Extracts a person-style focus name: a double-quoted span if present,
/// otherwise the first run of capitalized words ("Anna Lee"). A capital that
/// opens the text is sentence case, not evidence of a name, and is dropped
/// from whatever run it starts.
fn extract_focus_name(intent: &str) -> Option<String> {
    let mut parts = intent.split('"');
    parts.next();
    if let Some(inner) = parts.next() {
        let inner = inner.trim();
        if !inner.is_empty() && inner.chars().count() <= 64 {
            return Some(inner.to_string());
        }
    }
    let words: Vec<&str> = intent
        .split(|c: char| c.is_whitespace())
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|w| !w.is_empty())
        .collect();
    let is_name = |w: &str| {
        let mut chars = w.chars();
        matches!(chars.next(), Some(c) if c.is_uppercase())
            && chars.clone().count() >= 1
            && chars.all(|c| c.is_lowercase() && c.is_alphabetic())
    };
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut start = None;
    for (i, w) in words.iter().enumerate() {
        if is_name(w) {
            start.get_or_insert(i);
        } else if let Some(s) = start.take() {
            runs.push((s, i - s));
        }
    }
    if let Some(s) = start {
        runs.push((s, words.len() - s));
    }
    let adjusted: Vec<(usize, usize)> = runs
        .into_iter()
        .map(|(s, l)| if s == 0 { (1, l - 1) } else { (s, l) })
        .filter(|&(_, l)| l > 0)
        .collect();
    if let Some(&(s, l)) = adjusted.iter().find(|&&(_, l)| l >= 2) {
        return Some(words[s..s + l].join(" "));
    }
    adjusted.first().map(|&(s, _)| words[s].to_string())
}

/// Extracts an amount threshold: the first number following a cue word like
/// "above" or "over", with `$` and thousands separators stripped.
fn extract_threshold(intent: &str) -> Option<f64> {
    const CUES: [&str; 6] = ["above", "over", "exceeding", "beyond", "least", "threshold"];
    let words: Vec<String> = intent
        .split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric() && c != '.' && c != '$').to_string())
        .collect();
    for (i, w) in words.iter().enumerate() {
        if !CUES.contains(&w.to_lowercase().as_str()) {
            continue;
        }
        for cand in words.iter().skip(i + 1).take(2) {
            let cleaned: String = cand.chars().filter(|c| c.is_ascii_digit() || *c == '.').collect();
            if cleaned.is_empty() {
                continue;
            }
            if let Ok(v) = cleaned.parse::<f64>() {
                if v.is_finite() && v > 0.0 {
                    return Some(v);
                }
            }
        }
    }
    None
}

fn stage(
    goal: &str,
    family: &str,
    bindings: Value,
    params: Value,
    output: &str,
) -> Map<String, Value> {
    let mut obj = Map::new();
    obj.insert("goal".into(), json!(goal));
    obj.insert("suggested_family".into(), json!(family));
    obj.insert("bindings".into(), bindings);
    obj.insert("params".into(), params);
    obj.insert("output".into(), json!(output));
    obj
}

fn plan_rules(intent: &str) -> (&'static str, Value) {
    let tokens = tokenize(intent);
    let relation = relation_for(intent);
    let graph_binding = json!({"kind": "SourceDataset", "ref": relation});

    const CYCLE_HINTS: [&str; 10] = [
        "launder", "laundering", "laundered", "cycle", "cycles", "cyclic", "ring", "rings",
        "loop", "loops",
    ];
    const COMMUNITY_HINTS: [&str; 7] = [
        "community", "communities", "component", "components", "cluster", "clusters", "connected",
    ];
    const NEIGHBOR_HINTS: [&str; 8] = [
        "neighborhood", "neighborhoods", "neighbors", "around", "reach", "reachable", "hop",
        "hops",
    ];
    const ROUTE_HINTS: [&str; 5] = ["path", "paths", "route", "routes", "shortest"];

    if mentions(&tokens, &CYCLE_HINTS) {
        let focus = extract_focus_name(intent);
        let threshold = extract_threshold(intent);

        let s1 = if focus.is_some() {
            stage(
                "rank accounts by how strongly transfer funds circulate back to the focus account",
                "f.ranking",
                json!({
                    "graph": graph_binding,
                    "seeds": {"kind": "Literal", "value": [FOCUS_KEY_PLACEHOLDER]}
                }),
                json!({}),
                "risk_rank",
            )
        } else {
            stage(
                "rank all accounts by overall transfer influence",
                "f.ranking",
                json!({"graph": graph_binding}),
                json!({}),
                "risk_rank",
            )
        };

        let mut cycle_params = Map::new();
        if focus.is_some() {
            cycle_params.insert("anchor".into(), json!(FOCUS_KEY_PLACEHOLDER));
        }
        if let Some(t) = threshold {
            cycle_params.insert("min_weight".into(), json!(t));
        }
        let mut s2 = stage(
            "detect cycles of high value transfers moving funds through linked accounts",
            "f.cycles",
            json!({"graph": graph_binding}),
            Value::Object(cycle_params),
            "cycles",
        );
        s2.insert("gate_on".into(), json!(0));

        let mut s3 = stage(
            "estimate the volume of funds moving along the detected cycles",
            "f.aggregation",
            json!({"table": {"kind": "StageOutput", "stage": 1, "selector": "InducedEdgeTable"}}),
            json!({}),
            "cycle_flows",
        );
        s3.insert("gate_on".into(), json!(1));

        let mut summary_params = Map::new();
        if focus.is_some() {
            summary_params.insert("focus".into(), json!(FOCUS_KEY_PLACEHOLDER));
        }
        let mut s4 = stage(
            "summarize transfer volume totals for the accounts under review",
            "f.aggregation",
            json!({"table": graph_binding}),
            Value::Object(summary_params),
            "flow_summary",
        );
        s4.insert("gate_on".into(), json!(2));
        s4.insert("report".into(), json!(true));

        let mut plan = Map::new();
        plan.insert("version".into(), json!("plan.v1"));
        if let Some(name) = focus {
            plan.insert("focus_name".into(), json!(name));
        }
        plan.insert(
            "stages".into(),
            Value::Array(vec![s1.into(), s2.into(), s3.into(), s4.into()]),
        );
        return ("aml_cycle_hunt", Value::Object(plan));
    }

    if mentions(&tokens, &COMMUNITY_HINTS) {
        let mut s1 = stage(
            "group accounts into connected transfer components",
            "f.community",
            json!({"graph": graph_binding}),
            json!({}),
            "components",
        );
        s1.insert("report".into(), json!(true));
        let plan = json!({"version": "plan.v1", "stages": [s1]});
        return ("community_split", plan);
    }

    if mentions(&tokens, &NEIGHBOR_HINTS) {
        let s1 = stage(
            "rank all accounts by overall transfer influence",
            "f.ranking",
            json!({"graph": graph_binding}),
            json!({}),
            "ranking",
        );
        let mut s2 = stage(
            "collect the transfer neighborhood reachable within two hops of the top ranked account",
            "f.neighborhoods",
            json!({
                "graph": graph_binding,
                "seeds": {"kind": "StageOutput", "stage": 0, "selector": "TopNode"}
            }),
            json!({"k": 2}),
            "neighborhood",
        );
        s2.insert("report".into(), json!(true));
        let plan = json!({"version": "plan.v1", "stages": [s1, s2]});
        return ("neighborhood_probe", plan);
    }

    if mentions(&tokens, &ROUTE_HINTS) {
        let mut s1 = stage(
            "find the shortest transfer routes between accounts",
            "f.paths",
            json!({"graph": graph_binding}),
            json!({}),
            "routes",
        );
        s1.insert("report".into(), json!(true));
        let plan = json!({"version": "plan.v1", "stages": [s1]});
        return ("route_trace", plan);
    }

    // Everything else, including explicit rank/importance asks, gets the
    // single-stage ranking fallback: it is the one template with no
    // preconditions beyond a graph.
    let mut s1 = stage(
        "rank all accounts by overall transfer influence",
        "f.ranking",
        json!({"graph": graph_binding}),
        json!({}),
        "ranking",
    );
    s1.insert("report".into(), json!(true));
    let plan = json!({"version": "plan.v1", "stages": [s1]});
    ("ranking_only", plan)
}

/// Derives the extraction schema from the catalog in the request context,
/// then upgrades the primary entity to a node source carrying attributes
/// (display names) when the catalog has one. The pipeline needs those
/// attributes to resolve a focus name to an account key.
fn schema_rule(intent: &str, context: &Value) -> Result<(&'static str, Value), CoordinatorError> {
    let catalog: SourceCatalog = serde_json::from_value(
        context.get("catalog").cloned().unwrap_or(Value::Null),
    )
    .map_err(|e| CoordinatorError::SchemaValidationFailed {
        schema_id: Role::Schema.schema_id().to_string(),
        detail: format!("request context carries no readable catalog: {e}"),
        transcripts: vec![],
    })?;
    let mut spec = fallback_schema(intent, &catalog).map_err(|e| {
        CoordinatorError::SchemaValidationFailed {
            schema_id: Role::Schema.schema_id().to_string(),
            detail: format!("catalog supports no extraction template: {e}"),
            transcripts: vec![],
        }
    })?;
    let relation_source = spec.relations.first().map(|r| r.source_id.clone());
    let node_source = catalog.sources.iter().find(|s| {
        Some(&s.id) != relation_source.as_ref()
            && s.column_with_role(ColumnRole::EntityKey).is_some()
            && s.columns.iter().any(|c| c.role == Some(ColumnRole::Attribute))
    });
    if let (Some(node_source), Some(entity)) = (node_source, spec.entities.first_mut()) {
        entity.source_id = node_source.id.clone();
        entity.key_column = node_source
            .column_with_role(ColumnRole::EntityKey)
            .expect("checked above")
            .name
            .clone();
        entity.attribute_columns = node_source
            .columns
            .iter()
            .filter(|c| c.role == Some(ColumnRole::Attribute))
            .map(|c| c.name.clone())
            .collect();
    }
    let value = serde_json::to_value(&spec).expect("schema spec serializes");
    Ok(("role_annotated_extraction", value))
}

/// Scans an error detail for the offending parameter name, relying on the
/// registry's "param <name> of <tool>" phrasing.
fn param_in_detail(detail: &str) -> Option<String> {
    let idx = detail.find("param ")?;
    let rest = &detail[idx + "param ".len()..];
    let name: String = rest
        .chars()
        .take_while(|c| c.is_ascii_alphanumeric() || *c == '_')
        .collect();
    if name.is_empty() {
        None
    } else {
        Some(name)
    }
}

/// Refinement table: reset a parameter the executor rejected; relax the
/// weight floor when a stage came back empty. Anything else is left alone,
/// which surfaces as an unchanged plan and, if the failure repeats, as
/// refinement exhaustion rather than silent mutation.
fn refine_rules(context: &Value) -> (&'static str, Value) {
    let empty = vec![];
    let feedback = context
        .get("feedback")
        .and_then(Value::as_array)
        .unwrap_or(&empty);
    let nodes = context
        .pointer("/dag/nodes")
        .and_then(Value::as_array)
        .unwrap_or(&empty);
    let node_params = |id: &str| -> Option<&Map<String, Value>> {
        nodes
            .iter()
            .find(|n| n.get("id").and_then(Value::as_str) == Some(id))
            .and_then(|n| n.get("params"))
            .and_then(Value::as_object)
    };
    let mut actions = Vec::new();
    for fb in feedback {
        let Some(node) = fb.get("node_id").and_then(Value::as_str) else { continue };
        let outcome = fb.get("outcome").and_then(Value::as_str).unwrap_or("Ok");
        let detail = fb.get("detail").and_then(Value::as_str).unwrap_or("");
        match outcome {
            "Error" => {
                if let Some(param) = param_in_detail(detail) {
                    actions.push(json!({
                        "node": node,
                        "action": "reset_param",
                        "param": param
                    }));
                }
            }
            "LowQuality" => {
                if let Some(current) = node_params(node)
                    .and_then(|p| p.get("min_weight"))
                    .and_then(Value::as_f64)
                {
                    actions.push(json!({
                        "node": node,
                        "action": "set_param",
                        "param": "min_weight",
                        "value": current / 2.0
                    }));
                }
            }
            _ => {}
        }
    }
    ("feedback_table", json!({"actions": actions}))
}

/// Templated narration. Every sentence that states a result cites the stage
/// it came from in square brackets, and only stages reported Ok are cited,
/// so the report layer's evidence-soundness check holds by construction.
fn report_rule(context: &Value) -> (&'static str, Value) {
    let empty = vec![];
    let stages = context
        .get("stages")
        .and_then(Value::as_array)
        .unwrap_or(&empty);
    let query = context.get("query").and_then(Value::as_str).unwrap_or("");
    let ok: Vec<&Value> = stages
        .iter()
        .filter(|s| s.get("status").and_then(Value::as_str) == Some("Ok"))
        .collect();

    let mut paragraphs = Vec::new();
    let mut highlights = Vec::new();
    let opening = if query.is_empty() {
        format!("The workflow completed {} of {} planned stages.", ok.len(), stages.len())
    } else {
        format!(
            "In response to \"{query}\", the workflow completed {} of {} planned stages.",
            ok.len(),
            stages.len()
        )
    };
    paragraphs.push(opening);

    for s in stages {
        let id = s.get("id").and_then(Value::as_str).unwrap_or("?");
        let tool = s.get("tool").and_then(Value::as_str).unwrap_or("unknown tool");
        let goal = s.get("goal").and_then(Value::as_str).unwrap_or("");
        let status = s.get("status").and_then(Value::as_str).unwrap_or("Error");
        match status {
            "Ok" => {
                let summary = s.get("summary").and_then(Value::as_str).unwrap_or("no summary");
                let first_line = summary.lines().next().unwrap_or("no summary");
                paragraphs.push(format!("To {goal}, {tool} reported: {first_line} [{id}]."));
                highlights.push(format!("{id}: {first_line}"));
            }
            "Skipped" => {
                let gate = s.get("gated_on").and_then(Value::as_str);
                match gate {
                    Some(g) => paragraphs.push(format!(
                        "Stage {id} was skipped because its gate, stage [{g}], produced no items."
                    )),
                    None => paragraphs.push(format!("Stage {id} was skipped.")),
                }
            }
            _ => {
                paragraphs.push(format!("Stage {id} did not complete."));
            }
        }
    }

    let findings = context.get("findings");
    let cycles_found = findings
        .and_then(|f| f.get("cycles_found"))
        .and_then(Value::as_u64);
    let evidence_stage = findings
        .and_then(|f| f.get("evidence_stage"))
        .and_then(Value::as_str);
    let verdict = match (cycles_found, evidence_stage) {
        (Some(n), Some(sid)) if n > 0 => {
            paragraphs.push(format!(
                "Verdict: flagged. {n} qualifying transfer cycle(s) were detected [{sid}]."
            ));
            "flagged"
        }
        (Some(0), Some(sid)) => {
            paragraphs.push(format!(
                "Verdict: clear. No qualifying transfer cycles were detected [{sid}]."
            ));
            "clear"
        }
        _ => {
            paragraphs.push("All requested analyses completed; see the per-stage evidence.".into());
            "report"
        }
    };

    let value = json!({
        "narrative": paragraphs.join("\n\n"),
        "verdict": verdict,
        "highlights": highlights
    });
    ("evidence_narration", value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn focus_name_extraction_prefers_quotes_and_finds_runs() {
        assert_eq!(
            extract_focus_name("is \"Li Wei\" laundering money"),
            Some("Li Wei".to_string())
        );
        assert_eq!(
            extract_focus_name("Identify whether Anna Lee is involved in laundering."),
            Some("Anna Lee".to_string())
        );
        // Sentence-initial capital alone is not a name.
        assert_eq!(extract_focus_name("Rank the accounts by importance"), None);
    }

    #[test]
    fn threshold_extraction_reads_cued_amounts() {
        assert_eq!(extract_threshold("transfers above 2750"), Some(2750.0));
        assert_eq!(extract_threshold("flows over $1,500.50 only"), Some(1500.5));
        assert_eq!(extract_threshold("at least USD 900"), Some(900.0));
        assert_eq!(extract_threshold("no numbers here"), None);
    }

    #[test]
    fn param_names_are_lifted_from_registry_phrasing() {
        assert_eq!(
            param_in_detail("schema violation: param max_len of enumerate_cycles: 12 outside [2, 8]"),
            Some("max_len".to_string())
        );
        assert_eq!(param_in_detail("executor blew up"), None);
    }
}
