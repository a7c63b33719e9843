//! Report assembly: distilled stage evidence goes to the coordinator for
//! narration, and the reply is checked for citation soundness before it is
//! rendered. Evidence blocks are built locally from stage outputs, so two
//! coordinators given the same outputs differ only in narrative text.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{PipelineError, StageOutput, StageStatus};
use crate::coordinator::{validate_response, Coordinator, CoordinatorRequest, Role};
use crate::planner::TaskDag;
use crate::registry::DistilledResult;
use crate::values::{CycleSet, ValueKind};

/// Evidence for one completed stage: identity plus the distilled payload a
/// reader can check claims against. Only Ok stages produce evidence;
/// skipped stages appear in the narrative and the plan reference instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceBlock {
    pub stage_id: String,
    pub goal: String,
    pub tool: String,
    pub distilled: DistilledResult,
}

/// One planned stage as it ended up, for the report's plan reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub stage_id: String,
    pub goal: String,
    pub tool: String,
    pub status: StageStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub skip_reason: Option<String>,
}

/// Verdict-relevant facts pulled from the raw (not distilled) outputs, so
/// the flagged-cycle list is complete even when distillation truncated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Findings {
    pub cycles_found: u64,
    /// Stage whose output backs the verdict.
    pub evidence_stage: String,
    /// Full membership of every qualifying cycle, each rotated so the
    /// lexicographically smallest account key comes first.
    pub flagged_cycles: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub query: String,
    pub narrative: String,
    pub verdict: String,
    pub highlights: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub findings: Option<Findings>,
    /// Completed stages only.
    pub evidence: Vec<EvidenceBlock>,
    /// Every planned stage with its final status.
    pub stages: Vec<StageSummary>,
}

/// Builds the report for a settled run.
///
/// Precondition: no stage is still in Error (the refinement loop either
/// fixed failures or surfaced them); violations are a report-phase error.
/// The narration context sent to the coordinator holds only stage digests,
/// never raw payloads.
pub fn assemble_report(
    query: &str,
    dag: &TaskDag,
    outputs: &[StageOutput],
    coordinator: &dyn Coordinator,
) -> Result<Report, PipelineError> {
    for o in outputs {
        if o.status == StageStatus::Error {
            return Err(PipelineError::Report(format!(
                "stage {} is still failing: {}",
                o.node_id,
                o.error.as_deref().unwrap_or("unspecified")
            )));
        }
    }

    let mut evidence = Vec::new();
    let mut stages = Vec::with_capacity(dag.nodes.len());
    let mut stage_digests = Vec::with_capacity(dag.nodes.len());
    for node in &dag.nodes {
        let output = outputs
            .iter()
            .find(|o| o.node_id == node.id)
            .ok_or_else(|| PipelineError::Report(format!("no output for stage {}", node.id)))?;
        if output.status == StageStatus::Ok {
            let distilled = output.distilled.clone().ok_or_else(|| {
                PipelineError::Report(format!(
                    "stage {} completed without distilled evidence",
                    node.id
                ))
            })?;
            evidence.push(EvidenceBlock {
                stage_id: node.id.clone(),
                goal: node.goal.clone(),
                tool: node.tool_name.clone(),
                distilled,
            });
        }
        stages.push(StageSummary {
            stage_id: node.id.clone(),
            goal: node.goal.clone(),
            tool: node.tool_name.clone(),
            status: output.status,
            skip_reason: output.skip_reason.clone(),
        });
        let mut digest = json!({
            "id": node.id,
            "tool": node.tool_name,
            "goal": node.goal,
            "status": output.status.as_str(),
        });
        if let Some(d) = &output.distilled {
            digest["summary"] = Value::String(d.summary_text.clone());
        }
        if let Some(g) = &output.gated_on {
            digest["gated_on"] = Value::String(g.clone());
        }
        stage_digests.push(digest);
    }

    let findings = extract_findings(outputs);
    let mut context = json!({ "query": query, "stages": stage_digests });
    if let Some(f) = &findings {
        context["findings"] = json!({
            "cycles_found": f.cycles_found,
            "evidence_stage": f.evidence_stage,
        });
    }

    let request = CoordinatorRequest::new(Role::Report, query, context);
    let response = coordinator
        .complete(&request)
        .map_err(|e| PipelineError::Report(e.to_string()))?;
    validate_response(&request.schema_id, &response.value)
        .map_err(|e| PipelineError::Report(format!("narration rejected: {e}")))?;

    let narrative = response.value["narrative"].as_str().unwrap_or_default().to_string();
    let verdict = response.value["verdict"].as_str().unwrap_or_default().to_string();
    let highlights = response.value["highlights"]
        .as_array()
        .map(|items| {
            items
                .iter()
                .filter_map(Value::as_str)
                .map(str::to_string)
                .collect()
        })
        .unwrap_or_default();

    check_citations(&narrative, outputs)?;

    Ok(Report {
        query: query.to_string(),
        narrative,
        verdict,
        highlights,
        findings,
        evidence,
        stages,
    })
}

/// The verdict rests on the first completed cycle-search stage, read from
/// its raw payload so truncation cannot hide qualifying cycles.
fn extract_findings(outputs: &[StageOutput]) -> Option<Findings> {
    for o in outputs {
        if o.status != StageStatus::Ok {
            continue;
        }
        let raw = o.raw.as_ref()?;
        if raw.kind != ValueKind::CycleSet {
            continue;
        }
        let crate::values::ToolValue::CycleSet { cycles } = &raw.payload else {
            continue;
        };
        return Some(Findings {
            cycles_found: cycles.cycles.len() as u64,
            evidence_stage: o.node_id.clone(),
            flagged_cycles: cycle_members(cycles),
        });
    }
    None
}

fn cycle_members(cycles: &CycleSet) -> Vec<Vec<String>> {
    let mut out: Vec<Vec<String>> = cycles
        .cycles
        .iter()
        .map(|c| {
            let keys: Vec<String> = c
                .nodes
                .iter()
                .map(|&n| cycles.id_map.key(n).unwrap_or("?").to_string())
                .collect();
            rotate_to_min(keys)
        })
        .collect();
    out.sort();
    out
}

/// Rotates a directed cycle so the smallest key leads; orientation is kept.
fn rotate_to_min(members: Vec<String>) -> Vec<String> {
    if members.is_empty() {
        return members;
    }
    let pivot = members
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let mut rotated = Vec::with_capacity(members.len());
    rotated.extend_from_slice(&members[pivot..]);
    rotated.extend_from_slice(&members[..pivot]);
    rotated
}

/// Every bracketed stage citation in the narrative must name a stage that
/// ran to completion. Unknown `s<N>` citations are rejected outright.
fn check_citations(narrative: &str, outputs: &[StageOutput]) -> Result<(), PipelineError> {
    let mut rest = narrative;
    while let Some(open) = rest.find('[') {
        let after = &rest[open + 1..];
        let Some(close) = after.find(']') else { break };
        let token = &after[..close];
        let looks_like_stage =
            token.len() > 1 && token.starts_with('s') && token[1..].chars().all(|c| c.is_ascii_digit());
        match outputs.iter().find(|o| o.node_id == token) {
            Some(o) if o.status == StageStatus::Ok => {}
            Some(o) => {
                return Err(PipelineError::Report(format!(
                    "narrative cites stage {token}, which has status {}",
                    o.status.as_str()
                )))
            }
            None if looks_like_stage => {
                return Err(PipelineError::Report(format!(
                    "narrative cites unknown stage {token}"
                )))
            }
            None => {}
        }
        rest = &after[close + 1..];
    }
    Ok(())
}

impl Report {
    /// Deterministic markdown rendering; the only run-to-run variation comes
    /// from the narrative text itself.
    pub fn render_markdown(&self) -> String {
        let mut md = String::new();
        md.push_str("# Analysis Report\n\n");
        md.push_str(&format!("Query: {}\n\n", self.query));
        md.push_str(&format!("Verdict: **{}**\n\n", self.verdict));
        md.push_str("## Narrative\n\n");
        md.push_str(&self.narrative);
        md.push_str("\n\n");

        if let Some(f) = &self.findings {
            md.push_str("## Qualifying cycles\n\n");
            md.push_str(&format!(
                "{} cycle(s) met the criteria; evidence from stage {}.\n\n",
                f.cycles_found, f.evidence_stage
            ));
            for cycle in &f.flagged_cycles {
                let mut path = cycle.join(" -> ");
                if let Some(first) = cycle.first() {
                    path.push_str(" -> ");
                    path.push_str(first);
                }
                md.push_str(&format!("- {path}\n"));
            }
            md.push('\n');
        }

        md.push_str("## Evidence\n\n");
        for block in &self.evidence {
            md.push_str(&format!("### {}: {}\n\n", block.stage_id, block.goal));
            md.push_str(&format!("Tool: `{}`\n\n", block.tool));
            let d = &block.distilled;
            md.push_str(&d.summary_text);
            md.push_str("\n\n");
            if !d.structured_items.is_empty() {
                let items = serde_json::to_string_pretty(&d.structured_items)
                    .expect("distilled items serialize");
                md.push_str("```json\n");
                md.push_str(&items);
                md.push_str("\n```\n\n");
            }
            if d.omitted_count > 0 {
                md.push_str(&format!(
                    "{} item(s) beyond the distillation budget were omitted.\n\n",
                    d.omitted_count
                ));
            }
        }

        md.push_str("## Plan\n\n");
        md.push_str("Stages as executed (full structure in plan.json):\n\n");
        for (i, stage) in self.stages.iter().enumerate() {
            let mut line = format!(
                "{}. {} ({}): `{}` - {}",
                i + 1,
                stage.stage_id,
                stage.status.as_str(),
                stage.tool,
                stage.goal
            );
            if let Some(reason) = &stage.skip_reason {
                line.push_str(&format!(" ({reason})"));
            }
            line.push('\n');
            md.push_str(&line);
        }
        md.push('\n');
        md
    }
}
