//! One complete run: schema derivation, extraction, planning, execution,
//! report assembly, and persistence of every intermediate artifact.
//!
//! The run directory is written incrementally, so a failed run leaves
//! behind everything produced up to the failure plus a run.log explaining
//! it. Reruns with the same config, data, and seed produce byte-identical
//! artifacts except for the timing fields in run.json.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use super::executor::{execute_dag, ExecutionContext};
use super::report::{assemble_report, Report};
use super::{io_err, CoordinatorKind, PipelineError, RunConfig, StageOutput};
use crate::construct::{extract, load_sources, PropertyGraph, SchemaSpec, SourceCatalog};
use crate::coordinator::{
    validate_response, Coordinator, CoordinatorError, CoordinatorRequest, MockCoordinator,
    RemoteCoordinator, Role,
};
use crate::knowledge::KnowledgeGraph;
use crate::planner::{plan, PlannerError};
use crate::registry::builtin_registry;
use crate::values::TableCell;

pub struct RunArtifacts {
    pub run_dir: PathBuf,
    pub report: Report,
    pub outputs: Vec<StageOutput>,
    pub rounds_used: usize,
}

/// Runs `query` end to end under `config`, returning the artifacts and the
/// directory they were persisted into. On failure the partial run directory
/// is preserved and run.log records how far the run got.
pub fn run(query: &str, config: &RunConfig) -> Result<RunArtifacts, PipelineError> {
    config.validate()?;
    let run_dir = next_run_dir(&config.out_dir)?;
    let mut log: Vec<String> = Vec::new();
    let result = run_inner(query, config, &run_dir, &mut log);
    if let Err(e) = &result {
        log.push(format!("run failed: {e}"));
    }
    let log_text = log.join("\n") + "\n";
    fs::write(run_dir.join("run.log"), log_text).map_err(io_err(&run_dir))?;
    result
}

/// First free `run-NNN` directory under `out_dir`, created.
fn next_run_dir(out_dir: &Path) -> Result<PathBuf, PipelineError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    for n in 0..10_000u32 {
        let candidate = out_dir.join(format!("run-{n:03}"));
        if !candidate.exists() {
            fs::create_dir(&candidate).map_err(io_err(&candidate))?;
            return Ok(candidate);
        }
    }
    Err(PipelineError::Io(format!(
        "{}: no free run directory below run-9999",
        out_dir.display()
    )))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| PipelineError::Io(format!("{}: {e}", path.display())))?;
    fs::write(path, text + "\n").map_err(io_err(path))
}

fn run_inner(
    query: &str,
    config: &RunConfig,
    run_dir: &Path,
    log: &mut Vec<String>,
) -> Result<RunArtifacts, PipelineError> {
    log.push(format!("query: {query}"));
    log.push(format!(
        "config: coordinator={:?} width={} r_max={} seed={}",
        config.coordinator, config.width, config.r_max, config.seed
    ));

    let catalog_path = config.data_dir.join("catalog.json");
    let catalog = SourceCatalog::load(&catalog_path)?;
    let sources = load_sources(&config.data_dir, &catalog)?;
    log.push(format!(
        "loaded {} source(s) from {}",
        sources.len(),
        config.data_dir.display()
    ));
    let kg = KnowledgeGraph::load(&config.knowledge_path)?;
    log.push(format!("knowledge base: {} node(s)", kg.len()));
    let registry = builtin_registry();

    let coordinator: Box<dyn Coordinator> = match config.coordinator {
        CoordinatorKind::Mock => {
            Box::new(MockCoordinator::with_budget(config.context_budget_chars))
        }
        CoordinatorKind::Remote => {
            let remote = config
                .remote
                .clone()
                .ok_or_else(|| PipelineError::Config("remote coordinator not configured".into()))?;
            Box::new(
                RemoteCoordinator::new(remote)
                    .map_err(|e| PipelineError::Config(e.to_string()))?,
            )
        }
    };

    // Schema derivation: the coordinator sees the catalog, never the rows.
    let request = CoordinatorRequest::new(Role::Schema, query, json!({ "catalog": catalog }));
    let response = coordinator
        .complete(&request)
        .map_err(|e| coordinator_failure(e, "schema derivation"))?;
    validate_response(&request.schema_id, &response.value).map_err(|e| {
        PipelineError::Planning(PlannerError::PlanningFailed(format!(
            "schema derivation produced an invalid document: {e}"
        )))
    })?;
    let schema: SchemaSpec = serde_json::from_value(response.value.clone())
        .map_err(|e| PipelineError::Planning(PlannerError::PlanningFailed(e.to_string())))?;
    write_json(&run_dir.join("schema.json"), &response.value)?;
    log.push(format!(
        "schema: {} entit(ies), {} relation(s)",
        schema.entities.len(),
        schema.relations.len()
    ));

    let pg = extract(&sources, &schema, &catalog)?;
    for skip in &pg.skipped {
        log.push(format!(
            "extraction skipped {} row {}: {}",
            skip.source_id, skip.row_index, skip.reason
        ));
    }
    log.push(format!(
        "extracted {} entity table(s), {} relation table(s)",
        pg.nodes.len(),
        pg.edges.len()
    ));

    let (dag, trace) = match plan(query, &kg, &registry, coordinator.as_ref()) {
        Ok(ok) => ok,
        Err(PlannerError::NoToolForStage { stage, candidates, trace }) => {
            // The gap itself is an artifact: persist the partial plan and
            // the expansion requests it raised before failing.
            write_json(
                &run_dir.join("plan.json"),
                &json!({
                    "error": format!("no registered tool fits stage {stage}"),
                    "candidates": candidates,
                    "trace": trace,
                }),
            )?;
            if !trace.expansion_requests.is_empty() {
                write_json(
                    &run_dir.join("expansion_requests.json"),
                    &trace.expansion_requests,
                )?;
            }
            log.push(format!("planning found no tool for stage {stage}"));
            return Err(PlannerError::NoToolForStage { stage, candidates, trace }.into());
        }
        Err(e) => return Err(e.into()),
    };
    write_json(
        &run_dir.join("plan.json"),
        &json!({ "dag": dag, "trace": trace, "refinement_rounds": 0 }),
    )?;
    if !trace.expansion_requests.is_empty() {
        write_json(&run_dir.join("expansion_requests.json"), &trace.expansion_requests)?;
    }
    log.push(format!(
        "plan: {} stage(s), report node {}",
        dag.nodes.len(),
        dag.report_node
    ));

    let focus_key = match &trace.focus_name {
        Some(name) => {
            let key = resolve_focus_key(&pg, name);
            match &key {
                Some(k) => log.push(format!("focus {name:?} resolved to {k}")),
                None => log.push(format!("focus {name:?} matches no entity attribute")),
            }
            key
        }
        None => None,
    };

    let ctx = ExecutionContext {
        pg: &pg,
        registry: &registry,
        kg: &kg,
        coordinator: coordinator.as_ref(),
        focus_key,
        budget: config.distill,
        width: config.width,
        r_max: config.r_max,
    };
    let outcome = match execute_dag(&dag, &ctx) {
        Ok(outcome) => outcome,
        Err(e) => {
            log.push("execution did not settle".into());
            return Err(e);
        }
    };
    log.extend(outcome.log.iter().cloned());
    if outcome.rounds_used > 0 {
        write_json(
            &run_dir.join("plan.json"),
            &json!({
                "dag": outcome.dag,
                "trace": trace,
                "refinement_rounds": outcome.rounds_used,
            }),
        )?;
    }

    let stages_dir = run_dir.join("stages");
    for output in &outcome.outputs {
        if output.raw.is_none() && output.distilled.is_none() {
            continue;
        }
        let dir = stages_dir.join(&output.node_id);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        if let Some(raw) = &output.raw {
            write_json(&dir.join("raw.json"), raw)?;
        }
        if let Some(distilled) = &output.distilled {
            write_json(&dir.join("distilled.json"), distilled)?;
        }
    }

    let report = assemble_report(query, &outcome.dag, &outcome.outputs, coordinator.as_ref())?;
    fs::write(run_dir.join("report.md"), report.render_markdown())
        .map_err(io_err(run_dir))?;
    write_json(&run_dir.join("report.json"), &report)?;
    log.push(format!("report: verdict {}", report.verdict));

    // Stage timings live here and only here; everything else in the run
    // directory is reproducible byte for byte.
    let stage_stats: Vec<_> = outcome
        .outputs
        .iter()
        .map(|o| {
            json!({
                "id": o.node_id,
                "status": o.status.as_str(),
                "items": o.item_count(),
                "elapsed_ms": o.elapsed_ms,
            })
        })
        .collect();
    write_json(
        &run_dir.join("run.json"),
        &json!({
            "query": query,
            "seed": config.seed,
            "coordinator": config.coordinator,
            "width": config.width,
            "refinement_rounds": outcome.rounds_used,
            "stages": stage_stats,
        }),
    )?;

    Ok(RunArtifacts {
        run_dir: run_dir.to_path_buf(),
        report,
        outputs: outcome.outputs,
        rounds_used: outcome.rounds_used,
    })
}

/// Phase-aware mapping of coordinator failures onto exit-code classes:
/// invalid documents are planning failures, transport problems are
/// execution failures, and an oversized context is a config failure.
fn coordinator_failure(e: CoordinatorError, phase: &str) -> PipelineError {
    match e {
        CoordinatorError::SchemaValidationFailed { .. } => {
            PipelineError::Planning(PlannerError::PlanningFailed(format!("{phase}: {e}")))
        }
        CoordinatorError::TransportError(_) => PipelineError::Execution(format!("{phase}: {e}")),
        CoordinatorError::BudgetExceeded { .. } => PipelineError::Config(format!("{phase}: {e}")),
    }
}

/// Finds the entity whose attribute value equals the focus display name and
/// returns its key. Tables and columns are scanned in deterministic order;
/// the first match wins.
fn resolve_focus_key(pg: &PropertyGraph, name: &str) -> Option<String> {
    for table in pg.nodes.values() {
        for cells in table.attributes.values() {
            for (i, cell) in cells.iter().enumerate() {
                if matches!(cell, TableCell::Str(s) if s == name) {
                    if let Some(key) = table.id_map.key(i as u32) {
                        return Some(key.to_string());
                    }
                }
            }
        }
    }
    None
}
