//! Width-bounded DAG execution with decision gates and bounded refinement.
//!
//! Nodes run as soon as all their producers settle, up to `width` at a
//! time. Results are confluent: a node's inputs are fully determined by the
//! DAG, so outputs do not depend on scheduling interleavings. Per-round
//! outputs live in a write-once stage store; a failing round produces
//! feedback for the planner's refine step and, when the plan changes, the
//! revised DAG re-executes from scratch in a fresh store.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Instant;

use serde_json::Value;

use super::{PipelineError, StageOutput, StageStatus, StageStore};
use crate::construct::{materialize_stage_input, Direction, PropertyGraph, Weighting};
use crate::coordinator::{Coordinator, FOCUS_KEY_PLACEHOLDER};
use crate::knowledge::KnowledgeGraph;
use crate::planner::{
    refine, topological_order, Binding, DepKind, ExecutionFeedback, Outcome, PlannerError,
    Selector, TaskDag, TaskNode,
};
use crate::registry::builtin::default_directive;
use crate::registry::{
    distill, Budget, DistillDirective, InvocationRequest, ParamValue, ToolRegistry,
};
use crate::values::{IdMap, NodeSet, ToolValue, ValueKind};

pub struct ExecutionContext<'a> {
    pub pg: &'a PropertyGraph,
    pub registry: &'a ToolRegistry,
    pub kg: &'a KnowledgeGraph,
    pub coordinator: &'a dyn Coordinator,
    /// Account key the plan's focus placeholder resolves to.
    pub focus_key: Option<String>,
    pub budget: Budget,
    pub width: usize,
    pub r_max: usize,
}

pub struct ExecutionOutcome {
    /// Final-round outputs in DAG node order.
    pub outputs: Vec<StageOutput>,
    /// The DAG as executed, after any refinement.
    pub dag: TaskDag,
    /// Refinement rounds applied (0 when the first plan ran clean).
    pub rounds_used: usize,
    /// Event lines for the run log; free of wall-clock values so logs are
    /// comparable across runs.
    pub log: Vec<String>,
}

/// Executes `dag`, refining on per-node failure up to `ctx.r_max` rounds.
///
/// An Ok stage with an empty payload is a verdict (its decision gates
/// evaluate false), not a failure, and does not trigger refinement here;
/// quality-driven refinement stays available to callers through the
/// planner's `refine` directly. Stages still failing once refinement is
/// exhausted or ineffective surface as `RefinementExhausted`.
pub fn execute_dag(
    dag: &TaskDag,
    ctx: &ExecutionContext,
) -> Result<ExecutionOutcome, PipelineError> {
    if ctx.width == 0 {
        return Err(PipelineError::Config("width must be at least 1".into()));
    }
    let mut current = dag.clone();
    let mut round = 0usize;
    let mut log: Vec<String> = Vec::new();
    loop {
        log.push(format!(
            "round {round}: executing {} stage(s) with width {}",
            current.nodes.len(),
            ctx.width
        ));
        let store = StageStore::new();
        execute_round(&current, ctx, &store)?;
        let outputs: Vec<StageOutput> = current
            .nodes
            .iter()
            .map(|n| (*store.get(&n.id).expect("every node settles")).clone())
            .collect();
        for o in &outputs {
            log.push(describe(round, o));
        }

        let feedback = derive_feedback(&outputs);
        let errors = feedback.iter().filter(|f| f.outcome == Outcome::Error).count();
        if errors == 0 {
            log.push(format!("execution settled after {round} refinement round(s)"));
            return Ok(ExecutionOutcome { outputs, dag: current, rounds_used: round, log });
        }
        log.push(format!("round {round}: {errors} stage(s) failed"));

        if round >= ctx.r_max {
            log.push("refinement exhausted with failing stages".into());
            return Err(PlannerError::RefinementExhausted { round, feedback }.into());
        }
        let revised = refine(&current, &feedback, ctx.kg, ctx.registry, ctx.coordinator, round)?;
        if dag_identical(&revised, &current) {
            log.push("refinement offered no changes for the failing stages".into());
            return Err(PlannerError::RefinementExhausted { round, feedback }.into());
        }
        log.push(format!("round {round}: refinement revised the plan; retrying"));
        current = revised;
        round += 1;
    }
}

fn dag_identical(a: &TaskDag, b: &TaskDag) -> bool {
    serde_json::to_string(a).expect("dags serialize") ==
        serde_json::to_string(b).expect("dags serialize")
}

fn describe(round: usize, o: &StageOutput) -> String {
    match o.status {
        StageStatus::Ok => format!(
            "round {round}: {} Ok ({} item(s))",
            o.node_id,
            o.item_count()
        ),
        StageStatus::Error => format!(
            "round {round}: {} Error: {}",
            o.node_id,
            o.error.as_deref().unwrap_or("unspecified")
        ),
        StageStatus::Skipped => format!(
            "round {round}: {} Skipped ({})",
            o.node_id,
            o.skip_reason.as_deref().unwrap_or("unspecified")
        ),
    }
}

/// Feedback for executed nodes only; skipped nodes carry no signal.
fn derive_feedback(outputs: &[StageOutput]) -> Vec<ExecutionFeedback> {
    outputs
        .iter()
        .filter_map(|o| match o.status {
            StageStatus::Ok => Some(ExecutionFeedback::ok(&o.node_id)),
            StageStatus::Error => Some(ExecutionFeedback::error(
                &o.node_id,
                o.error.clone().unwrap_or_default(),
            )),
            StageStatus::Skipped => None,
        })
        .collect()
}

// ---- one round ----------------------------------------------------------

struct RoundState {
    /// Node id -> distinct producers not yet settled.
    pending: BTreeMap<String, usize>,
    ready: BTreeSet<String>,
    settled: usize,
}

fn execute_round(
    dag: &TaskDag,
    ctx: &ExecutionContext,
    store: &StageStore,
) -> Result<(), PipelineError> {
    topological_order(dag)?;
    let total = dag.nodes.len();
    if total == 0 {
        return Ok(());
    }

    let mut producers: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    let mut consumers: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for n in &dag.nodes {
        producers.entry(&n.id).or_default();
        consumers.entry(&n.id).or_default();
    }
    for e in &dag.edges {
        producers.get_mut(e.consumer.as_str()).expect("validated edge").insert(&e.producer);
        consumers.get_mut(e.producer.as_str()).expect("validated edge").insert(&e.consumer);
    }

    let mut pending = BTreeMap::new();
    let mut ready = BTreeSet::new();
    for (id, ps) in &producers {
        pending.insert(id.to_string(), ps.len());
        if ps.is_empty() {
            ready.insert(id.to_string());
        }
    }
    let state = Mutex::new(RoundState { pending, ready, settled: 0 });
    let cv = Condvar::new();

    let workers = ctx.width.min(total);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let node_id = {
                    let mut st = state.lock().expect("round state poisoned");
                    loop {
                        if st.settled == total {
                            return;
                        }
                        if let Some(id) = st.ready.iter().next().cloned() {
                            st.ready.remove(&id);
                            break id;
                        }
                        st = cv.wait(st).expect("round state poisoned");
                    }
                };
                let node = dag.node(&node_id).expect("scheduled node exists");
                store.insert(run_node(node, dag, ctx, store));
                let mut st = state.lock().expect("round state poisoned");
                st.settled += 1;
                for c in &consumers[node_id.as_str()] {
                    let left = st.pending.get_mut(*c).expect("consumer tracked");
                    *left -= 1;
                    if *left == 0 {
                        st.ready.insert((*c).to_string());
                    }
                }
                cv.notify_all();
            });
        }
    });
    Ok(())
}

/// Decides skip-vs-run from settled producers, then executes.
fn run_node(
    node: &TaskNode,
    dag: &TaskDag,
    ctx: &ExecutionContext,
    store: &StageStore,
) -> StageOutput {
    let start = Instant::now();
    let mut incoming: Vec<(&str, DepKind)> = dag
        .edges
        .iter()
        .filter(|e| e.consumer == node.id)
        .map(|e| (e.producer.as_str(), e.dep_kind))
        .collect();
    incoming.sort();

    let mut reasons: Vec<String> = Vec::new();
    let mut gate_root: Option<String> = None;
    for (producer, kind) in incoming {
        let upstream = store.get(producer).expect("producers settle before consumers");
        match upstream.status {
            StageStatus::Ok => {
                if kind == DepKind::Decision && upstream.item_count() == 0 {
                    reasons.push(format!("gate {producer} produced no items"));
                    gate_root.get_or_insert_with(|| producer.to_string());
                }
            }
            StageStatus::Error => {
                reasons.push(format!("upstream stage {producer} failed"));
            }
            StageStatus::Skipped => {
                reasons.push(format!("upstream stage {producer} was skipped"));
                if gate_root.is_none() {
                    gate_root = upstream.gated_on.clone();
                }
            }
        }
    }
    if !reasons.is_empty() {
        return StageOutput {
            node_id: node.id.clone(),
            status: StageStatus::Skipped,
            raw: None,
            distilled: None,
            error: None,
            skip_reason: Some(reasons.join("; ")),
            gated_on: gate_root,
            elapsed_ms: start.elapsed().as_millis() as u64,
        };
    }

    match execute_node(node, dag, ctx, store) {
        Ok((raw, distilled)) => StageOutput {
            node_id: node.id.clone(),
            status: StageStatus::Ok,
            raw: Some(raw),
            distilled: Some(distilled),
            error: None,
            skip_reason: None,
            gated_on: None,
            elapsed_ms: start.elapsed().as_millis() as u64,
        },
        Err(message) => StageOutput {
            node_id: node.id.clone(),
            status: StageStatus::Error,
            raw: None,
            distilled: None,
            error: Some(message),
            skip_reason: None,
            gated_on: None,
            elapsed_ms: start.elapsed().as_millis() as u64,
        },
    }
}

fn execute_node(
    node: &TaskNode,
    dag: &TaskDag,
    ctx: &ExecutionContext,
    store: &StageStore,
) -> Result<(crate::registry::RawResult, crate::registry::DistilledResult), String> {
    let descriptor = ctx
        .registry
        .describe(&node.tool_name)
        .ok_or_else(|| format!("tool {} is not registered", node.tool_name))?;

    let mut inputs = BTreeMap::new();
    for (slot_name, binding) in &node.input_bindings {
        let slot = descriptor
            .slot(slot_name)
            .ok_or_else(|| format!("tool {} has no slot {slot_name}", node.tool_name))?;
        let value = resolve_binding(binding, slot.kind, dag, ctx, store)?;
        inputs.insert(slot_name.clone(), value);
    }

    let mut params = node.params.clone();
    for (name, value) in params.iter_mut() {
        if let ParamValue::Str(s) = value {
            if s == FOCUS_KEY_PLACEHOLDER {
                let key = ctx.focus_key.as_ref().ok_or_else(|| {
                    format!("param {name} references the focus account, but none was resolved")
                })?;
                *value = ParamValue::Str(key.clone());
            }
        }
    }

    let request = InvocationRequest { tool: node.tool_name.clone(), inputs, params };
    let raw = ctx.registry.invoke(&request).map_err(|e| e.to_string())?;
    let directive = directive_with_budget(raw.kind, ctx.budget);
    let distilled = distill(&node.tool_name, &raw, &directive).map_err(|e| e.to_string())?;
    Ok((raw, distilled))
}

fn directive_with_budget(kind: ValueKind, budget: Budget) -> DistillDirective {
    match default_directive(kind) {
        DistillDirective::TopK { k, .. } => DistillDirective::TopK { k, budget },
        DistillDirective::Threshold { threshold, .. } => {
            DistillDirective::Threshold { threshold, budget }
        }
        DistillDirective::SubgraphSummary { max_paths, .. } => {
            DistillDirective::SubgraphSummary { max_paths, budget }
        }
        DistillDirective::Head { k, .. } => DistillDirective::Head { k, budget },
    }
}

// ---- binding resolution -------------------------------------------------

fn resolve_binding(
    binding: &Binding,
    slot_kind: ValueKind,
    dag: &TaskDag,
    ctx: &ExecutionContext,
    store: &StageStore,
) -> Result<ToolValue, String> {
    match binding {
        Binding::SourceDataset { dataset } => source_value(dataset, slot_kind, ctx),
        Binding::Literal { value } => literal_value(value, slot_kind, ctx),
        Binding::StageOutput { producer, selector } => {
            selected_value(producer, *selector, dag, ctx, store)
        }
    }
}

fn relation_shape(pg: &PropertyGraph, relation: &str) -> Result<(Direction, Weighting), String> {
    let et = pg.edge_table(relation).map_err(|e| e.to_string())?;
    let direction = if et.directed { Direction::Out } else { Direction::Symmetrized };
    let weighting = if et.weight.is_some() { Weighting::Column } else { Weighting::None };
    Ok((direction, weighting))
}

fn source_value(
    dataset: &str,
    slot_kind: ValueKind,
    ctx: &ExecutionContext,
) -> Result<ToolValue, String> {
    match slot_kind {
        ValueKind::Graph => {
            let (direction, weighting) = relation_shape(ctx.pg, dataset)?;
            let graph =
                ctx.pg.to_csr(dataset, direction, weighting).map_err(|e| e.to_string())?;
            Ok(ToolValue::Graph { graph: Arc::new(graph) })
        }
        ValueKind::Table => {
            let table = ctx.pg.flow_table(dataset).map_err(|e| e.to_string())?;
            Ok(ToolValue::Table { table: Arc::new(table) })
        }
        other => Err(format!("source dataset {dataset} cannot fill a {other} slot")),
    }
}

fn literal_value(
    value: &Value,
    slot_kind: ValueKind,
    ctx: &ExecutionContext,
) -> Result<ToolValue, String> {
    match slot_kind {
        ValueKind::NodeSet => {
            let raw_keys: Vec<String> = match value {
                Value::String(s) => vec![s.clone()],
                Value::Array(items) => items
                    .iter()
                    .map(|v| {
                        v.as_str().map(str::to_string).ok_or_else(|| {
                            format!("node literals must be strings, got {v}")
                        })
                    })
                    .collect::<Result<_, _>>()?,
                other => return Err(format!("cannot build a node set from literal {other}")),
            };
            let mut keys: Vec<String> = Vec::with_capacity(raw_keys.len());
            for k in raw_keys {
                let resolved = if k == FOCUS_KEY_PLACEHOLDER {
                    ctx.focus_key
                        .clone()
                        .ok_or("seed list references the focus account, but none was resolved")?
                } else {
                    k
                };
                if !keys.contains(&resolved) {
                    keys.push(resolved);
                }
            }
            let ids: Vec<u32> = (0..keys.len() as u32).collect();
            let id_map = Arc::new(IdMap::from_keys(keys));
            Ok(ToolValue::NodeSet { nodes: NodeSet::new(ids, id_map) })
        }
        ValueKind::Scalar => Ok(ToolValue::Scalar { value: value.clone() }),
        other => Err(format!("a literal cannot fill a {other} slot")),
    }
}

fn selected_value(
    producer: &str,
    selector: Selector,
    dag: &TaskDag,
    ctx: &ExecutionContext,
    store: &StageStore,
) -> Result<ToolValue, String> {
    let upstream = store
        .get(producer)
        .ok_or_else(|| format!("stage {producer} has no stored output"))?;
    let raw = upstream
        .raw
        .as_ref()
        .ok_or_else(|| format!("stage {producer} completed without a payload"))?;
    let payload = &raw.payload;

    match selector {
        Selector::Value => Ok(payload.clone()),
        Selector::NodeSet => match payload {
            ToolValue::NodeSet { .. } => Ok(payload.clone()),
            ToolValue::CycleSet { cycles } => Ok(ToolValue::NodeSet {
                nodes: NodeSet::new(cycles.node_union(), Arc::clone(&cycles.id_map)),
            }),
            ToolValue::NodeScores { scores } => {
                let ids: Vec<u32> = (0..scores.values.len() as u32)
                    .filter(|&i| scores.values[i as usize] > 0.0)
                    .collect();
                Ok(ToolValue::NodeSet {
                    nodes: NodeSet::new(ids, Arc::clone(&scores.id_map)),
                })
            }
            other => Err(format!("selector NodeSet cannot read a {} result", other.kind())),
        },
        Selector::TopNode => match payload {
            ToolValue::NodeScores { scores } if !scores.values.is_empty() => {
                // Ties break toward the smallest id.
                let mut best = 0usize;
                for i in 1..scores.values.len() {
                    if scores.values[i] > scores.values[best] {
                        best = i;
                    }
                }
                Ok(ToolValue::NodeSet {
                    nodes: NodeSet::new(vec![best as u32], Arc::clone(&scores.id_map)),
                })
            }
            ToolValue::NodeScores { .. } => {
                Err(format!("stage {producer} produced no scores to pick a top node from"))
            }
            other => Err(format!("selector TopNode cannot read a {} result", other.kind())),
        },
        Selector::InducedGraph | Selector::InducedEdgeTable => {
            let relation = source_relation(dag, producer)?;
            let view = materialize_stage_input(payload, ctx.pg, &relation, producer)
                .map_err(|e| e.to_string())?;
            if selector == Selector::InducedGraph {
                let (direction, weighting) = relation_shape(ctx.pg, &relation)?;
                let graph =
                    view.to_csr(ctx.pg, direction, weighting).map_err(|e| e.to_string())?;
                Ok(ToolValue::Graph { graph: Arc::new(graph) })
            } else {
                let table = view.flow_table(ctx.pg).map_err(|e| e.to_string())?;
                Ok(ToolValue::Table { table: Arc::new(table) })
            }
        }
    }
}

/// Walks a stage's graph lineage back to the source relation it analyzed,
/// so induced selectors know which edge table to slice.
fn source_relation(dag: &TaskDag, start: &str) -> Result<String, String> {
    let mut current = start.to_string();
    loop {
        let node = dag
            .node(&current)
            .ok_or_else(|| format!("stage {current} not present in the dag"))?;
        let graph_binding = node
            .input_bindings
            .get("graph")
            .or_else(|| {
                node.input_bindings
                    .values()
                    .find(|b| matches!(b, Binding::SourceDataset { .. }))
            });
        match graph_binding {
            Some(Binding::SourceDataset { dataset }) => return Ok(dataset.clone()),
            Some(Binding::StageOutput { producer, .. }) => current = producer.clone(),
            _ => {
                return Err(format!(
                    "cannot trace stage {start} back to a source relation"
                ))
            }
        }
    }
}
