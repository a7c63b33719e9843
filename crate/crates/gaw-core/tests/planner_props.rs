//! Planner behavior over a fixture knowledge base and the builtin tool
//! registry: decomposition shape, tool grounding, DAG validation against
//! handcrafted violations, and the feedback-driven refinement rules.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde_json::json;
use tempfile::TempDir;

use gaw_core::coordinator::{
    Coordinator, CoordinatorError, CoordinatorRequest, CoordinatorResponse, MockCoordinator,
};
use gaw_core::knowledge::KnowledgeGraph;
use gaw_core::planner::{
    plan, refine, topological_order, validate_dag, Binding, DepKind, ExecutionFeedback,
    PlannerError, Selector, TaskDag, TaskEdge, TaskNode, Violation, R_MAX,
};
use gaw_core::registry::{
    builtin_registry, InputSlot, ParamRange, ParamSpec, ParamType, ParamValue, ToolDescriptor,
    ToolRegistry,
};
use gaw_core::values::{ToolValue, ValueKind};

mod common;
use common::{write_fixture_kb, AML_QUERY};

/// A coordinator that replays one canned value for every request.
struct ScriptedCoordinator(serde_json::Value);

impl Coordinator for ScriptedCoordinator {
    fn complete(&self, req: &CoordinatorRequest) -> Result<CoordinatorResponse, CoordinatorError> {
        Ok(CoordinatorResponse {
            value: self.0.clone(),
            transcripts: vec![format!("scripted role={}", req.role)],
        })
    }
}

fn plan_aml(kg: &KnowledgeGraph) -> (TaskDag, gaw_core::planner::PlanTrace) {
    let registry = builtin_registry();
    plan(AML_QUERY, kg, &registry, &MockCoordinator::new()).expect("aml query plans")
}

// ---- planning -----------------------------------------------------------

#[test]
fn aml_query_grounds_into_the_four_stage_dag() {
    let dir = TempDir::new().unwrap();
    let kg = write_fixture_kb(dir.path());
    let (dag, trace) = plan_aml(&kg);

    let ids: Vec<&str> = dag.nodes.iter().map(|n| n.id.as_str()).collect();
    assert_eq!(ids, ["s1", "s2", "s3", "s4"]);
    let tools: Vec<&str> = dag.nodes.iter().map(|n| n.tool_name.as_str()).collect();
    assert_eq!(
        tools,
        ["personalized_pagerank", "enumerate_cycles", "aggregate_flows", "aggregate_flows"],
        "seeded ranking, then cycles, then two aggregations"
    );
    assert_eq!(dag.report_node, "s4");
    assert_eq!(trace.focus_name.as_deref(), Some("Maya Flores"));

    // Anchored cycle search with the extracted amount floor.
    let s2 = dag.node("s2").unwrap();
    assert_eq!(s2.params.get("anchor"), Some(&ParamValue::Str("@focus_key".into())));
    assert_eq!(s2.params.get("min_weight"), Some(&ParamValue::Float(2750.0)));

    // Data flows s2 -> s3 through an induced edge table; every stage gates
    // on its predecessor's decision.
    let expect: BTreeSet<TaskEdge> = [
        TaskEdge { producer: "s1".into(), consumer: "s2".into(), dep_kind: DepKind::Decision },
        TaskEdge { producer: "s2".into(), consumer: "s3".into(), dep_kind: DepKind::Data },
        TaskEdge { producer: "s2".into(), consumer: "s3".into(), dep_kind: DepKind::Decision },
        TaskEdge { producer: "s3".into(), consumer: "s4".into(), dep_kind: DepKind::Decision },
    ]
    .into();
    let got: BTreeSet<TaskEdge> = dag.edges.iter().cloned().collect();
    assert_eq!(got, expect);
    assert_eq!(
        dag.node("s3").unwrap().input_bindings.get("table"),
        Some(&Binding::StageOutput { producer: "s2".into(), selector: Selector::InducedEdgeTable })
    );

    assert_eq!(topological_order(&dag).unwrap(), ["s1", "s2", "s3", "s4"]);
    assert!(validate_dag(&dag, &builtin_registry()).is_empty());
}

#[test]
fn plan_trace_records_scored_candidates_and_trails() {
    let dir = TempDir::new().unwrap();
    let kg = write_fixture_kb(dir.path());
    let (_, trace) = plan_aml(&kg);

    assert_eq!(trace.stages.len(), 4);
    assert!(trace.expansion_requests.is_empty());
    for stage in &trace.stages {
        let chosen = stage.chosen.as_ref().expect("every stage grounded");
        let wit = stage
            .candidates
            .iter()
            .find(|c| c.tool.as_deref() == Some(chosen.tool.as_str()))
            .expect("chosen tool appears among candidates");
        assert!(wit.registered && wit.slot_fit);
        assert!(wit.score > 0.0);
        assert_eq!(wit.trail.len(), 2, "trail is category then family");
        assert_eq!(wit.trail[1], stage.suggested_family);
    }
    // The unanchored global ranking is not slot-compatible with stage one
    // (which binds seeds), and stays in the trace as considered.
    let s1 = &trace.stages[0];
    assert!(s1
        .candidates
        .iter()
        .any(|c| c.knowledge_id == "a.pagerank" && !c.slot_fit));
}

#[test]
fn rank_query_plans_one_stage_with_registry_defaults() {
    let dir = TempDir::new().unwrap();
    let kg = write_fixture_kb(dir.path());
    let registry = builtin_registry();
    let (dag, trace) =
        plan("Which accounts matter most by transfer influence?", &kg, &registry,
             &MockCoordinator::new())
            .unwrap();

    assert_eq!(dag.nodes.len(), 1);
    let node = &dag.nodes[0];
    assert_eq!(node.tool_name, "pagerank");
    assert_eq!(dag.report_node, node.id);
    assert!(node.params.is_empty(), "defaults come from the registry, not the plan");
    assert!(dag.edges.is_empty());
    assert!(trace.focus_name.is_none());
    assert!(validate_dag(&dag, &registry).is_empty());
}

#[test]
fn neighborhood_query_parameterizes_khop_from_the_top_ranked_node() {
    let dir = TempDir::new().unwrap();
    let kg = write_fixture_kb(dir.path());
    let registry = builtin_registry();
    let (dag, _) =
        plan("Who is reachable within two hops around the most central account?", &kg, &registry,
             &MockCoordinator::new())
            .unwrap();

    let tools: Vec<&str> = dag.nodes.iter().map(|n| n.tool_name.as_str()).collect();
    assert_eq!(tools, ["pagerank", "khop"]);
    let s2 = dag.node("s2").unwrap();
    assert_eq!(s2.params.get("k"), Some(&ParamValue::Int(2)));
    assert_eq!(
        s2.input_bindings.get("seeds"),
        Some(&Binding::StageOutput { producer: "s1".into(), selector: Selector::TopNode })
    );
    // A TopNode projection is a parameter choice, not a bulk data edge.
    assert!(dag
        .edges
        .iter()
        .any(|e| e.producer == "s1" && e.consumer == "s2" && e.dep_kind == DepKind::Parameter));
    assert!(validate_dag(&dag, &registry).is_empty());
}

#[test]
fn route_query_hits_a_toolless_family_and_files_an_expansion_request() {
    let dir = TempDir::new().unwrap();
    let kg = write_fixture_kb(dir.path());
    let registry = builtin_registry();
    let err = plan("What is the shortest transfer route between these accounts?", &kg, &registry,
                   &MockCoordinator::new())
        .unwrap_err();

    match err {
        PlannerError::NoToolForStage { stage, candidates, trace } => {
            assert_eq!(stage, "s1");
            assert!(candidates.iter().any(|c| c == "a.shortest_path"));
            let shortest = trace.stages[0]
                .candidates
                .iter()
                .find(|c| c.knowledge_id == "a.shortest_path")
                .expect("the toolless leaf was retrieved");
            assert!(!shortest.registered && shortest.tool.is_none());
            assert_eq!(trace.expansion_requests.len(), 1);
            assert_eq!(trace.expansion_requests[0].task.as_deref(), Some("f.paths"));
            assert!(trace.stages[0].chosen.is_none());
        }
        other => panic!("expected NoToolForStage, got {other}"),
    }
}

#[test]
fn planning_needs_a_registry_and_a_knowledge_base() {
    let dir = TempDir::new().unwrap();
    let kg = write_fixture_kb(dir.path());
    let empty = ToolRegistry::new();
    match plan(AML_QUERY, &kg, &empty, &MockCoordinator::new()) {
        Err(PlannerError::PlanningFailed(msg)) => assert!(msg.contains("registry")),
        other => panic!("expected PlanningFailed, got {other:?}"),
    }

    // A coordinator reply that fails schema validation surfaces as a
    // planning failure, not a transport fault.
    let registry = builtin_registry();
    let bad = ScriptedCoordinator(json!({"stages": []}));
    match plan(AML_QUERY, &kg, &registry, &bad) {
        Err(PlannerError::PlanningFailed(msg)) => assert!(msg.contains("coordinator")),
        other => panic!("expected PlanningFailed, got {other:?}"),
    }
}

#[test]
fn mock_plans_validate_for_a_spread_of_intents() {
    let dir = TempDir::new().unwrap();
    let kg = write_fixture_kb(dir.path());
    let registry = builtin_registry();
    let queries = [
        "Is \"Maya Flores\" laundering money through transfer cycles?",
        "find laundering rings above $10,000",
        "split the accounts into communities",
        "how many connected components does the graph have",
        "who sits in the two hop neighborhood of the hub",
        "rank everyone by influence",
        "completely unrelated gibberish query",
    ];
    for query in queries {
        let (dag, _) = plan(query, &kg, &registry, &MockCoordinator::new())
            .unwrap_or_else(|e| panic!("{query:?}: {e}"));
        let violations = validate_dag(&dag, &registry);
        assert!(violations.is_empty(), "{query:?}: {violations:?}");
        topological_order(&dag).unwrap();
    }
}

#[test]
fn same_query_plans_identically_every_time() {
    let dir = TempDir::new().unwrap();
    let kg = write_fixture_kb(dir.path());
    let registry = builtin_registry();
    let (a, ta) = plan(AML_QUERY, &kg, &registry, &MockCoordinator::new()).unwrap();
    let (b, tb) = plan(AML_QUERY, &kg, &registry, &MockCoordinator::new()).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert_eq!(serde_json::to_vec(&ta).unwrap(), serde_json::to_vec(&tb).unwrap());
}

// ---- structural validation ----------------------------------------------

fn bare_node(id: &str, tool: &str) -> TaskNode {
    TaskNode {
        id: id.into(),
        goal: format!("exercise {tool}"),
        tool_name: tool.into(),
        params: BTreeMap::new(),
        input_bindings: BTreeMap::new(),
        output_name: format!("{id}_out"),
    }
}

#[test]
fn validation_reports_every_violation_in_one_pass() {
    let registry = builtin_registry();
    // s1 ranks, s2 eats a selector that NodeScores cannot produce, s3 calls
    // an unknown tool with an out-of-range param, and the report points at
    // a non-terminal node. One dangling edge and one unjustified edge round
    // it out.
    let mut s1 = bare_node("s1", "pagerank");
    s1.input_bindings.insert("graph".into(), Binding::SourceDataset { dataset: "transfer".into() });
    let mut s2 = bare_node("s2", "enumerate_cycles");
    s2.input_bindings.insert(
        "graph".into(),
        Binding::StageOutput { producer: "s1".into(), selector: Selector::InducedGraph },
    );
    let mut s3 = bare_node("s3", "no_such_tool");
    s3.params.insert("k".into(), ParamValue::Int(-4));
    let dag = TaskDag {
        nodes: vec![s1, s2, s3],
        edges: vec![
            TaskEdge { producer: "s1".into(), consumer: "s2".into(), dep_kind: DepKind::Data },
            TaskEdge { producer: "s1".into(), consumer: "s3".into(), dep_kind: DepKind::Data },
            TaskEdge { producer: "ghost".into(), consumer: "s2".into(), dep_kind: DepKind::Data },
        ],
        report_node: "s1".into(),
    };
    let violations = validate_dag(&dag, &registry);
    let has = |f: &dyn Fn(&Violation) -> bool| violations.iter().any(|v| f(v));

    assert!(has(&|v| matches!(v, Violation::SelectorMismatch { node, .. } if node == "s2")));
    assert!(has(&|v| matches!(v, Violation::UnknownTool { node, .. } if node == "s3")));
    assert!(has(&|v| matches!(v, Violation::DanglingEdge { .. })));
    assert!(has(&|v| matches!(
        v,
        Violation::UnjustifiedEdge { producer, consumer, .. }
            if producer == "s1" && consumer == "s3"
    )));
    assert!(has(&|v| matches!(v, Violation::BadReportNode { .. })));
    assert!(violations.len() >= 5);
}

#[test]
fn kind_mismatches_and_missing_slots_are_caught() {
    let registry = builtin_registry();
    // top_k expects scores: NodeScores, but cycle enumeration yields a
    // CycleSet; taking it whole (selector Value) cannot fill the slot.
    let mut s1 = bare_node("s1", "enumerate_cycles");
    s1.input_bindings.insert("graph".into(), Binding::SourceDataset { dataset: "transfer".into() });
    let mut s2 = bare_node("s2", "top_k");
    s2.input_bindings.insert(
        "scores".into(),
        Binding::StageOutput { producer: "s1".into(), selector: Selector::Value },
    );
    let mut s3 = bare_node("s3", "pagerank");
    s3.input_bindings.insert(
        "wrong_slot".into(),
        Binding::SourceDataset { dataset: "transfer".into() },
    );
    let dag = TaskDag {
        nodes: vec![s1, s2, s3],
        edges: vec![TaskEdge {
            producer: "s1".into(),
            consumer: "s2".into(),
            dep_kind: DepKind::Data,
        }],
        report_node: "s3".into(),
    };
    let violations = validate_dag(&dag, &registry);
    assert!(violations.iter().any(|v| matches!(
        v,
        Violation::KindMismatch { node, slot, expected, got }
            if node == "s2" && slot == "scores"
                && *expected == ValueKind::NodeScores && *got == ValueKind::CycleSet
    )));
    assert!(violations
        .iter()
        .any(|v| matches!(v, Violation::UnknownSlot { node, .. } if node == "s3")));
    assert!(violations
        .iter()
        .any(|v| matches!(v, Violation::MissingSlot { node, slot } if node == "s3" && slot == "graph")));
}

#[test]
fn a_two_node_cycle_is_reported_with_exact_members() {
    let registry = builtin_registry();
    let mut a = bare_node("a", "pagerank");
    a.input_bindings.insert(
        "graph".into(),
        Binding::StageOutput { producer: "b".into(), selector: Selector::Value },
    );
    let mut b = bare_node("b", "pagerank");
    b.input_bindings.insert(
        "graph".into(),
        Binding::StageOutput { producer: "a".into(), selector: Selector::Value },
    );
    let dag = TaskDag {
        nodes: vec![a, b],
        edges: vec![
            TaskEdge { producer: "a".into(), consumer: "b".into(), dep_kind: DepKind::Data },
            TaskEdge { producer: "b".into(), consumer: "a".into(), dep_kind: DepKind::Data },
        ],
        report_node: "b".into(),
    };
    let violations = validate_dag(&dag, &registry);
    assert!(violations
        .iter()
        .any(|v| matches!(v, Violation::CycleViolation { nodes } if nodes == &["a", "b"])));
    match topological_order(&dag) {
        Err(PlannerError::CyclicDag(nodes)) => assert_eq!(nodes, ["a", "b"]),
        other => panic!("expected CyclicDag, got {other:?}"),
    }
}

// ---- refinement ---------------------------------------------------------

fn feedback_ok(ids: &[&str]) -> Vec<ExecutionFeedback> {
    ids.iter().map(|id| ExecutionFeedback::ok(*id)).collect()
}

#[test]
fn all_ok_feedback_returns_the_same_dag() {
    let dir = TempDir::new().unwrap();
    let kg = write_fixture_kb(dir.path());
    let registry = builtin_registry();
    let (dag, _) = plan_aml(&kg);
    let refined = refine(&dag, &feedback_ok(&["s1", "s2", "s3", "s4"]), &kg, &registry,
                         &MockCoordinator::new(), 0)
        .unwrap();
    assert_eq!(serde_json::to_string(&refined).unwrap(), serde_json::to_string(&dag).unwrap());
}

#[test]
fn rejected_param_feedback_resets_to_the_registry_default() {
    let dir = TempDir::new().unwrap();
    let kg = write_fixture_kb(dir.path());
    let registry = builtin_registry();
    let (mut dag, _) = plan_aml(&kg);
    // Simulate a plan that overreached the registry's range.
    dag.nodes[1].params.insert("max_len".into(), ParamValue::Int(12));
    let feedback = vec![
        ExecutionFeedback::ok("s1"),
        ExecutionFeedback::error(
            "s2",
            "param max_len of enumerate_cycles: 12 outside [2, 8]",
        ),
    ];
    let refined =
        refine(&dag, &feedback, &kg, &registry, &MockCoordinator::new(), 0).unwrap();
    assert_eq!(
        refined.node("s2").unwrap().params.get("max_len"),
        Some(&ParamValue::Int(6)),
        "reset lands on the descriptor default"
    );
    // Untouched stages are carried over unchanged.
    assert_eq!(refined.node("s1").unwrap(), dag.node("s1").unwrap());
    assert!(validate_dag(&refined, &registry).is_empty());
}

#[test]
fn low_quality_feedback_relaxes_the_weight_floor() {
    let dir = TempDir::new().unwrap();
    let kg = write_fixture_kb(dir.path());
    let registry = builtin_registry();
    let (dag, _) = plan_aml(&kg);
    assert_eq!(dag.node("s2").unwrap().params.get("min_weight"),
               Some(&ParamValue::Float(2750.0)));
    let feedback = vec![ExecutionFeedback::low_quality(
        "s2",
        "zero qualifying cycles found",
        &[("item_count", 0.0)],
    )];
    let refined =
        refine(&dag, &feedback, &kg, &registry, &MockCoordinator::new(), 1).unwrap();
    assert_eq!(
        refined.node("s2").unwrap().params.get("min_weight"),
        Some(&ParamValue::Float(1375.0)),
        "floor halves to widen the search"
    );
}

#[test]
fn refinement_budget_and_feedback_contracts_are_enforced() {
    let dir = TempDir::new().unwrap();
    let kg = write_fixture_kb(dir.path());
    let registry = builtin_registry();
    let (dag, _) = plan_aml(&kg);

    let fb = vec![ExecutionFeedback::error("s2", "boom")];
    match refine(&dag, &fb, &kg, &registry, &MockCoordinator::new(), R_MAX) {
        Err(PlannerError::RefinementExhausted { round, feedback }) => {
            assert_eq!(round, R_MAX);
            assert_eq!(feedback.len(), 1);
        }
        other => panic!("expected RefinementExhausted, got {other:?}"),
    }

    // Low quality without a supporting metric is not actionable feedback.
    let vague = vec![ExecutionFeedback {
        node_id: "s2".into(),
        outcome: gaw_core::planner::Outcome::LowQuality,
        detail: "felt off".into(),
        metrics: BTreeMap::new(),
    }];
    match refine(&dag, &vague, &kg, &registry, &MockCoordinator::new(), 0) {
        Err(PlannerError::PlanningFailed(msg)) => assert!(msg.contains("metric")),
        other => panic!("expected PlanningFailed, got {other:?}"),
    }
}

/// Toy registry with two interchangeable ranking tools plus a KB marking
/// them variants, to exercise legal tool substitution end to end.
fn substitution_world(dir: &Path) -> (KnowledgeGraph, ToolRegistry) {
    let details = dir.join("details");
    fs::create_dir_all(&details).unwrap();
    let mut nodes = vec![
        json!({"id": "c.structure", "level": "Category", "name": "Structure",
               "summary": "structure", "attributes": {}}),
        json!({"id": "f.ranking", "level": "Family", "name": "ranking",
               "summary": "rank nodes", "attributes": {}}),
    ];
    for (id, summary) in [
        ("a.rank_a", "baseline ranking"),
        ("a.rank_b", "alternative ranking"),
        ("a.count", "count things"),
    ] {
        let tool = id.trim_start_matches("a.");
        fs::write(details.join(format!("{id}.md")), format!("# {id}\n")).unwrap();
        nodes.push(json!({"id": id, "level": "Algorithm", "name": tool, "summary": summary,
                          "attributes": {"tool": tool},
                          "detail_path": format!("details/{id}.md")}));
    }
    let edges = vec![
        json!({"src": "c.structure", "dst": "f.ranking", "relation": "Contains"}),
        json!({"src": "f.ranking", "dst": "a.rank_a", "relation": "Contains"}),
        json!({"src": "f.ranking", "dst": "a.rank_b", "relation": "Contains"}),
        json!({"src": "f.ranking", "dst": "a.count", "relation": "Contains"}),
        json!({"src": "a.rank_b", "dst": "a.rank_a", "relation": "VariantOf"}),
    ];
    let path = dir.join("kb.json");
    fs::write(&path, serde_json::to_string(&json!({"nodes": nodes, "edges": edges})).unwrap())
        .unwrap();
    let kg = KnowledgeGraph::load(&path).unwrap();

    let mut registry = ToolRegistry::new();
    for name in ["rank_a", "rank_b", "count"] {
        let descriptor = ToolDescriptor {
            name: name.into(),
            family: "f.ranking".into(),
            description: format!("{name} scores nodes"),
            inputs: vec![InputSlot {
                name: "graph".into(),
                kind: ValueKind::Graph,
                constraints: vec![],
            }],
            params: vec![ParamSpec {
                name: "limit".into(),
                param_type: ParamType::Int,
                range: Some(ParamRange::closed(1.0, 100.0)),
                choices: None,
                default: Some(ParamValue::Int(10)),
            }],
            output_kind: ValueKind::NodeScores,
            execution_notes: String::new(),
        };
        registry
            .register(
                descriptor,
                Box::new(|_, _| Ok(ToolValue::Scalar { value: serde_json::json!(1) })),
            )
            .unwrap();
    }
    (kg, registry)
}

fn one_stage_dag(tool: &str) -> TaskDag {
    let mut node = bare_node("s1", tool);
    node.input_bindings.insert("graph".into(), Binding::SourceDataset { dataset: "g".into() });
    TaskDag { nodes: vec![node], edges: vec![], report_node: "s1".into() }
}

#[test]
fn substitution_is_legal_only_between_knowledge_variants() {
    let dir = TempDir::new().unwrap();
    let (kg, registry) = substitution_world(dir.path());
    let dag = one_stage_dag("rank_a");
    let feedback = vec![ExecutionFeedback::error("s1", "rank_a diverged")];

    let swap = |to: &str| {
        ScriptedCoordinator(json!({
            "actions": [{"action": "substitute_tool", "node": "s1", "tool": to}]
        }))
    };
    let refined = refine(&dag, &feedback, &kg, &registry, &swap("rank_b"), 0).unwrap();
    assert_eq!(refined.node("s1").unwrap().tool_name, "rank_b");
    assert_eq!(refined.node("s1").unwrap().goal, dag.node("s1").unwrap().goal);
    assert!(validate_dag(&refined, &registry).is_empty());

    // count shares the family but is not documented as a variant.
    match refine(&dag, &feedback, &kg, &registry, &swap("count"), 0) {
        Err(PlannerError::PlanningFailed(msg)) => assert!(msg.contains("variant")),
        other => panic!("expected PlanningFailed, got {other:?}"),
    }
}

#[test]
fn refinement_may_only_touch_flagged_nodes() {
    let dir = TempDir::new().unwrap();
    let (kg, registry) = substitution_world(dir.path());
    let dag = one_stage_dag("rank_a");
    // s1 succeeded, yet the scripted reply tries to edit it anyway.
    let sneaky = ScriptedCoordinator(json!({
        "actions": [{"action": "set_param", "node": "s1", "param": "limit", "value": 5}]
    }));
    let feedback = vec![
        ExecutionFeedback::ok("s1"),
        ExecutionFeedback::error("missing", "some other stage failed"),
    ];
    match refine(&dag, &feedback, &kg, &registry, &sneaky, 0) {
        Err(PlannerError::PlanningFailed(msg)) => assert!(msg.contains("flag")),
        other => panic!("expected PlanningFailed, got {other:?}"),
    }
}
