//! Registry behavior over the wire and in process: catalog round-trips,
//! invoke equivalence, protocol error codes, budget safety under
//! adversarial payloads, and distillation purity.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::os::unix::net::UnixStream;
use std::sync::Arc;

use proptest::prelude::*;
use serde_json::{json, Value};

use gaw_core::registry::{
    builtin_registry, distill, server, Budget, DistillDirective, DistilledResult,
    InvocationRequest, ParamValue, RawResult, RegistryError, ToolDescriptor,
};
use gaw_core::values::{Cycle, CycleSet, IdMap, NodeScores, NodeSet, Table, TableCell, ToolValue};
use gaw_core::CsrGraph;

fn ring_graph(n: usize) -> ToolValue {
    let keys: Vec<String> = (0..n).map(|i| format!("acct_{i:03}")).collect();
    let key_refs: Vec<&str> = keys.iter().map(String::as_str).collect();
    let edges: Vec<(u32, u32, f64)> =
        (0..n).map(|i| (i as u32, ((i + 1) % n) as u32, 100.0 + i as f64)).collect();
    ToolValue::Graph {
        graph: Arc::new(CsrGraph::from_edge_list(&key_refs, &edges, true, true)),
    }
}

fn scores_fixture(n: usize) -> NodeScores {
    let keys: Vec<String> = (0..n).map(|i| format!("n{i:04}")).collect();
    let id_map = Arc::new(IdMap::from_keys(keys));
    // Distinct scores so ranking is unambiguous.
    let values: Vec<f64> = (0..n).map(|i| ((i * 7919) % n) as f64 / n as f64).collect();
    NodeScores { values, id_map }
}

// ---- catalog ------------------------------------------------------------

#[test]
fn catalog_round_trips_through_the_wire_encoding() {
    let reg = builtin_registry();
    for descriptor in reg.describe_all() {
        let encoded = serde_json::to_string(descriptor).unwrap();
        let decoded: ToolDescriptor = serde_json::from_str(&encoded).unwrap();
        assert_eq!(&decoded, descriptor);
    }
}

#[test]
fn empty_registry_has_empty_catalog() {
    let reg = gaw_core::registry::ToolRegistry::new();
    assert!(reg.describe_all().is_empty());
    assert!(reg.is_empty());
}

// ---- wire/in-process equivalence ----------------------------------------

#[test]
fn wire_invoke_matches_direct_invoke_byte_for_byte() {
    let reg = builtin_registry();
    let graph = ring_graph(12);
    let directive = DistillDirective::TopK { k: 5, budget: Budget::default() };

    let request = InvocationRequest {
        tool: "pagerank".into(),
        inputs: [("graph".to_string(), graph.clone())].into_iter().collect(),
        params: BTreeMap::new(),
    };
    let raw = reg.invoke(&request).unwrap();
    let direct = distill("pagerank", &raw, &directive).unwrap();

    let frame = json!({
        "jsonrpc": "2.0",
        "id": 1,
        "method": "tools/invoke",
        "params": {
            "tool": "pagerank",
            "inputs": {"graph": serde_json::to_value(&graph).unwrap()},
            "params": {},
            "distill": serde_json::to_value(&directive).unwrap(),
        }
    });
    let resp: Value =
        serde_json::from_str(&server::handle_frame(&reg, &frame.to_string())).unwrap();
    assert_eq!(resp["result"]["stats"], serde_json::to_value(raw.stats).unwrap());
    // Canonical (sorted-key) encodings must agree byte for byte.
    let wire: DistilledResult = serde_json::from_value(resp["result"]["distilled"].clone()).unwrap();
    assert_eq!(wire, direct);
    assert_eq!(
        serde_json::to_vec(&resp["result"]["distilled"]).unwrap(),
        serde_json::to_vec(&serde_json::to_value(&direct).unwrap()).unwrap()
    );
}

#[test]
fn wire_application_errors_carry_registry_codes() {
    let reg = builtin_registry();
    let call = |params: Value| -> Value {
        let frame = json!({"jsonrpc": "2.0", "id": 9, "method": "tools/invoke", "params": params});
        serde_json::from_str(&server::handle_frame(&reg, &frame.to_string())).unwrap()
    };

    let resp = call(json!({"tool": "no_such_tool", "inputs": {}, "params": {}}));
    assert_eq!(resp["error"]["code"], json!(1001));

    let graph = serde_json::to_value(ring_graph(4)).unwrap();
    let resp = call(json!({
        "tool": "pagerank",
        "inputs": {"graph": graph},
        "params": {"damping": 1.5}
    }));
    assert_eq!(resp["error"]["code"], json!(1002));
    assert!(resp["error"]["message"].as_str().unwrap().contains("damping"));

    let undirected = ToolValue::Graph {
        graph: Arc::new(CsrGraph::from_edge_list(
            &["a", "b"],
            &[(0, 1, 1.0), (1, 0, 1.0)],
            true,
            false,
        )),
    };
    let resp = call(json!({
        "tool": "enumerate_cycles",
        "inputs": {"graph": serde_json::to_value(&undirected).unwrap()},
        "params": {}
    }));
    assert_eq!(resp["error"]["code"], json!(1003));

    let empty = ToolValue::Graph {
        graph: Arc::new(CsrGraph::from_edge_list(&[], &[], false, true)),
    };
    let resp = call(json!({
        "tool": "pagerank",
        "inputs": {"graph": serde_json::to_value(&empty).unwrap()},
        "params": {}
    }));
    assert_eq!(resp["error"]["code"], json!(1004));
}

#[test]
fn socket_transport_serves_concurrent_clients() {
    let reg = Arc::new(builtin_registry());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("gaw.sock");
    let handle = server::serve_socket(Arc::clone(&reg), &path).unwrap();

    let mut joins = Vec::new();
    for client in 0..4 {
        let path = path.clone();
        joins.push(std::thread::spawn(move || {
            let stream = UnixStream::connect(&path).unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut stream = stream;
            for round in 0..3 {
                let id = client * 10 + round;
                let frame =
                    json!({"jsonrpc": "2.0", "id": id, "method": "tools/list"}).to_string();
                stream.write_all(frame.as_bytes()).unwrap();
                stream.write_all(b"\n").unwrap();
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let resp: Value = serde_json::from_str(&line).unwrap();
                assert_eq!(resp["id"], json!(id));
                assert_eq!(resp["result"]["tools"].as_array().unwrap().len(), 7);
            }
        }));
    }
    for j in joins {
        j.join().unwrap();
    }
    handle.shutdown();
    assert!(!path.exists());
}

// ---- distillation -------------------------------------------------------

#[test]
fn top_k_keeps_k_items_and_accounts_for_the_rest() {
    let raw = RawResult::new(ToolValue::NodeScores { scores: scores_fixture(1000) });
    let directive = DistillDirective::TopK { k: 10, budget: Budget::default() };
    let d = distill("pagerank", &raw, &directive).unwrap();
    assert_eq!(d.structured_items.len(), 10);
    assert_eq!(d.omitted_count, 990);
    // Scores arrive highest first.
    let picked: Vec<f64> =
        d.structured_items.iter().map(|v| v["score"].as_f64().unwrap()).collect();
    for w in picked.windows(2) {
        assert!(w[0] >= w[1]);
    }
}

#[test]
fn small_cycle_set_is_listed_in_full() {
    let id_map = Arc::new(IdMap::from_keys(vec![
        "a".into(),
        "b".into(),
        "c".into(),
        "d".into(),
    ]));
    let cycles = CycleSet {
        cycles: vec![
            Cycle { nodes: vec![0, 1, 2], min_edge_weight: Some(3.0), total_flow: Some(9.0) },
            Cycle { nodes: vec![0, 1], min_edge_weight: Some(1.0), total_flow: Some(4.0) },
            Cycle { nodes: vec![1, 2, 3], min_edge_weight: Some(2.0), total_flow: Some(12.0) },
        ],
        id_map,
        truncated: false,
    };
    let raw = RawResult::new(ToolValue::CycleSet { cycles });
    let directive = DistillDirective::SubgraphSummary { max_paths: 5, budget: Budget::default() };
    let d = distill("enumerate_cycles", &raw, &directive).unwrap();
    assert_eq!(d.structured_items.len(), 3);
    assert_eq!(d.omitted_count, 0);
    // Shortest cycle leads.
    assert_eq!(d.structured_items[0]["length"], json!(2));
    assert!(d.summary_text.contains("3 cycles"));
    assert!(d.summary_text.contains("a -> b -> a"));
}

#[test]
fn directive_mode_must_match_payload_kind() {
    let mut table = Table::new(vec!["x".into()]);
    table.push_row(vec![TableCell::Int(1)]);
    let raw = RawResult::new(ToolValue::Table { table: Arc::new(table) });
    let err = distill(
        "aggregate_flows",
        &raw,
        &DistillDirective::TopK { k: 3, budget: Budget::default() },
    )
    .unwrap_err();
    assert!(matches!(err, RegistryError::ModeMismatch { .. }));
}

#[test]
fn threshold_on_flow_table_cuts_on_first_numeric_column() {
    let mut table = Table::new(vec!["account".into(), "in_total".into(), "net".into()]);
    table.push_row(vec![
        TableCell::Str("a".into()),
        TableCell::Float(50.0),
        TableCell::Float(-1.0),
    ]);
    table.push_row(vec![
        TableCell::Str("b".into()),
        TableCell::Float(250.0),
        TableCell::Float(9.0),
    ]);
    table.push_row(vec![
        TableCell::Str("c".into()),
        TableCell::Float(100.0),
        TableCell::Float(3.0),
    ]);
    let raw = RawResult::new(ToolValue::Table { table: Arc::new(table) });
    let d = distill(
        "aggregate_flows",
        &raw,
        &DistillDirective::Threshold { threshold: 100.0, budget: Budget::default() },
    )
    .unwrap();
    assert_eq!(d.structured_items.len(), 2);
    assert_eq!(d.structured_items[0]["account"], json!("b"));
    assert_eq!(d.structured_items[1]["account"], json!("c"));
    assert_eq!(d.omitted_count, 1);
}

fn char_len(s: &str) -> usize {
    s.chars().count()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    /// Adversarial labels and tiny budgets: the distilled output always
    /// honors max_items and max_chars, and omission accounting balances.
    #[test]
    fn budgets_hold_for_arbitrary_scores_and_labels(
        labels in proptest::collection::vec("[a-z0-9\\-]{1,120}", 1..80),
        raw_scores in proptest::collection::vec(-1e6f64..1e6, 1..80),
        k in 1usize..60,
        max_items in 1usize..20,
        max_chars in 8usize..400,
    ) {
        let n = labels.len().min(raw_scores.len());
        let mut keys: Vec<String> = labels[..n].iter().enumerate()
            .map(|(i, l)| format!("{l}-{i}"))
            .collect();
        keys.sort();
        let scores = NodeScores {
            values: raw_scores[..n].to_vec(),
            id_map: Arc::new(IdMap::from_keys(keys)),
        };
        let raw = RawResult::new(ToolValue::NodeScores { scores });
        let budget = Budget { max_items, max_chars };
        for directive in [
            DistillDirective::TopK { k, budget },
            DistillDirective::Threshold { threshold: 0.0, budget },
            DistillDirective::Head { k, budget },
        ] {
            let d = distill("t", &raw, &directive).unwrap();
            prop_assert!(d.structured_items.len() <= max_items);
            prop_assert!(char_len(&d.summary_text) <= max_chars,
                "text {} chars > budget {max_chars}", char_len(&d.summary_text));
            prop_assert_eq!(d.omitted_count, n - d.structured_items.len());
        }
    }

    /// Purity: repeated distillation of the same raw result is
    /// byte-identical.
    #[test]
    fn distillation_is_referentially_transparent(
        values in proptest::collection::vec(-1e3f64..1e3, 1..40),
        k in 1usize..20,
    ) {
        let n = values.len();
        let keys: Vec<String> = (0..n).map(|i| format!("k{i}")).collect();
        let scores = NodeScores { values, id_map: Arc::new(IdMap::from_keys(keys)) };
        let raw = RawResult::new(ToolValue::NodeScores { scores });
        let directive = DistillDirective::TopK { k, budget: Budget::default() };
        let a = distill("t", &raw, &directive).unwrap();
        let b = distill("t", &raw, &directive).unwrap();
        prop_assert_eq!(serde_json::to_vec(&a).unwrap(), serde_json::to_vec(&b).unwrap());
    }

    /// Set-like payloads under the same safety contract.
    #[test]
    fn budgets_hold_for_node_sets(
        n in 1usize..60,
        max_items in 1usize..10,
        max_chars in 8usize..200,
    ) {
        let keys: Vec<String> = (0..n).map(|i| format!("node-{i:05}-with-a-long-key")).collect();
        let ids: Vec<u32> = (0..n as u32).collect();
        let nodes = NodeSet::new(ids, Arc::new(IdMap::from_keys(keys)));
        let raw = RawResult::new(ToolValue::NodeSet { nodes });
        let d = distill(
            "khop",
            &raw,
            &DistillDirective::SubgraphSummary { max_paths: 5, budget: Budget { max_items, max_chars } },
        ).unwrap();
        prop_assert!(d.structured_items.len() <= max_items);
        prop_assert!(char_len(&d.summary_text) <= max_chars);
        prop_assert_eq!(d.omitted_count, n - d.structured_items.len());
    }
}

// ---- invoke composition -------------------------------------------------

#[test]
fn khop_composes_with_personalized_pagerank_across_id_spaces() {
    // Seeds built over a different (superset) key universe exercise the
    // key-based remapping path.
    let reg = builtin_registry();
    let graph = ring_graph(6);
    let foreign_map = Arc::new(IdMap::from_keys(vec![
        "acct_000".into(),
        "acct_003".into(),
        "zzz_unrelated".into(),
    ]));
    let seeds = NodeSet::new(vec![0, 1], foreign_map);

    let req = InvocationRequest {
        tool: "khop".into(),
        inputs: [
            ("graph".to_string(), graph.clone()),
            ("seeds".to_string(), ToolValue::NodeSet { nodes: seeds.clone() }),
        ]
        .into_iter()
        .collect(),
        params: [("k".to_string(), ParamValue::Int(1))].into_iter().collect(),
    };
    let raw = reg.invoke(&req).unwrap();
    let ToolValue::NodeSet { nodes } = &raw.payload else { panic!() };
    let keys: Vec<&str> =
        nodes.ids.iter().map(|&id| nodes.id_map.key(id).unwrap()).collect();
    assert_eq!(keys, vec!["acct_000", "acct_001", "acct_003", "acct_004"]);

    let req = InvocationRequest {
        tool: "personalized_pagerank".into(),
        inputs: [
            ("graph".to_string(), graph),
            ("seeds".to_string(), ToolValue::NodeSet { nodes: seeds }),
        ]
        .into_iter()
        .collect(),
        params: BTreeMap::new(),
    };
    let raw = reg.invoke(&req).unwrap();
    let ToolValue::NodeScores { scores } = &raw.payload else { panic!() };
    assert!((scores.sum() - 1.0).abs() < 1e-9);
}

#[test]
fn seed_key_missing_from_graph_is_an_executor_error() {
    let reg = builtin_registry();
    let graph = ring_graph(4);
    let foreign = NodeSet::new(
        vec![0],
        Arc::new(IdMap::from_keys(vec!["phantom".into()])),
    );
    let req = InvocationRequest {
        tool: "khop".into(),
        inputs: [
            ("graph".to_string(), graph),
            ("seeds".to_string(), ToolValue::NodeSet { nodes: foreign }),
        ]
        .into_iter()
        .collect(),
        params: BTreeMap::new(),
    };
    match reg.invoke(&req).unwrap_err() {
        RegistryError::ExecutorError { message, .. } => {
            assert!(message.contains("phantom"), "{message}")
        }
        other => panic!("expected ExecutorError, got {other:?}"),
    }
}
