//! Fixtures shared across integration test targets.

#![allow(dead_code)]

use std::fs;
use std::path::Path;

use serde_json::json;

use gaw_core::knowledge::KnowledgeGraph;

pub const AML_QUERY: &str = "Is \"Maya Flores\" laundering money? Look for transfer cycles moving \
                             amounts above $2,750 back to her account.";

/// Families with summaries sharing vocabulary with the planner's stage
/// goals, plus algorithm leaves naming builtin tools. Two leaves carry no
/// tool attribute on purpose: one niche variant and the whole path family.
pub fn write_fixture_kb(dir: &Path) -> KnowledgeGraph {
    let details = dir.join("details");
    fs::create_dir_all(&details).unwrap();
    let families = [
        ("f.ranking", "c.structure",
         "score and rank accounts by importance and influence and how strongly transfer funds \
          circulate back to a seed account"),
        ("f.community", "c.structure",
         "group accounts into connected components and communities of dense transfer activity"),
        ("f.neighborhoods", "c.structure",
         "collect the neighborhood of nodes reachable within a bounded number of hops from seed \
          accounts"),
        ("f.cycles", "c.patterns",
         "detect cycles rings and loops of transfers moving funds through linked accounts"),
        ("f.paths", "c.patterns",
         "find shortest routes and paths of transfers between accounts"),
        ("f.aggregation", "c.tabular",
         "summarize and estimate transfer volume totals for funds moving through accounts under \
          review"),
    ];
    let algos: &[(&str, &str, Option<&str>, &str)] = &[
        ("a.pagerank", "f.ranking", Some("pagerank"),
         "power iteration scoring global account importance from link structure"),
        ("a.personalized_pagerank", "f.ranking", Some("personalized_pagerank"),
         "random walk with restart measuring how funds circulate back to seed accounts"),
        ("a.connected_components", "f.community", Some("connected_components"),
         "weak and strong component labeling over the transfer graph"),
        ("a.khop", "f.neighborhoods", Some("khop"),
         "breadth first expansion collecting nodes within k hops of seeds"),
        ("a.cycle_enumeration", "f.cycles", Some("enumerate_cycles"),
         "bounded simple cycle enumeration over directed transfer graphs"),
        ("a.negative_cycle", "f.cycles", None,
         "negative weight cycle detection for arbitrage style loops"),
        ("a.flow_aggregation", "f.aggregation", Some("aggregate_flows"),
         "compensated summation of transfer volume totals per account"),
        ("a.topk_selection", "f.aggregation", Some("top_k"),
         "select the k highest scoring nodes from a score table"),
        ("a.shortest_path", "f.paths", None,
         "shortest route trees over weighted transfer graphs"),
    ];
    let mut nodes = vec![
        json!({"id": "c.patterns", "level": "Category", "name": "Pattern detection",
               "summary": "recurring and suspicious patterns in transaction activity",
               "attributes": {}}),
        json!({"id": "c.structure", "level": "Category", "name": "Structural analysis",
               "summary": "global structure of the transfer graph", "attributes": {}}),
        json!({"id": "c.tabular", "level": "Category", "name": "Tabular aggregation",
               "summary": "tabular summaries over transaction records", "attributes": {}}),
    ];
    let mut edges = Vec::new();
    for (id, parent, summary) in families {
        nodes.push(json!({"id": id, "level": "Family", "name": id, "summary": summary,
                          "attributes": {}}));
        edges.push(json!({"src": parent, "dst": id, "relation": "Contains"}));
    }
    for (id, parent, tool, summary) in algos {
        let detail = format!("details/{id}.md");
        fs::write(details.join(format!("{id}.md")), format!("# {id}\n\nnotes for {id}\n"))
            .unwrap();
        let attributes = match tool {
            Some(t) => json!({"tool": t}),
            None => json!({}),
        };
        nodes.push(json!({"id": id, "level": "Algorithm", "name": id, "summary": summary,
                          "attributes": attributes, "detail_path": detail}));
        edges.push(json!({"src": parent, "dst": id, "relation": "Contains"}));
    }
    edges.push(json!({"src": "a.personalized_pagerank", "dst": "a.pagerank",
                      "relation": "VariantOf"}));
    let path = dir.join("knowledge.json");
    fs::write(&path, serde_json::to_string_pretty(&json!({"nodes": nodes, "edges": edges}))
        .unwrap())
        .unwrap();
    KnowledgeGraph::load(&path).unwrap()
}
