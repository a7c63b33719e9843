//! Descriptors and executors for the seven built-in analytics. Executors
//! assume schema-validated inputs; value-domain failures (unknown anchor
//! key, empty graph) surface as executor errors.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::algo::{
    aggregate_flows, connected_components, enumerate_cycles, khop, pagerank,
    personalized_pagerank, top_k, ComponentMode, CycleOptions, EdgeFilter, PageRankOptions,
};
use crate::construct::csr::CsrGraph;
use crate::values::{NodeSet, Table, TableCell, ToolValue, ValueKind};

use super::{
    InputSlot, ParamRange, ParamSpec, ParamType, ParamValue, SlotConstraint, ToolDescriptor,
    ToolRegistry,
};

type Inputs = BTreeMap<String, ToolValue>;
type Params = BTreeMap<String, ParamValue>;

fn graph_input<'a>(inputs: &'a Inputs, slot: &str) -> &'a Arc<CsrGraph> {
    match inputs.get(slot) {
        Some(ToolValue::Graph { graph }) => graph,
        _ => unreachable!("slot {slot} validated as Graph before dispatch"),
    }
}

fn nodeset_input<'a>(inputs: &'a Inputs, slot: &str) -> &'a NodeSet {
    match inputs.get(slot) {
        Some(ToolValue::NodeSet { nodes }) => nodes,
        _ => unreachable!("slot {slot} validated as NodeSet before dispatch"),
    }
}

fn table_input<'a>(inputs: &'a Inputs, slot: &str) -> &'a Arc<Table> {
    match inputs.get(slot) {
        Some(ToolValue::Table { table }) => table,
        _ => unreachable!("slot {slot} validated as Table before dispatch"),
    }
}

fn scores_input<'a>(inputs: &'a Inputs, slot: &str) -> &'a crate::values::NodeScores {
    match inputs.get(slot) {
        Some(ToolValue::NodeScores { scores }) => scores,
        _ => unreachable!("slot {slot} validated as NodeScores before dispatch"),
    }
}

fn f64_param(params: &Params, name: &str) -> f64 {
    params[name].as_f64().expect("validated numeric param")
}

fn usize_param(params: &Params, name: &str) -> usize {
    params[name].as_usize().expect("validated non-negative int param")
}

fn opt_f64_param(params: &Params, name: &str) -> Option<f64> {
    params.get(name).map(|v| v.as_f64().expect("validated numeric param"))
}

fn opt_str_param<'a>(params: &'a Params, name: &str) -> Option<&'a str> {
    params.get(name).map(|v| v.as_str().expect("validated string param"))
}

/// Seed sets may come from a different materialization than the graph;
/// remap through external keys when the id spaces differ.
fn remap_nodes(nodes: &NodeSet, graph: &CsrGraph) -> Result<Vec<u32>, String> {
    if Arc::ptr_eq(&nodes.id_map, &graph.id_map) {
        return Ok(nodes.ids.clone());
    }
    nodes
        .ids
        .iter()
        .map(|&id| {
            let key = nodes
                .id_map
                .key(id)
                .ok_or_else(|| format!("node id {id} outside its own id space"))?;
            graph
                .id_map
                .get(key)
                .ok_or_else(|| format!("node {key:?} not present in the graph"))
        })
        .collect()
}

fn pagerank_params() -> Vec<ParamSpec> {
    vec![
        ParamSpec {
            name: "damping".into(),
            param_type: ParamType::Float,
            range: Some(ParamRange::open(0.0, 1.0)),
            choices: None,
            default: Some(ParamValue::Float(0.85)),
        },
        ParamSpec {
            name: "tol".into(),
            param_type: ParamType::Float,
            range: Some(ParamRange { lo: 0.0, hi: 1.0, lo_open: true, hi_open: false }),
            choices: None,
            default: Some(ParamValue::Float(1e-10)),
        },
        ParamSpec {
            name: "max_iter".into(),
            param_type: ParamType::Int,
            range: Some(ParamRange::closed(1.0, 100_000.0)),
            choices: None,
            default: Some(ParamValue::Int(200)),
        },
    ]
}

fn pagerank_options(params: &Params) -> PageRankOptions {
    PageRankOptions {
        damping: f64_param(params, "damping"),
        tol: f64_param(params, "tol"),
        max_iter: usize_param(params, "max_iter"),
    }
}

fn graph_slot(constraints: Vec<SlotConstraint>) -> InputSlot {
    InputSlot { name: "graph".into(), kind: ValueKind::Graph, constraints }
}

/// Registers the seven built-in tools on a fresh registry.
pub fn builtin_registry() -> ToolRegistry {
    let mut reg = ToolRegistry::new();
    let mut add = |d: ToolDescriptor, e: super::ToolExecutor| {
        reg.register(d, e).expect("builtin descriptors are valid and unique");
    };

    add(
        ToolDescriptor {
            name: "aggregate_flows".into(),
            family: "f.aggregation".into(),
            description: "Sums weighted in/out flows per endpoint of an edge table, with exact \
                          compensated accumulation."
                .into(),
            inputs: vec![InputSlot {
                name: "table".into(),
                kind: ValueKind::Table,
                constraints: vec![],
            }],
            params: vec![ParamSpec {
                name: "focus".into(),
                param_type: ParamType::Str,
                range: None,
                choices: None,
                default: None,
            }],
            output_kind: ValueKind::Table,
            execution_notes: "Expects src/dst columns plus an amount column; focus restricts \
                              output to one endpoint key. Totals are order-independent."
                .into(),
        },
        Box::new(|inputs, params| {
            let table = table_input(inputs, "table");
            let focus = opt_str_param(params, "focus");
            let summary = aggregate_flows(table, focus).map_err(|e| e.to_string())?;
            Ok(ToolValue::Table { table: Arc::new(summary.to_table()) })
        }),
    );

    add(
        ToolDescriptor {
            name: "connected_components".into(),
            family: "f.community".into(),
            description: "Labels every node with its weakly or strongly connected component."
                .into(),
            inputs: vec![graph_slot(vec![])],
            params: vec![ParamSpec {
                name: "mode".into(),
                param_type: ParamType::Str,
                range: None,
                choices: Some(vec!["weak".into(), "strong".into()]),
                default: Some(ParamValue::Str("weak".into())),
            }],
            output_kind: ValueKind::NodeScores,
            execution_notes: "Labels are the smallest member id of each component, so equal \
                              scores mean same component."
                .into(),
        },
        Box::new(|inputs, params| {
            let graph = graph_input(inputs, "graph");
            let mode = match opt_str_param(params, "mode").expect("mode has a default") {
                "strong" => ComponentMode::Strong,
                _ => ComponentMode::Weak,
            };
            Ok(ToolValue::NodeScores { scores: connected_components(graph, mode) })
        }),
    );

    add(
        ToolDescriptor {
            name: "enumerate_cycles".into(),
            family: "f.cycles".into(),
            description: "Enumerates simple directed cycles with bounded length, optionally \
                          anchored at one node and filtered by edge weight."
                .into(),
            inputs: vec![graph_slot(vec![SlotConstraint::DirectedRequired])],
            params: vec![
                ParamSpec {
                    name: "min_len".into(),
                    param_type: ParamType::Int,
                    range: Some(ParamRange::closed(2.0, 8.0)),
                    choices: None,
                    default: Some(ParamValue::Int(2)),
                },
                ParamSpec {
                    name: "max_len".into(),
                    param_type: ParamType::Int,
                    range: Some(ParamRange::closed(2.0, 8.0)),
                    choices: None,
                    default: Some(ParamValue::Int(6)),
                },
                ParamSpec {
                    name: "anchor".into(),
                    param_type: ParamType::Str,
                    range: None,
                    choices: None,
                    default: None,
                },
                ParamSpec {
                    name: "min_weight".into(),
                    param_type: ParamType::Float,
                    range: Some(ParamRange::closed(0.0, 1e18)),
                    choices: None,
                    default: None,
                },
                ParamSpec {
                    name: "max_weight".into(),
                    param_type: ParamType::Float,
                    range: Some(ParamRange::closed(0.0, 1e18)),
                    choices: None,
                    default: None,
                },
            ],
            output_kind: ValueKind::CycleSet,
            execution_notes: "Cycles are canonicalized to start at their smallest node id and \
                              listed lexicographically; enumeration caps at 10000 cycles and \
                              flags truncation."
                .into(),
        },
        Box::new(|inputs, params| {
            let graph = graph_input(inputs, "graph");
            let anchor = match opt_str_param(params, "anchor") {
                Some(key) => Some(
                    graph
                        .id_map
                        .get(key)
                        .ok_or_else(|| format!("anchor node {key:?} not in graph"))?,
                ),
                None => None,
            };
            let opts = CycleOptions {
                min_len: usize_param(params, "min_len"),
                max_len: usize_param(params, "max_len"),
                anchor,
                edge_filter: EdgeFilter {
                    min_weight: opt_f64_param(params, "min_weight"),
                    max_weight: opt_f64_param(params, "max_weight"),
                },
                ..CycleOptions::default()
            };
            let cycles = enumerate_cycles(graph, &opts).map_err(|e| e.to_string())?;
            Ok(ToolValue::CycleSet { cycles })
        }),
    );

    add(
        ToolDescriptor {
            name: "khop".into(),
            family: "f.neighborhoods".into(),
            description: "Collects every node within k outgoing hops of a seed set.".into(),
            inputs: vec![
                graph_slot(vec![]),
                InputSlot { name: "seeds".into(), kind: ValueKind::NodeSet, constraints: vec![] },
            ],
            params: vec![ParamSpec {
                name: "k".into(),
                param_type: ParamType::Int,
                range: Some(ParamRange::closed(0.0, 64.0)),
                choices: None,
                default: Some(ParamValue::Int(2)),
            }],
            output_kind: ValueKind::NodeSet,
            execution_notes: "Breadth-first over out-edges; seeds themselves are included (k=0 \
                              returns the seed set)."
                .into(),
        },
        Box::new(|inputs, params| {
            let graph = graph_input(inputs, "graph");
            let seeds = remap_nodes(nodeset_input(inputs, "seeds"), graph)?;
            let k = usize_param(params, "k");
            let nodes = khop(graph, &seeds, k).map_err(|e| e.to_string())?;
            Ok(ToolValue::NodeSet { nodes })
        }),
    );

    add(
        ToolDescriptor {
            name: "pagerank".into(),
            family: "f.ranking".into(),
            description: "Scores node importance as stationary visit probability of a damped \
                          random walk with uniform teleport."
                .into(),
            inputs: vec![graph_slot(vec![])],
            params: pagerank_params(),
            output_kind: ValueKind::NodeScores,
            execution_notes: "Power iteration to an L1 tolerance; dangling mass follows the \
                              teleport distribution; scores sum to 1."
                .into(),
        },
        Box::new(|inputs, params| {
            let graph = graph_input(inputs, "graph");
            let result =
                pagerank(graph, pagerank_options(params)).map_err(|e| e.to_string())?;
            Ok(ToolValue::NodeScores { scores: result.scores })
        }),
    );

    add(
        ToolDescriptor {
            name: "personalized_pagerank".into(),
            family: "f.ranking".into(),
            description: "PageRank with teleport restricted to a seed set: importance relative \
                          to the seeds."
                .into(),
            inputs: vec![
                graph_slot(vec![]),
                InputSlot { name: "seeds".into(), kind: ValueKind::NodeSet, constraints: vec![] },
            ],
            params: pagerank_params(),
            output_kind: ValueKind::NodeScores,
            execution_notes: "Teleport mass spreads uniformly over the distinct seeds; scores \
                              sum to 1."
                .into(),
        },
        Box::new(|inputs, params| {
            let graph = graph_input(inputs, "graph");
            let seeds = remap_nodes(nodeset_input(inputs, "seeds"), graph)?;
            let result = personalized_pagerank(graph, &seeds, pagerank_options(params))
                .map_err(|e| e.to_string())?;
            Ok(ToolValue::NodeScores { scores: result.scores })
        }),
    );

    add(
        ToolDescriptor {
            name: "top_k".into(),
            family: "f.aggregation".into(),
            description: "Selects the k highest-scoring nodes as a (node, score) table.".into(),
            inputs: vec![InputSlot {
                name: "scores".into(),
                kind: ValueKind::NodeScores,
                constraints: vec![],
            }],
            params: vec![ParamSpec {
                name: "k".into(),
                param_type: ParamType::Int,
                range: Some(ParamRange::closed(1.0, 100_000.0)),
                choices: None,
                default: Some(ParamValue::Int(10)),
            }],
            output_kind: ValueKind::Table,
            execution_notes: "Descending score with ascending id tie-break; node column holds \
                              external keys."
                .into(),
        },
        Box::new(|inputs, params| {
            let scores = scores_input(inputs, "scores");
            let k = usize_param(params, "k");
            let mut table = Table::new(vec!["node".into(), "score".into()]);
            for (id, score) in top_k(scores, k) {
                let key = scores.id_map.key(id).unwrap_or("?").to_string();
                table.push_row(vec![TableCell::Str(key), TableCell::Float(score)]);
            }
            Ok(ToolValue::Table { table: Arc::new(table) })
        }),
    );

    reg
}

/// Server-side fallback when an invoke request carries no directive.
pub fn default_directive(kind: ValueKind) -> super::DistillDirective {
    use super::{Budget, DistillDirective};
    match kind {
        ValueKind::NodeScores => DistillDirective::TopK { k: 10, budget: Budget::default() },
        ValueKind::Table => DistillDirective::Head { k: 10, budget: Budget::default() },
        ValueKind::CycleSet | ValueKind::NodeSet | ValueKind::Graph => {
            DistillDirective::SubgraphSummary { max_paths: 5, budget: Budget::default() }
        }
        ValueKind::Scalar => DistillDirective::Head { k: 1, budget: Budget::default() },
    }
}
