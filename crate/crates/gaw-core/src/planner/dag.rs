//! Structural validation and ordering of task DAGs. Validation accumulates
//! every violation it can find; ordering is Kahn's algorithm with an
//! id-ordered ready set, so the order is a total, deterministic function of
//! the DAG.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::registry::{check_param, ToolRegistry};
use crate::values::ValueKind;

use super::{Binding, DepKind, PlannerError, Selector, TaskDag};

/// One structural defect. `validate_dag` returns all of them, not the first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "violation")]
pub enum Violation {
    DuplicateNodeId { node: String },
    CycleViolation { nodes: Vec<String> },
    UnknownTool { node: String, tool: String },
    UnknownProducer { node: String, slot: String, producer: String },
    /// The selector cannot be applied to what the producer emits.
    SelectorMismatch {
        node: String,
        slot: String,
        selector: Selector,
        producer_kind: ValueKind,
    },
    KindMismatch {
        node: String,
        slot: String,
        expected: ValueKind,
        got: ValueKind,
    },
    MissingSlot { node: String, slot: String },
    UnknownSlot { node: String, slot: String },
    BadParam { node: String, message: String },
    /// A StageOutput binding with no mirroring edge.
    MissingEdge {
        producer: String,
        consumer: String,
        dep_kind: DepKind,
    },
    /// A Data or Parameter edge no binding justifies.
    UnjustifiedEdge {
        producer: String,
        consumer: String,
        dep_kind: DepKind,
    },
    DanglingEdge {
        producer: String,
        consumer: String,
        missing: String,
    },
    BadReportNode { reason: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateNodeId { node } => write!(f, "duplicate node id {node}"),
            Violation::CycleViolation { nodes } => {
                write!(f, "cycle through nodes {}", nodes.join(", "))
            }
            Violation::UnknownTool { node, tool } => {
                write!(f, "node {node}: tool {tool} is not registered")
            }
            Violation::UnknownProducer { node, slot, producer } => {
                write!(f, "node {node} slot {slot}: producer {producer} does not exist")
            }
            Violation::SelectorMismatch { node, slot, selector, producer_kind } => write!(
                f,
                "node {node} slot {slot}: selector {selector:?} cannot apply to {producer_kind}"
            ),
            Violation::KindMismatch { node, slot, expected, got } => {
                write!(f, "node {node} slot {slot}: expected {expected}, got {got}")
            }
            Violation::MissingSlot { node, slot } => {
                write!(f, "node {node}: required slot {slot} is unbound")
            }
            Violation::UnknownSlot { node, slot } => {
                write!(f, "node {node}: binds slot {slot} the tool does not declare")
            }
            Violation::BadParam { node, message } => write!(f, "node {node}: {message}"),
            Violation::MissingEdge { producer, consumer, dep_kind } => write!(
                f,
                "binding implies {dep_kind:?} edge {producer} -> {consumer} but none exists"
            ),
            Violation::UnjustifiedEdge { producer, consumer, dep_kind } => write!(
                f,
                "{dep_kind:?} edge {producer} -> {consumer} matches no binding"
            ),
            Violation::DanglingEdge { producer, consumer, missing } => {
                write!(f, "edge {producer} -> {consumer} references missing node {missing}")
            }
            Violation::BadReportNode { reason } => write!(f, "report node: {reason}"),
        }
    }
}

/// Static result kind of applying a selector to a producer's output kind.
/// None means the combination is not materializable.
pub fn selector_result_kind(selector: Selector, producer: ValueKind) -> Option<ValueKind> {
    use ValueKind::*;
    match (selector, producer) {
        (Selector::Value, k) => Some(k),
        (Selector::NodeSet, NodeSet | CycleSet | NodeScores) => Some(NodeSet),
        (Selector::InducedGraph, NodeSet | CycleSet) => Some(Graph),
        (Selector::InducedEdgeTable, NodeSet | CycleSet) => Some(Table),
        (Selector::TopNode, NodeScores) => Some(NodeSet),
        _ => None,
    }
}

/// Expected edge kind for a StageOutput binding: scalar-ish selections flow
/// as parameters, everything else as data.
fn edge_kind_for(selector: Selector) -> DepKind {
    match selector {
        Selector::TopNode => DepKind::Parameter,
        _ => DepKind::Data,
    }
}

/// Nodes that sit on at least one cycle: a node is a cycle member exactly
/// when it can reach itself through one or more edges. Task DAGs are small
/// enough that per-node reachability is the simplest exact answer.
fn cycle_members(dag: &TaskDag) -> Vec<String> {
    let ids: BTreeSet<&str> = dag.nodes.iter().map(|n| n.id.as_str()).collect();
    let mut adj: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for e in &dag.edges {
        let (p, c) = (e.producer.as_str(), e.consumer.as_str());
        if ids.contains(p) && ids.contains(c) {
            adj.entry(p).or_default().insert(c);
        }
    }
    let reaches_self = |start: &str| -> bool {
        let mut seen = BTreeSet::new();
        let mut stack: Vec<&str> = adj.get(start).into_iter().flatten().copied().collect();
        while let Some(x) = stack.pop() {
            if x == start {
                return true;
            }
            if seen.insert(x) {
                stack.extend(adj.get(x).into_iter().flatten().copied());
            }
        }
        false
    };
    ids.iter()
        .copied()
        .filter(|n| reaches_self(n))
        .map(str::to_string)
        .collect()
}

/// Deterministic execution order: Kahn's algorithm, ready set ordered by
/// node id. Every producer precedes all of its consumers.
pub fn topological_order(dag: &TaskDag) -> Result<Vec<String>, PlannerError> {
    let ids: BTreeSet<&str> = dag.nodes.iter().map(|n| n.id.as_str()).collect();
    let mut indegree: BTreeMap<&str, usize> = ids.iter().map(|&id| (id, 0)).collect();
    let mut out: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for e in &dag.edges {
        let (p, c) = (e.producer.as_str(), e.consumer.as_str());
        if !ids.contains(p) || !ids.contains(c) {
            continue;
        }
        *indegree.get_mut(c).expect("known") += 1;
        out.entry(p).or_default().push(c);
    }
    let mut ready: BTreeSet<&str> = indegree
        .iter()
        .filter(|(_, &d)| d == 0)
        .map(|(&id, _)| id)
        .collect();
    let mut order = Vec::with_capacity(ids.len());
    while let Some(&next) = ready.iter().next() {
        ready.remove(next);
        order.push(next.to_string());
        for &c in out.get(next).into_iter().flatten() {
            let d = indegree.get_mut(c).expect("known");
            *d -= 1;
            if *d == 0 {
                ready.insert(c);
            }
        }
    }
    if order.len() != ids.len() {
        return Err(PlannerError::CyclicDag(cycle_members(dag)));
    }
    Ok(order)
}

/// Full structural check: acyclicity, tool existence, binding resolvability
/// and kind compatibility, parameter schema conformance, binding/edge
/// consistency, and the single-terminal-report invariant.
pub fn validate_dag(dag: &TaskDag, registry: &ToolRegistry) -> Vec<Violation> {
    let mut violations = Vec::new();

    let mut seen = BTreeSet::new();
    for node in &dag.nodes {
        if !seen.insert(node.id.as_str()) {
            violations.push(Violation::DuplicateNodeId { node: node.id.clone() });
        }
    }
    let ids: BTreeSet<&str> = seen;

    match dag.node(&dag.report_node) {
        None => violations.push(Violation::BadReportNode {
            reason: format!("designated node {} does not exist", dag.report_node),
        }),
        Some(_) => {
            if dag.edges.iter().any(|e| e.producer == dag.report_node) {
                violations.push(Violation::BadReportNode {
                    reason: format!("{} is not terminal: it has consumers", dag.report_node),
                });
            }
        }
    }

    for e in &dag.edges {
        for endpoint in [&e.producer, &e.consumer] {
            if !ids.contains(endpoint.as_str()) {
                violations.push(Violation::DanglingEdge {
                    producer: e.producer.clone(),
                    consumer: e.consumer.clone(),
                    missing: endpoint.clone(),
                });
            }
        }
    }

    let on_cycles = cycle_members(dag);
    if !on_cycles.is_empty() {
        violations.push(Violation::CycleViolation { nodes: on_cycles });
    }

    for node in &dag.nodes {
        let Some(descriptor) = registry.describe(&node.tool_name) else {
            violations.push(Violation::UnknownTool {
                node: node.id.clone(),
                tool: node.tool_name.clone(),
            });
            continue;
        };
        for (slot_name, binding) in &node.input_bindings {
            let Some(slot) = descriptor.slot(slot_name) else {
                violations.push(Violation::UnknownSlot {
                    node: node.id.clone(),
                    slot: slot_name.clone(),
                });
                continue;
            };
            if let Binding::StageOutput { producer, selector } = binding {
                let Some(upstream) = dag.node(producer) else {
                    violations.push(Violation::UnknownProducer {
                        node: node.id.clone(),
                        slot: slot_name.clone(),
                        producer: producer.clone(),
                    });
                    continue;
                };
                // An unregistered producer tool is already reported once.
                let Some(upstream_desc) = registry.describe(&upstream.tool_name) else {
                    continue;
                };
                match selector_result_kind(*selector, upstream_desc.output_kind) {
                    None => violations.push(Violation::SelectorMismatch {
                        node: node.id.clone(),
                        slot: slot_name.clone(),
                        selector: *selector,
                        producer_kind: upstream_desc.output_kind,
                    }),
                    Some(kind) if kind != slot.kind => {
                        violations.push(Violation::KindMismatch {
                            node: node.id.clone(),
                            slot: slot_name.clone(),
                            expected: slot.kind,
                            got: kind,
                        })
                    }
                    Some(_) => {}
                }
            }
        }
        for slot in &descriptor.inputs {
            if !node.input_bindings.contains_key(&slot.name) {
                violations.push(Violation::MissingSlot {
                    node: node.id.clone(),
                    slot: slot.name.clone(),
                });
            }
        }
        for (name, value) in &node.params {
            if let Err(e) = check_param(descriptor, name, value) {
                violations.push(Violation::BadParam {
                    node: node.id.clone(),
                    message: e.to_string(),
                });
            }
        }
    }

    // Bindings and edges must tell the same story in both directions.
    let edge_set: BTreeSet<(&str, &str, DepKind)> = dag
        .edges
        .iter()
        .map(|e| (e.producer.as_str(), e.consumer.as_str(), e.dep_kind))
        .collect();
    let mut justified: BTreeSet<(&str, &str, DepKind)> = BTreeSet::new();
    for node in &dag.nodes {
        for binding in node.input_bindings.values() {
            if let Binding::StageOutput { producer, selector } = binding {
                if !ids.contains(producer.as_str()) {
                    continue;
                }
                let dep_kind = edge_kind_for(*selector);
                justified.insert((producer.as_str(), node.id.as_str(), dep_kind));
                if !edge_set.contains(&(producer.as_str(), node.id.as_str(), dep_kind)) {
                    violations.push(Violation::MissingEdge {
                        producer: producer.clone(),
                        consumer: node.id.clone(),
                        dep_kind,
                    });
                }
            }
        }
    }
    for &(p, c, kind) in &edge_set {
        if kind != DepKind::Decision && !justified.contains(&(p, c, kind)) {
            violations.push(Violation::UnjustifiedEdge {
                producer: p.to_string(),
                consumer: c.to_string(),
                dep_kind: kind,
            });
        }
    }

    violations
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::{TaskEdge, TaskNode};
    use crate::registry::builtin_registry;
    use std::collections::BTreeMap;

    fn node(id: &str, tool: &str) -> TaskNode {
        TaskNode {
            id: id.into(),
            goal: format!("goal of {id}"),
            tool_name: tool.into(),
            params: BTreeMap::new(),
            input_bindings: BTreeMap::new(),
            output_name: format!("out_{id}"),
        }
    }

    fn edge(p: &str, c: &str, k: DepKind) -> TaskEdge {
        TaskEdge { producer: p.into(), consumer: c.into(), dep_kind: k }
    }

    #[test]
    fn diamond_orders_by_id_on_ties() {
        let mut a = node("a", "pagerank");
        a.input_bindings.insert(
            "graph".into(),
            Binding::SourceDataset { dataset: "transfer".into() },
        );
        let dag = TaskDag {
            nodes: vec![node("d", "pagerank"), node("b", "pagerank"), a, node("c", "pagerank")],
            edges: vec![
                edge("a", "b", DepKind::Decision),
                edge("a", "c", DepKind::Decision),
                edge("b", "d", DepKind::Decision),
                edge("c", "d", DepKind::Decision),
            ],
            report_node: "d".into(),
        };
        assert_eq!(topological_order(&dag).unwrap(), ["a", "b", "c", "d"]);
    }

    #[test]
    fn two_cycle_is_one_violation_naming_both_nodes() {
        let dag = TaskDag {
            nodes: vec![node("a", "pagerank"), node("b", "pagerank"), node("c", "pagerank")],
            edges: vec![
                edge("a", "b", DepKind::Decision),
                edge("b", "a", DepKind::Decision),
                edge("b", "c", DepKind::Decision),
            ],
            report_node: "c".into(),
        };
        let registry = builtin_registry();
        let cycles: Vec<_> = validate_dag(&dag, &registry)
            .into_iter()
            .filter(|v| matches!(v, Violation::CycleViolation { .. }))
            .collect();
        // c hangs off the cycle but is not on it.
        assert_eq!(
            cycles,
            vec![Violation::CycleViolation { nodes: vec!["a".into(), "b".into()] }]
        );
        assert!(matches!(
            topological_order(&dag).unwrap_err(),
            PlannerError::CyclicDag(nodes) if nodes == ["a", "b"]
        ));
    }

    #[test]
    fn selector_kinds_follow_the_materialization_table() {
        use crate::values::ValueKind::*;
        assert_eq!(selector_result_kind(Selector::Value, CycleSet), Some(CycleSet));
        assert_eq!(selector_result_kind(Selector::NodeSet, CycleSet), Some(NodeSet));
        assert_eq!(selector_result_kind(Selector::InducedEdgeTable, NodeSet), Some(Table));
        assert_eq!(selector_result_kind(Selector::TopNode, NodeScores), Some(NodeSet));
        assert_eq!(selector_result_kind(Selector::TopNode, Table), None);
        assert_eq!(selector_result_kind(Selector::InducedGraph, Scalar), None);
    }
}
