//! Shared value types flowing between workflow stages: score vectors, node
//! sets, cycle sets, tables, and the tagged [`ToolValue`] wrapper used by tool
//! invocation and the wire protocol.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::construct::csr::CsrGraph;

/// Bidirectional mapping between dense internal node ids and external keys.
///
/// Internal ids are assigned in first-seen order during extraction and are
/// stable for a given input; external keys are the source-data identifiers
/// (e.g. account ids).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IdMap {
    keys: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, u32>,
}

impl IdMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_keys(keys: Vec<String>) -> Self {
        let index = keys
            .iter()
            .enumerate()
            .map(|(i, k)| (k.clone(), i as u32))
            .collect();
        Self { keys, index }
    }

    /// Returns the dense id for `key`, inserting it if unseen.
    pub fn intern(&mut self, key: &str) -> u32 {
        if let Some(&id) = self.index.get(key) {
            return id;
        }
        let id = self.keys.len() as u32;
        self.keys.push(key.to_string());
        self.index.insert(key.to_string(), id);
        id
    }

    pub fn get(&self, key: &str) -> Option<u32> {
        if self.index.len() != self.keys.len() {
            // Deserialized maps carry keys only; fall back to scan.
            return self
                .keys
                .iter()
                .position(|k| k == key)
                .map(|i| i as u32);
        }
        self.index.get(key).copied()
    }

    pub fn key(&self, id: u32) -> Option<&str> {
        self.keys.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn keys(&self) -> &[String] {
        &self.keys
    }

    /// Rebuilds the lookup index after deserialization.
    pub fn rebuild_index(&mut self) {
        self.index = self
            .keys
            .iter()
            .enumerate()
            .map(|(i, k)| (k.clone(), i as u32))
            .collect();
    }
}

/// The kind of a value produced or consumed by a tool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ValueKind {
    Graph,
    NodeScores,
    NodeSet,
    CycleSet,
    Table,
    Scalar,
}

impl fmt::Display for ValueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ValueKind::Graph => "Graph",
            ValueKind::NodeScores => "NodeScores",
            ValueKind::NodeSet => "NodeSet",
            ValueKind::CycleSet => "CycleSet",
            ValueKind::Table => "Table",
            ValueKind::Scalar => "Scalar",
        };
        f.write_str(s)
    }
}

/// Dense per-node score vector indexed by internal node id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeScores {
    pub values: Vec<f64>,
    pub id_map: Arc<IdMap>,
}

impl NodeScores {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// An unordered set of nodes, stored as sorted internal ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSet {
    pub ids: Vec<u32>,
    pub id_map: Arc<IdMap>,
}

impl NodeSet {
    pub fn new(mut ids: Vec<u32>, id_map: Arc<IdMap>) -> Self {
        ids.sort_unstable();
        ids.dedup();
        Self { ids, id_map }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// One simple directed cycle in canonical rotation: the sequence starts at its
/// smallest internal id and follows edge direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cycle {
    pub nodes: Vec<u32>,
    /// Smallest edge weight along the cycle, when the graph is weighted.
    pub min_edge_weight: Option<f64>,
    /// Sum of edge weights along the cycle, when the graph is weighted.
    pub total_flow: Option<f64>,
}

impl Cycle {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// A set of simple cycles with deterministic (lexicographic) order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleSet {
    pub cycles: Vec<Cycle>,
    pub id_map: Arc<IdMap>,
    /// True when enumeration stopped at the cycle cap before exhausting the
    /// search space.
    pub truncated: bool,
}

impl CycleSet {
    pub fn len(&self) -> usize {
        self.cycles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cycles.is_empty()
    }

    /// Union of all member nodes, sorted ascending.
    pub fn node_union(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.cycles.iter().flat_map(|c| c.nodes.iter().copied()).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

/// A single typed table cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TableCell {
    Null,
    Int(i64),
    Float(f64),
    Str(String),
}

impl TableCell {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            TableCell::Int(v) => Some(*v as f64),
            TableCell::Float(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            TableCell::Str(s) => Some(s),
            _ => None,
        }
    }
}

impl fmt::Display for TableCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TableCell::Null => f.write_str(""),
            TableCell::Int(v) => write!(f, "{v}"),
            TableCell::Float(v) => write!(f, "{v}"),
            TableCell::Str(s) => f.write_str(s),
        }
    }
}

/// A column-named row table, the tabular interchange value between stages.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<TableCell>>,
}

impl Table {
    pub fn new(columns: Vec<String>) -> Self {
        Self { columns, rows: Vec::new() }
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn push_row(&mut self, row: Vec<TableCell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Per-group incoming/outgoing flow totals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowRow {
    pub key: String,
    pub in_total: f64,
    pub out_total: f64,
    pub in_count: u64,
    pub out_count: u64,
    pub net: f64,
}

/// Flow aggregation output; `net = in_total - out_total` holds exactly per row.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FlowSummary {
    pub rows: Vec<FlowRow>,
}

impl FlowSummary {
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(
            ["key", "in_total", "out_total", "in_count", "out_count", "net"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        );
        for r in &self.rows {
            t.push_row(vec![
                TableCell::Str(r.key.clone()),
                TableCell::Float(r.in_total),
                TableCell::Float(r.out_total),
                TableCell::Int(r.in_count as i64),
                TableCell::Int(r.out_count as i64),
                TableCell::Float(r.net),
            ]);
        }
        t
    }
}

/// A materialized value passed into or out of a tool invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum ToolValue {
    Graph { graph: Arc<CsrGraph> },
    NodeScores { scores: NodeScores },
    NodeSet { nodes: NodeSet },
    CycleSet { cycles: CycleSet },
    Table { table: Arc<Table> },
    Scalar { value: serde_json::Value },
}

impl ToolValue {
    pub fn kind(&self) -> ValueKind {
        match self {
            ToolValue::Graph { .. } => ValueKind::Graph,
            ToolValue::NodeScores { .. } => ValueKind::NodeScores,
            ToolValue::NodeSet { .. } => ValueKind::NodeSet,
            ToolValue::CycleSet { .. } => ValueKind::CycleSet,
            ToolValue::Table { .. } => ValueKind::Table,
            ToolValue::Scalar { .. } => ValueKind::Scalar,
        }
    }

    /// Number of addressable items in the value, used for result stats and
    /// omission accounting.
    pub fn item_count(&self) -> usize {
        match self {
            ToolValue::Graph { graph } => graph.edge_count(),
            ToolValue::NodeScores { scores } => scores.len(),
            ToolValue::NodeSet { nodes } => nodes.len(),
            ToolValue::CycleSet { cycles } => cycles.len(),
            ToolValue::Table { table } => table.len(),
            ToolValue::Scalar { .. } => 1,
        }
    }
}
