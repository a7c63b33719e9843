//! Typed property graph extracted from raw tabular sources: node tables per
//! entity label, edge tables per relation label.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::values::{IdMap, Table, TableCell};

use super::csr::CsrGraph;
use super::ConstructError;

/// Direction selector for CSR materialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Out,
    In,
    Symmetrized,
}

/// Weighting selector for CSR materialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weighting {
    None,
    /// Use the relation's weight column; parallel edges stay separate.
    Column,
    /// Collapse parallel edges into a single entry weighted by multiplicity.
    Count,
}

#[derive(Debug, Clone)]
pub struct NodeTable {
    pub label: String,
    pub id_map: Arc<IdMap>,
    /// Attribute column -> per-node values, aligned with dense ids.
    pub attributes: BTreeMap<String, Vec<TableCell>>,
}

impl NodeTable {
    pub fn len(&self) -> usize {
        self.id_map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_map.len() == 0
    }
}

#[derive(Debug, Clone)]
pub struct EdgeTable {
    pub label: String,
    pub src_entity: String,
    pub dst_entity: String,
    pub directed: bool,
    pub src: Vec<u32>,
    pub dst: Vec<u32>,
    pub weight: Option<Vec<f64>>,
    /// Attribute column -> per-edge values, aligned with `src`/`dst`.
    pub attributes: BTreeMap<String, Vec<TableCell>>,
}

impl EdgeTable {
    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }
}

/// A row skipped during extraction, with enough context for the run log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedRow {
    pub source_id: String,
    pub row_index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct PropertyGraph {
    pub nodes: BTreeMap<String, NodeTable>,
    pub edges: BTreeMap<String, EdgeTable>,
    pub skipped: Vec<SkippedRow>,
    /// `(source id, column name)` pairs touched during extraction; lets tests
    /// assert that extraction reads nothing outside the schema.
    pub columns_read: std::collections::BTreeSet<(String, String)>,
}

impl PropertyGraph {
    pub fn node_table(&self, label: &str) -> Option<&NodeTable> {
        self.nodes.get(label)
    }

    pub fn edge_table(&self, label: &str) -> Result<&EdgeTable, ConstructError> {
        self.edges
            .get(label)
            .ok_or_else(|| ConstructError::UnknownRelation(label.to_string()))
    }

    /// Id map and per-endpoint offsets for a relation's node space.
    ///
    /// Same-entity relations reuse the entity's id map directly. Cross-entity
    /// relations get a combined space: source-entity ids first, then
    /// destination-entity ids, with label-qualified keys to avoid collisions.
    pub fn relation_node_space(
        &self,
        relation: &str,
    ) -> Result<(Arc<IdMap>, u32, u32), ConstructError> {
        let et = self.edge_table(relation)?;
        if et.src_entity == et.dst_entity {
            let table = self.nodes.get(&et.src_entity).ok_or_else(|| {
                ConstructError::UnknownRelation(format!("entity {} missing", et.src_entity))
            })?;
            return Ok((Arc::clone(&table.id_map), 0, 0));
        }
        let src_table = self.nodes.get(&et.src_entity).ok_or_else(|| {
            ConstructError::UnknownRelation(format!("entity {} missing", et.src_entity))
        })?;
        let dst_table = self.nodes.get(&et.dst_entity).ok_or_else(|| {
            ConstructError::UnknownRelation(format!("entity {} missing", et.dst_entity))
        })?;
        let mut keys = Vec::with_capacity(src_table.len() + dst_table.len());
        for k in src_table.id_map.keys() {
            keys.push(format!("{}:{}", et.src_entity, k));
        }
        for k in dst_table.id_map.keys() {
            keys.push(format!("{}:{}", et.dst_entity, k));
        }
        Ok((Arc::new(IdMap::from_keys(keys)), 0, src_table.len() as u32))
    }

    /// Materializes one relation as a CSR graph.
    pub fn to_csr(
        &self,
        relation: &str,
        direction: Direction,
        weighting: Weighting,
    ) -> Result<CsrGraph, ConstructError> {
        let et = self.edge_table(relation)?;
        if weighting == Weighting::Column && et.weight.is_none() {
            return Err(ConstructError::MissingWeightColumn(relation.to_string()));
        }
        let (id_map, src_off, dst_off) = self.relation_node_space(relation)?;
        let node_count = id_map.len();
        let pairs: Vec<(u32, u32)> = et
            .src
            .iter()
            .zip(et.dst.iter())
            .map(|(&s, &d)| (s + src_off, d + dst_off))
            .collect();
        let weights = et.weight.clone();
        Ok(build_csr(
            node_count, &pairs, weights.as_deref(), direction, weighting, id_map,
        ))
    }

    /// Flattens a relation into a flow table with external keys:
    /// columns `src`, `dst`, `amount` (amount 1.0 when unweighted).
    pub fn flow_table(&self, relation: &str) -> Result<Table, ConstructError> {
        let et = self.edge_table(relation)?;
        let src_keys = &self
            .nodes
            .get(&et.src_entity)
            .ok_or_else(|| ConstructError::UnknownRelation(format!("entity {} missing", et.src_entity)))?
            .id_map;
        let dst_keys = &self
            .nodes
            .get(&et.dst_entity)
            .ok_or_else(|| ConstructError::UnknownRelation(format!("entity {} missing", et.dst_entity)))?
            .id_map;
        let mut table = Table::new(vec!["src".into(), "dst".into(), "amount".into()]);
        for i in 0..et.len() {
            let amount = et.weight.as_ref().map_or(1.0, |w| w[i]);
            table.push_row(vec![
                TableCell::Str(src_keys.key(et.src[i]).expect("endpoint in range").to_string()),
                TableCell::Str(dst_keys.key(et.dst[i]).expect("endpoint in range").to_string()),
                TableCell::Float(amount),
            ]);
        }
        Ok(table)
    }
}

/// Shared CSR builder used by both full-relation and stage-view
/// materialization.
pub(crate) fn build_csr(
    node_count: usize,
    pairs: &[(u32, u32)],
    weights: Option<&[f64]>,
    direction: Direction,
    weighting: Weighting,
    id_map: Arc<IdMap>,
) -> CsrGraph {
    let mut edges: Vec<(u32, u32)> = Vec::with_capacity(pairs.len());
    let mut ws: Vec<f64> = Vec::with_capacity(pairs.len());
    let push = |edges: &mut Vec<(u32, u32)>, ws: &mut Vec<f64>, s: u32, d: u32, w: f64| {
        edges.push((s, d));
        ws.push(w);
    };
    for (i, &(s, d)) in pairs.iter().enumerate() {
        let w = weights.map_or(1.0, |w| w[i]);
        match direction {
            Direction::Out => push(&mut edges, &mut ws, s, d, w),
            Direction::In => push(&mut edges, &mut ws, d, s, w),
            Direction::Symmetrized => {
                push(&mut edges, &mut ws, s, d, w);
                push(&mut edges, &mut ws, d, s, w);
            }
        }
    }
    if direction == Direction::Symmetrized {
        // Deduplicate directed entries introduced by mirroring; keep the max
        // weight among duplicates so Column weighting stays meaningful.
        let mut seen: BTreeMap<(u32, u32), f64> = BTreeMap::new();
        for (i, &(s, d)) in edges.iter().enumerate() {
            let entry = seen.entry((s, d)).or_insert(f64::NEG_INFINITY);
            *entry = entry.max(ws[i]);
        }
        if weighting == Weighting::Count {
            // Count multiplicity over the pre-dedup symmetrized multiset.
            let mut counts: BTreeMap<(u32, u32), f64> = BTreeMap::new();
            for &(s, d) in &edges {
                *counts.entry((s, d)).or_insert(0.0) += 1.0;
            }
            let pairs: Vec<(u32, u32)> = counts.keys().copied().collect();
            let cw: Vec<f64> = counts.values().copied().collect();
            return CsrGraph::from_edges(node_count, &pairs, Some(&cw), false, id_map);
        }
        let pairs: Vec<(u32, u32)> = seen.keys().copied().collect();
        let dw: Vec<f64> = seen.values().copied().collect();
        return CsrGraph::from_edges(
            node_count,
            &pairs,
            if weighting == Weighting::Column { Some(&dw) } else { None },
            false,
            id_map,
        );
    }
    match weighting {
        Weighting::None => CsrGraph::from_edges(node_count, &edges, None, true, id_map),
        Weighting::Column => CsrGraph::from_edges(node_count, &edges, Some(&ws), true, id_map),
        Weighting::Count => {
            let mut counts: BTreeMap<(u32, u32), f64> = BTreeMap::new();
            for &(s, d) in &edges {
                *counts.entry((s, d)).or_insert(0.0) += 1.0;
            }
            let pairs: Vec<(u32, u32)> = counts.keys().copied().collect();
            let cw: Vec<f64> = counts.values().copied().collect();
            CsrGraph::from_edges(node_count, &pairs, Some(&cw), true, id_map)
        }
    }
}
