//! Two-hop projection: connect outer endpoints of two relations that share
//! their middle (destination) entity, weighted by co-neighbor count.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::property::{EdgeTable, PropertyGraph};
use super::ConstructError;

/// Projection rule: join `left_relation` (A -> M) with `right_relation`
/// (B -> M) on the shared middle entity M; emit an edge (a, b) whenever a and
/// b share at least `tau` middle neighbors.
///
/// When both relations are the same, the result is the co-neighbor graph on
/// that relation's source entity: undirected, self-pairs skipped, each pair
/// emitted once with `a < b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoHopSpec {
    pub left_relation: String,
    pub right_relation: String,
    pub new_label: String,
    #[serde(default = "default_tau")]
    pub tau: usize,
}

fn default_tau() -> usize {
    1
}

/// Runs the projection and returns a graph holding only the projected
/// relation (plus the outer entity tables it references).
pub fn project(pg: &PropertyGraph, spec: &TwoHopSpec) -> Result<PropertyGraph, ConstructError> {
    if spec.tau == 0 {
        return Err(ConstructError::ProjectionMismatch("tau must be >= 1".into()));
    }
    let left = pg.edge_table(&spec.left_relation)?;
    let right = pg.edge_table(&spec.right_relation)?;
    if left.dst_entity != right.dst_entity {
        return Err(ConstructError::ProjectionMismatch(format!(
            "relations {} and {} do not share a middle entity ({} vs {})",
            spec.left_relation, spec.right_relation, left.dst_entity, right.dst_entity
        )));
    }
    let same = spec.left_relation == spec.right_relation;

    // Middle node -> distinct outer neighbors on each side.
    let mut left_of: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    for (&a, &m) in left.src.iter().zip(left.dst.iter()) {
        let v = left_of.entry(m).or_default();
        if !v.contains(&a) {
            v.push(a);
        }
    }
    let mut right_of: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    for (&b, &m) in right.src.iter().zip(right.dst.iter()) {
        let v = right_of.entry(m).or_default();
        if !v.contains(&b) {
            v.push(b);
        }
    }

    let mut counts: BTreeMap<(u32, u32), usize> = BTreeMap::new();
    for (m, ls) in &left_of {
        let Some(rs) = right_of.get(m) else { continue };
        for &a in ls {
            for &b in rs {
                if same {
                    if a < b {
                        *counts.entry((a, b)).or_insert(0) += 1;
                    }
                } else {
                    *counts.entry((a, b)).or_insert(0) += 1;
                }
            }
        }
    }

    let mut out = PropertyGraph::default();
    if let Some(t) = pg.nodes.get(&left.src_entity) {
        out.nodes.insert(left.src_entity.clone(), t.clone());
    }
    if !same {
        if let Some(t) = pg.nodes.get(&right.src_entity) {
            out.nodes.insert(right.src_entity.clone(), t.clone());
        }
    }
    let mut table = EdgeTable {
        label: spec.new_label.clone(),
        src_entity: left.src_entity.clone(),
        dst_entity: right.src_entity.clone(),
        directed: !same,
        src: Vec::new(),
        dst: Vec::new(),
        weight: Some(Vec::new()),
        attributes: BTreeMap::new(),
    };
    for (&(a, b), &c) in &counts {
        if c >= spec.tau {
            table.src.push(a);
            table.dst.push(b);
            table.weight.as_mut().unwrap().push(c as f64);
        }
    }
    out.edges.insert(spec.new_label.clone(), table);
    Ok(out)
}
