//! Stage graph views: induced subgraphs materialized from upstream stage
//! outputs (node sets or cycle sets) so later stages can run on exactly the
//! region an earlier stage flagged.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::values::{IdMap, Table, TableCell, ToolValue};

use super::csr::CsrGraph;
use super::property::{build_csr, Direction, PropertyGraph, Weighting};
use super::ConstructError;

/// Induced subgraph of one relation, restricted to a node subset.
///
/// Invariant: `edge_rows` holds exactly the relation rows whose endpoints are
/// both in `nodes`.
#[derive(Debug, Clone)]
pub struct StageGraphView {
    pub relation: String,
    /// Sorted internal ids (in the relation's node space) kept in the view.
    pub nodes: Vec<u32>,
    /// Indices into the relation's edge table.
    pub edge_rows: Vec<usize>,
    /// Id of the stage node whose output induced this view.
    pub provenance: String,
}

impl StageGraphView {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_rows.len()
    }
}

/// Builds the induced view of `relation` from an upstream output.
///
/// Accepts `NodeSet` and `CycleSet` outputs; a cycle set is flattened to its
/// node union first.
pub fn materialize_stage_input(
    upstream: &ToolValue,
    pg: &PropertyGraph,
    relation: &str,
    provenance: &str,
) -> Result<StageGraphView, ConstructError> {
    let nodes: Vec<u32> = match upstream {
        ToolValue::NodeSet { nodes } => nodes.ids.clone(),
        ToolValue::CycleSet { cycles } => cycles.node_union(),
        other => {
            return Err(ConstructError::KindMismatch {
                expected: "NodeSet or CycleSet".into(),
                got: other.kind(),
            })
        }
    };
    let et = pg.edge_table(relation)?;
    let member = |id: u32| nodes.binary_search(&id).is_ok();
    let edge_rows: Vec<usize> = (0..et.len())
        .filter(|&i| member(et.src[i]) && member(et.dst[i]))
        .collect();
    Ok(StageGraphView {
        relation: relation.to_string(),
        nodes,
        edge_rows,
        provenance: provenance.to_string(),
    })
}

impl StageGraphView {
    /// Compacts the view into a CSR graph: the subset nodes get fresh dense
    /// ids (ascending by original id) and keep their external keys.
    pub fn to_csr(
        &self,
        pg: &PropertyGraph,
        direction: Direction,
        weighting: Weighting,
    ) -> Result<CsrGraph, ConstructError> {
        let et = pg.edge_table(&self.relation)?;
        if weighting == Weighting::Column && et.weight.is_none() {
            return Err(ConstructError::MissingWeightColumn(self.relation.clone()));
        }
        let (base_ids, src_off, dst_off) = pg.relation_node_space(&self.relation)?;
        let mut remap: BTreeMap<u32, u32> = BTreeMap::new();
        let mut keys = Vec::with_capacity(self.nodes.len());
        for (new_id, &old) in self.nodes.iter().enumerate() {
            remap.insert(old, new_id as u32);
            keys.push(
                base_ids
                    .key(old)
                    .ok_or(ConstructError::InvalidNode(old))?
                    .to_string(),
            );
        }
        let id_map = Arc::new(IdMap::from_keys(keys));
        let pairs: Vec<(u32, u32)> = self
            .edge_rows
            .iter()
            .map(|&i| (remap[&(et.src[i] + src_off)], remap[&(et.dst[i] + dst_off)]))
            .collect();
        let weights: Option<Vec<f64>> = et
            .weight
            .as_ref()
            .map(|w| self.edge_rows.iter().map(|&i| w[i]).collect());
        Ok(build_csr(
            self.nodes.len(),
            &pairs,
            weights.as_deref(),
            direction,
            weighting,
            id_map,
        ))
    }

    /// Induced edges as a flow table (`src`, `dst`, `amount`) with external
    /// keys, for tabular aggregation stages.
    pub fn flow_table(&self, pg: &PropertyGraph) -> Result<Table, ConstructError> {
        let et = pg.edge_table(&self.relation)?;
        let src_keys = &pg
            .nodes
            .get(&et.src_entity)
            .ok_or_else(|| ConstructError::UnknownRelation(format!("entity {} missing", et.src_entity)))?
            .id_map;
        let dst_keys = &pg
            .nodes
            .get(&et.dst_entity)
            .ok_or_else(|| ConstructError::UnknownRelation(format!("entity {} missing", et.dst_entity)))?
            .id_map;
        let mut table = Table::new(vec!["src".into(), "dst".into(), "amount".into()]);
        for &i in &self.edge_rows {
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
