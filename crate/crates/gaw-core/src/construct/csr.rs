//! Compressed sparse row adjacency: the execution-ready graph layout consumed
//! by the built-in algorithms.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::values::IdMap;

/// Directed or symmetrized adjacency in CSR form.
///
/// `offsets` has length `node_count + 1` with `offsets[0] == 0`; the out-edges
/// of node `u` are `targets[offsets[u]..offsets[u+1]]`, sorted by target id.
/// Parallel edges are kept as separate entries unless the construction mode
/// collapsed them. `weights`, when present, aligns with `targets`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsrGraph {
    pub node_count: usize,
    pub offsets: Vec<u32>,
    pub targets: Vec<u32>,
    pub weights: Option<Vec<f64>>,
    pub directed: bool,
    pub id_map: Arc<IdMap>,
}

impl CsrGraph {
    /// Builds a CSR graph from an edge list over `node_count` nodes.
    ///
    /// Edges are bucketed by source and sorted by target within each row
    /// (stable, so parallel edges keep their input order).
    pub fn from_edges(
        node_count: usize,
        edges: &[(u32, u32)],
        weights: Option<&[f64]>,
        directed: bool,
        id_map: Arc<IdMap>,
    ) -> Self {
        if let Some(w) = weights {
            assert_eq!(w.len(), edges.len(), "weight per edge required");
        }
        let mut degree = vec![0u32; node_count];
        for &(src, _) in edges {
            degree[src as usize] += 1;
        }
        let mut offsets = Vec::with_capacity(node_count + 1);
        offsets.push(0u32);
        let mut acc = 0u32;
        for d in &degree {
            acc += d;
            offsets.push(acc);
        }
        let mut cursor: Vec<u32> = offsets[..node_count].to_vec();
        let mut targets = vec![0u32; edges.len()];
        let mut wvec = weights.map(|_| vec![0f64; edges.len()]);
        for (i, &(src, dst)) in edges.iter().enumerate() {
            let pos = cursor[src as usize] as usize;
            targets[pos] = dst;
            if let (Some(wv), Some(ws)) = (wvec.as_mut(), weights) {
                wv[pos] = ws[i];
            }
            cursor[src as usize] += 1;
        }
        // Sort each row by target, carrying weights along.
        for u in 0..node_count {
            let lo = offsets[u] as usize;
            let hi = offsets[u + 1] as usize;
            if hi - lo > 1 {
                match wvec.as_mut() {
                    Some(wv) => {
                        let mut row: Vec<(u32, f64)> = targets[lo..hi]
                            .iter()
                            .copied()
                            .zip(wv[lo..hi].iter().copied())
                            .collect();
                        row.sort_by(|a, b| a.0.cmp(&b.0));
                        for (k, (t, w)) in row.into_iter().enumerate() {
                            targets[lo + k] = t;
                            wv[lo + k] = w;
                        }
                    }
                    None => targets[lo..hi].sort_unstable(),
                }
            }
        }
        Self {
            node_count,
            offsets,
            targets,
            weights: wvec,
            directed,
            id_map,
        }
    }

    /// Convenience constructor for tests and wire clients: nodes named by
    /// external key, edges given as `(src_key_index, dst_key_index, weight)`.
    pub fn from_edge_list(
        keys: &[&str],
        edges: &[(u32, u32, f64)],
        weighted: bool,
        directed: bool,
    ) -> Self {
        let id_map = Arc::new(IdMap::from_keys(keys.iter().map(|s| s.to_string()).collect()));
        let pairs: Vec<(u32, u32)> = edges.iter().map(|&(s, t, _)| (s, t)).collect();
        let ws: Vec<f64> = edges.iter().map(|&(_, _, w)| w).collect();
        Self::from_edges(
            keys.len(),
            &pairs,
            if weighted { Some(&ws) } else { None },
            directed,
            id_map,
        )
    }

    pub fn edge_count(&self) -> usize {
        self.targets.len()
    }

    pub fn out_degree(&self, u: u32) -> usize {
        (self.offsets[u as usize + 1] - self.offsets[u as usize]) as usize
    }

    pub fn neighbors(&self, u: u32) -> &[u32] {
        let lo = self.offsets[u as usize] as usize;
        let hi = self.offsets[u as usize + 1] as usize;
        &self.targets[lo..hi]
    }

    /// Out-edges of `u` as `(target, weight)`; weight is 1.0 when unweighted.
    pub fn edges_from(&self, u: u32) -> impl Iterator<Item = (u32, f64)> + '_ {
        let lo = self.offsets[u as usize] as usize;
        let hi = self.offsets[u as usize + 1] as usize;
        let w = self.weights.as_deref();
        (lo..hi).map(move |i| (self.targets[i], w.map_or(1.0, |w| w[i])))
    }

    pub fn has_edge(&self, u: u32, v: u32) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }

    /// Largest weight among parallel `(u, v)` entries, if any such edge exists.
    pub fn max_edge_weight(&self, u: u32, v: u32) -> Option<f64> {
        let mut best: Option<f64> = None;
        for (t, w) in self.edges_from(u) {
            if t == v {
                best = Some(best.map_or(w, |b: f64| b.max(w)));
            } else if t > v {
                break;
            }
        }
        best
    }

    pub fn is_weighted(&self) -> bool {
        self.weights.is_some()
    }

    /// Reconstructs the edge list `(src, dst, weight)` in CSR row order.
    pub fn to_edge_list(&self) -> Vec<(u32, u32, Option<f64>)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for u in 0..self.node_count as u32 {
            let lo = self.offsets[u as usize] as usize;
            let hi = self.offsets[u as usize + 1] as usize;
            for i in lo..hi {
                out.push((u, self.targets[i], self.weights.as_ref().map(|w| w[i])));
            }
        }
        out
    }

    /// Checks the structural invariants; returns a description of the first
    /// violation found.
    pub fn validate(&self) -> Result<(), String> {
        if self.offsets.len() != self.node_count + 1 {
            return Err(format!(
                "offsets length {} != node_count + 1 ({})",
                self.offsets.len(),
                self.node_count + 1
            ));
        }
        if self.offsets.first() != Some(&0) {
            return Err("offsets[0] != 0".into());
        }
        if self.offsets.windows(2).any(|w| w[0] > w[1]) {
            return Err("offsets not nondecreasing".into());
        }
        if *self.offsets.last().unwrap() as usize != self.targets.len() {
            return Err("offsets[n] != targets.len()".into());
        }
        if let Some(&t) = self.targets.iter().find(|&&t| t as usize >= self.node_count) {
            return Err(format!("target {} out of range", t));
        }
        if let Some(w) = &self.weights {
            if w.len() != self.targets.len() {
                return Err("weights length != targets length".into());
            }
        }
        Ok(())
    }
}
