//! Neighborhood expansion: BFS union of all nodes within k hops of a seed
//! set, following out-edges.

use std::collections::VecDeque;
use std::sync::Arc;

use crate::construct::csr::CsrGraph;
use crate::values::NodeSet;

use super::AlgoError;

pub fn khop(g: &CsrGraph, seeds: &[u32], k: usize) -> Result<NodeSet, AlgoError> {
    if let Some(&bad) = seeds.iter().find(|&&s| s as usize >= g.node_count) {
        return Err(AlgoError::InvalidNode(bad));
    }
    let mut dist: Vec<Option<usize>> = vec![None; g.node_count];
    let mut queue = VecDeque::new();
    for &s in seeds {
        if dist[s as usize].is_none() {
            dist[s as usize] = Some(0);
            queue.push_back(s);
        }
    }
    while let Some(u) = queue.pop_front() {
        let du = dist[u as usize].unwrap();
        if du == k {
            continue;
        }
        for &v in g.neighbors(u) {
            if dist[v as usize].is_none() {
                dist[v as usize] = Some(du + 1);
                queue.push_back(v);
            }
        }
    }
    let ids: Vec<u32> = (0..g.node_count as u32)
        .filter(|&u| dist[u as usize].is_some())
        .collect();
    Ok(NodeSet::new(ids, Arc::clone(&g.id_map)))
}
