//! Power-iteration PageRank with uniform or seed-restricted teleport.

use std::sync::Arc;

use crate::construct::csr::CsrGraph;
use crate::values::NodeScores;

use super::AlgoError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PageRankOptions {
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PageRankOptions {
    fn default() -> Self {
        Self { damping: 0.85, tol: 1e-10, max_iter: 200 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PageRankResult {
    pub scores: NodeScores,
    pub converged: bool,
    pub iterations: usize,
}

/// Standard PageRank: uniform teleport; dangling mass redistributed
/// uniformly. Converges when the L1 delta between iterations drops below
/// `tol`.
pub fn pagerank(g: &CsrGraph, opts: PageRankOptions) -> Result<PageRankResult, AlgoError> {
    if g.node_count == 0 {
        return Err(AlgoError::EmptyGraph);
    }
    let teleport = vec![1.0 / g.node_count as f64; g.node_count];
    Ok(power_iterate(g, &teleport, opts))
}

/// Personalized PageRank: teleport (and dangling) mass concentrates
/// uniformly on the seed set.
pub fn personalized_pagerank(
    g: &CsrGraph,
    seeds: &[u32],
    opts: PageRankOptions,
) -> Result<PageRankResult, AlgoError> {
    if g.node_count == 0 {
        return Err(AlgoError::EmptyGraph);
    }
    if seeds.is_empty() {
        return Err(AlgoError::EmptySeedSet);
    }
    if let Some(&bad) = seeds.iter().find(|&&s| s as usize >= g.node_count) {
        return Err(AlgoError::InvalidNode(bad));
    }
    let mut teleport = vec![0.0; g.node_count];
    let mut distinct = seeds.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let share = 1.0 / distinct.len() as f64;
    for &s in &distinct {
        teleport[s as usize] = share;
    }
    Ok(power_iterate(g, &teleport, opts))
}

fn power_iterate(g: &CsrGraph, teleport: &[f64], opts: PageRankOptions) -> PageRankResult {
    let n = g.node_count;
    let d = opts.damping;
    let mut x = teleport.to_vec();
    let mut converged = false;
    let mut iterations = 0;
    for iter in 0..opts.max_iter {
        let mut next = vec![0.0; n];
        let mut dangling = 0.0;
        for u in 0..n as u32 {
            let deg = g.out_degree(u);
            if deg == 0 {
                dangling += x[u as usize];
                continue;
            }
            // Parallel edges each carry an equal share of the node's mass.
            let share = d * x[u as usize] / deg as f64;
            for &v in g.neighbors(u) {
                next[v as usize] += share;
            }
        }
        for v in 0..n {
            next[v] += (d * dangling + (1.0 - d)) * teleport[v];
        }
        let delta: f64 = next.iter().zip(x.iter()).map(|(a, b)| (a - b).abs()).sum();
        x = next;
        iterations = iter + 1;
        if delta < opts.tol {
            converged = true;
            break;
        }
    }
    PageRankResult {
        scores: NodeScores { values: x, id_map: Arc::clone(&g.id_map) },
        converged,
        iterations,
    }
}
