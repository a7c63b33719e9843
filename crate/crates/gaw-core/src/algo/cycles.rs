//! Bounded simple-cycle enumeration over directed graphs.
//!
//! Anchored search runs a depth-bounded DFS from the anchor; each simple
//! cycle through it is discovered exactly once. Unanchored search runs one
//! bounded DFS per start vertex restricted to ids >= start, so every cycle is
//! found exactly once at its smallest member and emerges already in canonical
//! rotation.

use std::sync::Arc;

use crate::construct::csr::CsrGraph;
use crate::values::{Cycle, CycleSet};

use super::AlgoError;

/// Hard upper bound on requested cycle length.
pub const LENGTH_CAP: usize = 8;
/// Hard cap on enumerated cycles; hitting it sets the truncation flag.
pub const CYCLE_CAP: usize = 10_000;

/// Weight predicate applied to edges before searching.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EdgeFilter {
    pub min_weight: Option<f64>,
    pub max_weight: Option<f64>,
}

impl EdgeFilter {
    pub fn is_noop(&self) -> bool {
        self.min_weight.is_none() && self.max_weight.is_none()
    }

    fn passes(&self, w: f64) -> bool {
        self.min_weight.map_or(true, |m| w >= m) && self.max_weight.map_or(true, |m| w <= m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleOptions {
    pub min_len: usize,
    pub max_len: usize,
    pub anchor: Option<u32>,
    pub edge_filter: EdgeFilter,
    pub cycle_cap: usize,
}

impl Default for CycleOptions {
    fn default() -> Self {
        Self {
            min_len: 2,
            max_len: 6,
            anchor: None,
            edge_filter: EdgeFilter::default(),
            cycle_cap: CYCLE_CAP,
        }
    }
}

/// Filtered, deduplicated adjacency: per source, `(target, max weight among
/// parallel edges)` sorted by target. Parallel edges collapse because they
/// cannot create additional simple cycles; the max weight is what per-cycle
/// aggregates use.
struct SearchGraph {
    adj: Vec<Vec<(u32, f64)>>,
    weighted: bool,
}

impl SearchGraph {
    fn build(g: &CsrGraph, filter: &EdgeFilter) -> Self {
        let mut adj: Vec<Vec<(u32, f64)>> = vec![Vec::new(); g.node_count];
        for u in 0..g.node_count as u32 {
            let row = &mut adj[u as usize];
            for (v, w) in g.edges_from(u) {
                if !filter.passes(w) {
                    continue;
                }
                match row.last_mut() {
                    // CSR rows are target-sorted, so parallels are adjacent.
                    Some(last) if last.0 == v => last.1 = last.1.max(w),
                    _ => row.push((v, w)),
                }
            }
        }
        Self { adj, weighted: g.is_weighted() }
    }
}

/// Enumerates simple directed cycles with length in `[min_len, max_len]`.
///
/// Output is lexicographically ordered on the canonical node sequences.
/// When the cap stops the search early, `truncated` is set and the result
/// holds the first cycles in search order (still sorted).
pub fn enumerate_cycles(g: &CsrGraph, opts: &CycleOptions) -> Result<CycleSet, AlgoError> {
    if opts.min_len < 2 || opts.min_len > opts.max_len || opts.max_len > LENGTH_CAP {
        return Err(AlgoError::LengthBoundError(format!(
            "need 2 <= min_len <= max_len <= {LENGTH_CAP}, got [{}, {}]",
            opts.min_len, opts.max_len
        )));
    }
    if let Some(a) = opts.anchor {
        if a as usize >= g.node_count {
            return Err(AlgoError::InvalidNode(a));
        }
    }
    let sg = SearchGraph::build(g, &opts.edge_filter);
    let mut found: Vec<Vec<u32>> = Vec::new();
    let mut truncated = false;
    match opts.anchor {
        Some(a) => {
            search_from(&sg, a, opts, u32::MIN, &mut found, &mut truncated);
        }
        None => {
            for s in 0..g.node_count as u32 {
                if truncated {
                    break;
                }
                search_from(&sg, s, opts, s, &mut found, &mut truncated);
            }
        }
    }
    let mut canonical: Vec<Vec<u32>> = found.into_iter().map(canonicalize).collect();
    canonical.sort();
    canonical.dedup();
    let cycles = canonical
        .into_iter()
        .map(|nodes| {
            let (min_w, total) = if sg.weighted {
                let mut min_w = f64::INFINITY;
                let mut total = 0.0;
                for i in 0..nodes.len() {
                    let u = nodes[i];
                    let v = nodes[(i + 1) % nodes.len()];
                    let w = sg.adj[u as usize]
                        .iter()
                        .find(|&&(t, _)| t == v)
                        .map(|&(_, w)| w)
                        .expect("cycle edge exists");
                    min_w = min_w.min(w);
                    total += w;
                }
                (Some(min_w), Some(total))
            } else {
                (None, None)
            };
            Cycle { nodes, min_edge_weight: min_w, total_flow: total }
        })
        .collect();
    Ok(CycleSet { cycles, id_map: Arc::clone(&g.id_map), truncated })
}

/// Depth-bounded DFS collecting simple cycles through `start`, visiting only
/// nodes >= `floor` (pass `u32::MIN` to disable the restriction).
fn search_from(
    sg: &SearchGraph,
    start: u32,
    opts: &CycleOptions,
    floor: u32,
    found: &mut Vec<Vec<u32>>,
    truncated: &mut bool,
) {
    let mut path = vec![start];
    let mut on_path = vec![false; sg.adj.len()];
    on_path[start as usize] = true;
    // Explicit stack of per-depth neighbor cursors.
    let mut cursors = vec![0usize];
    while let Some(&cursor) = cursors.last() {
        let u = *path.last().unwrap();
        let row = &sg.adj[u as usize];
        if cursor >= row.len() {
            cursors.pop();
            path.pop();
            on_path[u as usize] = false;
            if let Some(c) = cursors.last_mut() {
                *c += 1;
            }
            continue;
        }
        let (v, _) = row[cursor];
        if v == start {
            if path.len() >= opts.min_len {
                found.push(path.clone());
                if found.len() >= opts.cycle_cap {
                    *truncated = true;
                    return;
                }
            }
            *cursors.last_mut().unwrap() += 1;
            continue;
        }
        if v < floor || on_path[v as usize] || path.len() >= opts.max_len {
            *cursors.last_mut().unwrap() += 1;
            continue;
        }
        path.push(v);
        on_path[v as usize] = true;
        cursors.push(0);
    }
}

/// Rotates a cycle so its smallest id comes first; traversal direction is
/// preserved.
fn canonicalize(mut nodes: Vec<u32>) -> Vec<u32> {
    let min_pos = nodes
        .iter()
        .enumerate()
        .min_by_key(|&(_, &n)| n)
        .map(|(i, _)| i)
        .unwrap_or(0);
    nodes.rotate_left(min_pos);
    nodes
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cycle_nodes(set: &CycleSet) -> Vec<Vec<u32>> {
        set.cycles.iter().map(|c| c.nodes.clone()).collect()
    }

    #[test]
    fn triangle_with_chord_yields_one_cycle() {
        let g = CsrGraph::from_edge_list(
            &["a", "b", "c", "d"],
            &[(0, 1, 1.0), (1, 2, 1.0), (2, 0, 1.0), (0, 3, 1.0)],
            false,
            true,
        );
        let set = enumerate_cycles(&g, &CycleOptions::default()).unwrap();
        assert_eq!(cycle_nodes(&set), vec![vec![0, 1, 2]]);
        assert!(!set.truncated);
    }

    #[test]
    fn anchor_outside_cycles_gives_empty_set() {
        let g = CsrGraph::from_edge_list(
            &["a", "b", "c", "d"],
            &[(0, 1, 1.0), (1, 2, 1.0), (2, 0, 1.0), (0, 3, 1.0)],
            false,
            true,
        );
        let opts = CycleOptions { anchor: Some(3), ..Default::default() };
        assert!(enumerate_cycles(&g, &opts).unwrap().is_empty());
    }

    #[test]
    fn anchored_equals_filtered_unanchored() {
        let g = CsrGraph::from_edge_list(
            &["a", "b", "c", "d"],
            &[
                (0, 1, 1.0),
                (1, 0, 1.0),
                (1, 2, 1.0),
                (2, 3, 1.0),
                (3, 1, 1.0),
                (2, 0, 1.0),
                (0, 2, 1.0),
            ],
            false,
            true,
        );
        let all = enumerate_cycles(&g, &CycleOptions::default()).unwrap();
        let anchored = enumerate_cycles(
            &g,
            &CycleOptions { anchor: Some(1), ..Default::default() },
        )
        .unwrap();
        let expected: Vec<Vec<u32>> = cycle_nodes(&all)
            .into_iter()
            .filter(|c| c.contains(&1))
            .collect();
        assert_eq!(cycle_nodes(&anchored), expected);
    }

    #[test]
    fn length_bounds_are_validated() {
        let g = CsrGraph::from_edge_list(&["a"], &[], false, true);
        for (lo, hi) in [(1, 6), (4, 3), (2, 9)] {
            let opts = CycleOptions { min_len: lo, max_len: hi, ..Default::default() };
            assert!(matches!(
                enumerate_cycles(&g, &opts),
                Err(AlgoError::LengthBoundError(_))
            ));
        }
    }

    #[test]
    fn min_len_excludes_short_cycles() {
        // 2-cycle a<->b and triangle a->b->c->a.
        let g = CsrGraph::from_edge_list(
            &["a", "b", "c"],
            &[(0, 1, 1.0), (1, 0, 1.0), (1, 2, 1.0), (2, 0, 1.0)],
            false,
            true,
        );
        let two_up = enumerate_cycles(&g, &CycleOptions::default()).unwrap();
        assert_eq!(cycle_nodes(&two_up), vec![vec![0, 1], vec![0, 1, 2]]);
        let three_up =
            enumerate_cycles(&g, &CycleOptions { min_len: 3, ..Default::default() }).unwrap();
        assert_eq!(cycle_nodes(&three_up), vec![vec![0, 1, 2]]);
    }

    #[test]
    fn weight_filter_removes_low_value_cycles() {
        let g = CsrGraph::from_edge_list(
            &["a", "b", "c"],
            &[(0, 1, 10.0), (1, 0, 1.0), (1, 2, 10.0), (2, 0, 10.0)],
            true,
            true,
        );
        let opts = CycleOptions {
            edge_filter: EdgeFilter { min_weight: Some(5.0), max_weight: None },
            ..Default::default()
        };
        let set = enumerate_cycles(&g, &opts).unwrap();
        assert_eq!(cycle_nodes(&set), vec![vec![0, 1, 2]]);
        let c = &set.cycles[0];
        assert_eq!(c.min_edge_weight, Some(10.0));
        assert_eq!(c.total_flow, Some(30.0));
    }

    #[test]
    fn parallel_edges_use_max_weight_in_aggregates() {
        let g = CsrGraph::from_edge_list(
            &["a", "b"],
            &[(0, 1, 2.0), (0, 1, 7.0), (1, 0, 3.0)],
            true,
            true,
        );
        let set = enumerate_cycles(&g, &CycleOptions::default()).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.cycles[0].min_edge_weight, Some(3.0));
        assert_eq!(set.cycles[0].total_flow, Some(10.0));
    }

    #[test]
    fn cap_sets_truncation_flag() {
        // Complete digraph on 6 nodes has far more than 5 cycles.
        let keys: Vec<String> = (0..6).map(|i| format!("n{i}")).collect();
        let key_refs: Vec<&str> = keys.iter().map(|s| s.as_str()).collect();
        let mut edges = Vec::new();
        for u in 0..6u32 {
            for v in 0..6u32 {
                if u != v {
                    edges.push((u, v, 1.0));
                }
            }
        }
        let g = CsrGraph::from_edge_list(&key_refs, &edges, false, true);
        let opts = CycleOptions { cycle_cap: 5, ..Default::default() };
        let set = enumerate_cycles(&g, &opts).unwrap();
        assert!(set.truncated);
        assert_eq!(set.len(), 5);
    }

    #[test]
    fn canonical_form_is_stable_under_edge_order() {
        let edges = [(2u32, 0u32, 1.0), (0, 1, 1.0), (1, 2, 1.0)];
        let mut permuted = edges.to_vec();
        permuted.reverse();
        let g1 = CsrGraph::from_edge_list(&["a", "b", "c"], &edges, false, true);
        let g2 = CsrGraph::from_edge_list(&["a", "b", "c"], &permuted, false, true);
        let s1 = enumerate_cycles(&g1, &CycleOptions::default()).unwrap();
        let s2 = enumerate_cycles(&g2, &CycleOptions::default()).unwrap();
        assert_eq!(cycle_nodes(&s1), cycle_nodes(&s2));
    }
}
