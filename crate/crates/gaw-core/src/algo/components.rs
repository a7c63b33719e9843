//! Connected components: union-find for weak, iterative Tarjan for strong.

use std::sync::Arc;

use crate::construct::csr::CsrGraph;
use crate::values::NodeScores;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComponentMode {
    Weak,
    Strong,
}

/// Labels each node with its component representative: the smallest member
/// id, stored as a score so the output plugs into ranking-style consumers.
pub fn connected_components(g: &CsrGraph, mode: ComponentMode) -> NodeScores {
    let labels = match mode {
        ComponentMode::Weak => weak_labels(g),
        ComponentMode::Strong => strong_labels(g),
    };
    NodeScores {
        values: labels.into_iter().map(|l| l as f64).collect(),
        id_map: Arc::clone(&g.id_map),
    }
}

fn weak_labels(g: &CsrGraph) -> Vec<u32> {
    let n = g.node_count;
    let mut parent: Vec<u32> = (0..n as u32).collect();
    fn find(parent: &mut [u32], mut x: u32) -> u32 {
        while parent[x as usize] != x {
            parent[x as usize] = parent[parent[x as usize] as usize];
            x = parent[x as usize];
        }
        x
    }
    for u in 0..n as u32 {
        for &v in g.neighbors(u) {
            let (ru, rv) = (find(&mut parent, u), find(&mut parent, v));
            if ru != rv {
                // Union by smaller root keeps the representative minimal.
                let (lo, hi) = if ru < rv { (ru, rv) } else { (rv, ru) };
                parent[hi as usize] = lo;
            }
        }
    }
    (0..n as u32).map(|u| find(&mut parent, u)).collect()
}

fn strong_labels(g: &CsrGraph) -> Vec<u32> {
    let n = g.node_count;
    const UNSET: u32 = u32::MAX;
    let mut index = vec![UNSET; n];
    let mut low = vec![0u32; n];
    let mut on_stack = vec![false; n];
    let mut stack: Vec<u32> = Vec::new();
    let mut labels = vec![0u32; n];
    let mut next_index = 0u32;
    // Iterative Tarjan: frames of (node, neighbor cursor).
    let mut frames: Vec<(u32, usize)> = Vec::new();
    for root in 0..n as u32 {
        if index[root as usize] != UNSET {
            continue;
        }
        frames.push((root, 0));
        index[root as usize] = next_index;
        low[root as usize] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root as usize] = true;
        while let Some(&mut (u, ref mut cursor)) = frames.last_mut() {
            let row = g.neighbors(u);
            if *cursor < row.len() {
                let v = row[*cursor];
                *cursor += 1;
                if index[v as usize] == UNSET {
                    index[v as usize] = next_index;
                    low[v as usize] = next_index;
                    next_index += 1;
                    stack.push(v);
                    on_stack[v as usize] = true;
                    frames.push((v, 0));
                } else if on_stack[v as usize] {
                    low[u as usize] = low[u as usize].min(index[v as usize]);
                }
                continue;
            }
            frames.pop();
            if let Some(&mut (p, _)) = frames.last_mut() {
                low[p as usize] = low[p as usize].min(low[u as usize]);
            }
            if low[u as usize] == index[u as usize] {
                // u is an SCC root: pop members, label with the minimum id.
                let mut members = Vec::new();
                loop {
                    let w = stack.pop().expect("scc member on stack");
                    on_stack[w as usize] = false;
                    members.push(w);
                    if w == u {
                        break;
                    }
                }
                let rep = *members.iter().min().unwrap();
                for w in members {
                    labels[w as usize] = rep;
                }
            }
        }
    }
    labels
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(g: &CsrGraph, mode: ComponentMode) -> Vec<u32> {
        connected_components(g, mode)
            .values
            .iter()
            .map(|&v| v as u32)
            .collect()
    }

    #[test]
    fn two_disjoint_triangles_have_two_weak_components() {
        let g = CsrGraph::from_edge_list(
            &["a", "b", "c", "d", "e", "f"],
            &[
                (0, 1, 1.0),
                (1, 2, 1.0),
                (2, 0, 1.0),
                (3, 4, 1.0),
                (4, 5, 1.0),
                (5, 3, 1.0),
            ],
            false,
            true,
        );
        assert_eq!(labels(&g, ComponentMode::Weak), vec![0, 0, 0, 3, 3, 3]);
    }

    #[test]
    fn directed_path_has_singleton_sccs() {
        let g = CsrGraph::from_edge_list(&["a", "b", "c"], &[(0, 1, 1.0), (1, 2, 1.0)], false, true);
        assert_eq!(labels(&g, ComponentMode::Strong), vec![0, 1, 2]);
        assert_eq!(labels(&g, ComponentMode::Weak), vec![0, 0, 0]);
    }

    #[test]
    fn cycle_is_one_scc() {
        let g = CsrGraph::from_edge_list(
            &["a", "b", "c", "d"],
            &[(1, 2, 1.0), (2, 3, 1.0), (3, 1, 1.0), (0, 1, 1.0)],
            false,
            true,
        );
        assert_eq!(labels(&g, ComponentMode::Strong), vec![0, 1, 1, 1]);
    }
}
