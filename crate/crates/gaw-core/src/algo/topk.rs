//! Top-k selection over node scores: descending score, ascending id on ties.

use crate::values::NodeScores;

/// Returns the `min(k, n)` highest-scoring nodes as `(id, score)` pairs.
pub fn top_k(scores: &NodeScores, k: usize) -> Vec<(u32, f64)> {
    let mut ranked: Vec<(u32, f64)> = scores
        .values
        .iter()
        .enumerate()
        .map(|(i, &s)| (i as u32, s))
        .collect();
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal).then(a.0.cmp(&b.0)));
    ranked.truncate(k);
    ranked
}
