//! Size-budgeted distillation of raw tool outputs. Pure and lossy but
//! accounted: every dropped item is counted in `omitted_count`, and the
//! rendered summary never exceeds its character budget.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::algo::top_k;
use crate::values::{TableCell, ToolValue};

use super::{RawResult, RegistryError};

pub const DEFAULT_MAX_ITEMS: usize = 50;
pub const DEFAULT_MAX_CHARS: usize = 4000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    #[serde(default = "default_max_items")]
    pub max_items: usize,
    #[serde(default = "default_max_chars")]
    pub max_chars: usize,
}

fn default_max_items() -> usize {
    DEFAULT_MAX_ITEMS
}

fn default_max_chars() -> usize {
    DEFAULT_MAX_CHARS
}

impl Default for Budget {
    fn default() -> Self {
        Self { max_items: DEFAULT_MAX_ITEMS, max_chars: DEFAULT_MAX_CHARS }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode")]
pub enum DistillDirective {
    /// Highest-scoring entries of a score vector.
    TopK {
        k: usize,
        #[serde(default)]
        budget: Budget,
    },
    /// Entries at or above a cut, highest first. For tables the cut applies
    /// to the first fully numeric column.
    Threshold {
        threshold: f64,
        #[serde(default)]
        budget: Budget,
    },
    /// Counts plus representative members for set-like results (cycle sets,
    /// node sets, graphs), shortest cycles first.
    SubgraphSummary {
        max_paths: usize,
        #[serde(default)]
        budget: Budget,
    },
    /// Leading entries in stored order.
    Head {
        k: usize,
        #[serde(default)]
        budget: Budget,
    },
}

impl DistillDirective {
    pub fn budget(&self) -> Budget {
        match self {
            DistillDirective::TopK { budget, .. }
            | DistillDirective::Threshold { budget, .. }
            | DistillDirective::SubgraphSummary { budget, .. }
            | DistillDirective::Head { budget, .. } => *budget,
        }
    }

    pub fn mode_name(&self) -> &'static str {
        match self {
            DistillDirective::TopK { .. } => "TopK",
            DistillDirective::Threshold { .. } => "Threshold",
            DistillDirective::SubgraphSummary { .. } => "SubgraphSummary",
            DistillDirective::Head { .. } => "Head",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillProvenance {
    pub tool: String,
    pub directive: DistillDirective,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistilledResult {
    pub summary_text: String,
    pub structured_items: Vec<Value>,
    pub omitted_count: usize,
    pub provenance: DistillProvenance,
}

/// Compact deterministic number rendering: up to six decimals, trailing
/// zeros trimmed.
pub fn fmt_num(x: f64) -> String {
    if x == x.trunc() && x.abs() < 1e15 {
        return format!("{}", x as i64);
    }
    let s = format!("{x:.6}");
    let s = s.trim_end_matches('0');
    s.trim_end_matches('.').to_string()
}

fn fmt_cell(cell: &TableCell) -> String {
    match cell {
        TableCell::Null => "null".to_string(),
        TableCell::Int(i) => i.to_string(),
        TableCell::Float(x) => fmt_num(*x),
        TableCell::Str(s) => s.clone(),
    }
}

fn cell_json(cell: &TableCell) -> Value {
    match cell {
        TableCell::Null => Value::Null,
        TableCell::Int(i) => json!(i),
        TableCell::Float(x) => json!(x),
        TableCell::Str(s) => json!(s),
    }
}

fn node_key(id_map: &crate::values::IdMap, id: u32) -> String {
    id_map.key(id).unwrap_or("?").to_string()
}

/// One candidate line plus its structured form.
struct Item {
    line: String,
    value: Value,
}

fn score_items(scores: &crate::values::NodeScores, picked: &[(u32, f64)]) -> Vec<Item> {
    picked
        .iter()
        .map(|&(id, s)| {
            let key = node_key(&scores.id_map, id);
            Item { line: format!("{key}: {}", fmt_num(s)), value: json!({"node": key, "score": s}) }
        })
        .collect()
}

fn table_items(table: &crate::values::Table, rows: &[usize]) -> Vec<Item> {
    rows.iter()
        .map(|&r| {
            let row = &table.rows[r];
            let line = table
                .columns
                .iter()
                .zip(row)
                .map(|(c, cell)| format!("{c}={}", fmt_cell(cell)))
                .collect::<Vec<_>>()
                .join(" ");
            let mut obj = serde_json::Map::new();
            for (c, cell) in table.columns.iter().zip(row) {
                obj.insert(c.clone(), cell_json(cell));
            }
            Item { line, value: Value::Object(obj) }
        })
        .collect()
}

/// First column whose non-null cells are all numeric, with at least one
/// numeric cell; the column Threshold cuts on.
fn threshold_column(table: &crate::values::Table) -> Option<usize> {
    'cols: for c in 0..table.columns.len() {
        let mut any = false;
        for row in &table.rows {
            match row.get(c) {
                Some(TableCell::Int(_)) | Some(TableCell::Float(_)) => any = true,
                Some(TableCell::Null) | None => {}
                Some(_) => continue 'cols,
            }
        }
        if any {
            return Some(c);
        }
    }
    None
}

/// Distills `raw` under `directive`. Pure: identical inputs produce
/// byte-identical results.
pub fn distill(
    tool: &str,
    raw: &RawResult,
    directive: &DistillDirective,
) -> Result<DistilledResult, RegistryError> {
    let budget = directive.budget();
    if budget.max_items == 0 || budget.max_chars == 0 {
        return Err(RegistryError::SchemaViolation(
            "distillation budget must be positive".into(),
        ));
    }
    let mismatch = || RegistryError::ModeMismatch {
        mode: directive.mode_name().to_string(),
        kind: raw.kind,
    };

    let total = raw.payload.item_count();
    // Headers take the finally retained item count so they stay accurate
    // when the character budget forces further drops.
    type Header = Box<dyn Fn(usize) -> String>;
    let (mk_header, mut items): (Header, Vec<Item>) = match (directive, &raw.payload) {
        (DistillDirective::TopK { k, .. }, ToolValue::NodeScores { scores }) => {
            let picked = top_k(scores, *k);
            (
                Box::new(move |r| format!("top {r} of {total} node scores")),
                score_items(scores, &picked),
            )
        }
        (DistillDirective::Threshold { threshold, .. }, ToolValue::NodeScores { scores }) => {
            let picked: Vec<(u32, f64)> = top_k(scores, scores.len())
                .into_iter()
                .take_while(|&(_, s)| s >= *threshold)
                .collect();
            let matched = picked.len();
            let cut = fmt_num(*threshold);
            (
                Box::new(move |_| {
                    format!("{matched} of {total} node scores at or above {cut}")
                }),
                score_items(scores, &picked),
            )
        }
        (DistillDirective::Threshold { threshold, .. }, ToolValue::Table { table }) => {
            let col = threshold_column(&**table).ok_or_else(|| {
                RegistryError::SchemaViolation(format!(
                    "tool {tool}: table has no numeric column to threshold on"
                ))
            })?;
            let mut rows: Vec<(usize, f64)> = table
                .rows
                .iter()
                .enumerate()
                .filter_map(|(i, r)| r[col].as_f64().map(|x| (i, x)))
                .filter(|&(_, x)| x >= *threshold)
                .collect();
            rows.sort_by(|a, b| {
                b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal).then(a.0.cmp(&b.0))
            });
            let idx: Vec<usize> = rows.iter().map(|&(i, _)| i).collect();
            let matched = idx.len();
            let col_name = table.columns[col].clone();
            let cut = fmt_num(*threshold);
            (
                Box::new(move |_| format!("{matched} of {total} rows with {col_name} >= {cut}")),
                table_items(table, &idx),
            )
        }
        (DistillDirective::Head { k, .. }, ToolValue::Table { table }) => {
            let idx: Vec<usize> = (0..table.len().min(*k)).collect();
            (
                Box::new(move |r| format!("first {r} of {total} rows")),
                table_items(table, &idx),
            )
        }
        (DistillDirective::Head { k, .. }, ToolValue::NodeScores { scores }) => {
            let picked: Vec<(u32, f64)> = scores
                .values
                .iter()
                .enumerate()
                .take(*k)
                .map(|(i, &s)| (i as u32, s))
                .collect();
            (
                Box::new(move |r| format!("first {r} of {total} node scores")),
                score_items(scores, &picked),
            )
        }
        (DistillDirective::Head { .. }, ToolValue::Scalar { value }) => (
            Box::new(|_| "scalar result".to_string()),
            vec![Item { line: format!("value: {value}"), value: json!({"value": value}) }],
        ),
        (DistillDirective::SubgraphSummary { max_paths, .. }, ToolValue::CycleSet { cycles }) => {
            let mut order: Vec<usize> = (0..cycles.cycles.len()).collect();
            order.sort_by_key(|&i| cycles.cycles[i].len());
            order.truncate(*max_paths);
            let items: Vec<Item> = order
                .iter()
                .map(|&i| {
                    let c = &cycles.cycles[i];
                    let keys: Vec<String> =
                        c.nodes.iter().map(|&n| node_key(&cycles.id_map, n)).collect();
                    let mut line = keys.join(" -> ");
                    if let Some(first) = keys.first() {
                        line.push_str(" -> ");
                        line.push_str(first);
                    }
                    if let Some(flow) = c.total_flow {
                        line.push_str(&format!(" [flow {}]", fmt_num(flow)));
                    }
                    Item {
                        line,
                        value: json!({
                            "nodes": keys,
                            "length": c.len(),
                            "min_edge_weight": c.min_edge_weight,
                            "total_flow": c.total_flow,
                        }),
                    }
                })
                .collect();
            let union = cycles.node_union();
            let mut header = format!(
                "{} cycles over {} distinct nodes",
                cycles.len(),
                union.len()
            );
            let flows: Vec<f64> = cycles.cycles.iter().filter_map(|c| c.total_flow).collect();
            if !flows.is_empty() {
                let lo = flows.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = flows.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                header.push_str(&format!("; cycle flow {} to {}", fmt_num(lo), fmt_num(hi)));
            }
            let min_edge: Option<f64> = cycles
                .cycles
                .iter()
                .filter_map(|c| c.min_edge_weight)
                .fold(None, |acc, w| Some(acc.map_or(w, |a: f64| a.min(w))));
            if let Some(w) = min_edge {
                header.push_str(&format!("; thinnest edge {}", fmt_num(w)));
            }
            if cycles.truncated {
                header.push_str(" (enumeration capped)");
            }
            (Box::new(move |_| header.clone()), items)
        }
        (DistillDirective::SubgraphSummary { .. }, ToolValue::NodeSet { nodes }) => {
            let items: Vec<Item> = nodes
                .ids
                .iter()
                .map(|&id| {
                    let key = node_key(&nodes.id_map, id);
                    Item { line: key.clone(), value: json!({"node": key}) }
                })
                .collect();
            let n = nodes.len();
            (Box::new(move |_| format!("node set of {n} nodes")), items)
        }
        (DistillDirective::SubgraphSummary { .. }, ToolValue::Graph { graph }) => {
            let (n, m) = (graph.node_count, graph.edge_count());
            (
                Box::new(move |_| format!("graph with {n} nodes and {m} edges")),
                vec![Item {
                    line: format!("nodes={n} edges={m}"),
                    value: json!({"nodes": n, "edges": m}),
                }],
            )
        }
        _ => return Err(mismatch()),
    };

    items.truncate(budget.max_items);
    let render = |items: &[Item], omitted: usize| -> String {
        let mut text = mk_header(items.len());
        for it in items {
            text.push('\n');
            text.push_str(&it.line);
        }
        if omitted > 0 {
            text.push_str(&format!("\n... {omitted} more omitted"));
        }
        text
    };
    let mut omitted = total - items.len().min(total);
    let mut text = render(&items, omitted);
    while text.chars().count() > budget.max_chars && !items.is_empty() {
        items.pop();
        omitted = total - items.len().min(total);
        text = render(&items, omitted);
    }
    if text.chars().count() > budget.max_chars {
        // Even the bare header overflows; cut hard and keep a marker.
        let mut cut: String = text.chars().take(budget.max_chars.saturating_sub(3)).collect();
        cut.push_str("...");
        text = cut.chars().take(budget.max_chars).collect();
    }

    Ok(DistilledResult {
        summary_text: text,
        structured_items: items.into_iter().map(|i| i.value).collect(),
        omitted_count: omitted,
        provenance: DistillProvenance { tool: tool.to_string(), directive: directive.clone() },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fmt_num_trims_trailing_zeros() {
        assert_eq!(fmt_num(3.0), "3");
        assert_eq!(fmt_num(0.25), "0.25");
        assert_eq!(fmt_num(0.1234567), "0.123457");
        assert_eq!(fmt_num(-2.50), "-2.5");
    }

    #[test]
    fn threshold_column_skips_string_columns() {
        let mut t = crate::values::Table::new(vec!["name".into(), "amount".into()]);
        t.push_row(vec![TableCell::Str("a".into()), TableCell::Float(1.0)]);
        t.push_row(vec![TableCell::Str("b".into()), TableCell::Int(2)]);
        assert_eq!(threshold_column(&t), Some(1));
    }
}
