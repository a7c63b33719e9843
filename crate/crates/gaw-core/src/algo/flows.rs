//! Exact tabular flow aggregation: per-key incoming and outgoing totals over
//! an edge table, summed with an error-free accumulator so results are
//! correctly rounded and independent of row order.

use std::collections::BTreeMap;

use crate::values::{FlowRow, FlowSummary, Table};

use super::AlgoError;

/// Shewchuk-style error-free accumulator: maintains nonoverlapping partial
/// sums; `value()` returns the correctly rounded total, so any insertion
/// order yields the same result.
#[derive(Debug, Clone, Default)]
pub struct Fsum {
    partials: Vec<f64>,
}

impl Fsum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, mut x: f64) {
        let mut i = 0;
        for j in 0..self.partials.len() {
            let mut y = self.partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                self.partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        self.partials.truncate(i);
        self.partials.push(x);
    }

    /// Correctly rounded total, including the round-half-even correction for
    /// the case where the discarded tail sits exactly on a rounding boundary.
    pub fn value(&self) -> f64 {
        let p = &self.partials;
        let mut n = p.len();
        if n == 0 {
            return 0.0;
        }
        n -= 1;
        let mut hi = p[n];
        let mut lo = 0.0;
        while n > 0 {
            let x = hi;
            n -= 1;
            let y = p[n];
            hi = x + y;
            let yr = hi - x;
            lo = y - yr;
            if lo != 0.0 {
                break;
            }
        }
        if n > 0 && ((lo < 0.0 && p[n - 1] < 0.0) || (lo > 0.0 && p[n - 1] > 0.0)) {
            let y = lo * 2.0;
            let x = hi + y;
            if y == x - hi {
                hi = x;
            }
        }
        hi
    }
}

#[derive(Default)]
struct Acc {
    in_total: Fsum,
    out_total: Fsum,
    in_count: usize,
    out_count: usize,
}

/// Aggregates an edge table (`src`, `dst`, amount) into per-key flow rows,
/// ordered by key. `focus` restricts the output to a single key.
///
/// The amount column is `amount` when present, else the first numeric
/// column after the endpoints.
pub fn aggregate_flows(table: &Table, focus: Option<&str>) -> Result<FlowSummary, AlgoError> {
    let src_col = table
        .column_index("src")
        .ok_or_else(|| AlgoError::MissingWeightColumn("no src column".into()))?;
    let dst_col = table
        .column_index("dst")
        .ok_or_else(|| AlgoError::MissingWeightColumn("no dst column".into()))?;
    let amount_col = table
        .column_index("amount")
        .or_else(|| {
            (0..table.columns.len()).find(|&i| {
                i != src_col
                    && i != dst_col
                    && table.rows.iter().all(|r| r[i].as_f64().is_some())
                    && !table.rows.is_empty()
            })
        })
        .ok_or_else(|| AlgoError::MissingWeightColumn("no amount column".into()))?;
    let mut groups: BTreeMap<String, Acc> = BTreeMap::new();
    for (i, row) in table.rows.iter().enumerate() {
        let src = row[src_col]
            .as_str()
            .ok_or_else(|| AlgoError::MissingWeightColumn(format!("row {i}: src not a string")))?;
        let dst = row[dst_col]
            .as_str()
            .ok_or_else(|| AlgoError::MissingWeightColumn(format!("row {i}: dst not a string")))?;
        let amount = row[amount_col]
            .as_f64()
            .ok_or_else(|| AlgoError::MissingWeightColumn(format!("row {i}: amount not numeric")))?;
        if focus.map_or(true, |f| f == src) {
            let acc = groups.entry(src.to_string()).or_default();
            acc.out_total.add(amount);
            acc.out_count += 1;
        }
        if focus.map_or(true, |f| f == dst) {
            let acc = groups.entry(dst.to_string()).or_default();
            acc.in_total.add(amount);
            acc.in_count += 1;
        }
    }
    let rows = groups
        .into_iter()
        .map(|(key, acc)| {
            let in_total = acc.in_total.value();
            let out_total = acc.out_total.value();
            FlowRow {
                key,
                in_total,
                out_total,
                in_count: acc.in_count as u64,
                out_count: acc.out_count as u64,
                net: in_total - out_total,
            }
        })
        .collect();
    Ok(FlowSummary { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::values::TableCell;

    fn table(rows: &[(&str, &str, f64)]) -> Table {
        let mut t = Table::new(vec!["src".into(), "dst".into(), "amount".into()]);
        for &(s, d, a) in rows {
            t.push_row(vec![
                TableCell::Str(s.into()),
                TableCell::Str(d.into()),
                TableCell::Float(a),
            ]);
        }
        t
    }

    #[test]
    fn in_out_totals_and_net() {
        let t = table(&[
            ("a", "x", 100.0),
            ("b", "x", 200.0),
            ("c", "x", 300.0),
            ("x", "d", 50.0),
        ]);
        let summary = aggregate_flows(&t, Some("x")).unwrap();
        assert_eq!(summary.rows.len(), 1);
        let r = &summary.rows[0];
        assert_eq!((r.in_total, r.out_total, r.net), (600.0, 50.0, 550.0));
        assert_eq!((r.in_count, r.out_count), (3, 1));
    }

    #[test]
    fn empty_table_is_empty_summary() {
        let summary = aggregate_flows(&table(&[]), None).unwrap();
        assert!(summary.rows.is_empty());
    }

    #[test]
    fn rows_are_key_ordered() {
        let t = table(&[("b", "a", 1.0), ("c", "b", 2.0)]);
        let summary = aggregate_flows(&t, None).unwrap();
        let keys: Vec<&str> = summary.rows.iter().map(|r| r.key.as_str()).collect();
        assert_eq!(keys, vec!["a", "b", "c"]);
    }

    #[test]
    fn fsum_is_order_independent_and_exact() {
        // Exact sum 1.75; naive forward summation collapses to 0.5.
        let values = [1e100, 1.0, -1e100, 0.5, 0.25];
        let mut forward = Fsum::new();
        for v in values {
            forward.add(v);
        }
        let mut backward = Fsum::new();
        for v in values.iter().rev() {
            backward.add(*v);
        }
        assert_eq!(forward.value(), backward.value());
        assert_eq!(forward.value(), 1.75);
        let naive: f64 = values.iter().sum();
        assert_ne!(naive, 1.75);
    }

    #[test]
    fn missing_amount_column_is_an_error() {
        let t = Table::new(vec!["src".into(), "dst".into()]);
        assert!(matches!(
            aggregate_flows(&t, None),
            Err(AlgoError::MissingWeightColumn(_))
        ));
    }
}
