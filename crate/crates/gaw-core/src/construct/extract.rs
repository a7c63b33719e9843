//! CSV loading and schema-driven property-graph extraction.
//!
//! Extraction applies row filters, interns endpoint keys in first-seen order,
//! and skips (with a counted reason) any row whose declared columns fail type
//! coercion. It reads only columns named by the schema; every access is
//! recorded so tests can assert that.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;
use std::sync::Arc;

use crate::values::{IdMap, TableCell};

use super::catalog::{ColumnType, SourceCatalog};
use super::property::{EdgeTable, NodeTable, PropertyGraph, SkippedRow};
use super::schema::{FilterOp, FilterPredicate, SchemaSpec};
use super::ConstructError;

/// One raw source loaded into memory.
#[derive(Debug, Clone)]
pub struct LoadedSource {
    pub id: String,
    pub headers: Vec<String>,
    pub rows: Vec<csv::StringRecord>,
    /// Rows dropped at parse time (bad UTF-8 or unreadable records).
    pub load_skipped: Vec<(usize, String)>,
}

impl LoadedSource {
    /// Builds an in-memory source from string rows; test and generator helper.
    pub fn from_rows(id: &str, headers: &[&str], rows: &[Vec<&str>]) -> Self {
        Self {
            id: id.to_string(),
            headers: headers.iter().map(|s| s.to_string()).collect(),
            rows: rows.iter().map(|r| csv::StringRecord::from(r.clone())).collect(),
            load_skipped: Vec::new(),
        }
    }
}

/// Loads every catalog source from `dir`, verifying headers cover the
/// declared columns.
pub fn load_sources(
    dir: &Path,
    catalog: &SourceCatalog,
) -> Result<Vec<LoadedSource>, ConstructError> {
    let mut out = Vec::with_capacity(catalog.sources.len());
    for entry in &catalog.sources {
        let path = dir.join(&entry.file);
        let mut reader = csv::ReaderBuilder::new()
            .flexible(true)
            .from_path(&path)
            .map_err(|e| ConstructError::Io(format!("{}: {e}", path.display())))?;
        let headers: Vec<String> = reader
            .headers()
            .map_err(|e| ConstructError::Io(format!("{}: {e}", path.display())))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        for col in &entry.columns {
            if !headers.iter().any(|h| h == &col.name) {
                return Err(ConstructError::CatalogMismatch(format!(
                    "source {}: file {} lacks declared column {}",
                    entry.id, entry.file, col.name
                )));
            }
        }
        let mut rows = Vec::new();
        let mut load_skipped = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            match rec {
                Ok(r) => rows.push(r),
                Err(e) => load_skipped.push((i, format!("unreadable record: {e}"))),
            }
        }
        out.push(LoadedSource { id: entry.id.clone(), headers, rows, load_skipped });
    }
    Ok(out)
}

/// Column-value accessor that records every (source, column) read.
struct ColumnReader<'a> {
    source: &'a LoadedSource,
    indices: HashMap<&'a str, usize>,
    read_log: BTreeSet<(String, String)>,
}

impl<'a> ColumnReader<'a> {
    fn new(source: &'a LoadedSource) -> Self {
        let indices = source
            .headers
            .iter()
            .enumerate()
            .map(|(i, h)| (h.as_str(), i))
            .collect();
        Self { source, indices, read_log: BTreeSet::new() }
    }

    /// Raw string value; `None` when the row is too short for the column.
    fn get(&mut self, row: &'a csv::StringRecord, column: &str) -> Option<&'a str> {
        self.read_log.insert((self.source.id.clone(), column.to_string()));
        let idx = *self.indices.get(column)?;
        row.get(idx).map(str::trim)
    }
}

/// A value coerced from a raw cell according to the declared column type.
#[derive(Debug, Clone, PartialEq)]
enum Coerced {
    Str(String),
    Int(i64),
    Float(f64),
    /// Timestamp kept as its source text plus epoch seconds for ordering.
    Time(String, i64),
}

impl Coerced {
    fn to_cell(&self) -> TableCell {
        match self {
            Coerced::Str(s) => TableCell::Str(s.clone()),
            Coerced::Int(i) => TableCell::Int(*i),
            Coerced::Float(f) => TableCell::Float(*f),
            Coerced::Time(s, _) => TableCell::Str(s.clone()),
        }
    }

    fn as_f64(&self) -> Option<f64> {
        match self {
            Coerced::Int(i) => Some(*i as f64),
            Coerced::Float(f) => Some(*f),
            Coerced::Time(_, epoch) => Some(*epoch as f64),
            Coerced::Str(_) => None,
        }
    }
}

fn coerce(raw: &str, dtype: ColumnType) -> Result<Coerced, String> {
    match dtype {
        ColumnType::String => Ok(Coerced::Str(raw.to_string())),
        ColumnType::Int => raw
            .parse::<i64>()
            .map(Coerced::Int)
            .map_err(|_| format!("not an integer: {raw:?}")),
        ColumnType::Float => {
            let v = raw
                .parse::<f64>()
                .map_err(|_| format!("not a number: {raw:?}"))?;
            if v.is_finite() {
                Ok(Coerced::Float(v))
            } else {
                Err(format!("non-finite number: {raw:?}"))
            }
        }
        ColumnType::Timestamp => parse_timestamp(raw)
            .map(|epoch| Coerced::Time(raw.to_string(), epoch))
            .ok_or_else(|| format!("not an ISO-8601 timestamp: {raw:?}")),
    }
}

fn parse_timestamp(raw: &str) -> Option<i64> {
    if let Ok(dt) = chrono::DateTime::parse_from_rfc3339(raw) {
        return Some(dt.timestamp());
    }
    if let Ok(dt) = chrono::NaiveDateTime::parse_from_str(raw, "%Y-%m-%dT%H:%M:%S") {
        return Some(dt.and_utc().timestamp());
    }
    if let Ok(d) = chrono::NaiveDate::parse_from_str(raw, "%Y-%m-%d") {
        return Some(d.and_hms_opt(0, 0, 0)?.and_utc().timestamp());
    }
    None
}

fn filter_passes(value: &Coerced, pred: &FilterPredicate, dtype: ColumnType) -> Result<bool, String> {
    match dtype {
        ColumnType::String => {
            let v = match value {
                Coerced::Str(s) => s.as_str(),
                _ => unreachable!("string column coerces to Str"),
            };
            match pred.op {
                FilterOp::Eq => Ok(v == pred.literal),
                FilterOp::Ne => Ok(v != pred.literal),
                _ => Err("ordered comparison on string".into()),
            }
        }
        _ => {
            let v = value.as_f64().expect("numeric or time column");
            let lit = coerce(&pred.literal, dtype)
                .map_err(|e| format!("filter literal: {e}"))?
                .as_f64()
                .expect("numeric or time literal");
            Ok(match pred.op {
                FilterOp::Ge => v >= lit,
                FilterOp::Le => v <= lit,
                FilterOp::Eq => v == lit,
                FilterOp::Ne => v != lit,
            })
        }
    }
}

fn read_endpoint<'a>(
    reader: &mut ColumnReader<'a>,
    row: &'a csv::StringRecord,
    column: &str,
) -> Result<String, String> {
    let raw = reader
        .get(row, column)
        .ok_or_else(|| format!("missing field {column}"))?;
    if raw.is_empty() {
        return Err(format!("empty key in {column}"));
    }
    Ok(raw.to_string())
}

/// Extracts the property graph described by `schema` from loaded sources.
pub fn extract(
    sources: &[LoadedSource],
    schema: &SchemaSpec,
    catalog: &SourceCatalog,
) -> Result<PropertyGraph, ConstructError> {
    schema.validate(catalog)?;
    let mut by_id: HashMap<&str, &LoadedSource> = HashMap::new();
    for s in sources {
        by_id.insert(s.id.as_str(), s);
    }
    let mut pg = PropertyGraph::default();
    for src in sources {
        for (row, reason) in &src.load_skipped {
            pg.skipped.push(SkippedRow {
                source_id: src.id.clone(),
                row_index: *row,
                reason: reason.clone(),
            });
        }
    }

    // Entity key maps, filled in first-seen order as relations intern
    // endpoints (or by direct scan for entities no relation references).
    let mut id_maps: BTreeMap<String, IdMap> = schema
        .entities
        .iter()
        .map(|e| (e.label.clone(), IdMap::new()))
        .collect();

    let dtype_of = |source_id: &str, column: &str| -> ColumnType {
        catalog
            .source(source_id)
            .and_then(|s| s.column(column))
            .map(|c| c.dtype)
            .expect("schema validated against catalog")
    };

    // Relation pass: filters, coercion, endpoint interning.
    let mut edge_tables: BTreeMap<String, EdgeTable> = BTreeMap::new();
    for rel in &schema.relations {
        let source = by_id.get(rel.source_id.as_str()).ok_or_else(|| {
            ConstructError::Io(format!("source {} not loaded", rel.source_id))
        })?;
        let mut reader = ColumnReader::new(source);
        let mut table = EdgeTable {
            label: rel.label.clone(),
            src_entity: rel.src_entity.clone(),
            dst_entity: rel.dst_entity.clone(),
            directed: rel.directed,
            src: Vec::new(),
            dst: Vec::new(),
            weight: rel.weight_column.as_ref().map(|_| Vec::new()),
            attributes: rel
                .attribute_columns
                .iter()
                .map(|c| (c.clone(), Vec::new()))
                .collect(),
        };
        let mut coercion_failures = 0usize;
        'rows: for (row_index, row) in source.rows.iter().enumerate() {
            // Filters first: a filtered-out row is valid, just excluded.
            for pred in &rel.filters {
                let dtype = dtype_of(&rel.source_id, &pred.column);
                let raw = match reader.get(row, &pred.column) {
                    Some(v) => v,
                    None => {
                        coercion_failures += 1;
                        pg.skipped.push(SkippedRow {
                            source_id: rel.source_id.clone(),
                            row_index,
                            reason: format!("missing field {}", pred.column),
                        });
                        continue 'rows;
                    }
                };
                let value = match coerce(raw, dtype) {
                    Ok(v) => v,
                    Err(e) => {
                        coercion_failures += 1;
                        pg.skipped.push(SkippedRow {
                            source_id: rel.source_id.clone(),
                            row_index,
                            reason: format!("column {}: {e}", pred.column),
                        });
                        continue 'rows;
                    }
                };
                match filter_passes(&value, pred, dtype) {
                    Ok(true) => {}
                    Ok(false) => continue 'rows,
                    Err(e) => {
                        return Err(ConstructError::CatalogMismatch(format!(
                            "filter on {}: {e}",
                            pred.column
                        )))
                    }
                }
            }
            let src_key = match read_endpoint(&mut reader, row, &rel.src_column) {
                Ok(k) => k,
                Err(reason) => {
                    coercion_failures += 1;
                    pg.skipped.push(SkippedRow {
                        source_id: rel.source_id.clone(),
                        row_index,
                        reason,
                    });
                    continue 'rows;
                }
            };
            let dst_key = match read_endpoint(&mut reader, row, &rel.dst_column) {
                Ok(k) => k,
                Err(reason) => {
                    coercion_failures += 1;
                    pg.skipped.push(SkippedRow {
                        source_id: rel.source_id.clone(),
                        row_index,
                        reason,
                    });
                    continue 'rows;
                }
            };
            let weight = match &rel.weight_column {
                Some(col) => {
                    let dtype = dtype_of(&rel.source_id, col);
                    let raw = reader.get(row, col).unwrap_or("");
                    match coerce(raw, dtype).map(|c| c.as_f64()) {
                        Ok(Some(w)) => Some(w),
                        _ => {
                            coercion_failures += 1;
                            pg.skipped.push(SkippedRow {
                                source_id: rel.source_id.clone(),
                                row_index,
                                reason: format!("column {col}: bad weight"),
                            });
                            continue 'rows;
                        }
                    }
                }
                None => None,
            };
            let mut attr_values = Vec::with_capacity(rel.attribute_columns.len());
            for col in &rel.attribute_columns {
                let dtype = dtype_of(&rel.source_id, col);
                let raw = reader.get(row, col).unwrap_or("");
                match coerce(raw, dtype) {
                    Ok(v) => attr_values.push(v.to_cell()),
                    Err(e) => {
                        coercion_failures += 1;
                        pg.skipped.push(SkippedRow {
                            source_id: rel.source_id.clone(),
                            row_index,
                            reason: format!("column {col}: {e}"),
                        });
                        continue 'rows;
                    }
                }
            }
            let src_id = id_maps.get_mut(&rel.src_entity).unwrap().intern(&src_key);
            let dst_id = id_maps.get_mut(&rel.dst_entity).unwrap().intern(&dst_key);
            table.src.push(src_id);
            table.dst.push(dst_id);
            if let (Some(wv), Some(w)) = (table.weight.as_mut(), weight) {
                wv.push(w);
            }
            for (col, cell) in rel.attribute_columns.iter().zip(attr_values) {
                table.attributes.get_mut(col).unwrap().push(cell);
            }
        }
        if !source.rows.is_empty() && coercion_failures == source.rows.len() {
            return Err(ConstructError::ExtractionError(format!(
                "relation {}: all {} rows invalid",
                rel.label,
                source.rows.len()
            )));
        }
        pg.columns_read.extend(reader.read_log);
        edge_tables.insert(rel.label.clone(), table);
    }

    // Entity pass: direct scan for unreferenced entities; attribute join for
    // entities that declare attribute columns.
    for ent in &schema.entities {
        let referenced = schema
            .relations
            .iter()
            .any(|r| r.src_entity == ent.label || r.dst_entity == ent.label);
        let needs_scan = !referenced || !ent.attribute_columns.is_empty();
        let mut attributes: BTreeMap<String, Vec<TableCell>> = BTreeMap::new();
        if needs_scan {
            let source = by_id.get(ent.source_id.as_str()).ok_or_else(|| {
                ConstructError::Io(format!("source {} not loaded", ent.source_id))
            })?;
            let mut reader = ColumnReader::new(source);
            let id_map = id_maps.get_mut(&ent.label).unwrap();
            // First scan: intern keys for entities nothing else materializes.
            if !referenced {
                for row in &source.rows {
                    if let Some(key) = reader.get(row, &ent.key_column) {
                        if !key.is_empty() {
                            id_map.intern(key);
                        }
                    }
                }
            }
            // Attribute join: first occurrence per key wins.
            if !ent.attribute_columns.is_empty() {
                let n = id_map.len();
                for col in &ent.attribute_columns {
                    attributes.insert(col.clone(), vec![TableCell::Null; n]);
                }
                let mut filled: BTreeSet<u32> = BTreeSet::new();
                for row in &source.rows {
                    let key = match reader.get(row, &ent.key_column) {
                        Some(k) if !k.is_empty() => k,
                        _ => continue,
                    };
                    let Some(id) = id_map.get(key) else { continue };
                    if !filled.insert(id) {
                        continue;
                    }
                    for col in &ent.attribute_columns {
                        let dtype = dtype_of(&ent.source_id, col);
                        let raw = reader.get(row, col).unwrap_or("");
                        let cell = coerce(raw, dtype).map(|c| c.to_cell()).unwrap_or(TableCell::Null);
                        attributes.get_mut(col).unwrap()[id as usize] = cell;
                    }
                }
            }
            pg.columns_read.extend(reader.read_log);
        }
        let mut id_map = id_maps.get(&ent.label).unwrap().clone();
        id_map.rebuild_index();
        pg.nodes.insert(
            ent.label.clone(),
            NodeTable { label: ent.label.clone(), id_map: Arc::new(id_map), attributes },
        );
    }
    pg.edges = edge_tables;
    Ok(pg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construct::catalog::{ColumnRole, ColumnSpec, SourceEntry};
    use crate::construct::schema::fallback_schema;

    fn txn_catalog() -> SourceCatalog {
        SourceCatalog {
            sources: vec![SourceEntry {
                id: "transactions".into(),
                file: "transactions.csv".into(),
                columns: vec![
                    ColumnSpec {
                        name: "src_account".into(),
                        dtype: ColumnType::String,
                        role: Some(ColumnRole::EntityKey),
                    },
                    ColumnSpec {
                        name: "dst_account".into(),
                        dtype: ColumnType::String,
                        role: Some(ColumnRole::CounterpartyKey),
                    },
                    ColumnSpec {
                        name: "amount".into(),
                        dtype: ColumnType::Float,
                        role: Some(ColumnRole::Weight),
                    },
                    ColumnSpec {
                        name: "timestamp".into(),
                        dtype: ColumnType::Timestamp,
                        role: Some(ColumnRole::Time),
                    },
                ],
            }],
        }
    }

    fn ten_rows() -> LoadedSource {
        LoadedSource::from_rows(
            "transactions",
            &["src_account", "dst_account", "amount", "timestamp"],
            &[
                vec!["a", "b", "500", "2024-01-01T00:00:00Z"],
                vec!["a", "c", "1500", "2024-01-01T01:00:00Z"],
                vec!["b", "c", "200", "2024-01-01T02:00:00Z"],
                vec!["c", "d", "3000", "2024-01-01T03:00:00Z"],
                vec!["d", "a", "50", "2024-01-01T04:00:00Z"],
                vec!["b", "a", "700", "2024-01-01T05:00:00Z"],
                vec!["c", "a", "2500", "2024-01-01T06:00:00Z"],
                vec!["d", "b", "100", "2024-01-01T07:00:00Z"],
                vec!["a", "d", "900", "2024-01-01T08:00:00Z"],
                vec!["b", "d", "60", "2024-01-01T09:00:00Z"],
            ],
        )
    }

    #[test]
    fn extracts_all_rows_without_filter() {
        let catalog = txn_catalog();
        let schema = fallback_schema("money flows", &catalog).unwrap();
        let pg = extract(&[ten_rows()], &schema, &catalog).unwrap();
        assert_eq!(pg.nodes["account"].len(), 4);
        assert_eq!(pg.edges["transfer"].len(), 10);
        assert!(pg.skipped.is_empty());
    }

    #[test]
    fn filter_keeps_only_matching_rows_and_endpoints() {
        let catalog = txn_catalog();
        let mut schema = fallback_schema("money flows", &catalog).unwrap();
        schema.relations[0].filters.push(FilterPredicate {
            column: "amount".into(),
            op: FilterOp::Ge,
            literal: "1000".into(),
        });
        let pg = extract(&[ten_rows()], &schema, &catalog).unwrap();
        let et = &pg.edges["transfer"];
        assert_eq!(et.len(), 3);
        // Rows kept: a->c 1500, c->d 3000, c->a 2500; all four keys appear as
        // endpoints here except b.
        assert_eq!(pg.nodes["account"].len(), 3);
        assert!(pg.nodes["account"].id_map.get("b").is_none());
        assert!(pg.skipped.is_empty());
    }

    #[test]
    fn empty_source_is_an_empty_graph() {
        let catalog = txn_catalog();
        let schema = fallback_schema("money flows", &catalog).unwrap();
        let empty = LoadedSource::from_rows(
            "transactions",
            &["src_account", "dst_account", "amount", "timestamp"],
            &[],
        );
        let pg = extract(&[empty], &schema, &catalog).unwrap();
        assert_eq!(pg.nodes["account"].len(), 0);
        assert_eq!(pg.edges["transfer"].len(), 0);
    }

    #[test]
    fn bad_rows_are_skipped_and_counted() {
        let catalog = txn_catalog();
        let schema = fallback_schema("money flows", &catalog).unwrap();
        let source = LoadedSource::from_rows(
            "transactions",
            &["src_account", "dst_account", "amount", "timestamp"],
            &[
                vec!["a", "b", "500", "2024-01-01T00:00:00Z"],
                vec!["a", "c", "oops", "2024-01-01T01:00:00Z"],
                vec!["", "c", "100", "2024-01-01T02:00:00Z"],
            ],
        );
        let pg = extract(&[source], &schema, &catalog).unwrap();
        assert_eq!(pg.edges["transfer"].len(), 1);
        assert_eq!(pg.skipped.len(), 2);
        assert!(pg.skipped.iter().any(|s| s.reason.contains("bad weight")));
        assert!(pg.skipped.iter().any(|s| s.reason.contains("empty key")));
    }

    #[test]
    fn all_rows_invalid_is_extraction_error() {
        let catalog = txn_catalog();
        let schema = fallback_schema("money flows", &catalog).unwrap();
        let source = LoadedSource::from_rows(
            "transactions",
            &["src_account", "dst_account", "amount", "timestamp"],
            &[vec!["a", "b", "x", "t"], vec!["c", "d", "y", "t"]],
        );
        assert!(matches!(
            extract(&[source], &schema, &catalog),
            Err(ConstructError::ExtractionError(_))
        ));
    }

    #[test]
    fn reads_only_schema_columns() {
        let mut catalog = txn_catalog();
        catalog.sources[0].columns.push(ColumnSpec {
            name: "memo".into(),
            dtype: ColumnType::String,
            role: None,
        });
        let schema = fallback_schema("money flows", &catalog).unwrap();
        let source = LoadedSource::from_rows(
            "transactions",
            &["src_account", "dst_account", "amount", "timestamp", "memo"],
            &[vec!["a", "b", "500", "2024-01-01T00:00:00Z", "rent"]],
        );
        let pg = extract(&[source], &schema, &catalog).unwrap();
        let declared: BTreeSet<String> = ["src_account", "dst_account", "amount"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        for (_, col) in &pg.columns_read {
            assert!(declared.contains(col), "read undeclared column {col}");
        }
    }

    #[test]
    fn entity_attributes_join_from_second_source() {
        let mut catalog = txn_catalog();
        catalog.sources.push(SourceEntry {
            id: "accounts".into(),
            file: "accounts.csv".into(),
            columns: vec![
                ColumnSpec { name: "account_id".into(), dtype: ColumnType::String, role: Some(ColumnRole::EntityKey) },
                ColumnSpec { name: "name".into(), dtype: ColumnType::String, role: Some(ColumnRole::Attribute) },
            ],
        });
        let mut schema = fallback_schema("money flows", &catalog).unwrap();
        schema.entities[0].source_id = "accounts".into();
        schema.entities[0].key_column = "account_id".into();
        schema.entities[0].attribute_columns = vec!["name".into()];
        let accounts = LoadedSource::from_rows(
            "accounts",
            &["account_id", "name"],
            &[vec!["a", "Ada"], vec!["b", "Bo"], vec!["c", "Cy"], vec!["d", "Di"]],
        );
        let pg = extract(&[ten_rows(), accounts], &schema, &catalog).unwrap();
        let table = &pg.nodes["account"];
        assert_eq!(table.len(), 4);
        let id = table.id_map.get("b").unwrap();
        assert_eq!(table.attributes["name"][id as usize], TableCell::Str("Bo".into()));
    }
}
