//! Task-aware schema specification: which entities and relations to extract
//! from the raw sources, validated against the source catalog.
//!
//! Schemas normally come from the coordinator; a deterministic fallback maps
//! task keywords to role-annotation templates so the pipeline runs without
//! one.

use serde::{Deserialize, Serialize};

use super::catalog::{ColumnRole, ColumnType, SourceCatalog, SourceEntry};
use super::ConstructError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FilterOp {
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
}

/// Row-level predicate applied before extraction. Numeric and timestamp
/// columns compare numerically/chronologically; strings compare for
/// (in)equality only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterPredicate {
    pub column: String,
    pub op: FilterOp,
    pub literal: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntitySpec {
    pub label: String,
    pub source_id: String,
    pub key_column: String,
    #[serde(default)]
    pub attribute_columns: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationSpec {
    pub label: String,
    pub source_id: String,
    pub src_entity: String,
    pub src_column: String,
    pub dst_entity: String,
    pub dst_column: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight_column: Option<String>,
    #[serde(default)]
    pub attribute_columns: Vec<String>,
    #[serde(default)]
    pub filters: Vec<FilterPredicate>,
    #[serde(default = "default_true")]
    pub directed: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaSpec {
    pub entities: Vec<EntitySpec>,
    pub relations: Vec<RelationSpec>,
}

impl SchemaSpec {
    pub fn entity(&self, label: &str) -> Option<&EntitySpec> {
        self.entities.iter().find(|e| e.label == label)
    }

    pub fn relation(&self, label: &str) -> Option<&RelationSpec> {
        self.relations.iter().find(|r| r.label == label)
    }

    /// Checks every referenced source and column against the catalog and the
    /// internal cross-references (src/dst entities declared, weight numeric,
    /// ordered filters on orderable columns).
    pub fn validate(&self, catalog: &SourceCatalog) -> Result<(), ConstructError> {
        if self.entities.is_empty() {
            return Err(ConstructError::CatalogMismatch("schema declares no entities".into()));
        }
        for ent in &self.entities {
            let src = catalog.source(&ent.source_id).ok_or_else(|| {
                ConstructError::CatalogMismatch(format!("unknown source {}", ent.source_id))
            })?;
            require_column(src, &ent.key_column)?;
            for col in &ent.attribute_columns {
                require_column(src, col)?;
            }
        }
        for rel in &self.relations {
            let src = catalog.source(&rel.source_id).ok_or_else(|| {
                ConstructError::CatalogMismatch(format!("unknown source {}", rel.source_id))
            })?;
            require_column(src, &rel.src_column)?;
            require_column(src, &rel.dst_column)?;
            for label in [&rel.src_entity, &rel.dst_entity] {
                if self.entity(label).is_none() {
                    return Err(ConstructError::CatalogMismatch(format!(
                        "relation {} references undeclared entity {}",
                        rel.label, label
                    )));
                }
            }
            if let Some(w) = &rel.weight_column {
                let col = require_column(src, w)?;
                if !matches!(col.dtype, ColumnType::Int | ColumnType::Float) {
                    return Err(ConstructError::CatalogMismatch(format!(
                        "weight column {} is not numeric",
                        w
                    )));
                }
            }
            for col in &rel.attribute_columns {
                require_column(src, col)?;
            }
            for f in &rel.filters {
                let col = require_column(src, &f.column)?;
                let ordered = matches!(f.op, FilterOp::Ge | FilterOp::Le);
                if ordered && col.dtype == ColumnType::String {
                    return Err(ConstructError::CatalogMismatch(format!(
                        "ordered filter on string column {}",
                        f.column
                    )));
                }
            }
        }
        Ok(())
    }
}

fn require_column<'a>(
    src: &'a SourceEntry,
    name: &str,
) -> Result<&'a super::catalog::ColumnSpec, ConstructError> {
    src.column(name).ok_or_else(|| {
        ConstructError::CatalogMismatch(format!("source {} has no column {}", src.id, name))
    })
}

/// Task families the deterministic fallback can recognize from intent text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    /// Entity-to-entity weighted flows (transfers between accounts).
    MoneyFlow,
    /// Bipartite entity-to-counterparty events (user purchases at merchants).
    Purchase,
}

/// Classifies intent text into a task family by keyword; defaults to
/// `MoneyFlow` when nothing matches (the flow template is the more general
/// one: any key/counterparty/weight-annotated source fits it).
pub fn classify_task(intent: &str) -> TaskKind {
    let lower = intent.to_lowercase();
    const PURCHASE_HINTS: [&str; 4] = ["recommend", "purchase", "merchant", "buy"];
    if PURCHASE_HINTS.iter().any(|k| lower.contains(k)) {
        TaskKind::Purchase
    } else {
        TaskKind::MoneyFlow
    }
}

/// Deterministic schema derivation from catalog role annotations.
///
/// Picks the first source carrying both an `EntityKey` and a
/// `CounterpartyKey` role and instantiates the template for the classified
/// task. Fails when no source is annotated richly enough.
pub fn fallback_schema(intent: &str, catalog: &SourceCatalog) -> Result<SchemaSpec, ConstructError> {
    let kind = classify_task(intent);
    let source = catalog
        .sources
        .iter()
        .find(|s| {
            s.column_with_role(ColumnRole::EntityKey).is_some()
                && s.column_with_role(ColumnRole::CounterpartyKey).is_some()
        })
        .ok_or_else(|| {
            ConstructError::SchemaInferenceFailed(
                "no source annotated with entity-key and counterparty-key roles".into(),
            )
        })?;
    let key = source.column_with_role(ColumnRole::EntityKey).unwrap().name.clone();
    let counter = source.column_with_role(ColumnRole::CounterpartyKey).unwrap().name.clone();
    let weight = source.column_with_role(ColumnRole::Weight).map(|c| c.name.clone());
    let schema = match kind {
        TaskKind::MoneyFlow => SchemaSpec {
            entities: vec![EntitySpec {
                label: "account".into(),
                source_id: source.id.clone(),
                key_column: key.clone(),
                attribute_columns: vec![],
            }],
            relations: vec![RelationSpec {
                label: "transfer".into(),
                source_id: source.id.clone(),
                src_entity: "account".into(),
                src_column: key,
                dst_entity: "account".into(),
                dst_column: counter,
                weight_column: weight,
                attribute_columns: vec![],
                filters: vec![],
                directed: true,
            }],
        },
        TaskKind::Purchase => SchemaSpec {
            entities: vec![
                EntitySpec {
                    label: "user".into(),
                    source_id: source.id.clone(),
                    key_column: key.clone(),
                    attribute_columns: vec![],
                },
                EntitySpec {
                    label: "merchant".into(),
                    source_id: source.id.clone(),
                    key_column: counter.clone(),
                    attribute_columns: vec![],
                },
            ],
            relations: vec![RelationSpec {
                label: "purchase".into(),
                source_id: source.id.clone(),
                src_entity: "user".into(),
                src_column: key,
                dst_entity: "merchant".into(),
                dst_column: counter,
                weight_column: weight,
                attribute_columns: vec![],
                filters: vec![],
                directed: true,
            }],
        },
    };
    schema.validate(catalog)?;
    Ok(schema)
}
