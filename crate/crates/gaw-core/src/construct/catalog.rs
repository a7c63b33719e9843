//! Source catalog: the sidecar that describes raw tabular files, their column
//! types, and optional role annotations used by the deterministic schema
//! fallback.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ConstructError;

/// Inferred or declared type of a raw column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColumnType {
    String,
    Int,
    Float,
    Timestamp,
}

/// Optional role annotation driving the deterministic schema fallback.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColumnRole {
    /// Primary entity key (e.g. the paying account).
    EntityKey,
    /// Key of the opposite endpoint (e.g. the receiving account or merchant).
    CounterpartyKey,
    /// Numeric edge weight (e.g. transaction amount).
    Weight,
    /// Event time.
    Time,
    /// Plain attribute carried onto nodes or edges.
    Attribute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    #[serde(rename = "type")]
    pub dtype: ColumnType,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub role: Option<ColumnRole>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceEntry {
    pub id: String,
    /// CSV file name, relative to the catalog file.
    pub file: String,
    pub columns: Vec<ColumnSpec>,
}

impl SourceEntry {
    pub fn column(&self, name: &str) -> Option<&ColumnSpec> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn column_with_role(&self, role: ColumnRole) -> Option<&ColumnSpec> {
        self.columns.iter().find(|c| c.role == Some(role))
    }
}

/// The catalog sidecar (`catalog.json`) listing every raw source in a dataset
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceCatalog {
    pub sources: Vec<SourceEntry>,
}

impl SourceCatalog {
    pub fn load(path: &Path) -> Result<Self, ConstructError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConstructError::Io(format!("{}: {e}", path.display())))?;
        let catalog: SourceCatalog = serde_json::from_str(&text)
            .map_err(|e| ConstructError::CatalogMismatch(format!("bad catalog: {e}")))?;
        catalog.validate()?;
        Ok(catalog)
    }

    pub fn source(&self, id: &str) -> Option<&SourceEntry> {
        self.sources.iter().find(|s| s.id == id)
    }

    pub fn validate(&self) -> Result<(), ConstructError> {
        if self.sources.is_empty() {
            return Err(ConstructError::CatalogMismatch("catalog lists no sources".into()));
        }
        let mut ids = BTreeSet::new();
        for src in &self.sources {
            if !ids.insert(&src.id) {
                return Err(ConstructError::CatalogMismatch(format!(
                    "duplicate source id {}",
                    src.id
                )));
            }
            let mut names = BTreeSet::new();
            for col in &src.columns {
                if !names.insert(&col.name) {
                    return Err(ConstructError::CatalogMismatch(format!(
                        "source {}: duplicate column {}",
                        src.id, col.name
                    )));
                }
            }
        }
        Ok(())
    }
}
