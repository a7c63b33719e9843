//! Compiles a directory of annotated markdown documents into a knowledge
//! file plus a `details/` directory. Output is deterministic: same inputs,
//! byte-identical artifacts.
//!
//! Each source document is markdown with TOML front matter between `+++`
//! fences:
//!
//! ```text
//! +++
//! id = "a.pagerank"
//! level = "Algorithm"
//! name = "PageRank"
//! summary = "Scores node importance by stationary visit probability."
//! parent = "f.ranking"
//!
//! [attributes]
//! tool = "pagerank"
//!
//! [[related]]
//! to = "a.personalized_pagerank"
//! relation = "VariantOf"
//! +++
//! The body becomes the lazily loaded detail document.
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::{
    to_knowledge_json, KnowledgeEdge, KnowledgeError, KnowledgeGraph, KnowledgeNode, Level,
    Relation, USEFULNESS_DEFAULT,
};

#[derive(Debug, Deserialize)]
struct FrontMatter {
    id: String,
    level: Level,
    name: String,
    summary: String,
    #[serde(default)]
    parent: Option<String>,
    #[serde(default)]
    attributes: BTreeMap<String, String>,
    #[serde(default)]
    related: Vec<RelatedEdge>,
}

#[derive(Debug, Deserialize)]
struct RelatedEdge {
    to: String,
    relation: Relation,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BuildSummary {
    pub nodes: usize,
    pub edges: usize,
    pub details_written: usize,
    pub out_file: PathBuf,
}

/// Splits a document into front matter and body.
fn split_front_matter(text: &str, origin: &str) -> Result<(String, String), KnowledgeError> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("+++") {
        return Err(KnowledgeError::ParseError(format!(
            "{origin}: document must start with a +++ front matter fence"
        )));
    }
    let mut front = String::new();
    let mut body = String::new();
    let mut in_front = true;
    for line in lines {
        if in_front {
            if line.trim() == "+++" {
                in_front = false;
            } else {
                front.push_str(line);
                front.push('\n');
            }
        } else {
            body.push_str(line);
            body.push('\n');
        }
    }
    if in_front {
        return Err(KnowledgeError::ParseError(format!(
            "{origin}: unterminated front matter fence"
        )));
    }
    Ok((front, body))
}

/// One normalized trailing newline, no leading blank lines.
fn normalize_body(body: &str) -> String {
    let trimmed = body.trim_matches('\n').trim_end();
    let mut out = trimmed.to_string();
    out.push('\n');
    out
}

fn collect_docs(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), KnowledgeError> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| KnowledgeError::Io(format!("{}: {e}", dir.display())))?
        .filter_map(|r| r.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    for path in entries {
        if path.is_dir() {
            collect_docs(&path, out)?;
        } else if path.extension().and_then(|e| e.to_str()) == Some("md") {
            out.push(path);
        }
    }
    Ok(())
}

/// Compiles `docs_dir` into `out_file` (the knowledge JSON) and a sibling
/// `details/` directory. Validates the full hierarchy before writing.
pub fn build_knowledge_base(
    docs_dir: &Path,
    out_file: &Path,
) -> Result<BuildSummary, KnowledgeError> {
    let mut docs = Vec::new();
    collect_docs(docs_dir, &mut docs)?;
    if docs.is_empty() {
        return Err(KnowledgeError::ParseError(format!(
            "{}: no .md documents found",
            docs_dir.display()
        )));
    }

    let mut nodes: Vec<KnowledgeNode> = Vec::new();
    let mut edges: Vec<KnowledgeEdge> = Vec::new();
    let mut bodies: Vec<(String, String)> = Vec::new();
    for doc in &docs {
        let origin = doc
            .strip_prefix(docs_dir)
            .unwrap_or(doc)
            .display()
            .to_string();
        let text = std::fs::read_to_string(doc)
            .map_err(|e| KnowledgeError::Io(format!("{origin}: {e}")))?;
        let (front, body) = split_front_matter(&text, &origin)?;
        let fm: FrontMatter = toml::from_str(&front)
            .map_err(|e| KnowledgeError::ParseError(format!("{origin}: {e}")))?;
        let body = normalize_body(&body);
        let has_body = body.trim() != "";
        let detail_path = match fm.level {
            Level::Algorithm => {
                if !has_body {
                    return Err(KnowledgeError::ParseError(format!(
                        "{origin}: algorithm document {} has an empty body",
                        fm.id
                    )));
                }
                Some(format!("details/{}.md", fm.id))
            }
            Level::Family if has_body => Some(format!("details/{}.md", fm.id)),
            _ => None,
        };
        if detail_path.is_some() {
            bodies.push((fm.id.clone(), body));
        }
        if let Some(parent) = &fm.parent {
            edges.push(KnowledgeEdge {
                src: parent.clone(),
                dst: fm.id.clone(),
                relation: Relation::Contains,
            });
        }
        for rel in &fm.related {
            edges.push(KnowledgeEdge {
                src: fm.id.clone(),
                dst: rel.to.clone(),
                relation: rel.relation,
            });
        }
        nodes.push(KnowledgeNode {
            id: fm.id,
            level: fm.level,
            name: fm.name,
            summary: fm.summary,
            attributes: fm.attributes,
            detail_path,
            usefulness: USEFULNESS_DEFAULT,
        });
    }

    // Validate before any file is written.
    let out_dir = out_file.parent().unwrap_or(Path::new(".")).to_path_buf();
    KnowledgeGraph::from_parts(nodes.clone(), edges.clone(), out_dir.clone())?;

    let details_dir = out_dir.join("details");
    std::fs::create_dir_all(&details_dir)
        .map_err(|e| KnowledgeError::Io(format!("{}: {e}", details_dir.display())))?;
    for (id, body) in &bodies {
        let path = details_dir.join(format!("{id}.md"));
        std::fs::write(&path, body)
            .map_err(|e| KnowledgeError::Io(format!("{}: {e}", path.display())))?;
    }
    let json = to_knowledge_json(&nodes, &edges)?;
    std::fs::write(out_file, &json)
        .map_err(|e| KnowledgeError::Io(format!("{}: {e}", out_file.display())))?;

    Ok(BuildSummary {
        nodes: nodes.len(),
        edges: edges.len(),
        details_written: bodies.len(),
        out_file: out_file.to_path_buf(),
    })
}
