//! Hierarchical algorithm knowledge base: a strict three-level forest
//! (Category -> Family -> Algorithm) with coarse-to-fine retrieval, lazy
//! detail loading, and multiplicative usefulness feedback.

pub mod builder;

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::text::{tokenize_unique, Bm25Index};

pub const USEFULNESS_DEFAULT: f64 = 1.0;
pub const USEFULNESS_MIN: f64 = 0.05;
pub const USEFULNESS_MAX: f64 = 10.0;
pub const FEEDBACK_ALPHA: f64 = 1.25;
pub const FEEDBACK_BETA: f64 = 0.8;
pub const SUMMARY_MAX_CHARS: usize = 512;

#[derive(Debug, thiserror::Error)]
pub enum KnowledgeError {
    #[error("parse error: {0}")]
    ParseError(String),
    #[error("hierarchy violation at {node}: {reason}")]
    HierarchyError { node: String, reason: String },
    #[error("unknown node: {0}")]
    UnknownNode(String),
    #[error("node {node} is {actual:?}, expected {expected:?}")]
    LevelError { node: String, expected: Level, actual: Level },
    #[error("duplicate node id: {0}")]
    DuplicateId(String),
    #[error("knowledge base is empty")]
    EmptyKnowledgeBase,
    #[error("i/o: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Level {
    Category,
    Family,
    Algorithm,
}

impl Level {
    pub fn child(self) -> Option<Level> {
        match self {
            Level::Category => Some(Level::Family),
            Level::Family => Some(Level::Algorithm),
            Level::Algorithm => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    Contains,
    VariantOf,
    Refines,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeNode {
    pub id: String,
    pub level: Level,
    pub name: String,
    /// Short text used for coarse ranking; at most 512 characters.
    pub summary: String,
    #[serde(default)]
    pub attributes: BTreeMap<String, String>,
    /// Relative path to the full-text document, present exactly when the
    /// node is Algorithm-level (Families may carry one too).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail_path: Option<String>,
    #[serde(default = "default_usefulness", skip_serializing_if = "is_default_usefulness")]
    pub usefulness: f64,
}

fn default_usefulness() -> f64 {
    USEFULNESS_DEFAULT
}

#[allow(clippy::trivially_copy_pass_by_ref)]
fn is_default_usefulness(u: &f64) -> bool {
    *u == USEFULNESS_DEFAULT
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeEdge {
    pub src: String,
    pub dst: String,
    pub relation: Relation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: String,
    pub score: f64,
    /// Ancestor ids from the root down (category, then family).
    pub trail: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub candidates: Vec<Candidate>,
    /// Algorithm ids whose detail document was loaded by this retrieval.
    pub accessed_details: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeedbackSignal {
    Useful,
    NotUseful,
}

/// Structured record of missing knowledge; a hook for future expansion
/// integrations, never any network activity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionRequest {
    pub query: String,
    pub keywords: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<String>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct KnowledgeFile {
    #[serde(default)]
    nodes: Vec<KnowledgeNode>,
    #[serde(default)]
    edges: Vec<KnowledgeEdge>,
}

#[derive(Debug, Default)]
pub struct KnowledgeGraph {
    nodes: BTreeMap<String, KnowledgeNode>,
    edges: Vec<KnowledgeEdge>,
    /// Contains-parent per node id.
    parent: HashMap<String, String>,
    /// Directory detail paths resolve against.
    base_dir: PathBuf,
    access_log: Mutex<Vec<String>>,
}

impl KnowledgeGraph {
    /// Loads and validates a knowledge file. An empty or whitespace-only
    /// file yields an empty graph.
    pub fn load(path: &Path) -> Result<Self, KnowledgeError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| KnowledgeError::Io(format!("{}: {e}", path.display())))?;
        let file: KnowledgeFile = if text.trim().is_empty() {
            KnowledgeFile::default()
        } else {
            serde_json::from_str(&text).map_err(|e| KnowledgeError::ParseError(e.to_string()))?
        };
        let base_dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Self::from_parts(file.nodes, file.edges, base_dir)
    }

    /// Builds a graph from parts, enforcing every structural invariant.
    pub fn from_parts(
        nodes: Vec<KnowledgeNode>,
        edges: Vec<KnowledgeEdge>,
        base_dir: PathBuf,
    ) -> Result<Self, KnowledgeError> {
        let mut map = BTreeMap::new();
        for node in nodes {
            validate_node(&node)?;
            if map.insert(node.id.clone(), node.clone()).is_some() {
                return Err(KnowledgeError::DuplicateId(node.id));
            }
        }
        let mut parent: HashMap<String, String> = HashMap::new();
        for edge in &edges {
            let src = map.get(&edge.src).ok_or_else(|| KnowledgeError::HierarchyError {
                node: edge.src.clone(),
                reason: "edge references unknown source".into(),
            })?;
            let dst = map.get(&edge.dst).ok_or_else(|| KnowledgeError::HierarchyError {
                node: edge.dst.clone(),
                reason: "edge references unknown destination".into(),
            })?;
            match edge.relation {
                Relation::Contains => {
                    if src.level.child() != Some(dst.level) {
                        return Err(KnowledgeError::HierarchyError {
                            node: edge.dst.clone(),
                            reason: format!(
                                "Contains edge {:?} -> {:?} skips a level",
                                src.level, dst.level
                            ),
                        });
                    }
                    if parent.insert(edge.dst.clone(), edge.src.clone()).is_some() {
                        return Err(KnowledgeError::HierarchyError {
                            node: edge.dst.clone(),
                            reason: "multiple Contains parents".into(),
                        });
                    }
                }
                Relation::VariantOf | Relation::Refines => {
                    if src.level != dst.level {
                        return Err(KnowledgeError::HierarchyError {
                            node: edge.src.clone(),
                            reason: format!(
                                "{:?} edge crosses levels {:?} -> {:?}",
                                edge.relation, src.level, dst.level
                            ),
                        });
                    }
                }
            }
        }
        for node in map.values() {
            if node.level != Level::Category && !parent.contains_key(&node.id) {
                return Err(KnowledgeError::HierarchyError {
                    node: node.id.clone(),
                    reason: "orphan: no Contains parent".into(),
                });
            }
        }
        Ok(Self { nodes: map, edges, parent, base_dir, access_log: Mutex::new(Vec::new()) })
    }

    pub fn node(&self, id: &str) -> Option<&KnowledgeNode> {
        self.nodes.get(id)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes_at(&self, level: Level) -> impl Iterator<Item = &KnowledgeNode> {
        self.nodes.values().filter(move |n| n.level == level)
    }

    pub fn edges(&self) -> &[KnowledgeEdge] {
        &self.edges
    }

    pub fn parent_of(&self, id: &str) -> Option<&str> {
        self.parent.get(id).map(|s| s.as_str())
    }

    /// Children connected by Contains, in id order.
    pub fn children_of(&self, id: &str) -> Vec<&KnowledgeNode> {
        let mut out: Vec<&KnowledgeNode> = self
            .parent
            .iter()
            .filter(|(_, p)| p.as_str() == id)
            .filter_map(|(c, _)| self.nodes.get(c))
            .collect();
        out.sort_by(|a, b| a.id.cmp(&b.id));
        out
    }

    /// Same-level relatives reachable over one VariantOf/Refines edge, in
    /// either direction.
    pub fn related_of(&self, id: &str) -> Vec<&str> {
        let mut out: Vec<&str> = self
            .edges
            .iter()
            .filter(|e| matches!(e.relation, Relation::VariantOf | Relation::Refines))
            .filter_map(|e| {
                if e.src == id {
                    Some(e.dst.as_str())
                } else if e.dst == id {
                    Some(e.src.as_str())
                } else {
                    None
                }
            })
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Coarse-to-fine retrieval: BM25-rank families, keep the top
    /// ceil(k / 2), rescore their algorithms over summary plus attributes,
    /// and load details for the final top k.
    pub fn retrieve(&self, query: &str, k: usize) -> Result<RetrievalResult, KnowledgeError> {
        assert!(k >= 1, "k must be positive");
        if self.nodes.is_empty() {
            return Err(KnowledgeError::EmptyKnowledgeBase);
        }
        let q = tokenize_unique(query);

        // Phase 1: coarse family ranking over summaries.
        let families: Vec<&KnowledgeNode> = self.nodes_at(Level::Family).collect();
        let family_index = Bm25Index::build(
            &families.iter().map(|f| f.summary.clone()).collect::<Vec<_>>(),
        );
        let mut family_ranked: Vec<(usize, f64)> = families
            .iter()
            .enumerate()
            .map(|(i, f)| (i, family_index.score(i, &q) * f.usefulness))
            .collect();
        family_ranked.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| families[a.0].id.cmp(&families[b.0].id))
        });
        let fan_out = k.div_ceil(2);
        let top_families: Vec<&KnowledgeNode> = family_ranked
            .iter()
            .take(fan_out)
            .map(|&(i, _)| families[i])
            .collect();

        // Phase 2: rescore algorithms of the surviving families. The index
        // spans every algorithm in the graph so document frequencies do not
        // depend on phase-1 pruning.
        let algorithms: Vec<&KnowledgeNode> = self.nodes_at(Level::Algorithm).collect();
        let algo_docs: Vec<String> = algorithms
            .iter()
            .map(|a| {
                let attrs: Vec<String> = a
                    .attributes
                    .iter()
                    .map(|(k, v)| format!("{k} {v}"))
                    .collect();
                format!("{} {}", a.summary, attrs.join(" "))
            })
            .collect();
        let algo_index = Bm25Index::build(&algo_docs);
        let algo_pos: HashMap<&str, usize> = algorithms
            .iter()
            .enumerate()
            .map(|(i, a)| (a.id.as_str(), i))
            .collect();
        let mut candidates: Vec<Candidate> = Vec::new();
        for family in &top_families {
            for child in self.children_of(&family.id) {
                let idx = algo_pos[child.id.as_str()];
                let score = algo_index.score(idx, &q) * child.usefulness;
                let mut trail = Vec::new();
                if let Some(cat) = self.parent_of(&family.id) {
                    trail.push(cat.to_string());
                }
                trail.push(family.id.clone());
                candidates.push(Candidate { id: child.id.clone(), score, trail });
            }
        }
        candidates.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.id.cmp(&b.id))
        });
        candidates.truncate(k);

        let mut accessed = Vec::new();
        for c in &candidates {
            self.fetch_detail(&c.id)?;
            accessed.push(c.id.clone());
        }
        Ok(RetrievalResult { candidates, accessed_details: accessed })
    }

    /// Loads an algorithm's detail document and records the access.
    pub fn fetch_detail(&self, id: &str) -> Result<String, KnowledgeError> {
        let node = self
            .nodes
            .get(id)
            .ok_or_else(|| KnowledgeError::UnknownNode(id.to_string()))?;
        if node.level != Level::Algorithm {
            return Err(KnowledgeError::LevelError {
                node: id.to_string(),
                expected: Level::Algorithm,
                actual: node.level,
            });
        }
        let rel = node.detail_path.as_ref().expect("algorithm node has detail (validated)");
        let path = self.base_dir.join(rel);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| KnowledgeError::Io(format!("{}: {e}", path.display())))?;
        self.access_log.lock().unwrap().push(id.to_string());
        Ok(text)
    }

    /// Ids whose detail document has been loaded, in load order.
    pub fn access_log(&self) -> Vec<String> {
        self.access_log.lock().unwrap().clone()
    }

    pub fn clear_access_log(&self) {
        self.access_log.lock().unwrap().clear();
    }

    /// Multiplicative usefulness update, clamped to
    /// [`USEFULNESS_MIN`, `USEFULNESS_MAX`].
    pub fn record_feedback(
        &mut self,
        id: &str,
        signal: FeedbackSignal,
    ) -> Result<f64, KnowledgeError> {
        let node = self
            .nodes
            .get_mut(id)
            .ok_or_else(|| KnowledgeError::UnknownNode(id.to_string()))?;
        let factor = match signal {
            FeedbackSignal::Useful => FEEDBACK_ALPHA,
            FeedbackSignal::NotUseful => FEEDBACK_BETA,
        };
        node.usefulness = (node.usefulness * factor).clamp(USEFULNESS_MIN, USEFULNESS_MAX);
        Ok(node.usefulness)
    }

    /// Inserts a node under `parent_id` (None only for categories).
    pub fn insert(
        &mut self,
        node: KnowledgeNode,
        parent_id: Option<&str>,
    ) -> Result<(), KnowledgeError> {
        validate_node(&node)?;
        if self.nodes.contains_key(&node.id) {
            return Err(KnowledgeError::DuplicateId(node.id));
        }
        match (node.level, parent_id) {
            (Level::Category, None) => {}
            (Level::Category, Some(_)) => {
                return Err(KnowledgeError::HierarchyError {
                    node: node.id,
                    reason: "categories cannot have a parent".into(),
                })
            }
            (_, None) => {
                return Err(KnowledgeError::HierarchyError {
                    node: node.id,
                    reason: "orphan: no Contains parent".into(),
                })
            }
            (level, Some(pid)) => {
                let parent = self
                    .nodes
                    .get(pid)
                    .ok_or_else(|| KnowledgeError::UnknownNode(pid.to_string()))?;
                if parent.level.child() != Some(level) {
                    return Err(KnowledgeError::LevelError {
                        node: pid.to_string(),
                        expected: match level {
                            Level::Family => Level::Category,
                            Level::Algorithm => Level::Family,
                            Level::Category => unreachable!("handled above"),
                        },
                        actual: parent.level,
                    });
                }
                self.edges.push(KnowledgeEdge {
                    src: pid.to_string(),
                    dst: node.id.clone(),
                    relation: Relation::Contains,
                });
                self.parent.insert(node.id.clone(), pid.to_string());
            }
        }
        self.nodes.insert(node.id.clone(), node);
        Ok(())
    }

    /// Emits a structured expansion request; never mutates the graph and
    /// never touches the network.
    pub fn expand_stub(&self, query: &str, task: Option<&str>) -> ExpansionRequest {
        ExpansionRequest {
            query: query.to_string(),
            keywords: tokenize_unique(query),
            task: task.map(|s| s.to_string()),
        }
    }

    /// Re-checks every structural invariant; used by property tests.
    pub fn validate(&self) -> Result<(), KnowledgeError> {
        Self::from_parts(
            self.nodes.values().cloned().collect(),
            self.edges.clone(),
            self.base_dir.clone(),
        )
        .map(|_| ())
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }
}

fn validate_node(node: &KnowledgeNode) -> Result<(), KnowledgeError> {
    if node.summary.chars().count() > SUMMARY_MAX_CHARS {
        return Err(KnowledgeError::ParseError(format!(
            "node {}: summary exceeds {SUMMARY_MAX_CHARS} characters",
            node.id
        )));
    }
    if !(node.usefulness > 0.0 && node.usefulness <= USEFULNESS_MAX) {
        return Err(KnowledgeError::ParseError(format!(
            "node {}: usefulness {} outside (0, {USEFULNESS_MAX}]",
            node.id, node.usefulness
        )));
    }
    match node.level {
        Level::Algorithm if node.detail_path.is_none() => Err(KnowledgeError::HierarchyError {
            node: node.id.clone(),
            reason: "algorithm node lacks a detail document".into(),
        }),
        Level::Category if node.detail_path.is_some() => Err(KnowledgeError::HierarchyError {
            node: node.id.clone(),
            reason: "category node must not carry a detail document".into(),
        }),
        _ => Ok(()),
    }
}

/// Serializes nodes and edges into the knowledge-file JSON layout
/// (deterministic: nodes by id, edges by (src, dst)).
pub fn to_knowledge_json(
    nodes: &[KnowledgeNode],
    edges: &[KnowledgeEdge],
) -> Result<String, KnowledgeError> {
    let mut nodes = nodes.to_vec();
    nodes.sort_by(|a, b| a.id.cmp(&b.id));
    let mut edges = edges.to_vec();
    edges.sort_by(|a, b| (&a.src, &a.dst).cmp(&(&b.src, &b.dst)));
    let file = KnowledgeFile { nodes, edges };
    serde_json::to_string_pretty(&file)
        .map(|mut s| {
            s.push('\n');
            s
        })
        .map_err(|e| KnowledgeError::ParseError(e.to_string()))
}
