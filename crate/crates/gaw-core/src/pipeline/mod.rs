//! End-to-end orchestration: run a query against raw data, execute the
//! task DAG with bounded refinement, assemble an evidence-backed report,
//! and persist every artifact into a run directory.
//!
//! The pipeline is deterministic under the mock coordinator: a fixed seed
//! and config produce a byte-identical run directory modulo timing fields.

pub mod bench;
pub mod executor;
pub mod generator;
pub mod report;
pub mod run;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::construct::ConstructError;
use crate::coordinator::{RemoteConfig, DEFAULT_CONTEXT_BUDGET};
use crate::knowledge::KnowledgeError;
use crate::planner::{PlannerError, R_MAX};
use crate::registry::{Budget, DistilledResult, RawResult};

pub use bench::{failure_bench, FailureBenchResult};
pub use executor::{execute_dag, ExecutionContext, ExecutionOutcome};
pub use generator::{generate_dataset, CycleSpec, DatasetSpec, GroundTruth};
pub use report::{assemble_report, EvidenceBlock, Findings, Report, StageSummary};
pub use run::{run, RunArtifacts};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(#[from] ConstructError),
    #[error("knowledge: {0}")]
    Knowledge(#[from] KnowledgeError),
    #[error("io: {0}")]
    Io(String),
    #[error("infeasible dataset spec: {0}")]
    SpecInfeasible(String),
    #[error("planning: {0}")]
    Planning(#[from] PlannerError),
    #[error("execution: {0}")]
    Execution(String),
    #[error("report: {0}")]
    Report(String),
}

impl PipelineError {
    /// Process exit code: 2 planning, 3 execution, 4 config/data.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_)
            | PipelineError::Data(_)
            | PipelineError::Knowledge(_)
            | PipelineError::Io(_)
            | PipelineError::SpecInfeasible(_) => 4,
            // Refinement runs out during execution, not planning.
            PipelineError::Planning(PlannerError::RefinementExhausted { .. }) => 3,
            PipelineError::Planning(_) => 2,
            PipelineError::Execution(_) | PipelineError::Report(_) => 3,
        }
    }
}

fn io_err<E: std::fmt::Display>(path: &std::path::Path) -> impl Fn(E) -> PipelineError + '_ {
    move |e| PipelineError::Io(format!("{}: {e}", path.display()))
}

// ---- configuration ------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoordinatorKind {
    Mock,
    Remote,
}

impl std::str::FromStr for CoordinatorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mock" => Ok(CoordinatorKind::Mock),
            "remote" => Ok(CoordinatorKind::Remote),
            other => Err(format!("unknown coordinator {other:?} (expected mock or remote)")),
        }
    }
}

/// Everything a run needs beyond the query text. Loadable from TOML; the
/// CLI overlays per-invocation flags (data dir, knowledge path, seed).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data_dir: PathBuf,
    pub knowledge_path: PathBuf,
    /// Parent directory; each run gets a fresh `run-NNN` below it.
    pub out_dir: PathBuf,
    pub coordinator: CoordinatorKind,
    /// Required when `coordinator = "remote"`.
    pub remote: Option<RemoteConfig>,
    pub distill: Budget,
    pub context_budget_chars: usize,
    pub r_max: usize,
    pub width: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data_dir: PathBuf::from("."),
            knowledge_path: PathBuf::from("kb/knowledge.json"),
            out_dir: PathBuf::from("runs"),
            coordinator: CoordinatorKind::Mock,
            remote: None,
            distill: Budget::default(),
            context_budget_chars: DEFAULT_CONTEXT_BUDGET,
            r_max: R_MAX,
            width: 4,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn load(path: &std::path::Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let config: RunConfig = toml::from_str(&text)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.width == 0 {
            return Err(PipelineError::Config("width must be at least 1".into()));
        }
        if self.r_max > R_MAX {
            return Err(PipelineError::Config(format!(
                "r_max {} exceeds the refinement cap {R_MAX}",
                self.r_max
            )));
        }
        if self.distill.max_items == 0 || self.distill.max_chars == 0 {
            return Err(PipelineError::Config("distill budgets must be positive".into()));
        }
        if self.context_budget_chars == 0 {
            return Err(PipelineError::Config("context budget must be positive".into()));
        }
        if self.coordinator == CoordinatorKind::Remote && self.remote.is_none() {
            return Err(PipelineError::Config(
                "coordinator \"remote\" needs a [remote] section".into(),
            ));
        }
        Ok(())
    }
}

// ---- stage outputs ------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StageStatus {
    Ok,
    Error,
    /// A Decision gate evaluated false, or an upstream stage failed.
    Skipped,
}

impl StageStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            StageStatus::Ok => "Ok",
            StageStatus::Error => "Error",
            StageStatus::Skipped => "Skipped",
        }
    }
}

/// Result record for one DAG node; exactly one exists per node per round.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageOutput {
    pub node_id: String,
    pub status: StageStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raw: Option<RawResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distilled: Option<DistilledResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub skip_reason: Option<String>,
    /// Id of the gate stage whose empty result caused a skip; inherited
    /// through skip cascades so it always names the root cause.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gated_on: Option<String>,
    /// Wall-clock; excluded from determinism comparisons.
    pub elapsed_ms: u64,
}

impl StageOutput {
    pub fn item_count(&self) -> usize {
        self.raw.as_ref().map(|r| r.stats.item_count).unwrap_or(0)
    }
}

/// Single-writer, write-once store coordinating concurrent stage workers.
/// Outputs are immutable once inserted; readers share them via `Arc`.
#[derive(Default)]
pub struct StageStore {
    slots: Mutex<BTreeMap<String, Arc<StageOutput>>>,
}

impl StageStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Panics on a second write to the same node id: the executor schedules
    /// every node exactly once, so a rewrite is a logic error.
    pub fn insert(&self, output: StageOutput) -> Arc<StageOutput> {
        let arc = Arc::new(output);
        let prev = self
            .slots
            .lock()
            .expect("stage store poisoned")
            .insert(arc.node_id.clone(), Arc::clone(&arc));
        assert!(prev.is_none(), "stage store is write-once: {} written twice", arc.node_id);
        arc
    }

    pub fn get(&self, node_id: &str) -> Option<Arc<StageOutput>> {
        self.slots.lock().expect("stage store poisoned").get(node_id).cloned()
    }

    pub fn len(&self) -> usize {
        self.slots.lock().expect("stage store poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All outputs in node-id order.
    pub fn snapshot(&self) -> Vec<Arc<StageOutput>> {
        self.slots.lock().expect("stage store poisoned").values().cloned().collect()
    }
}
