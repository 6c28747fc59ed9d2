//! Generation backends: everything that produces, rewrites, inspects, or
//! runs executable individuals lives behind one trait so the evolutionary
//! machinery can be driven by a deterministic stand-in or by a live model
//! service interchangeably.

pub mod mock;
pub mod remote;
pub mod templates;

use serde::{Deserialize, Serialize};

use crate::chain::{AoeChain, Phase};
use crate::digest::digest_hex;
use crate::error::Result;
use crate::eval::{ExecStatus, TaskInstance};
use crate::merge::StateJudge;
use crate::variation::KnowledgeExcerpt;

/// An executable individual's concrete representation, typically source
/// code for an agent workflow.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub text: String,
}

impl Artifact {
    pub fn new(text: impl Into<String>) -> Artifact {
        Artifact { text: text.into() }
    }

    pub fn digest(&self) -> String {
        digest_hex(&self.text)
    }
}

/// One line of an execution transcript.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub index: usize,
    pub note: String,
}

/// What happened when an artifact ran against one task instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub status: ExecStatus,
    /// Final objective value; present exactly when the run solved.
    pub objective: Option<f64>,
    /// The workflow route the run actually took.
    pub chain: AoeChain,
    pub transcript: Vec<StepRecord>,
}

/// How much of an artifact a mutation may touch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MutationScope {
    Whole,
    Phase(Phase),
}

/// Resource ceilings for one execution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExecLimits {
    pub wall_clock_ms: u64,
    pub max_output_bytes: usize,
}

impl Default for ExecLimits {
    fn default() -> ExecLimits {
        ExecLimits { wall_clock_ms: 30_000, max_output_bytes: 1_000_000 }
    }
}

/// The full capability surface a generation backend must provide.
pub trait GenerationBackend: Send + Sync {
    /// Produces a fresh individual for the task, optionally steered by
    /// retrieved knowledge excerpts.
    fn generate_individual(
        &self,
        task_context: &str,
        excerpts: &[KnowledgeExcerpt],
        seed: u64,
    ) -> Result<Artifact>;

    /// Recovers the workflow structure embedded in an artifact.
    fn extract_chain(&self, artifact: &Artifact) -> Result<AoeChain>;

    /// Builds a runnable artifact that realizes the given workflow.
    fn synthesize_artifact(&self, chain: &AoeChain) -> Result<Artifact>;

    /// Rewrites an artifact within the given scope, optionally steered by
    /// retrieved knowledge excerpts.
    fn mutate_artifact(
        &self,
        artifact: &Artifact,
        scope: MutationScope,
        excerpts: &[KnowledgeExcerpt],
        seed: u64,
    ) -> Result<Artifact>;

    /// Decides whether two state labels within a phase describe the same
    /// workflow state.
    fn judge_equivalence(&self, phase: Phase, a: &str, b: &str) -> Result<bool>;

    /// Runs the artifact against one task instance.
    fn execute(
        &self,
        artifact: &Artifact,
        instance: &TaskInstance,
        limits: &ExecLimits,
    ) -> Result<ExecutionTrace>;
}

/// Adapts a backend's equivalence capability to the state-merge judge
/// interface.
pub struct BackendJudge<'a>(pub &'a dyn GenerationBackend);

impl StateJudge for BackendJudge<'_> {
    fn equivalent(&self, phase: Phase, a: &str, b: &str) -> Result<bool> {
        self.0.judge_equivalence(phase, a, b)
    }
}
