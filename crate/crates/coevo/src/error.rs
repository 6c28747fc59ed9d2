//! Crate-wide error type and result alias.

use crate::chain::ValidationReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// The chain document could not be parsed at all, or a record is
    /// syntactically unusable. `index` is the offending record position
    /// when one can be attributed.
    #[error("chain parse error{}: {reason}", fmt_index(.index))]
    ChainParse { index: Option<usize>, reason: String },

    /// The document parsed but the resulting chain violates structural
    /// invariants (continuity, phase order, boundary labels).
    #[error("invalid chain: {report}")]
    ChainInvalid { report: ValidationReport },

    #[error("chain set is empty")]
    EmptyChainSet,

    #[error("smoothing factor {0} outside (0, 1]")]
    AlphaOutOfRange(f64),

    #[error("node {0} has no incident edges")]
    IsolatedNode(String),

    #[error("unknown graph element {0}")]
    UnknownElement(String),

    #[error("graph has no edges")]
    EmptyGraph,

    #[error("path sampling exhausted {restarts} restarts without reaching the sink")]
    SamplingExhausted { restarts: usize },

    #[error("no novel path found after {attempts} resample attempts")]
    NoveltyExhausted { attempts: usize },

    #[error("merge grouping rejected: {0}")]
    InvalidGrouping(String),

    #[error("backend {capability} failed: {detail}")]
    Backend { capability: &'static str, detail: String },

    #[error("no prompt template registered for id {0:?}")]
    TemplateMissing(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("split target {target} exceeds dataset size {available}")]
    TargetTooLarge { target: usize, available: usize },

    #[error("dataset contains no instances")]
    EmptyDataset,

    #[error("no outcomes to score")]
    EmptyOutcomes,

    #[error("outcome references instance {0} absent from the dataset")]
    UnknownInstance(String),

    #[error("total instance weight is zero")]
    ZeroWeightMass,

    #[error("instance {0} references unknown subset {1:?}")]
    UnknownSubset(String, String),

    #[error("outcome references instance {0} absent from the weight table")]
    UnweightedOutcome(String),

    #[error("checkpoint rejected: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 for usage and configuration
    /// problems, 1 for domain failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::ChainParse { .. }
            | Error::Config(_)
            | Error::TemplateMissing(_)
            | Error::TargetTooLarge { .. }
            | Error::EmptyDataset
            | Error::Io(_)
            | Error::Json(_) => 2,
            _ => 1,
        }
    }
}

fn fmt_index(index: &Option<usize>) -> String {
    match index {
        Some(i) => format!(" at record {i}"),
        None => String::new(),
    }
}
