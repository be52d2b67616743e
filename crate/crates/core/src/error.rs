use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid game instance: {0}")]
    InvalidInstance(String),

    #[error("coalition width {got} does not match agent count {expected}")]
    CoalitionWidth { expected: usize, got: usize },

    #[error("edge mask has length {got}, instance has {expected} edges")]
    MaskLength { expected: usize, got: usize },

    #[error("flow quota must be a non-negative number, got {0}")]
    NegativeQuota(f64),

    #[error("{agents} agents exceeds the exact enumeration cap of {cap}; use Monte-Carlo")]
    AgentCountTooLarge { agents: usize, cap: usize },

    #[error("invalid label policy: {0}")]
    InvalidPolicy(String),

    #[error("invalid generator config: {0}")]
    InvalidConfig(String),

    #[error("graph has {edges} edges, need at least {agents} to give every agent an edge")]
    TooFewEdges { edges: usize, agents: usize },

    #[error("no instance with at least {agents} edges after {attempts} attempts (index {index})")]
    GenerationExhausted {
        index: u64,
        agents: usize,
        attempts: u32,
    },

    #[error("pad width {pad_to} is smaller than agent count {agents}")]
    PadTooSmall { pad_to: usize, agents: usize },

    #[error("label has length {got}, expected {expected}")]
    LabelWidth { expected: usize, got: usize },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed record in {path} line {line}: {source}")]
    Parse {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },

    #[error("malformed manifest {path}: {source}")]
    Manifest {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("content hash mismatch for {path}: manifest {expected}, file {actual}")]
    HashMismatch {
        path: PathBuf,
        expected: String,
        actual: String,
    },

    #[error("unsupported format version {found} (supported: {supported})")]
    SchemaVersionUnsupported { found: u32, supported: u32 },

    #[error("invariant violated in {path} record {index}: {reason}")]
    InvariantViolation {
        path: PathBuf,
        index: usize,
        reason: String,
    },

    #[error("dataset inconsistent with manifest: {0}")]
    DatasetMismatch(String),

    #[error("split needs at least 5 instances, manifest has {0}")]
    TooFewForSplit(u64),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short stable identifier, used for machine-readable error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInstance(_) => "invalid_instance",
            Error::CoalitionWidth { .. } => "coalition_width",
            Error::MaskLength { .. } => "mask_length",
            Error::NegativeQuota(_) => "negative_quota",
            Error::AgentCountTooLarge { .. } => "agent_count_too_large",
            Error::InvalidPolicy(_) => "invalid_policy",
            Error::InvalidConfig(_) => "invalid_config",
            Error::TooFewEdges { .. } => "too_few_edges",
            Error::GenerationExhausted { .. } => "generation_exhausted",
            Error::PadTooSmall { .. } => "pad_too_small",
            Error::LabelWidth { .. } => "label_width",
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::Manifest { .. } => "manifest",
            Error::HashMismatch { .. } => "hash_mismatch",
            Error::SchemaVersionUnsupported { .. } => "schema_version_unsupported",
            Error::InvariantViolation { .. } => "invariant_violation",
            Error::DatasetMismatch(_) => "dataset_mismatch",
            Error::TooFewForSplit(_) => "too_few_for_split",
        }
    }
}
