//! Crate-wide error type with stable machine-parsable codes.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown environment `{0}`")]
    UnknownEnv(String),
    #[error("{context}: expected dimension {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("empty skill set")]
    EmptySkillSet,
    #[error("training loss became non-finite at epoch {epoch}")]
    NanLoss { epoch: usize },
    #[error("Riccati iteration did not converge within {max_iter} iterations")]
    RiccatiNoConvergence { max_iter: usize },
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("matrix is singular")]
    SingularMatrix,
    #[error("interpolation weight {0} outside [0, 1]")]
    AlphaOutOfRange(f64),
    #[error("decoded parameters contain non-finite entries")]
    NonFiniteRecall,
    #[error("unknown skill `{0}`")]
    UnknownSkill(String),
    #[error("duplicate skill name `{0}`")]
    DuplicateSkill(String),
    #[error("store format version {found}, expected {expected}")]
    StoreVersionMismatch { found: u32, expected: u32 },
    #[error("store checksum mismatch (file corrupted or edited)")]
    ChecksumMismatch,
    #[error("malformed store document: {0}")]
    MalformedStore(String),
    #[error("store has no trained memory; run `memory build` first")]
    StoreNotBuilt,
    #[error("task graph is invalid: {0}")]
    InvalidGraph(String),
    #[error("memory fidelity below target: {0}")]
    BelowTargetFidelity(String),
    #[error("verification failed: {0}")]
    VerifyFailed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable code emitted on the CLI diagnostic stream.
    pub fn code(&self) -> &'static str {
        match self {
            Error::UnknownEnv(_) => "UNKNOWN_ENV",
            Error::DimensionMismatch { .. } => "DIMENSION_MISMATCH",
            Error::InvalidConfig(_) => "INVALID_CONFIG",
            Error::EmptyBatch => "EMPTY_BATCH",
            Error::EmptySkillSet => "EMPTY_SKILL_SET",
            Error::NanLoss { .. } => "NAN_LOSS",
            Error::RiccatiNoConvergence { .. } => "RICCATI_NO_CONVERGENCE",
            Error::NotPositiveDefinite => "NOT_POSITIVE_DEFINITE",
            Error::SingularMatrix => "SINGULAR_MATRIX",
            Error::AlphaOutOfRange(_) => "ALPHA_OUT_OF_RANGE",
            Error::NonFiniteRecall => "NON_FINITE_RECALL",
            Error::UnknownSkill(_) => "UNKNOWN_SKILL",
            Error::DuplicateSkill(_) => "DUPLICATE_SKILL",
            Error::StoreVersionMismatch { .. } => "STORE_VERSION_MISMATCH",
            Error::ChecksumMismatch => "CHECKSUM_MISMATCH",
            Error::MalformedStore(_) => "MALFORMED_STORE",
            Error::StoreNotBuilt => "STORE_NOT_BUILT",
            Error::InvalidGraph(_) => "INVALID_GRAPH",
            Error::BelowTargetFidelity(_) => "BELOW_TARGET_FIDELITY",
            Error::VerifyFailed(_) => "VERIFY_FAILED",
            Error::Io(_) => "IO_ERROR",
        }
    }

    /// Process exit class: 1 for validation/config errors, 2 for
    /// runtime/fidelity failures.
    pub fn exit_class(&self) -> i32 {
        match self {
            Error::UnknownEnv(_)
            | Error::DimensionMismatch { .. }
            | Error::InvalidConfig(_)
            | Error::EmptyBatch
            | Error::EmptySkillSet
            | Error::AlphaOutOfRange(_)
            | Error::UnknownSkill(_)
            | Error::DuplicateSkill(_)
            | Error::StoreVersionMismatch { .. }
            | Error::ChecksumMismatch
            | Error::MalformedStore(_)
            | Error::StoreNotBuilt
            | Error::InvalidGraph(_)
            | Error::Io(_) => 1,
            Error::NanLoss { .. }
            | Error::RiccatiNoConvergence { .. }
            | Error::NotPositiveDefinite
            | Error::SingularMatrix
            | Error::NonFiniteRecall
            | Error::BelowTargetFidelity(_)
            | Error::VerifyFailed(_) => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
