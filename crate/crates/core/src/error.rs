use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error type. Validation failures carry enough context to name
/// the offending id, file, or field.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {detail}")]
    Parse { path: PathBuf, detail: String },

    #[error("duplicate id {id:?}")]
    DuplicateId { id: String },

    #[error("unknown id {id:?} referenced by {context}")]
    UnknownId { id: String, context: String },

    #[error("accuracy {value} out of [0,1] range ({context})")]
    AccuracyOutOfRange { value: f64, context: String },

    #[error("model {model_id:?} has no performance data")]
    NoData { model_id: String },

    #[error("models {a:?} and {b:?} share no benchmark dimensions")]
    EmptyIntersection { a: String, b: String },

    #[error("need at least {needed} models, got {got}")]
    TooFewModels { needed: usize, got: usize },

    #[error("vector dimension mismatch: {detail}")]
    DimensionMismatch { detail: String },

    #[error("prediction dump row {row}: {detail}")]
    InvalidDumpRow { row: usize, detail: String },

    #[error("prediction dump row {row}: expected-empirical-prediction likelihood is zero (score would be -inf; set a likelihood floor to clamp)")]
    ZeroLikelihood { row: usize },

    #[error("cannot normalize an empty score list")]
    EmptyScores,

    #[error("no normalized proxy score for representative {model_id:?}")]
    MissingProxy { model_id: String },

    #[error("singleton clusters present but no non-singleton cluster to propagate proxy scores from")]
    NoPropagationSource,

    #[error("top-k of {k} exceeds the {n} ranked models")]
    KTooLarge { k: usize, n: usize },

    #[error("model {model_id:?} has no trace with at least {stage} stages")]
    NoEligibleTrace { model_id: String, stage: usize },

    #[error("trace for model {model_id:?} exhausted after {stages} stages")]
    ExhaustedTrace { model_id: String, stages: usize },

    #[error("no target trace for model {model_id:?}")]
    MissingTrace { model_id: String },

    #[error("no trendset for model {model_id:?} at stage {stage}")]
    MissingTrendset { model_id: String, stage: usize },

    #[error("no prediction dump for representative {model_id:?}")]
    MissingDump { model_id: String },

    #[error("invalid parameters: {detail}")]
    InvalidParams { detail: String },

    #[error("invalid configuration: {detail}")]
    InvalidConfig { detail: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            detail: detail.into(),
        }
    }

    /// Exit code the CLI maps this error to: validation errors exit 1.
    pub fn exit_code(&self) -> i32 {
        1
    }

    /// Stable machine-readable tag for `--json-errors` output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::DuplicateId { .. } => "duplicate_id",
            Error::UnknownId { .. } => "unknown_id",
            Error::AccuracyOutOfRange { .. } => "accuracy_out_of_range",
            Error::NoData { .. } => "no_data",
            Error::EmptyIntersection { .. } => "empty_intersection",
            Error::TooFewModels { .. } => "too_few_models",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::InvalidDumpRow { .. } => "invalid_dump_row",
            Error::ZeroLikelihood { .. } => "zero_likelihood",
            Error::EmptyScores => "empty_scores",
            Error::MissingProxy { .. } => "missing_proxy",
            Error::NoPropagationSource => "no_propagation_source",
            Error::KTooLarge { .. } => "k_too_large",
            Error::NoEligibleTrace { .. } => "no_eligible_trace",
            Error::ExhaustedTrace { .. } => "exhausted_trace",
            Error::MissingTrace { .. } => "missing_trace",
            Error::MissingTrendset { .. } => "missing_trendset",
            Error::MissingDump { .. } => "missing_dump",
            Error::InvalidParams { .. } => "invalid_params",
            Error::InvalidConfig { .. } => "invalid_config",
        }
    }
}
