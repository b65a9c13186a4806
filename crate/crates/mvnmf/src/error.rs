//! Crate-wide error type.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path} at line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("view {view} has {found} columns, expected {expected}")]
    ColumnCountMismatch {
        view: usize,
        expected: usize,
        found: usize,
    },

    #[error("view {view} entry ({row}, {col}) is negative: {value}")]
    NegativeEntry {
        view: usize,
        row: usize,
        col: usize,
        value: f64,
    },

    #[error("view {view} entry ({row}, {col}) is not finite")]
    NonFiniteEntry { view: usize, row: usize, col: usize },

    #[error("label {label} for sample {sample} is outside [0, {classes})")]
    LabelOutOfRange {
        sample: usize,
        label: usize,
        classes: usize,
    },

    #[error("class {class} has no labeled sample")]
    EmptyClass { class: usize },

    #[error("labeled sample {sample} appears after an unlabeled one")]
    LabeledAfterUnlabeled { sample: usize },

    #[error(
        "label ratio {ratio} keeps {target} labels but {classes} classes need at least one each"
    )]
    RatioTooSmall {
        ratio: f64,
        target: usize,
        classes: usize,
    },

    #[error("masking requires complete ground-truth labels")]
    MissingGroundTruth,

    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        found: String,
    },

    #[error("k = {k} nearest neighbors requires more than {n} samples")]
    NeighborCountTooLarge { k: usize, n: usize },

    #[error("heat-kernel bandwidth must be positive, got {delta}")]
    NonPositiveBandwidth { delta: f64 },

    #[error("basis column {column} of view {view} collapsed to zero")]
    DegenerateBasis { view: usize, column: usize },

    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },

    #[error("objective diverged (non-finite) at iteration {iteration}")]
    Divergence { iteration: usize },

    #[error("invalid config at {field}: {message}")]
    InvalidConfig { field: String, message: String },

    #[error("unknown preset `{0}` (expected yale, orl, ecg or webkb)")]
    UnknownPreset(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            message: message.into(),
        }
    }
}
