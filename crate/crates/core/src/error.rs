use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("support mismatch at index {index}: p = {p}, q = {q}")]
    SupportMismatch { index: usize, p: f64, q: f64 },

    #[error("invalid probability vector: {0}")]
    InvalidDistribution(String),

    #[error("invalid probability {0}; must lie in [0, 1]")]
    InvalidProbability(f64),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("class count must be at least 2, got {0}")]
    InvalidK(usize),

    #[error("invalid class permutation: {0}")]
    InvalidPermutation(String),

    #[error("tree parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },

    #[error("class {0} appears more than once in the tree")]
    DuplicateClass(usize),

    #[error("class {0} is missing from the tree")]
    MissingClass(usize),

    #[error("node index {node} out of range for a tree with {nodes} internal nodes")]
    NodeOutOfRange { node: usize, nodes: usize },

    #[error("expected {expected} node scorers, got {got}")]
    AlignmentMismatch { expected: usize, got: usize },

    #[error("no parameter vector for class {class} at node {node}")]
    MissingClassParam { node: usize, class: usize },

    #[error("node {node} has no training samples")]
    EmptyNodeSet { node: usize },

    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),

    #[error("covariance of class {0} is not positive definite")]
    NonPDCovariance(usize),

    #[error("dataset carries no exact posteriors")]
    MissingPosteriors,

    #[error("bad IDX magic number {found:#010x}, expected {expected:#010x}")]
    BadMagic { found: u32, expected: u32 },

    #[error("file truncated: {0}")]
    TruncatedFile(String),

    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },

    #[error("header mismatch: {0}")]
    HeaderMismatch(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("{check}: violation {violation:e} beyond tolerance; inputs: {inputs}")]
    ViolationFound {
        check: String,
        violation: f64,
        inputs: String,
    },

    #[error("{check}: node-value formulas disagree by {gap:e}")]
    FormulaMismatch { check: String, gap: f64 },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
