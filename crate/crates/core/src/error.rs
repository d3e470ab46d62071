use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),

    #[error("shape mismatch for {what}: expected {expected}, found {found}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value encountered in {0}")]
    NumericOverflow(&'static str),

    #[error("cannot evaluate on an empty test set")]
    EmptyTestSet,

    #[error("{what} = {value} is outside its domain")]
    Domain { what: &'static str, value: f64 },

    #[error("{0} is undefined for these inputs")]
    Undefined(&'static str),

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: bad magic number {found:#010x}, expected {expected:#010x}", path.display())]
    BadMagic {
        path: PathBuf,
        expected: u32,
        found: u32,
    },

    #[error("{}: truncated at byte offset {offset} (needed {needed} bytes, file has {len})", path.display())]
    Truncated {
        path: PathBuf,
        offset: usize,
        needed: usize,
        len: usize,
    },

    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },

    #[error("requested {requested} examples per task but only {available} are available")]
    TooFewExamples { requested: usize, available: usize },

    #[error("cannot split {classes} classes into {tasks} equal disjoint groups")]
    TooFewClasses { classes: usize, tasks: usize },

    #[error("episodic memory for task {0} is empty")]
    EmptyMemoryStore(usize),

    #[error("QP solver did not converge after {iterations} iterations (KKT residual {residual:e})")]
    QpNonConvergence { iterations: usize, residual: f64 },

    #[error("accuracy matrix is missing entries (k, i, j): {0:?}")]
    MissingEntries(Vec<(usize, usize, usize)>),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("run aborted at step {step}: {source}")]
    RunAborted {
        step: usize,
        #[source]
        source: Box<Error>,
    },
}
