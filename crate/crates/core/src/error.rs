use std::path::PathBuf;

use thiserror::Error;

use crate::space::Violation;

pub type Result<T, E = JgwError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum JgwError {
    #[error("cluster {cluster} is empty")]
    EmptyCluster { cluster: usize },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("nonpositive weight {value} at cluster {cluster}, point {index}")]
    NonPositiveWeight {
        cluster: usize,
        index: usize,
        value: f64,
    },

    #[error("invalid space: {}", format_violations(.0))]
    InvalidSpace(Vec<Violation>),

    #[error("shape mismatch for {what}: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        what: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("invalid config value for \"{key}\": {reason}")]
    InvalidConfig { key: String, reason: String },

    #[error("kernel {axis} {index} has no positive entry")]
    ZeroKernelLine { axis: &'static str, index: usize },

    #[error("numerical fault: {0}")]
    Numerical(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}:{line}: {message}", .path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{}: {message}", .path.display())]
    Schema { path: PathBuf, message: String },
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

impl JgwError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        JgwError::Io {
            path: path.into(),
            source,
        }
    }
}
