use std::path::PathBuf;

use thiserror::Error;

use crate::ltv::FeasibilityReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain an operation is defined on.
    #[error("domain error: {0}")]
    Domain(String),

    /// A caller broke an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A node was asked to range to another node beyond its radius.
    #[error("node {to} is out of range of node {from} (distance {distance:.6} > radius {radius})")]
    OutOfRange {
        from: usize,
        to: usize,
        distance: f64,
        radius: f64,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("configuration violates the necessary localizability conditions: {0}")]
    Infeasible(FeasibilityReport),

    #[error("i/o error on {}: {source}", path.display())]
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
