use std::path::PathBuf;

use thiserror::Error;

/// Broad failure categories. The CLI maps each one to a distinct exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Io,
    Ingestion,
    Parameter,
    Degenerate,
    Numerical,
    Topology,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("invalid input surface: {0}")]
    Ingestion(String),

    #[error("degenerate cell {cell}: area {area:e} is below the floor")]
    DegenerateCell { cell: usize, area: f64 },

    #[error("linear solver stopped after {iterations} iterations with relative residual {residual:e}")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("non-positive density {value:e} at node ({i}, {j})")]
    Positivity { i: usize, j: usize, value: f64 },

    #[error("reference map folds in cell ({i}, {j})")]
    Fold { i: usize, j: usize },

    #[error("contours xi1 = {i}h and xi2 = {j}h do not intersect")]
    MissingIntersection { i: usize, j: usize },

    #[error("contours xi1 = {i}h and xi2 = {j}h intersect at {count} distinct points")]
    AmbiguousIntersection { i: usize, j: usize, count: usize },

    #[error("flattened map is missing {} nodes (first: {:?})", .0.len(), .0.first())]
    IncompleteMap(Vec<(usize, usize)>),

    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Parameter(_) => ErrorKind::Parameter,
            Error::Ingestion(_) => ErrorKind::Ingestion,
            Error::DegenerateCell { .. } => ErrorKind::Degenerate,
            Error::NoConvergence { .. } | Error::Positivity { .. } => ErrorKind::Numerical,
            Error::Fold { .. }
            | Error::MissingIntersection { .. }
            | Error::AmbiguousIntersection { .. }
            | Error::IncompleteMap(_) => ErrorKind::Topology,
            Error::AtIteration { source, .. } => source.kind(),
            Error::Io { .. } => ErrorKind::Io,
        }
    }

    pub(crate) fn at_iteration(self, iteration: usize) -> Error {
        Error::AtIteration {
            iteration,
            source: Box::new(self),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Error {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
