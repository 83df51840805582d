use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the simulation and solver pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration field `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("degenerate contact: centers of bodies {i} and {j} coincide")]
    DegenerateContact { i: usize, j: usize },

    #[error("singular matrix: pivot {pivot:e} in column {column} (max |a_ij| = {scale:e})")]
    SingularMatrix {
        column: usize,
        pivot: f64,
        scale: f64,
    },

    #[error("numerically singular matrix: sigma_min / sigma_max = {ratio:e}")]
    NumericallySingular { ratio: f64 },

    #[error("degenerate solution direction: A x is orthogonal to b")]
    DegenerateSolution,

    #[error("amplitude underflow at spin configuration {0:#b}")]
    AmplitudeUnderflow(usize),

    #[error("problem too large: {0}")]
    Infeasible(String),

    #[error("inner linear solve failed at Newton iteration {iteration}: {source}")]
    InnerSolve {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("LCP did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("could not place body {placed} of {requested} without overlap")]
    PackingInfeasible { placed: usize, requested: usize },

    #[error("bundle at {dir} is missing `{file}`")]
    MissingBundleFile { dir: PathBuf, file: String },

    #[error("parse error in {path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn config(field: &str, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.to_string(),
            reason: reason.into(),
        }
    }

    /// True for failures caused by the numerics rather than by the input or the filesystem.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularMatrix { .. }
                | Error::NumericallySingular { .. }
                | Error::DegenerateSolution
                | Error::AmplitudeUnderflow(_)
                | Error::InnerSolve { .. }
                | Error::NonConvergence { .. }
                | Error::DegenerateContact { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
