use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by mechanism handling, the solvers and the I/O layer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("reaction {index} ({equation}): element balance violated for {element}")]
    Unbalanced {
        index: usize,
        equation: String,
        element: String,
    },
    #[error("unknown species `{0}`")]
    UnknownSpecies(String),
    #[error("invalid mechanism: {0}")]
    InvalidMechanism(String),
    #[error("missing thermo data for species `{0}`")]
    MissingThermo(String),
    #[error("total moles must be positive (got {0})")]
    NonPositiveTotal(f64),
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("singular linear system (condition estimate {cond:.3e})")]
    Singular { cond: f64 },
    #[error("feasibility restoration failed: {0}")]
    Restoration(String),
    #[error("sensitivities unavailable: {0}")]
    SensitivityUnavailable(String),
    #[error("integration failed at t = {t:.6e}: {msg}")]
    Integration { t: f64, msg: String },
    #[error("equilibrium relaxation failed: {0}")]
    Equilibrium(String),
    #[error("continuation failed at r = {r:?}: {msg}")]
    PathFailure { r: Vec<f64>, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
