//! Crate-wide error taxonomy.
//!
//! Errors split into three families that the CLI maps onto exit codes:
//! - configuration/validation errors (bad graphs, parameters, shapes): exit code 2
//! - numeric failures (diverged training, failed inversions, non-finite data): exit code 3
//! - I/O and serialization errors: exit code 2 (the input was unusable)

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    // ---- configuration / validation ----
    #[error("node index {node} out of range for d={d}")]
    NodeOutOfRange { node: usize, d: usize },

    #[error("edge ({from}, {to}) would create a cycle")]
    CyclicGraph { from: usize, to: usize },

    #[error("self loop on node {0}")]
    SelfLoop(usize),

    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),

    #[error("no graph satisfies the request: {0}")]
    ImpossibleGraph(String),

    #[error("invalid parameter {name}: {reason}")]
    InvalidParam { name: String, reason: String },

    #[error("invalid intervention on node {node}: {reason}")]
    InvalidIntervention { node: usize, reason: String },

    #[error("regime index {k} out of range (model has {n_regimes} regimes)")]
    RegimeOutOfRange { k: usize, n_regimes: usize },

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("unsupported mechanism family for {op}: {family}")]
    UnsupportedFamily { op: String, family: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    // ---- numeric ----
    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("root finding failed in {context}: {reason}")]
    RootFinding { context: String, reason: String },

    #[error("matrix is singular (pivot {pivot:.3e} at column {col})")]
    SingularMatrix { pivot: f64, col: usize },

    #[error("density is not differentiable at z={0} (breakpoint)")]
    NonDifferentiablePoint(f64),

    #[error("training diverged at epoch {epoch} (seed {seed}): {reason}")]
    DivergedTraining { epoch: usize, seed: u64, reason: String },

    #[error("numeric failure: {0}")]
    Numeric(String),

    // ---- I/O ----
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Exit code the CLI reports for this error (0 is success).
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonFinite(_)
            | Error::RootFinding { .. }
            | Error::SingularMatrix { .. }
            | Error::NonDifferentiablePoint(_)
            | Error::DivergedTraining { .. }
            | Error::Numeric(_) => 3,
            _ => 2,
        }
    }
}
