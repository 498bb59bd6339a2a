use thiserror::Error;

/// Errors raised anywhere in the simulator.
///
/// Every variant maps onto one of the process exit codes used by the
/// command-line driver (see [`Error::exit_code`]).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("configuration rejected:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("unknown {kind} `{value}`")]
    UnknownTag { kind: &'static str, value: String },

    #[error("eigensolver failed for realization {index} (seed {seed:#018x}): {reason}")]
    NonConvergence { index: u64, seed: u64, reason: String },

    #[error("linear solve failed: {0}")]
    SolverBreakdown(String),

    #[error("{count} degenerate eigenpair(s) with |E_n - E_m| below {threshold:e}")]
    DegeneratePairs { count: usize, threshold: f64 },

    #[error("bound violated: {0}")]
    BoundViolation(String),

    #[error("frequency {0} is not an edge of the bin grid")]
    OffGrid(f64),

    #[error("field grid [{lo}, {hi}] does not cover measure support at {point}")]
    FieldCoverage { lo: f64, hi: f64, point: f64 },

    #[error("partials carry different configuration hashes ({0} vs {1})")]
    MixedConfig(String, String),

    #[error("empty result: {0}")]
    Empty(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code: 2 validation, 3 numerical failure, 4 empty result.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonConvergence { .. }
            | Error::SolverBreakdown(_)
            | Error::DegeneratePairs { .. }
            | Error::BoundViolation(_) => 3,
            Error::Empty(_) => 4,
            Error::Io(_) | Error::Csv(_) | Error::Json(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
