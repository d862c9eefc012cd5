//! Crate-wide error type.
//!
//! One enum covers all failure classes so that results compose across the
//! sizing → simulation → tuning → design-optimization pipeline. The CLI maps
//! variants onto process exit codes via [`Error::exit_code`].

/// Failure classes for the co-design pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Malformed configuration, input file, or argument.
    #[error("configuration error: {0}")]
    Config(String),

    /// A physical parameter lies outside its documented domain.
    #[error("parameter out of domain: {0}")]
    Domain(String),

    /// Matrix dimensions are inconsistent for the requested operation.
    #[error("dimension mismatch: {0}")]
    Shape(String),

    /// No hover equilibrium exists for the given vehicle (or fault case).
    #[error("trim infeasible: {0}")]
    Trim(String),

    /// The nonlinear simulation left its validity envelope.
    #[error("simulation diverged: {0}")]
    Diverged(String),

    /// A search finished without any feasible result.
    #[error("no feasible result: {0}")]
    Infeasible(String),

    /// A closed-loop interconnection has no unique solution.
    #[error("algebraic loop: {0}")]
    AlgebraicLoop(String),

    /// A numerical routine failed to converge or produced non-finite values.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("JSON: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line frontend:
    /// `2` bad input, `3` infeasible or diverged, `4` numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Domain(_) | Error::Shape(_) | Error::Io(_) | Error::Json(_) => 2,
            Error::Trim(_) | Error::Diverged(_) | Error::Infeasible(_) => 3,
            Error::AlgebraicLoop(_) | Error::Numerical(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
