use thiserror::Error;

/// Errors produced by the simulation and analysis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Parameter validation failed; every violated constraint is listed.
    #[error("invalid parameters:\n  - {}", .0.join("\n  - "))]
    InvalidParams(Vec<String>),

    /// The adaptive integrator could not continue.
    #[error("integration failed at t = {time_us} us: {reason}")]
    IntegrationFailure { time_us: f64, reason: String },

    /// A quantum-jump trajectory hit a numerical breakdown.
    #[error("trajectory {trial} failed at t = {time_us} us: {reason}")]
    Numerical {
        trial: u64,
        time_us: f64,
        reason: String,
    },

    /// Configuration schema or semantic violations, one entry per problem.
    #[error("configuration error:\n  - {}", .0.join("\n  - "))]
    Config(Vec<String>),

    /// Input files an operation needs but could not find, one entry each.
    #[error("missing inputs:\n  - {}", .0.join("\n  - "))]
    MissingInputs(Vec<String>),

    /// Malformed input file contents.
    #[error("parse error in {source_name}: {message}")]
    Parse {
        source_name: String,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
