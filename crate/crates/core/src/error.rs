use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A scenario parameter is invalid or a configuration cannot be used.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("quadrature did not converge after {subdivisions} subdivisions (best estimate {best_estimate:e}, error estimate {error_estimate:e})")]
    Convergence {
        best_estimate: f64,
        error_estimate: f64,
        subdivisions: usize,
    },

    /// The posterior normaliser of a noisy belief update vanished.
    #[error("degenerate observation on channel {channel}: posterior denominator is zero")]
    DegenerateObservation { channel: usize },

    /// Malformed configuration text.
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("unknown configuration key(s): {}", .0.join(", "))]
    UnknownKeys(Vec<String>),

    /// Every invariant violation found in a configuration, as `key: message`.
    #[error("invalid configuration: {}", .0.join("; "))]
    Invalid(Vec<String>),

    /// Malformed command-line style input such as an override without `=`.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("episode failed at slot {slot}, SU {su:?}, channel {channel:?}: {source}")]
    Episode {
        slot: usize,
        su: Option<usize>,
        channel: Option<usize>,
        #[source]
        source: Box<Error>,
    },

    #[error("replication {index} failed: {source}")]
    Replication {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
