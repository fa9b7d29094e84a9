use thiserror::Error;

/// Errors produced by estimator construction, selection, and I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// A point or index fell outside its admissible domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A stated contract was violated by the supplied data (for example a
    /// bound `B` that does not actually hold on an observation).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Too few observations for the requested operation.
    #[error("sample size error: {0}")]
    SampleSize(String),

    /// An invalid configuration parameter.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// A construction (wavelet family, prior, sampled function) could not be
    /// completed within its validity constraints.
    #[error("construction error: {0}")]
    Construction(String),

    /// Numerical failure (non-finite intermediate, failed quadrature).
    #[error("numerical error: {0}")]
    Numerical(String),

    /// The Lepski grid has no selectable entry (`s_star == N`).
    #[error("grid degenerate: {0}")]
    GridDegenerate(String),

    /// Denominator of the treatment-effect ratio fell below its floor.
    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    /// Exhaustive enumeration would exceed the configured budget.
    #[error("budget exceeded: {0}")]
    Budget(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Exit code mapping used by the CLI: contract-type failures map to 2,
    /// I/O failures to 3.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::Csv(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
