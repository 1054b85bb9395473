use thiserror::Error;

/// Errors raised anywhere in the laboratory.
#[derive(Debug, Error)]
pub enum LabError {
    /// Malformed numeric input (wrong shape, non-finite entries, bad ranges).
    #[error("invalid input: {0}")]
    Input(String),
    /// A documented precondition of an operation does not hold.
    #[error("precondition failed: {0}")]
    Precondition(String),
    /// A numerical routine could not reach its target accuracy.
    #[error("numerical failure: {0}")]
    Numeric(String),
    /// An iterative solve stopped before meeting its tolerance.
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },
    /// Two objects that must share a grid or stencil do not.
    #[error("structural mismatch: {0}")]
    Structure(String),
    /// Too few grid nodes to support the requested measurement.
    #[error("insufficient resolution: {0}")]
    Resolution(String),
    /// A named parameter constraint is violated.
    #[error("constraint `{constraint}` violated: {detail}")]
    Constraint { constraint: &'static str, detail: String },
    /// Scenario configuration problem, tagged with the offending key.
    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },
    /// Any of the above, raised while running the named scenario.
    #[error("scenario `{name}`: {source}")]
    Scenario {
        name: String,
        #[source]
        source: Box<LabError>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;

impl LabError {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        LabError::Config { key: key.into(), message: message.into() }
    }

    pub fn in_scenario(self, name: &str) -> Self {
        match self {
            e @ LabError::Scenario { .. } => e,
            e => LabError::Scenario { name: name.to_string(), source: Box::new(e) },
        }
    }

    /// 2 when a solve did not converge, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::NonConvergence { .. } => 2,
            LabError::Scenario { source, .. } => source.exit_code(),
            _ => 1,
        }
    }
}
