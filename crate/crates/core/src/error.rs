use thiserror::Error;

/// A single violated configuration field.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for FieldError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} out of domain: {detail}")]
    Domain { what: &'static str, detail: String },

    #[error("quadrature did not converge: estimate {estimate}, error estimate {error_estimate} after {subdivisions} subdivisions")]
    Quadrature {
        estimate: f64,
        error_estimate: f64,
        subdivisions: usize,
    },

    #[error("special function failed to converge: {0}")]
    Convergence(&'static str),

    #[error("cell (delta_0={delta_0}, delta_1={delta_1}): {source}")]
    Cell {
        delta_0: f64,
        delta_1: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid configuration: {}", join_fields(.0))]
    Config(Vec<FieldError>),

    #[error("config parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn join_fields(fields: &[FieldError]) -> String {
    fields
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    pub(crate) fn domain(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
            what,
            detail: detail.into(),
        }
    }

    /// True for configuration and parse failures, as opposed to numeric ones.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Parse(_) | Error::Domain { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
