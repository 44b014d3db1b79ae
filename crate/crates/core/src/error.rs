use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("{path}: line {line}: {message}")]
    Csv {
        path: String,
        line: u64,
        message: String,
    },

    #[error("unknown node `{0}`")]
    UnknownNode(String),

    #[error("graph contains a directed cycle: {}", .0.join(" -> "))]
    Cycle(Vec<String>),

    #[error("duplicate edge {0} -> {1}")]
    DuplicateEdge(String, String),

    #[error("edges {0} -> {1} and {1} -> {0} cannot both be present")]
    AntiparallelEdge(String, String),

    #[error("constraint error: {0}")]
    Constraint(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("rank-deficient parent design for node `{0}`")]
    RankDeficient(String),

    #[error("zero residual variance for node `{0}`")]
    DegenerateVariance(String),

    #[error("singular evidence covariance: {0}")]
    SingularEvidence(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the command line: 2 for input problems,
    /// 3 for numerical or search failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::RankDeficient(_)
            | Error::DegenerateVariance(_)
            | Error::SingularEvidence(_)
            | Error::Numerical(_) => 3,
            _ => 2,
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        let line = e.position().map(|p| p.line()).unwrap_or(0);
        Error::Csv {
            path: String::from("<csv>"),
            line,
            message: e.to_string(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
