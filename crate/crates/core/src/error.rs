use thiserror::Error;

/// A positioned diagnostic produced by the model parser or the file readers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.column, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("constraint arity mismatch: expected {expected} logvars, got {got}")]
    ArityMismatch { expected: usize, got: usize },

    #[error("constant {constant} is not in the domain of logvar {logvar}")]
    NotInDomain { logvar: String, constant: String },

    #[error("parfactors are not aligned on {0}; split first")]
    Alignment(String),

    #[error("{0} cannot be summed out")]
    NotEliminable(String),

    #[error("logvar {0} occurs in more than one argument")]
    NotCountable(String),

    #[error("logvar {0} is not count-normalised")]
    NotCountNormalised(String),

    #[error("value {value} is outside the range of {prv}")]
    Range { prv: String, value: String },

    #[error("query {0} is not covered by any parcluster")]
    QueryNotCovered(String),

    #[error("{what} needs {size} entries, over the budget of {budget}")]
    Budget { what: String, size: f64, budget: f64 },

    #[error("fit needs at least {needed} points, got {got}")]
    Fit { needed: usize, got: usize },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{} parse error(s), first: {}", .0.len(), .0.first().map(|d| d.to_string()).unwrap_or_default())]
    Parse(Vec<Diagnostic>),
}

pub type Result<T> = std::result::Result<T, Error>;
