use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("budget exceeded: {what} needs {needed}, limit is {limit}")]
    BudgetExceeded {
        what: &'static str,
        needed: u128,
        limit: u128,
    },

    #[error("numeric failure: {message} (residual {residual:e})")]
    Numeric { message: String, residual: f64 },

    #[error("censored sample: step cap {cap} reached")]
    Censored { cap: u64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_) => 2,
            Error::BudgetExceeded { .. } => 3,
            Error::Numeric { .. } => 4,
            Error::Censored { .. } => 5,
            // An unreadable config or unwritable output is reported as bad input.
            Error::Io(_) => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
