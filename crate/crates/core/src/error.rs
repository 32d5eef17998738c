use thiserror::Error;

/// Errors produced by the library and the command-line front end.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A required precondition of an operation does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error(
        "minimizer not bracketed: D({lo}) = {d_lo:.6e}, D({hi}) = {d_hi:.6e} (no sign change)"
    )]
    NotBracketed { lo: f64, hi: f64, d_lo: f64, d_hi: f64 },

    /// Monte Carlo noise is too large for the requested analysis.
    #[error("budget insufficient: {0}")]
    BudgetInsufficient(String),

    /// Monte Carlo estimate of a moment moved too much under sample doubling.
    #[error("divergence suspected at theta = {theta}: estimate moved from {half:.6e} to {full:.6e} (se {se:.3e})")]
    DivergenceSuspected { theta: f64, half: f64, full: f64, se: f64 },

    /// A replicate exceeded the particle budget.
    #[error("replicate {replicate} exceeded the particle cap {cap} at t = {t}{}", suggestion(*.suggested_max_t))]
    Truncated {
        replicate: u64,
        cap: usize,
        t: f64,
        suggested_max_t: Option<f64>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn suggestion(t: Option<f64>) -> String {
    match t {
        Some(t) => format!("; try t <= {t:.2}"),
        None => String::new(),
    }
}

impl Error {
    /// Process exit code for the command-line front end: 1 for configuration
    /// problems, 2 for analysis failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Json(_) | Error::Io(_) | Error::Csv(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
