use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("step size underflow at t = {t}")]
    StepSizeUnderflow { t: f64 },

    #[error("integration exceeded {max_steps} steps at t = {t}")]
    TooManySteps { max_steps: usize, t: f64 },

    #[error("non-finite state at step {step}: {state:?}")]
    NonFinite { step: usize, state: [f64; 3] },

    #[error("steady state absent: {0}")]
    SteadyStateAbsent(String),

    #[error("singularity line reached at (x̄, ȳ) = ({x_bar}, {y_bar})")]
    Singularity { x_bar: f64, y_bar: f64 },

    #[error("no physical substrate value at (x̄, ȳ) = ({x_bar}, {y_bar})")]
    NoPhysicalRoot { x_bar: f64, y_bar: f64 },

    #[error("root not bracketed: {0}")]
    NoBracket(String),

    #[error("operator assembly: {0}")]
    Assembly(String),

    #[error("linear solver stalled after {iterations} iterations (relative residual {residual:e})")]
    SolverDiverged { iterations: usize, residual: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io { path: path.as_ref().display().to_string(), source }
    }

    /// Process exit status used by the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter { .. } | Error::Precondition(_) | Error::Config(_) => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
