use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    /// A rate combination with no defined answer, e.g. no light at all.
    #[error("degenerate rates: {0}")]
    DegenerateRates(&'static str),

    #[error("step size underflow at t = {t:e} s (h = {h:e} s)")]
    StiffnessFailure { t: f64, h: f64 },

    #[error("step budget of {max_steps} exhausted at t = {t:e} s")]
    StepBudgetExhausted { t: f64, max_steps: usize },

    #[error("adiabatic elimination unjustified: I(m)*L = {saturation:.3e} for m = {m} exceeds {limit}")]
    RegimeViolation { m: i8, saturation: f64, limit: f64 },

    #[error("oscillation unresolved: {0}")]
    OscillationUnresolved(String),

    #[error("fit did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("value {value} out of range: {reason}")]
    OutOfRange { value: f64, reason: &'static str },

    #[error("trajectory records do not share one configuration (record {index})")]
    ConfigMismatch { index: usize },

    #[error("infeasible design, binding constraint: {constraint}")]
    Infeasible { constraint: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("malformed input at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
