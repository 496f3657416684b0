use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported dimension {0} (expected 1 or 2)")]
    UnsupportedDimension(usize),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("field length {got} does not match {expected} interior points")]
    SizeMismatch { expected: usize, got: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid eigenmode index {0:?}")]
    InvalidModeIndex(Vec<usize>),

    #[error("lambda {0} out of (0,1)")]
    LambdaOutOfRange(f64),

    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    LinearSolve { iterations: usize, residual: f64 },

    #[error("newton iteration did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    Newton { iterations: usize, residual: f64 },

    #[error("non-finite value in solution field")]
    NonFinite,

    #[error("step failed at t = {t}: {source}")]
    Step {
        t: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("initial datum below critical state at grid point {index} (x = {value}, Xc = {critical})")]
    BelowCritical {
        index: usize,
        value: f64,
        critical: f64,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("{}", format_config_errors(.0))]
    Config(Vec<ConfigIssue>),

    #[error("report: {0}")]
    Report(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// A single configuration problem, located by line when the source text is known.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigIssue {
    pub line: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

fn format_config_errors(issues: &[ConfigIssue]) -> String {
    let lines: Vec<String> = issues.iter().map(|i| i.to_string()).collect();
    format!("invalid configuration:\n  {}", lines.join("\n  "))
}

impl Error {
    pub(crate) fn at_time(self, t: f64) -> Self {
        Error::Step {
            t,
            source: Box::new(self),
        }
    }

    /// CLI exit code: 1 config error, 2 numerical failure, 3 I/O error.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Config(_)
            | Error::BelowCritical { .. }
            | Error::LambdaOutOfRange(_)
            | Error::UnsupportedDimension(_)
            | Error::InvalidGrid(_)
            | Error::InvalidModeIndex(_) => 1,
            Error::Io(_) | Error::Csv(_) | Error::Json(_) => 3,
            _ => 2,
        }
    }
}
