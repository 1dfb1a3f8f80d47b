use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("unknown agent id {0}")]
    NotFound(u32),

    #[error("`{field}` = {value} is outside [{min}, {max}]")]
    BoundViolation {
        field: String,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("entitativity matrix is not invertible (|det| = {det:e})")]
    SingularMapping { det: f64, matrix: Box<[[f64; 4]; 4]> },

    #[error("study data incomplete, missing pairs {missing:?}")]
    IncompleteData { missing: Vec<u8> },

    #[error("fit error: {0}")]
    Fit(String),

    #[error("statistics error: item `{item}` has zero variance")]
    Statistics { item: &'static str },

    #[error("insufficient data: need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("world error: {0}")]
    World(String),

    #[error("planning error: {0}")]
    Planning(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{}", fmt_validation(.path, .line, .message))]
    Validation {
        path: String,
        line: Option<usize>,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn fmt_validation(path: &str, line: &Option<usize>, message: &str) -> String {
    match line {
        Some(l) => format!("validation error at `{path}` (line {l}): {message}"),
        None => format!("validation error at `{path}`: {message}"),
    }
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn validation(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            path: path.into(),
            line: None,
            message: message.into(),
        }
    }

    /// True for errors caused by bad user-supplied data or configuration,
    /// as opposed to failures that happen while a valid run executes.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Input(_)
                | Error::BoundViolation { .. }
                | Error::Parse { .. }
                | Error::Validation { .. }
                | Error::IncompleteData { .. }
                | Error::InsufficientData { .. }
                | Error::Config(_)
                | Error::World(_)
        )
    }
}
