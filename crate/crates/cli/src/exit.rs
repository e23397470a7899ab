use std::fmt;

use unitdub::Error;

pub const CONFIG: i32 = 2;
pub const DATA: i32 = 3;
pub const INTERNAL: i32 = 4;

pub type CliResult<T> = std::result::Result<T, CliError>;

/// An error paired with the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub error: anyhow::Error,
}

impl CliError {
    pub fn new(code: i32, error: impl Into<anyhow::Error>) -> Self {
        Self {
            code,
            error: error.into(),
        }
    }

    pub fn config(msg: impl fmt::Display) -> Self {
        Self::new(CONFIG, anyhow::anyhow!("{msg}"))
    }

    pub fn data(msg: impl fmt::Display) -> Self {
        Self::new(DATA, anyhow::anyhow!("{msg}"))
    }

    pub fn internal(msg: impl fmt::Display) -> Self {
        Self::new(INTERNAL, anyhow::anyhow!("{msg}"))
    }

    pub fn context(self, ctx: impl fmt::Display) -> Self {
        Self {
            code: self.code,
            error: self.error.context(ctx.to_string()),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config(_) => CONFIG,
            Error::UnitOutOfRange { .. }
            | Error::InvalidRuns { .. }
            | Error::EmptySequence
            | Error::LengthMismatch { .. }
            | Error::DimensionMismatch { .. }
            | Error::VocabMismatch(_)
            | Error::MalformedRecord { .. }
            | Error::Empty(_)
            | Error::Undefined(_)
            | Error::Io(_)
            | Error::Json(_) => DATA,
            _ => INTERNAL,
        };
        Self::new(code, e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::new(DATA, e)
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::new(DATA, e)
    }
}
