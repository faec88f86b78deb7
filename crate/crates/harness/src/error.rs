use std::fmt;
use std::process::ExitCode;

use crate::mnist::IdxError;

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

/// Failure class, mapped one-to-one onto the process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
    Io,
}

impl ErrorKind {
    pub fn exit_code(self) -> u8 {
        match self {
            ErrorKind::Io => 1,
            ErrorKind::Config => 2,
            ErrorKind::Data => 3,
            ErrorKind::Numerical => 4,
        }
    }
}

#[derive(Debug)]
pub struct HarnessError {
    pub kind: ErrorKind,
    pub error: anyhow::Error,
}

impl HarnessError {
    pub fn new(kind: ErrorKind, error: impl Into<anyhow::Error>) -> Self {
        Self {
            kind,
            error: error.into(),
        }
    }

    pub fn config(msg: impl fmt::Display) -> Self {
        Self::new(ErrorKind::Config, anyhow::anyhow!("{msg}"))
    }

    pub fn data(msg: impl fmt::Display) -> Self {
        Self::new(ErrorKind::Data, anyhow::anyhow!("{msg}"))
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.kind.exit_code())
    }

    pub fn context(self, ctx: impl fmt::Display + Send + Sync + 'static) -> Self {
        Self {
            kind: self.kind,
            error: self.error.context(ctx),
        }
    }
}

impl fmt::Display for HarnessError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

impl std::error::Error for HarnessError {}

impl From<oesnn_core::Error> for HarnessError {
    fn from(e: oesnn_core::Error) -> Self {
        use oesnn_core::Error as E;
        let kind = if e.is_numerical() {
            ErrorKind::Numerical
        } else {
            match e {
                E::EmptyDataset | E::WeightsFormat(_) | E::Json(_) | E::Io(_) => ErrorKind::Data,
                _ => ErrorKind::Config,
            }
        };
        Self::new(kind, e)
    }
}

impl From<IdxError> for HarnessError {
    fn from(e: IdxError) -> Self {
        Self::new(ErrorKind::Data, e)
    }
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        Self::new(ErrorKind::Io, e)
    }
}

impl From<csv::Error> for HarnessError {
    fn from(e: csv::Error) -> Self {
        Self::new(ErrorKind::Io, e)
    }
}

/// Attach context to core results while keeping their classification.
pub trait Context<T> {
    fn ctx(self, what: &str) -> Result<T>;
}

impl<T, E: Into<HarnessError>> Context<T> for std::result::Result<T, E> {
    fn ctx(self, what: &str) -> Result<T> {
        self.map_err(|e| e.into().context(what.to_string()))
    }
}
