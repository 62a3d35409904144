use std::path::Path;

use serde::Serialize;
use thiserror::Error;

/// Failure categories; the first two are problems with what the caller
/// supplied, the last two happen while working.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Usage,
    InvalidInput,
    Compute,
    Io,
}

impl Category {
    pub fn exit_code(self) -> i32 {
        match self {
            Category::Usage | Category::InvalidInput => 2,
            Category::Compute | Category::Io => 3,
        }
    }
}

#[derive(Debug, Error)]
#[error("{message}")]
pub struct CliError {
    pub category: Category,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError { category: Category::Usage, message: message.into() }
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        CliError { category: Category::InvalidInput, message: message.into() }
    }

    pub fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError { category: Category::Io, message: format!("{}: {err}", path.display()) }
    }

    /// Reading a caller-supplied file failed.
    pub fn read(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::usage(format!("{}: {err}", path.display()))
    }

    /// One-line JSON for stderr.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Body<'a> {
            category: Category,
            message: &'a str,
        }
        #[derive(Serialize)]
        struct Wrapper<'a> {
            error: Body<'a>,
        }
        serde_json::to_string(&Wrapper { error: Body { category: self.category, message: &self.message } })
            .expect("error body serializes")
    }
}

impl From<powercap::Error> for CliError {
    fn from(err: powercap::Error) -> Self {
        match err {
            powercap::Error::RejectedInput(m) => CliError::invalid(m),
            e @ powercap::Error::Fit { .. } => CliError { category: Category::Compute, message: e.to_string() },
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
