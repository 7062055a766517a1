use dytgraph::Error;
use std::fmt::Display;
use std::path::Path;

pub const USAGE: u8 = 1;
pub const DATA: u8 = 2;
pub const NUMERICAL: u8 = 3;

/// A one-line diagnostic and the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Display) -> Self {
        Self {
            code: USAGE,
            message: message.to_string(),
        }
    }

    pub fn data(message: impl Display) -> Self {
        Self {
            code: DATA,
            message: message.to_string(),
        }
    }

    pub fn missing(what: &str, path: &Path) -> Self {
        Self::data(format!("missing {what}: {}", path.display()))
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config(_) => USAGE,
            e if e.is_numerical() => NUMERICAL,
            _ => DATA,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

/// Adds the offending path to errors from reading or writing it.
pub trait Context<T> {
    fn at(self, path: &Path) -> Result<T, Failure>;
}

impl<T, E: Into<Failure>> Context<T> for Result<T, E> {
    fn at(self, path: &Path) -> Result<T, Failure> {
        self.map_err(|e| {
            let f = e.into();
            Failure {
                code: f.code,
                message: format!("{}: {}", path.display(), f.message),
            }
        })
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::data(e)
    }
}
