//! Spec-driven experiment runner for `swssb-core`.

pub mod output;
pub mod run;
pub mod spec;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Physics(#[from] swssb_core::Error),
    #[error("{context}: {source}")]
    Context { context: String, source: swssb_core::Error },
    #[error("i/o: {0}")]
    Io(String),
}

impl CliError {
    /// 0 ok, 1 physics or runtime failure, 2 usage.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

pub(crate) trait Ctx<T> {
    fn ctx(self, what: impl FnOnce() -> String) -> Result<T, CliError>;
}

impl<T> Ctx<T> for swssb_core::Result<T> {
    fn ctx(self, what: impl FnOnce() -> String) -> Result<T, CliError> {
        self.map_err(|source| CliError::Context { context: what(), source })
    }
}
