use std::path::PathBuf;

use latticetrap::Error as CoreError;
use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

/// Process exit codes.
pub const EXIT_NUMERICAL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("cannot parse {path}: {source}")]
    Toml {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },

    #[error("output directory {0} is locked by another run (remove the lockfile if that run is dead)")]
    Locked(PathBuf),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] CoreError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        Self::Config(msg.into())
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Self::Io { context: context.into(), source }
    }

    /// 2 for anything the user can fix in the config or invocation, 1 for
    /// numerical failures and I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Toml { .. } | Self::Locked(_) => EXIT_CONFIG,
            Self::Io { .. } | Self::Json(_) => EXIT_NUMERICAL,
            Self::Core(e) => core_exit_code(e),
        }
    }
}

fn core_exit_code(e: &CoreError) -> i32 {
    use CoreError::*;
    match e {
        HoleOverlap { .. }
        | InvalidDimension { .. }
        | EmptyLattice(..)
        | Resolution { .. }
        | MarginTooSmall { .. }
        | TooManyNodes { .. }
        | InvalidParameter(_)
        | MissingZ1
        | SiteOutOfRange(..)
        | Toml(_) => EXIT_CONFIG,
        _ => EXIT_NUMERICAL,
    }
}
