use thiserror::Error;

use regolith_core::Error as CoreError;

/// Process exit code for a successful command.
pub const EXIT_OK: u8 = 0;
/// Bad flags, unreadable or invalid config, invalid tool spec.
pub const EXIT_USAGE: u8 = 2;
/// Failure while simulating or writing results.
pub const EXIT_RUNTIME: u8 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{path}: {source}")]
    Config {
        path: String,
        #[source]
        source: CoreError,
    },

    #[error("episode {index} (seed {seed}): {source}")]
    Episode {
        index: usize,
        seed: u64,
        #[source]
        source: CoreError,
    },

    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config { .. } => EXIT_USAGE,
            CliError::Core(e) if is_input_error(e) => EXIT_USAGE,
            _ => EXIT_RUNTIME,
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

fn is_input_error(e: &CoreError) -> bool {
    matches!(e, CoreError::InvalidConfig { .. } | CoreError::InvalidToolSpec { .. })
}

pub type CliResult<T> = std::result::Result<T, CliError>;
