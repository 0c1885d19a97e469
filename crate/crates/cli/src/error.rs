use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {message}", location(path, *line))]
    Config {
        path: PathBuf,
        line: Option<usize>,
        message: String,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: {message}", path.display())]
    Format {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("{}: no data", path.display())]
    NoData { path: PathBuf },
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error(transparent)]
    Core(#[from] deahes::Error),
}

fn location(path: &std::path::Path, line: Option<usize>) -> String {
    match line {
        Some(l) => format!("{}:{l}", path.display()),
        None => path.display().to_string(),
    }
}

impl CliError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status: 2 for configuration problems, 3 for unreadable
    /// or unwritable files and malformed input data, 4 for numeric failure.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Io { .. } | CliError::Format { .. } | CliError::NoData { .. } => 3,
            CliError::Numeric(_) => 4,
            CliError::Core(e) => match e {
                deahes::Error::Config(_) | deahes::Error::Shape { .. } => 2,
                deahes::Error::Io(_) | deahes::Error::Format(_) | deahes::Error::Consistency(_) => 3,
                deahes::Error::Numeric(_)
                | deahes::Error::Contract(_)
                | deahes::Error::InsufficientHistory(_) => 4,
            },
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
