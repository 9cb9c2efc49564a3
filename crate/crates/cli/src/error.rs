use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io { .. } => 1,
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Bad parameters are the caller's fault; anything else is numerical.
impl From<dmabeam::Error> for CliError {
    fn from(e: dmabeam::Error) -> Self {
        match e {
            dmabeam::Error::InvalidParameter(_)
            | dmabeam::Error::LengthMismatch { .. }
            | dmabeam::Error::DomainMismatch { .. }
            | dmabeam::Error::Parse(_)
            | dmabeam::Error::Csv(_)
            | dmabeam::Error::DuplicateCapacitance(_)
            | dmabeam::Error::EmptyTable => CliError::Config(e.to_string()),
            dmabeam::Error::ZeroWeight | dmabeam::Error::Oracle(_) => CliError::Numerical(e.to_string()),
            dmabeam::Error::Io(source) => CliError::Io {
                path: String::from("<stream>"),
                source,
            },
        }
    }
}
