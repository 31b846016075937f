use std::path::PathBuf;

use thiserror::Error;

/// Failures of a subcommand, each mapped to an exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {source}")]
    Parse {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Core(#[from] maxcert::Error),
    #[error("{0} stopped at the node limit; partial certificate written")]
    NodeLimit(&'static str),
    /// Every table row failed; holds the exit code of the first failure.
    #[error("every table row failed")]
    TableFailed(u8),
}

impl CliError {
    /// 1 = configuration, 2 = infeasible or degenerate model, 3 = numerical.
    pub fn exit_code(&self) -> u8 {
        use maxcert::Error as E;
        match self {
            CliError::Config(_) | CliError::Read { .. } | CliError::Parse { .. } => 1,
            CliError::Write { .. } | CliError::Csv(_) => 1,
            CliError::NodeLimit(_) => 3,
            CliError::TableFailed(code) => *code,
            CliError::Core(e) => match e {
                E::DimensionMismatch { .. } | E::InvalidInput(_) => 1,
                E::Numerical(_)
                | E::NoConvergence(_)
                | E::IterationCap(_)
                | E::Divergence(_)
                | E::CertificationFailure { .. } => 3,
                _ => 2,
            },
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
