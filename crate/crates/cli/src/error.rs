use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{path}: line {line}: {msg}")]
    Parse { path: PathBuf, line: u64, msg: String },

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Core(#[from] sim_spline::Error),

    #[error("fit did not converge after {0} iterations; output written with \"converged\": false")]
    NotConverged(usize),
}

impl CliError {
    /// 1 for bad input, 2 for numerical trouble, 3 for anything else.
    pub fn exit_code(&self) -> u8 {
        use sim_spline::Error as E;
        match self {
            Self::Usage(_) | Self::Parse { .. } | Self::Io { .. } => 1,
            Self::NotConverged(_) => 2,
            Self::Core(e) => match e {
                E::InvalidInput(_) | E::DegenerateSample | E::Domain { .. } => 1,
                E::Numerical(_)
                | E::SingularDesign
                | E::Initialization
                | E::PathDegenerate(_)
                | E::BootstrapInstability { .. } => 2,
                E::Serde(_) => 3,
            },
        }
    }

    pub fn parse(path: &std::path::Path, line: u64, msg: impl Into<String>) -> Self {
        Self::Parse { path: path.to_path_buf(), line, msg: msg.into() }
    }
}

pub type CliResult<T> = Result<T, CliError>;
