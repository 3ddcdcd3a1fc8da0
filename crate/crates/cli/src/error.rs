use thiserror::Error;
use vmsrom::fom::{FileError, FomError};
use vmsrom::pod::PodError;
use vmsrom::rom::RomError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    File(#[from] FileError),
    #[error("{0}")]
    Numerical(String),
    #[error("{0}")]
    Divergence(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::File(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Divergence(_) => 4,
        }
    }
}

impl From<FomError> for CliError {
    fn from(e: FomError) -> Self {
        match e {
            FomError::Divergence { .. } => CliError::Divergence(e.to_string()),
            FomError::LinearSolve { .. } => CliError::Numerical(e.to_string()),
            FomError::UnsupportedGeometry(_) | FomError::InvalidConfig(_) => {
                CliError::Config(e.to_string())
            }
        }
    }
}

impl From<PodError> for CliError {
    fn from(e: PodError) -> Self {
        match e {
            PodError::InconsistentLengths { .. } => CliError::Config(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<RomError> for CliError {
    fn from(e: RomError) -> Self {
        match e {
            RomError::Divergence { .. } => CliError::Divergence(e.to_string()),
            RomError::Singular { .. } => CliError::Numerical(e.to_string()),
            RomError::DimensionMismatch(_) | RomError::TimeGridMismatch(_) => {
                CliError::Config(e.to_string())
            }
        }
    }
}
