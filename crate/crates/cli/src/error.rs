use bubble_tower::LabError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("check failed: {0}")]
    Check(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Check(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    pub fn context(self, what: &str) -> Self {
        match self {
            CliError::Usage(m) => CliError::Usage(format!("{what}: {m}")),
            CliError::Check(m) => CliError::Check(format!("{what}: {m}")),
            CliError::Numerical(m) => CliError::Numerical(format!("{what}: {m}")),
        }
    }
}

impl From<LabError> for CliError {
    fn from(e: LabError) -> Self {
        let msg = e.to_string();
        match e {
            LabError::Domain(_)
            | LabError::Parameter(_)
            | LabError::Configuration(_)
            | LabError::Capability(_)
            | LabError::Cfl { .. }
            | LabError::Format(_)
            | LabError::Io(_) => CliError::Usage(msg),
            LabError::DegenerateCutoff(_)
            | LabError::Resolution(_)
            | LabError::DegenerateSample(_)
            | LabError::Instability { .. }
            | LabError::BlowDown { .. }
            | LabError::Basin { .. }
            | LabError::ShootingFailed { .. }
            | LabError::Fit(_) => CliError::Numerical(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
