use thiserror::Error;

/// Errors raised by the laboratory. Variants map onto the failure classes
/// the CLI distinguishes (usage/domain problems vs. numerical failures).
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("orthogonality profile is degenerate: normalization {0:e} below threshold")]
    DegenerateCutoff(f64),

    #[error("quadrature did not converge: {0}")]
    Resolution(String),

    #[error("capability error: {0}")]
    Capability(String),

    #[error("degenerate sample: Morawetz norm {0:e} below threshold")]
    DegenerateSample(f64),

    #[error("numerical instability at t = {t}: {detail}")]
    Instability { t: f64, detail: String },

    #[error("integration halted at t = {t}: {detail}")]
    BlowDown { t: f64, detail: String },

    #[error("Newton iteration left the basin after {iterations} iterations: {detail}")]
    Basin { iterations: usize, detail: String },

    #[error("bisection budget exhausted at level j = {level}: {detail}")]
    ShootingFailed { level: usize, detail: String },

    #[error("least-squares fit failed: {0}")]
    Fit(String),

    #[error("CFL violation: dt = {dt:e} exceeds limit {limit:e}")]
    Cfl { dt: f64, limit: f64 },

    #[error("snapshot format error: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for LabError {
    fn from(e: std::io::Error) -> Self {
        LabError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
