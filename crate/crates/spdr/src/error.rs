use spdr_core::error::ErrorKind;

/// Failures of the command line front end, each mapped to an exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Core(#[from] spdr_core::Error),
    #[error("precondition unmet: {0}")]
    Precondition(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub const CONFIG: i32 = 2;
    pub const PRECONDITION: i32 = 3;
    pub const BLOW_UP: i32 = 4;

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Checkpoint(_) => Self::CONFIG,
            CliError::Precondition(_) => Self::PRECONDITION,
            CliError::Core(e) => match e.kind() {
                ErrorKind::Input => Self::CONFIG,
                ErrorKind::Precondition => Self::PRECONDITION,
                ErrorKind::Numerical => Self::BLOW_UP,
            },
            CliError::Io(_) | CliError::Csv(_) => 1,
        }
    }

    /// A pointer to the fallback when linear response is unavailable.
    pub fn hint(&self) -> Option<&'static str> {
        match self {
            CliError::Core(spdr_core::Error::RangeViolation { .. } | spdr_core::Error::NotDifferentiable) => Some(
                "the forcing direction must lie in the range of the noise covariance for linear response; \
                 run the `holder` subcommand for the fractional-response scan instead",
            ),
            CliError::Precondition(_) | CliError::Core(spdr_core::Error::PreconditionUnmet(_)) => {
                Some("pass --unsafe-skip-audit to run the likelihood-ratio estimators without the guarantee")
            }
            _ => None,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
