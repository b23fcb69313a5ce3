use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Errors raised by the numerical core.
///
/// Variants are grouped so that callers can map them onto coarse outcomes
/// (bad input, unmet hypothesis, numerical failure) without string matching;
/// see [`Error::kind`].
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("mode ({m}, {n}) is outside the retained spectrum")]
    ModeOutOfRange { m: i64, n: i64 },
    #[error(
        "forcing direction not in range(Q): mode ({m}, {n}) carries forcing but no noise; \
         linear response unavailable, use the Hölder scan instead"
    )]
    RangeViolation { m: i64, n: i64 },
    #[error("forcing family is not differentiable in the parameter")]
    NotDifferentiable,
    #[error("time step {dt} exceeds the stability limit {limit}")]
    StepTooLarge { dt: f64, limit: f64 },
    #[error("numerical blow-up at step {step}")]
    BlowUp { step: u64 },
    #[error("CFL number {courant} exceeds 1 at step {step}")]
    CflViolation { step: u64, courant: f64 },
    #[error("gamma = {gamma} is not admissible (must stay below {cap} so that kappa_2 > 0)")]
    InfeasibleGamma { gamma: f64, cap: f64 },
    #[error("spectral-gap precondition unmet: {0}")]
    PreconditionUnmet(String),
    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),
    #[error("chain is reducible or periodic: eigenvalue 1 has multiplicity {0}")]
    Reducible(usize),
    #[error("no spectral gap: second eigenvalue modulus is {0}")]
    NoGap(f64),
    #[error("not a stochastic matrix: {0}")]
    NotStochastic(String),
    #[error("drift matrix is not stable")]
    Unstable,
    #[error("size mismatch: {left} vs {right}")]
    SizeMismatch { left: usize, right: usize },
    #[error("estimator diverged: {0}")]
    Diverged(String),
}

/// Coarse classification used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Input,
    Precondition,
    Numerical,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::RangeViolation { .. }
            | Error::NotDifferentiable
            | Error::InfeasibleGamma { .. }
            | Error::PreconditionUnmet(_)
            | Error::NoGap(_)
            | Error::Reducible(_)
            | Error::Unstable => ErrorKind::Precondition,
            Error::NonFinite(_) | Error::BlowUp { .. } | Error::CflViolation { .. } | Error::Diverged(_) => {
                ErrorKind::Numerical
            }
            _ => ErrorKind::Input,
        }
    }
}
