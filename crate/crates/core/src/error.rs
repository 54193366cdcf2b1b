use thiserror::Error;

/// Convergence bookkeeping carried by numerical failures and fitted models.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FitDiagnostics {
    pub iterations: usize,
    pub log_likelihood: f64,
    pub max_abs_score: f64,
    pub converged: bool,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),
    #[error("no events of cause {0}")]
    NoEventsOfCause(&'static str),
    #[error("censoring support exhausted at t={time}")]
    CensoringSupportExhausted { time: f64 },
    #[error("non-finite value in stratum `{stratum}` at t={time}")]
    NonFinite { stratum: String, time: f64 },
    #[error(
        "Newton-Raphson did not converge after {} iterations (log-likelihood {}, max |score| {})",
        .0.iterations, .0.log_likelihood, .0.max_abs_score
    )]
    NonConvergence(FitDiagnostics),
    #[error("monotone likelihood: coefficient for `{covariate}` reached {value}")]
    Separation { covariate: String, value: f64 },
    #[error("information matrix is singular")]
    SingularInformation,
    #[error("with onset shifted by {shift} days: {source}")]
    Shift { shift: u32, source: Box<Error> },
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

/// Coarse classification used by the command line to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Io,
    Validation,
    Numerical,
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Shift { source, .. } => source.class(),
            Error::Io(_) => ErrorClass::Io,
            Error::Csv(e) if e.is_io_error() => ErrorClass::Io,
            Error::Csv(_) | Error::Validation(_) | Error::NoEventsOfCause(_) => {
                ErrorClass::Validation
            }
            Error::CensoringSupportExhausted { .. }
            | Error::NonFinite { .. }
            | Error::NonConvergence(_)
            | Error::Separation { .. }
            | Error::SingularInformation => ErrorClass::Numerical,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
