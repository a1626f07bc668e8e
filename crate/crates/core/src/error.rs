use alloc::string::String;

/// Broad failure class, used by front-ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Numerical,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("layer {layer}: expected input of width {expected}, found {found}")]
    LayerDim {
        layer: usize,
        expected: usize,
        found: usize,
    },
    #[error("tape was recorded against a different parameter version")]
    StaleTape,
    #[error("singular matrix: {0}")]
    Singular(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("non-finite loss at iteration {iteration} (capture {capture})")]
    LossDiverged { iteration: usize, capture: usize },
    #[error("non-finite integral for gaussian {gaussian} at substep {substep}")]
    IntegralDiverged { gaussian: usize, substep: usize },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Invalid(_)
            | Error::DimMismatch { .. }
            | Error::LayerDim { .. }
            | Error::StaleTape => ErrorKind::Validation,
            Error::Singular(_)
            | Error::Domain(_)
            | Error::NonFinite(_)
            | Error::LossDiverged { .. }
            | Error::IntegralDiverged { .. } => ErrorKind::Numerical,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn check_len(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimMismatch {
            context,
            expected,
            found,
        })
    }
}
