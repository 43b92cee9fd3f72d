use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate graph: {0}")]
    DegenerateGraph(String),

    #[error("sampled graph disconnected after {attempts} attempts")]
    Disconnected { attempts: usize },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("invalid laplacian: {0}")]
    InvalidLaplacian(String),

    #[error("diffusion scale must be non-negative, got {0}")]
    NegativeTau(f64),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("laplacian QP did not converge after {iterations} iterations (residual {residual:e})")]
    QpNotConverged { iterations: usize, residual: f64 },

    #[error("backtracking failed to satisfy the descent condition after {attempts} attempts (c2 = {c2:e})")]
    BacktrackingFailed { attempts: usize, c2: f64 },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// True for failures of the numerical routines (as opposed to bad input or I/O).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::QpNotConverged { .. }
                | Error::BacktrackingFailed { .. }
                | Error::NonFinite(_)
                | Error::Disconnected { .. }
                | Error::DegenerateGraph(_)
        )
    }

    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_) | Error::Csv(_) | Error::Json(_) | Error::Parse(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
