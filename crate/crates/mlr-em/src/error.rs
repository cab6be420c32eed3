use thiserror::Error;

#[derive(Debug, Error)]
pub enum MlrError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("ill-conditioned sample covariance (condition number {cond:.3e}); use a larger batch")]
    IllConditioned { cond: f64 },
    #[error("quadrature routes disagree by {rel:.3e} (relative); increase the quadrature order")]
    QuadratureMismatch { rel: f64 },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl MlrError {
    /// True for failures that the command line reports with exit code 2.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            MlrError::IllConditioned { .. } | MlrError::QuadratureMismatch { .. } | MlrError::Numerical(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, MlrError>;
