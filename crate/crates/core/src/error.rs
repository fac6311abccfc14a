use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid bundle spec: {0}")]
    InvalidSpec(String),

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("domain error: {0}")]
    Domain(String),

    /// Fixed-point solver stalled. Existence and uniqueness of the root are
    /// guaranteed for valid specs, so this indicates a solver defect; the
    /// residual history is attached for post-mortem.
    #[error("solver failed to converge: {context} (residuals {residuals:?})")]
    NoConvergence {
        context: String,
        residuals: Vec<f64>,
    },

    #[error("diagonal-plus-rank-one data must be strictly positive")]
    NotPositive,

    #[error("secular solver bracket failure: {0}")]
    BracketFailure(String),

    #[error("spectral sign pattern mismatch: {0}")]
    SpectralMismatch(String),

    #[error("shooting trajectory drifted out of the expected region: {0}")]
    ShootingDrift(String),

    #[error("no capture within horizon; closest fixed point {closest} at distance {distance:.3e}")]
    NoCapture { closest: String, distance: f64 },

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
