use thiserror::Error;

/// Errors raised anywhere in the toolkit.
///
/// The variants are coarse on purpose: callers mostly need to tell a bad
/// request (config) from a computation that could not meet its tolerances.
#[derive(Debug, Error)]
pub enum Error {
    #[error("displacement element overflow at m={m}, n={n}, |alpha|={abs_alpha}")]
    DisplacementOverflow { m: usize, n: usize, abs_alpha: f64 },

    #[error("state is in the {found:?} frame but {expected:?} is required")]
    FrameMismatch {
        expected: crate::hilbert::Frame,
        found: crate::hilbert::Frame,
    },

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("target vector is not normalized (norm {norm})")]
    TargetNotNormalized { norm: f64 },

    #[error("invalid density matrix: {0}")]
    InvalidDensityMatrix(String),

    #[error("unsupported pulse shape: {0}")]
    UnsupportedPulse(String),

    #[error("cutoff too small: {0}")]
    CutoffTooSmall(String),

    #[error("quadrature did not converge: change {change:.3e} > tol {tol:.1e} at (m={m}, n={n}) in {table}")]
    QuadratureNotConverged {
        table: &'static str,
        m: usize,
        n: usize,
        change: f64,
        tol: f64,
    },

    #[error("guard band violated: {0}")]
    GuardBand(String),

    #[error("coefficient tail too large for n={n}: {tail:.3e}")]
    TailTooLarge { n: usize, tail: f64 },

    #[error("phonon number {n} outside table range (valid up to {max})")]
    OutOfTableRange { n: usize, max: usize },

    #[error("norm drift {drift:.3e} exceeds tolerance {tol:.1e}")]
    NormDrift { drift: f64, tol: f64 },

    #[error("integrator failure: {0}")]
    Integrator(String),

    #[error("fit failure: {0}")]
    Fit(String),

    #[error("coefficient table provenance mismatch: {0}")]
    ProvenanceMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures caused by the request itself rather than by the numerics.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::FrameMismatch { .. }
                | Error::DimensionMismatch { .. }
                | Error::TargetNotNormalized { .. }
                | Error::UnsupportedPulse(_)
                | Error::CutoffTooSmall(_)
                | Error::OutOfTableRange { .. }
                | Error::ProvenanceMismatch(_)
                | Error::InvalidParameter(_)
                | Error::Schema(_)
                | Error::Io(_)
                | Error::Json(_)
                | Error::Csv(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
