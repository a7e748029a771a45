use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The martingale coefficient series requires absolute summability at r = infinity.
    #[error("Hannan series divergent")]
    HannanDivergent,

    /// The transfer-function series does not converge at this frequency.
    #[error("coefficient series divergent at theta = {theta}")]
    SeriesDivergentAt { theta: f64 },

    /// The isotropic complex-Gaussian law is not the limit at this frequency.
    #[error(
        "theta = {theta} is excluded from the isotropic frequency set; \
         use run_anisotropy_probe for theta in {{0, pi}}"
    )]
    FrequencyNotIsotropic { theta: f64 },

    #[error("unsupported ergodic functional: {0}")]
    UnsupportedFunctional(String),

    /// Past truncation too coarse for the requested statistical resolution.
    #[error(
        "past truncation error bound {bound:.3e} exceeds {limit:.3e} \
         (0.02 * sigma); increase the past depth"
    )]
    TruncationGate { bound: f64, limit: f64 },
}

pub type Result<T> = std::result::Result<T, CoreError>;
