use thiserror::Error;

/// Errors raised by the dimer engines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DimerError {
    #[error("torus side {side} exceeds the enumeration limit {limit}")]
    SizeLimitExceeded { side: usize, limit: usize },

    #[error("adaptive quadrature exceeded {limit} subdivisions (error estimate {error:.3e})")]
    MaxSubdivisions { limit: usize, error: f64 },

    #[error("non-generic weights {weights:?}: {reason}")]
    NonGenericWeights { weights: [f64; 3], reason: String },

    #[error("W(p+) cannot be decomposed on (alpha+, beta+): frame determinant {det:.3e}")]
    DegenerateFrame { det: f64 },

    #[error("the two first-order ratios disagree by {mismatch:.3e} (tolerance {tolerance:.1e})")]
    RatioMismatch { mismatch: f64, tolerance: f64 },

    #[error("zero average tilt: p+ - p- = p- - p+ mod 2pi for weights {weights:?}")]
    NonGenericTilt { weights: [f64; 3] },

    #[error("face ({0}, {1}) carries no parallel pair of dimers")]
    NotFlippable(i64, i64),

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, DimerError>;
