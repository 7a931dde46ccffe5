use thiserror::Error;

/// Errors raised by the toolkit.
///
/// Variants fall into two families, see [`AdiaError::is_numeric`]: input and
/// configuration problems, and numerical failures that occur on valid input.
#[derive(Debug, Error)]
pub enum AdiaError {
    #[error("domain error: {0}")]
    Domain(String),

    /// The requested quantity has no closed form for this object; compute it
    /// numerically instead.
    #[error("unsupported: {0}")]
    Capability(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("degenerate spectrum: {0}")]
    Degeneracy(String),

    #[error("boundary phase undefined: {0}")]
    UndefinedPhase(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<AdiaError>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl AdiaError {
    /// True for failures of the numerics themselves (non-convergence,
    /// degeneracies, ill-defined phases) rather than bad input.
    pub fn is_numeric(&self) -> bool {
        match self {
            AdiaError::Numeric(_)
            | AdiaError::Degeneracy(_)
            | AdiaError::UndefinedPhase(_)
            | AdiaError::InsufficientData(_) => true,
            AdiaError::Context { source, .. } => source.is_numeric(),
            _ => false,
        }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        AdiaError::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, AdiaError>;

/// Non-fatal diagnostics attached to otherwise valid results.
#[derive(Debug, Clone, PartialEq)]
pub enum PrecisionWarning {
    /// Finite differences of high order lose most significant digits.
    HighOrderNumericDerivative { order: u32 },
    /// A quadrature error estimate exceeded the caller's tolerance.
    QuadratureTolerance { estimate: f64, tolerance: f64 },
}

impl std::fmt::Display for PrecisionWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PrecisionWarning::HighOrderNumericDerivative { order } => write!(
                f,
                "numeric derivative of order {order} is dominated by round-off"
            ),
            PrecisionWarning::QuadratureTolerance {
                estimate,
                tolerance,
            } => write!(
                f,
                "quadrature error estimate {estimate:.3e} exceeds tolerance {tolerance:.3e}"
            ),
        }
    }
}
