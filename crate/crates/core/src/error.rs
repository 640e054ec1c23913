use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("broadband spin noise cannot be injected through the inter-system loss port when nu = {nu} (nu/(1-nu) diverges)")]
    BroadbandInjectionSingular { nu: f64 },

    #[error("spectral integration did not converge: estimate {estimate:e}, error {error:e}")]
    IntegrationNotConverged { estimate: f64, error: f64 },

    #[error("sampling too coarse: Nyquist {nyquist:e} rad/s below required {required:e} rad/s")]
    Aliasing { nyquist: f64, required: f64 },

    #[error("Toeplitz system ill-conditioned at order {order}: reflection coefficient {reflection}")]
    IllConditioned { order: usize, reflection: f64 },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("covariance not positive semidefinite: min eigenvalue {min_eigenvalue:e}, trace {trace:e}")]
    NotPsd { min_eigenvalue: f64, trace: f64 },

    #[error("fast-readout regime violated: sqrt(8 eta V_u Gamma / gamma) = {fast_readout:.3} <= 3")]
    RegimeViolation { fast_readout: f64 },

    #[error("record too short: {len} samples, need at least {needed}")]
    RecordTooShort { len: usize, needed: usize },

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("ensemble collapsed: spread {spread:e}")]
    DegenerateEnsemble { spread: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("statistical self-check failed: {0}")]
    SelfCheck(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter { .. }
            | Error::BroadbandInjectionSingular { .. }
            | Error::Config(_)
            | Error::Json(_)
            | Error::Io(_) => 2,
            Error::SelfCheck(_) => 4,
            _ => 3,
        }
    }
}
