use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid operator: {0}")]
    InvalidOperator(String),

    #[error("unknown catalog operator `{0}`")]
    UnknownOperator(String),

    #[error("invalid parameters for `{name}`: {message}")]
    InvalidParams { name: String, message: String },

    #[error("malformed operator file: {0}")]
    Malformed(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("symbol not injective at xi = {xi:?} (sigma_min = {sigma_min:e})")]
    NotInjective { xi: Vec<f64>, sigma_min: f64 },

    #[error("ellipticity margin too small: {margin:e}")]
    MarginTooSmall { margin: f64 },

    #[error("interpolation residual {residual:e} exceeds tolerance at xi = {xi:?}")]
    InterpolationResidual { residual: f64, xi: Vec<f64> },

    #[error("precondition `{name}` violated: {message}")]
    Precondition { name: &'static str, message: String },

    #[error("zero denominator")]
    ZeroDenominator,

    #[error(
        "scale {epsilon} is not resolvable on a grid with spacing {spacing} (need epsilon >= 2h)"
    )]
    Unresolvable { epsilon: f64, spacing: f64 },

    #[error("transformed field is not real (relative imaginary part {0:e})")]
    NonReal(f64),
}

impl Error {
    /// Short machine-readable code used by the command line front end.
    pub fn code(&self) -> &'static str {
        match self {
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::InvalidOperator(_) => "invalid_operator",
            Error::UnknownOperator(_) => "unknown_operator",
            Error::InvalidParams { .. } => "invalid_params",
            Error::Malformed(_) => "malformed_file",
            Error::Io(_) => "io",
            Error::NotInjective { .. } => "not_injective",
            Error::MarginTooSmall { .. } => "margin_too_small",
            Error::InterpolationResidual { .. } => "interpolation_residual",
            Error::Precondition { name, .. } => name,
            Error::ZeroDenominator => "zero_denominator",
            Error::Unresolvable { .. } => "unresolvable_scale",
            Error::NonReal(_) => "non_real_output",
        }
    }

    pub(crate) fn precondition(name: &'static str, message: impl Into<String>) -> Self {
        Error::Precondition {
            name,
            message: message.into(),
        }
    }
}
