use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter out of range: {0}")]
    ParameterOutOfRange(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("unsupported in this dimension: {0}")]
    DimensionUnsupported(String),
    #[error("moment of order {order} is not integrable (decay exponent {decay})")]
    NonIntegrableMoment { order: usize, decay: f64 },
    #[error("quadrature did not converge: estimate {estimate}, error {error}, requested {requested}")]
    QuadratureFailure { estimate: f64, error: f64, requested: f64 },
    #[error("non-integrable integrand: {0}")]
    NonIntegrable(String),
    #[error("Riesz potential diverges: {0}")]
    RieszDivergence(String),
    #[error("energy integral diverges: {0}")]
    EnergyDivergent(String),
    #[error("precondition violated: {0}")]
    PreconditionViolation(String),
    #[error("shot-noise kernel diverges: {0}")]
    DivergentKernel(String),
    #[error("not square integrable: {0}")]
    NotSquareIntegrable(String),
    #[error("product kernel requires product-form measures")]
    NonProductMeasure,
    #[error("point {0:?} is not interior to the domain")]
    BoundaryPoint(Vec<f64>),
    #[error("method unsupported: {0}")]
    MethodUnsupported(String),
    #[error("scale sequence leaves the domain: {0}")]
    ScaleOutOfDomain(String),
    #[error("truncation bias bound {bound:e} exceeds tolerance {tolerance:e}")]
    TruncationTooCoarse { bound: f64, tolerance: f64 },
    #[error("measure not admissible: {0}")]
    NonAdmissible(String),
    #[error("covariance matrix not positive semidefinite after jitter {max_jitter:e}")]
    NotPositiveSemidefinite { max_jitter: f64 },
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("not serializable: {0}")]
    NotSerializable(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Variant name, for machine-readable reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::ParameterOutOfRange(_) => "ParameterOutOfRange",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::DimensionUnsupported(_) => "DimensionUnsupported",
            Error::NonIntegrableMoment { .. } => "NonIntegrableMoment",
            Error::QuadratureFailure { .. } => "QuadratureFailure",
            Error::NonIntegrable(_) => "NonIntegrable",
            Error::RieszDivergence(_) => "RieszDivergence",
            Error::EnergyDivergent(_) => "EnergyDivergent",
            Error::PreconditionViolation(_) => "PreconditionViolation",
            Error::DivergentKernel(_) => "DivergentKernel",
            Error::NotSquareIntegrable(_) => "NotSquareIntegrable",
            Error::NonProductMeasure => "NonProductMeasure",
            Error::BoundaryPoint(_) => "BoundaryPoint",
            Error::MethodUnsupported(_) => "MethodUnsupported",
            Error::ScaleOutOfDomain(_) => "ScaleOutOfDomain",
            Error::TruncationTooCoarse { .. } => "TruncationTooCoarse",
            Error::NonAdmissible(_) => "NonAdmissible",
            Error::NotPositiveSemidefinite { .. } => "NotPositiveSemidefinite",
            Error::UnknownPreset(_) => "UnknownPreset",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::NotSerializable(_) => "NotSerializable",
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
        }
    }
}
