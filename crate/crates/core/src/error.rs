use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("target {target} GHz unreachable{}: reachable range is [{min}, {max}] GHz",
        qubit.map(|q| format!(" for qubit {q}")).unwrap_or_default())]
    TargetUnreachable {
        qubit: Option<usize>,
        target: f64,
        min: f64,
        max: f64,
    },

    #[error("mutual-inductance matrix is singular (condition number {condition:e})")]
    SingularMatrix { condition: f64 },

    #[error("matrix is not Hermitian (max asymmetry {asymmetry:e})")]
    NotHermitian { asymmetry: f64 },

    #[error("dispersive shift undefined at zero detuning")]
    ZeroDetuning,

    #[error("invalid range: {0}")]
    InvalidRange(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("no convergence after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("mutual inductance of qubit {qubit} to coil {coil} is zero")]
    ZeroMutual { qubit: usize, coil: usize },

    #[error("no resonance dip found in trace")]
    NoResonanceFound,

    #[error("spectroscopy map is empty")]
    EmptyMap,

    #[error("ambiguous tracking: {count} peak(s) claimed by more than one track")]
    AmbiguousTracking { count: usize },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable name of the error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::TargetUnreachable { .. } => "TargetUnreachable",
            Error::SingularMatrix { .. } => "SingularMatrix",
            Error::NotHermitian { .. } => "NotHermitian",
            Error::ZeroDetuning => "ZeroDetuning",
            Error::InvalidRange(_) => "InvalidRange",
            Error::InsufficientData(_) => "InsufficientData",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::ZeroMutual { .. } => "ZeroMutual",
            Error::NoResonanceFound => "NoResonanceFound",
            Error::EmptyMap => "EmptyMap",
            Error::AmbiguousTracking { .. } => "AmbiguousTracking",
            Error::Format(_) => "Format",
            Error::Io(_) => "Io",
            Error::Csv(_) => "Csv",
            Error::Json(_) => "Json",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
