use thiserror::Error;

/// Errors raised anywhere in the analysis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },

    #[error("invalid observation at row {row}: {msg}")]
    InvalidObservation { row: usize, msg: String },

    #[error("invalid time series: {0}")]
    InvalidSeries(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("singular design (columns {columns:?}): {reason}")]
    SingularDesign { columns: Vec<usize>, reason: String },

    #[error("duplicate frequencies {0} and {1} in one tuple")]
    DuplicateFrequency(f64, f64),

    #[error("memory ceiling exceeded: {0}")]
    MemoryCeiling(String),

    #[error("infeasible cadence: {0}")]
    InfeasibleCadence(String),

    #[error("incompatible binning: {0}")]
    Binning(String),

    #[error("missing evidence for model (nf={nf}, nd={nd})")]
    MissingModel { nf: usize, nd: usize },
}

impl Error {
    /// Short machine-readable tag for the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io(_) => "io",
            Error::Parse { .. } => "parse",
            Error::InvalidObservation { .. } => "invalid_observation",
            Error::InvalidSeries(_) => "invalid_series",
            Error::Config(_) => "config",
            Error::SingularDesign { .. } => "singular_design",
            Error::DuplicateFrequency(..) => "duplicate_frequency",
            Error::MemoryCeiling(_) => "memory_ceiling",
            Error::InfeasibleCadence(_) => "infeasible_cadence",
            Error::Binning(_) => "binning",
            Error::MissingModel { .. } => "missing_model",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
