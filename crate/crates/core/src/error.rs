use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("matrix is not Hermitian (max asymmetry {0:e})")]
    NotHermitian(f64),
    #[error("matrix is not positive semidefinite (min eigenvalue {0:e})")]
    NotPositiveSemidefinite(f64),
    #[error("non-finite entry in matrix")]
    NonFinite,
    #[error("degenerate placement: {0}")]
    DegeneratePlacement(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("QoS constraints infeasible for this channel draw")]
    InfeasibleQos,
    #[error("conic solver failed: {0}")]
    Solver(String),
    #[error("user {0} receives no usable power from its covariance")]
    RankDeficientUser(usize),
    #[error("radar residual covariance is not PSD (min eigenvalue {0:e})")]
    ResidualNotPsd(f64),
    #[error("receive beamformer of user {0} is zero")]
    DegenerateBeamformer(usize),
    #[error("every particle sits in a zero-likelihood cell")]
    DegenerateLikelihood,
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable tag for error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape(_) => "ShapeError",
            Error::NotHermitian(_) => "NotHermitian",
            Error::NotPositiveSemidefinite(_) => "NotPositiveSemidefinite",
            Error::NonFinite => "NonFinite",
            Error::DegeneratePlacement(_) => "DegeneratePlacement",
            Error::Config(_) => "ConfigError",
            Error::InfeasibleQos => "InfeasibleQoS",
            Error::Solver(_) => "SolverError",
            Error::RankDeficientUser(_) => "RankDeficientUser",
            Error::ResidualNotPsd(_) => "ResidualNotPSD",
            Error::DegenerateBeamformer(_) => "DegenerateBeamformer",
            Error::DegenerateLikelihood => "DegenerateLikelihood",
            Error::Io(_) | Error::Csv(_) => "IOError",
            Error::Serde(_) => "ParseError",
        }
    }
}
