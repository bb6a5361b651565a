use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("vector length {0} is not a power of two")]
    NotPowerOfTwo(usize),

    #[error("state must have at least one qubit")]
    ZeroQubits,

    #[error("state is not normalized (norm {0})")]
    NotNormalized(f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not Hermitian (max deviation {0:e})")]
    NotHermitian(f64),

    #[error("trace is not 1 (got {0})")]
    InvalidTrace(f64),

    #[error("matrix is not positive semidefinite (min eigenvalue {0:e})")]
    NotPositive(f64),

    #[error(
        "{requested} qubits exceeds the cap of {cap}; raise it with --max-qubits or NONMARKOV_MAX_QUBITS"
    )]
    QubitCapExceeded { requested: usize, cap: usize },

    #[error("invalid qubit partition: {0}")]
    InvalidPartition(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("time {0} is outside the domain of the dynamical map")]
    InvalidTime(f64),

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("flux traces were computed on different grids")]
    GridMismatch,

    #[error("exact flux {0:e} at the probe time is too close to zero for a relative error")]
    StationaryProbe(f64),

    #[error("invariant violated: {0}")]
    InvariantViolated(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
