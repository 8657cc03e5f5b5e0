use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not unitary (deviation {deviation:.3e})")]
    NonUnitary { deviation: f64 },
    #[error("bad support {support:?} for a {n_qubits}-qubit register")]
    BadSupport { support: Vec<usize>, n_qubits: usize },
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("bad shape: {0}")]
    BadShape(String),
    #[error("invalid pauli string {0:?}")]
    InvalidPauli(String),
    #[error("register of {0} qubits exceeds the dense simulation cap")]
    TooManyQubits(usize),
    #[error("gate {0} is flagged noisy but has no channel")]
    MissingChannel(usize),
    #[error("gate {0} has no pauli insertion")]
    MissingInsertion(usize),
    #[error("support mismatch at gate {gate}: {detail}")]
    SupportMismatch { gate: usize, detail: String },
    #[error("error probability {0} outside [0, 1]")]
    BadEpsilon(f64),
    #[error("invalid channel: {0}")]
    InvalidChannel(String),
    #[error("noise level gamma is zero; error density undefined")]
    ZeroGamma,
    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:.3e})")]
    NotPsd { min_eigenvalue: f64 },
    #[error("reference state is not pure (purity {purity})")]
    NotPure { purity: f64 },
    #[error("invalid density matrix: {0}")]
    InvalidState(String),
    #[error("shot count must be at least one")]
    ZeroShots,
    #[error("channel is not invertible (|f_r| = {fidelity:.3e})")]
    SingularChannel { fidelity: f64 },
    #[error("circuit count {n_c} does not divide the shot budget {n_m}")]
    IndivisibleBudget { n_c: usize, n_m: usize },
    #[error("gamma {0} outside [0, 1)")]
    BadGamma(f64),
    #[error("learning rate {eta} exceeds 1/L = {limit}")]
    BadLearningRate { eta: f64, limit: f64 },
    #[error("no valid points for the PL estimate")]
    NoValidPoints,
    #[error("weight matrix is not symmetric at ({0}, {1})")]
    Asymmetric(usize, usize),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
