//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("qubit index {index} out of range for {n_qubits} qubits")]
    QubitOutOfRange { index: usize, n_qubits: usize },

    #[error("gate acts twice on qubit {0}")]
    DuplicateQubit(usize),

    #[error("dense oracle limited to 14 qubits, got {0}")]
    TooManyQubits(usize),

    #[error("circuit leaves the Hamming-weight-1 subspace: {0}")]
    LeavesUnarySubspace(String),

    #[error("gate kind {0} is not supported by the unary simulator")]
    UnsupportedGate(&'static str),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("input vector has zero norm")]
    ZeroVector,

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("all shots discarded by unary postselection")]
    EmptyPostselection,

    #[error("matrix is not orthogonal: max |W W^T - I| = {0:.3e}")]
    NotOrthogonal(f64),

    #[error("invalid bitstring {0:?}: expected '0'/'1' chars of register length")]
    BadBitstring(String),

    #[error("invalid layer dimensions: n_in={n_in}, n_out={n_out}")]
    BadLayerDims { n_in: usize, n_out: usize },

    #[error("SVD failed to converge")]
    SvdFailure,

    #[error("NPY parse error at byte {offset}: {message}")]
    Npy { offset: usize, message: String },

    #[error("NPZ archive error: {0}")]
    Npz(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("CSV format error: {0}")]
    Csv(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("selftest check failed: {0}")]
    Selftest(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
