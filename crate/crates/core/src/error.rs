use thiserror::Error;

use crate::transport::ProtocolError;

pub type Result<T, E = SimError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid layout: {0}")]
    InvalidLayout(String),
    #[error("rank {rank} out of range for {ranks} ranks")]
    RankOutOfRange { rank: usize, ranks: usize },
    #[error("qubit {qubit} out of range for {n} qubits")]
    QubitOutOfRange { qubit: usize, n: usize },
    #[error("qubit {qubit} is not local (local qubits are 0..{m})")]
    NotLocal { qubit: usize, m: usize },
    #[error("qubit {qubit} is not global (global qubits start at {m})")]
    NotGlobal { qubit: usize, m: usize },
    #[error("gate operands must be distinct, got {0} twice")]
    DuplicateQubit(usize),
    #[error("fused-swap ranges [{p}, {p}+{s}) and [{q}, {q}+{s}) overlap or are empty")]
    InvalidFusedSwap { p: usize, q: usize, s: usize },
    #[error("op {index}: dense two-qubit gate on ({q0}, {q1}) touches a global qubit; localize the circuit first")]
    NonLocalDense2 { index: usize, q0: usize, q1: usize },
    #[error("invalid chunk count {chunks} for a shard of {len} amplitudes")]
    InvalidChunks { chunks: usize, len: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid circuit: {0}")]
    InvalidCircuit(String),
    #[error("{0} must be positive")]
    NonPositive(&'static str),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}
