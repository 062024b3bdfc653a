//! Distributed full-state-vector quantum circuit simulation.
//!
//! A `2^n`-amplitude state vector is sharded across `2^p` simulated ranks,
//! each holding `2^m` amplitudes (`m = n - p`). Qubits `0..m` are *local*
//! (addressed inside a shard) and qubits `m..n` are *global* (they select the
//! rank). Gates on global qubits are executed by pairwise amplitude exchange
//! through a [`transport::Transport`], whose payload counters make the
//! communication volume of every gate observable.
//!
//! The [`transpile`] module rewrites circuits so that heavy gates only touch
//! local qubits by inserting fused-swap gates, and [`metrics`] predicts the
//! exact number of bytes a circuit will move.

pub mod circuits;
pub mod cluster;
pub mod dist_ops;
mod error;
pub mod layout;
pub mod metrics;
pub mod state;
pub mod transpile;
pub mod transport;
pub mod verify;

pub use circuits::{Circuit, GateOp};
pub use cluster::{Cluster, ExecConfig, Mode};
pub use error::{Result, SimError};
pub use layout::{GlobalLayout, Locality};
pub use state::{Amplitude, LocalShard, Matrix2, Matrix4};
pub use transport::{CommStats, ExchangeTag, LocalTransport, ProtocolError, Transport};
