//! Circuit model, JSON format and the benchmark generators.
//!
//! # Reproducibility
//!
//! Random circuits use ChaCha20 (`rand_chacha::ChaCha20Rng`) seeded with
//! `seed_from_u64(seed)`. Layer `k` of a generator draws from stream `k`
//! (`set_stream(k)`), so any layer can be regenerated on its own:
//!
//! * Quantum Volume: stream `k` first shuffles `0..n` (Fisher–Yates, as in
//!   `rand::seq::SliceRandom::shuffle`), then draws one Haar unitary per pair.
//! * QSB: rotation layer `k` draws the angles `RZ, RX, RZ` for qubit 0, then
//!   qubit 1, …, each uniform in `[0, 2π)`.

use std::f64::consts::TAU;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::layout::check_fused_ranges;
use crate::state::{Matrix2, Matrix4};
use crate::{Result, SimError};

/// Depth of the Quantum Volume model circuit used by the benchmarks.
pub const QV_DEFAULT_DEPTH: usize = 10;

const HADAMARD_ROUNDS: usize = 11;
const QSB_ROTATION_LAYERS: usize = 11;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum GateOp {
    #[serde(rename = "H")]
    H { q: usize },
    #[serde(rename = "RX")]
    Rx { q: usize, theta: f64 },
    #[serde(rename = "RZ")]
    Rz { q: usize, theta: f64 },
    #[serde(rename = "CNOT")]
    Cnot { control: usize, target: usize },
    #[serde(rename = "DENSE1")]
    Dense1 { q: usize, u: Matrix2 },
    #[serde(rename = "DENSE2")]
    Dense2 { q0: usize, q1: usize, u: Matrix4 },
    #[serde(rename = "SWAP")]
    Swap { i: usize, j: usize },
    #[serde(rename = "FUSED_SWAP")]
    FusedSwap { p: usize, q: usize, s: usize },
}

impl GateOp {
    pub fn name(&self) -> &'static str {
        match self {
            GateOp::H { .. } => "H",
            GateOp::Rx { .. } => "RX",
            GateOp::Rz { .. } => "RZ",
            GateOp::Cnot { .. } => "CNOT",
            GateOp::Dense1 { .. } => "DENSE1",
            GateOp::Dense2 { .. } => "DENSE2",
            GateOp::Swap { .. } => "SWAP",
            GateOp::FusedSwap { .. } => "FUSED_SWAP",
        }
    }

    /// Every qubit the op touches.
    pub fn qubits(&self) -> Vec<usize> {
        match *self {
            GateOp::H { q } | GateOp::Rx { q, .. } | GateOp::Rz { q, .. } | GateOp::Dense1 { q, .. } => {
                vec![q]
            }
            GateOp::Cnot { control, target } => vec![control, target],
            GateOp::Dense2 { q0, q1, .. } => vec![q0, q1],
            GateOp::Swap { i, j } => vec![i, j],
            GateOp::FusedSwap { p, q, s } => (p..p + s).chain(q..q + s).collect(),
        }
    }

    pub fn is_swap(&self) -> bool {
        matches!(self, GateOp::Swap { .. } | GateOp::FusedSwap { .. })
    }

    /// 2x2 matrix of single-qubit ops.
    pub fn matrix2(&self) -> Option<Matrix2> {
        match *self {
            GateOp::H { .. } => Some(Matrix2::hadamard()),
            GateOp::Rx { theta, .. } => Some(Matrix2::rx(theta)),
            GateOp::Rz { theta, .. } => Some(Matrix2::rz(theta)),
            GateOp::Dense1 { u, .. } => Some(u),
            _ => None,
        }
    }

    /// Same op with every qubit index passed through `map`.
    pub fn remap(&self, mut map: impl FnMut(usize) -> usize) -> GateOp {
        match *self {
            GateOp::H { q } => GateOp::H { q: map(q) },
            GateOp::Rx { q, theta } => GateOp::Rx { q: map(q), theta },
            GateOp::Rz { q, theta } => GateOp::Rz { q: map(q), theta },
            GateOp::Dense1 { q, u } => GateOp::Dense1 { q: map(q), u },
            GateOp::Cnot { control, target } => GateOp::Cnot {
                control: map(control),
                target: map(target),
            },
            GateOp::Dense2 { q0, q1, u } => GateOp::Dense2 {
                q0: map(q0),
                q1: map(q1),
                u,
            },
            GateOp::Swap { i, j } => GateOp::Swap { i: map(i), j: map(j) },
            GateOp::FusedSwap { p, q, s } => GateOp::FusedSwap {
                p: map(p),
                q: map(q),
                s,
            },
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if let GateOp::FusedSwap { p, q, s } = *self {
            return check_fused_ranges(n, p, q, s);
        }
        let qs = self.qubits();
        if let Some(&q) = qs.iter().find(|&&q| q >= n) {
            return Err(SimError::QubitOutOfRange { qubit: q, n });
        }
        if qs.len() == 2 && qs[0] == qs[1] {
            return Err(SimError::DuplicateQubit(qs[0]));
        }
        if let GateOp::Rx { theta, .. } | GateOp::Rz { theta, .. } = self {
            if !theta.is_finite() {
                return Err(SimError::InvalidCircuit(format!("non-finite angle {theta}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Circuit {
    pub n: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    pub ops: Vec<GateOp>,
}

impl Circuit {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            seed: None,
            ops: Vec::new(),
        }
    }

    pub fn push(&mut self, op: GateOp) -> &mut Self {
        self.ops.push(op);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(SimError::InvalidCircuit("circuit has no qubits".into()));
        }
        for (k, op) in self.ops.iter().enumerate() {
            op.validate(self.n)
                .map_err(|e| SimError::InvalidCircuit(format!("op {k} ({}): {e}", op.name())))?;
        }
        Ok(())
    }

    /// Ops that are not swaps.
    pub fn gate_count(&self) -> usize {
        self.ops.iter().filter(|op| !op.is_swap()).count()
    }

    pub fn count_kind(&self, name: &str) -> usize {
        self.ops.iter().filter(|op| op.name() == name).count()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Circuit = serde_json::from_str(text).map_err(|e| SimError::InvalidCircuit(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("circuit serializes")
    }
}

fn layer_rng(seed: u64, layer: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(layer as u64);
    rng
}

/// Eleven rounds of H on every qubit.
pub fn gen_hadamard_bench(n: usize) -> Result<Circuit> {
    if n < 1 {
        return Err(SimError::Config("hadamard benchmark needs n >= 1".into()));
    }
    let mut c = Circuit::new(n);
    for _ in 0..HADAMARD_ROUNDS {
        c.ops.extend((0..n).map(|q| GateOp::H { q }));
    }
    Ok(c)
}

/// Quantum Volume model circuit: per layer, a random permutation of the
/// qubit labels paired off consecutively, each pair getting a Haar-random
/// two-qubit unitary. With odd `n` the last permuted label idles.
pub fn gen_qv(n: usize, depth: usize, seed: u64) -> Result<Circuit> {
    if n < 2 {
        return Err(SimError::Config("quantum volume circuit needs n >= 2".into()));
    }
    let mut c = Circuit::new(n);
    c.seed = Some(seed);
    let mut labels: Vec<usize> = (0..n).collect();
    for layer in 0..depth {
        let mut rng = layer_rng(seed, layer);
        labels.sort_unstable();
        labels.shuffle(&mut rng);
        for pair in labels.chunks_exact(2) {
            c.ops.push(GateOp::Dense2 {
                q0: pair[0],
                q1: pair[1],
                u: haar_random_2q(&mut rng),
            });
        }
    }
    Ok(c)
}

/// Quantum software benchmark: ten (rotation layer, CNOT ring) pairs and a
/// final rotation layer. A rotation layer applies RZ, RX, RZ to each qubit;
/// the CNOT ring targets qubit `i` with control `(i+1) mod n`.
pub fn gen_qsb(n: usize, seed: u64) -> Result<Circuit> {
    if n < 2 {
        return Err(SimError::Config("qsb circuit needs n >= 2".into()));
    }
    let mut c = Circuit::new(n);
    c.seed = Some(seed);
    for layer in 0..QSB_ROTATION_LAYERS {
        let mut rng = layer_rng(seed, layer);
        for q in 0..n {
            let mut angle = || rng.random::<f64>() * TAU;
            let (a, b, d) = (angle(), angle(), angle());
            c.ops.push(GateOp::Rz { q, theta: a });
            c.ops.push(GateOp::Rx { q, theta: b });
            c.ops.push(GateOp::Rz { q, theta: d });
        }
        if layer + 1 < QSB_ROTATION_LAYERS {
            c.ops.extend((0..n).map(|i| GateOp::Cnot {
                control: (i + 1) % n,
                target: i,
            }));
        }
    }
    Ok(c)
}

fn haar_unitary<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<Complex64> {
    let z = DMatrix::<Complex64>::from_fn(dim, dim, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    });
    let qr = z.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..dim {
        let d = r[(j, j)];
        if d.norm() > 0.0 {
            let phase = d / d.norm();
            q.column_mut(j).iter_mut().for_each(|x| *x *= phase);
        }
    }
    // row-major
    (0..dim * dim).map(|k| q[(k / dim, k % dim)]).collect()
}

/// Haar-random 4x4 unitary: QR of a complex Gaussian matrix with the phases
/// of `R`'s diagonal folded back into `Q`.
pub fn haar_random_2q<R: Rng + ?Sized>(rng: &mut R) -> Matrix4 {
    Matrix4(haar_unitary(rng, 4).try_into().expect("16 entries"))
}

/// Haar-random 2x2 unitary, same construction.
pub fn haar_random_1q<R: Rng + ?Sized>(rng: &mut R) -> Matrix2 {
    Matrix2(haar_unitary(rng, 2).try_into().expect("4 entries"))
}
