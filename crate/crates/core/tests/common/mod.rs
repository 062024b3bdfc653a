//! Reference simulators written independently of the library kernels.
//!
//! `kron_*` build the full `2^n × 2^n` operator and multiply densely; only
//! usable for small `n`. `index_apply` evaluates each output amplitude as a
//! sum over the basis states that differ in the gate's qubits, with no
//! pair-stride tricks, and scales to the 12-qubit cases.
#![allow(dead_code)]

use dvsim_core::circuits::haar_random_1q;
use dvsim_core::circuits::haar_random_2q;
use dvsim_core::dist_ops::{self, DistConfig, PipelineTrace};
use dvsim_core::{
    Amplitude, Circuit, CommStats, GateOp, GlobalLayout, LocalShard, LocalTransport, Matrix2, Matrix4, Transport,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

pub type C = Amplitude;

pub fn zero_state(n: usize) -> Vec<C> {
    let mut v = vec![C::new(0.0, 0.0); 1 << n];
    v[0] = C::new(1.0, 0.0);
    v
}

pub fn random_state(n: usize, seed: u64) -> Vec<C> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut v: Vec<C> = (0..1usize << n)
        .map(|_| C::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
        .collect();
    let norm = v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    v.iter_mut().for_each(|a| *a /= norm);
    v
}

pub fn max_diff(a: &[C], b: &[C]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn norm(v: &[C]) -> f64 {
    v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
}

// ---- dense Kronecker oracle ----

pub struct Dense {
    pub dim: usize,
    pub a: Vec<C>,
}

impl Dense {
    pub fn identity(dim: usize) -> Self {
        let mut a = vec![C::new(0.0, 0.0); dim * dim];
        for i in 0..dim {
            a[i * dim + i] = C::new(1.0, 0.0);
        }
        Dense { dim, a }
    }

    pub fn from_2x2(u: &Matrix2) -> Self {
        Dense {
            dim: 2,
            a: u.0.to_vec(),
        }
    }

    pub fn kron(&self, other: &Dense) -> Dense {
        let dim = self.dim * other.dim;
        let mut a = vec![C::new(0.0, 0.0); dim * dim];
        for r1 in 0..self.dim {
            for c1 in 0..self.dim {
                let x = self.a[r1 * self.dim + c1];
                for r2 in 0..other.dim {
                    for c2 in 0..other.dim {
                        a[(r1 * other.dim + r2) * dim + c1 * other.dim + c2] = x * other.a[r2 * other.dim + c2];
                    }
                }
            }
        }
        Dense { dim, a }
    }

    pub fn apply(&self, v: &[C]) -> Vec<C> {
        (0..self.dim)
            .map(|r| (0..self.dim).map(|c| self.a[r * self.dim + c] * v[c]).sum())
            .collect()
    }
}

/// `I ⊗ … ⊗ U ⊗ … ⊗ I` with `U` in the factor for qubit `q` (qubit 0 is the
/// rightmost factor).
pub fn kron_1q(u: &Matrix2, q: usize, n: usize) -> Dense {
    Dense::identity(1 << (n - q - 1))
        .kron(&Dense::from_2x2(u))
        .kron(&Dense::identity(1 << q))
}

/// Two-qubit operator built as a sum of Kronecker products of its 2x2
/// blocks: `U = Σ_{ab} E_ab(q1) ⊗ B_ab(q0)` where `B_ab[r0][c0] =
/// U[2a + r0][2b + c0]` and `E_ab = |a⟩⟨b|`.
pub fn kron_2q(u: &Matrix4, q0: usize, q1: usize, n: usize) -> Dense {
    let dim = 1usize << n;
    let mut total = Dense {
        dim,
        a: vec![C::new(0.0, 0.0); dim * dim],
    };
    for a in 0..2 {
        for b in 0..2 {
            let mut outer = Matrix2([C::new(0.0, 0.0); 4]);
            outer.0[a * 2 + b] = C::new(1.0, 0.0);
            let block = Matrix2([
                u.get(2 * a, 2 * b),
                u.get(2 * a, 2 * b + 1),
                u.get(2 * a + 1, 2 * b),
                u.get(2 * a + 1, 2 * b + 1),
            ]);
            let term = kron_1q_product(&[(q1, outer), (q0, block)], n);
            for (t, x) in total.a.iter_mut().zip(&term.a) {
                *t += x;
            }
        }
    }
    total
}

/// Kronecker product with the given 2x2 factors on their qubits and the
/// identity elsewhere.
pub fn kron_1q_product(factors: &[(usize, Matrix2)], n: usize) -> Dense {
    let mut m = Dense::identity(1);
    for q in (0..n).rev() {
        let f = match factors.iter().find(|(fq, _)| *fq == q) {
            Some((_, u)) => Dense::from_2x2(u),
            None => Dense::identity(2),
        };
        m = m.kron(&f);
    }
    m
}

// ---- per-index oracle ----

fn bit(x: usize, q: usize) -> usize {
    (x >> q) & 1
}

fn with_bit(x: usize, q: usize, b: usize) -> usize {
    (x & !(1 << q)) | (b << q)
}

/// `out[i] = Σ_c U[row(i)][c] · in[i with the gate bits set to c]`.
pub fn index_apply(state: &[C], qubits: &[usize], u: &[C]) -> Vec<C> {
    let k = qubits.len();
    let dim = 1 << k;
    (0..state.len())
        .map(|i| {
            let row: usize = qubits.iter().enumerate().map(|(t, &q)| bit(i, q) << t).sum();
            (0..dim)
                .map(|c| {
                    let mut j = i;
                    for (t, &q) in qubits.iter().enumerate() {
                        j = with_bit(j, q, bit(c, t));
                    }
                    u[row * dim + c] * state[j]
                })
                .sum()
        })
        .collect()
}

pub fn permute_bits(state: &[C], a: usize, b: usize) -> Vec<C> {
    (0..state.len())
        .map(|i| {
            let j = with_bit(with_bit(i, a, bit(i, b)), b, bit(i, a));
            state[j]
        })
        .collect()
}

pub fn oracle_op(state: &[C], op: &GateOp) -> Vec<C> {
    match *op {
        GateOp::Dense2 { q0, q1, u } => index_apply(state, &[q0, q1], &u.0),
        GateOp::Cnot { control, target } => (0..state.len())
            .map(|i| {
                if bit(i, control) == 1 {
                    state[i ^ (1 << target)]
                } else {
                    state[i]
                }
            })
            .collect(),
        GateOp::Swap { i, j } => permute_bits(state, i, j),
        GateOp::FusedSwap { p, q, s } => {
            let mut v = state.to_vec();
            for k in 0..s {
                v = permute_bits(&v, p + k, q + k);
            }
            v
        }
        _ => {
            let q = op.qubits()[0];
            index_apply(state, &[q], &op.matrix2().expect("one-qubit op").0)
        }
    }
}

pub fn oracle_run(circuit: &Circuit, init: Vec<C>) -> Vec<C> {
    circuit.ops.iter().fold(init, |s, op| oracle_op(&s, op))
}

// ---- random circuits ----

/// Mixed circuit over H, RX, RZ, DENSE1, CNOT and DENSE2 on logical qubits.
pub fn random_circuit(n: usize, len: usize, seed: u64) -> Circuit {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut c = Circuit::new(n);
    c.seed = Some(seed);
    for _ in 0..len {
        let q = rng.random_range(0..n);
        let op = match rng.random_range(0..6) {
            0 => GateOp::H { q },
            1 => GateOp::Rx {
                q,
                theta: rng.random::<f64>() * 6.0,
            },
            2 => GateOp::Rz {
                q,
                theta: rng.random::<f64>() * 6.0,
            },
            3 => GateOp::Cnot {
                control: other(&mut rng, n, q),
                target: q,
            },
            4 => GateOp::Dense2 {
                q0: q,
                q1: other(&mut rng, n, q),
                u: haar_random_2q(&mut rng),
            },
            _ => GateOp::Dense1 {
                q,
                u: haar_random_1q(&mut rng),
            },
        };
        c.push(op);
    }
    c
}

fn other(rng: &mut ChaCha20Rng, n: usize, q: usize) -> usize {
    loop {
        let r = rng.random_range(0..n);
        if r != q {
            return r;
        }
    }
}

// ---- per-rank fused swap drivers ----

pub struct FusedRun {
    pub state: Vec<C>,
    pub stats: CommStats,
    pub traces: Vec<PipelineTrace>,
}

/// One thread per rank calling the fused-swap entry point directly: the
/// double-buffered one when `pipelined`, the plain gather/exchange/scatter
/// one otherwise.
pub fn fused_per_rank(
    layout: &GlobalLayout,
    init: &[C],
    (p, q, s): (usize, usize, usize),
    cfg: &DistConfig,
    pipelined: bool,
) -> FusedRun {
    let transport = LocalTransport::new(layout.ranks());
    let len = layout.shard_len();
    let results: Vec<(LocalShard, Option<PipelineTrace>)> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..layout.ranks())
            .map(|r| {
                let transport = &transport;
                scope.spawn(move || {
                    let mut shard =
                        LocalShard::from_amplitudes(layout, r, init[r * len..(r + 1) * len].to_vec()).unwrap();
                    let trace = if pipelined {
                        Some(dist_ops::run_fused_swap_pipelined(&mut shard, p, q, s, cfg, transport, 0).unwrap())
                    } else {
                        dist_ops::apply_fused_swap(&mut shard, p, q, s, cfg, transport, 0).unwrap();
                        None
                    };
                    (shard, trace)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let mut state = Vec::with_capacity(init.len());
    let mut traces = Vec::new();
    for (shard, trace) in results {
        state.extend_from_slice(shard.amplitudes());
        traces.extend(trace);
    }
    FusedRun {
        state,
        stats: transport.snapshot_stats().unwrap(),
        traces,
    }
}
