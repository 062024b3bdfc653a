//! Distributed gate execution.
//!
//! Every gate is planned per rank into [`Phase`]s: purely local kernels, or
//! lists of exchange [`Step`]s with a partner rank. The same plan drives the
//! threaded path (one worker per rank, blocking rendezvous), the lockstep
//! path (one thread stepping all ranks) and the double-buffered pipeline.
//!
//! Communication per gate, summed over ranks, for `2^n` amplitudes of 16 B:
//!
//! | gate                                   | bytes                  |
//! |----------------------------------------|------------------------|
//! | 1-qubit gate on a global qubit         | `2^(n+4)`              |
//! | CNOT with global target                | `2^(n+4)`              |
//! | CNOT with global control, local target | 0                      |
//! | swap with at least one global qubit    | `2^(n+3)`              |
//! | fused swap local↔global, width `s`     | `2^(n+4)·(1 − 2^(−s))` |

mod pipeline;
mod steps;

pub use pipeline::{run_steps_pipelined, PipelineTrace, Stage, StageInterval, SwapBufferPair};
pub use steps::{run_steps, run_steps_lockstep, Region, Step, Update};

use crate::circuits::GateOp;
use crate::layout::check_fused_ranges;
use crate::state::{LocalShard, Matrix2, Matrix4};
use crate::transport::{ExchangeTag, Transport};
use crate::{Result, SimError};

/// Chunking of a shard for the global 1-qubit exchange.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChunkPlan {
    chunks: usize,
    chunk_len: usize,
}

impl ChunkPlan {
    pub const DEFAULT_CHUNKS: usize = 16;

    /// `chunks` must be a power of two no larger than `shard_len`.
    pub fn new(chunks: usize, shard_len: usize) -> Result<Self> {
        if chunks == 0 || !chunks.is_power_of_two() || chunks > shard_len {
            return Err(SimError::InvalidChunks { chunks, len: shard_len });
        }
        Ok(Self {
            chunks,
            chunk_len: shard_len / chunks,
        })
    }

    /// `min(16, shard_len)` chunks.
    pub fn default_for(shard_len: usize) -> Self {
        Self::new(Self::DEFAULT_CHUNKS.min(shard_len), shard_len).expect("power-of-two shard")
    }

    pub fn chunks(&self) -> usize {
        self.chunks
    }

    pub fn chunk_len(&self) -> usize {
        self.chunk_len
    }
}

/// Block sizing for distributed execution.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DistConfig {
    /// Chunk count `c` for global 1-qubit gates; `None` is `min(16, 2^m)`.
    pub chunks: Option<usize>,
    /// Amplitudes per fused-swap transfer block; `None` is one chunk,
    /// capped at the per-partner volume `2^(m-s)`.
    pub swap_block: Option<usize>,
}

impl DistConfig {
    pub fn chunk_plan(&self, shard_len: usize) -> Result<ChunkPlan> {
        match self.chunks {
            Some(c) => ChunkPlan::new(c, shard_len),
            None => Ok(ChunkPlan::default_for(shard_len)),
        }
    }

    fn swap_block(&self, shard_len: usize, per_partner: usize) -> Result<usize> {
        let block = match self.swap_block {
            Some(0) => return Err(SimError::Config("swap block must be positive".into())),
            Some(b) => b,
            None => self.chunk_plan(shard_len)?.chunk_len(),
        };
        Ok(block.min(per_partner))
    }
}

/// A purely local kernel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LocalOp {
    OneQubit(Matrix2, usize),
    TwoQubit(Matrix4, usize, usize),
    Cnot { control: usize, target: usize },
    Swap(usize, usize),
    X(usize),
    Nop,
}

impl LocalOp {
    pub fn apply(&self, shard: &mut LocalShard) -> Result<()> {
        match *self {
            LocalOp::OneQubit(ref u, q) => shard.apply_1q_local(u, q),
            LocalOp::TwoQubit(ref u, q0, q1) => shard.apply_2q_local(u, q0, q1),
            LocalOp::Cnot { control, target } => shard.apply_cnot_local(control, target),
            LocalOp::Swap(a, b) => shard.apply_swap_local(a, b),
            LocalOp::X(q) => shard.apply_x_local(q),
            LocalOp::Nop => Ok(()),
        }
    }
}

/// One stage of a rank's plan for a gate. All ranks produce the same phase
/// sequence for a gate; exchange phases may be empty on idle ranks.
#[allow(clippy::large_enum_variant)]
#[derive(Clone, Debug, PartialEq)]
pub enum Phase {
    Local(LocalOp),
    Exchange {
        steps: Vec<Step>,
        /// Regions are disjoint and the phase may use the double-buffered path.
        pipelinable: bool,
    },
}

/// Step numbering: phase index in the high half so fallback sequences
/// never reuse a tag.
fn tag(gate_seq: u64, phase: usize, step: usize, rank: usize, partner: usize) -> ExchangeTag {
    ExchangeTag::new(gate_seq, ((phase as u64) << 32) | step as u64, rank, partner)
}

fn check_qubit(shard: &LocalShard, q: usize) -> Result<()> {
    if q < shard.n() {
        Ok(())
    } else {
        Err(SimError::QubitOutOfRange { qubit: q, n: shard.n() })
    }
}

fn check_global(shard: &LocalShard, q: usize) -> Result<()> {
    check_qubit(shard, q)?;
    if q < shard.m() {
        return Err(SimError::NotGlobal { qubit: q, m: shard.m() });
    }
    Ok(())
}

fn chunked_steps(
    shard: &LocalShard,
    partner: usize,
    update: Update,
    plan: ChunkPlan,
    gate_seq: u64,
    phase: usize,
) -> Vec<Step> {
    (0..plan.chunks())
        .map(|k| Step {
            partner,
            tag: tag(gate_seq, phase, k, shard.rank(), partner),
            region: Region::contiguous(k * plan.chunk_len(), plan.chunk_len()),
            update,
        })
        .collect()
}

/// Chunked exchange for `u` on global qubit `q`: the rank holding bit 0
/// computes `U00·a + U01·b`, its partner `U10·b + U11·a`.
pub fn plan_1q_global(shard: &LocalShard, u: &Matrix2, q: usize, plan: ChunkPlan, gate_seq: u64) -> Result<Vec<Step>> {
    check_global(shard, q)?;
    let partner = shard.rank() ^ (1 << (q - shard.m()));
    let update = if shard.global_bit(q) == 0 {
        Update::Linear {
            local: u.get(0, 0),
            remote: u.get(0, 1),
        }
    } else {
        Update::Linear {
            local: u.get(1, 1),
            remote: u.get(1, 0),
        }
    };
    Ok(chunked_steps(shard, partner, update, plan, gate_seq, 0))
}

/// CNOT with a global target. The full shard is exchanged; the update is
/// masked by the control bit.
fn plan_cnot_global_target(
    shard: &LocalShard,
    control: usize,
    target: usize,
    plan: ChunkPlan,
    gate_seq: u64,
) -> Result<Vec<Step>> {
    check_global(shard, target)?;
    let partner = shard.rank() ^ (1 << (target - shard.m()));
    let update = if control < shard.m() {
        Update::ControlledReplace { control }
    } else if shard.global_bit(control) == 1 {
        Update::Replace
    } else {
        Update::Keep
    };
    Ok(chunked_steps(shard, partner, update, plan, gate_seq, 0))
}

/// Gather/exchange/scatter steps for swapping local range
/// `[local_start, local_start+s)` with global range `[global_start, …)`.
///
/// With `g` the rank's value of the global field, the block whose local
/// field equals `g ^ x` goes to the rank whose global field is `g ^ x`, for
/// `x = 1..2^s` in ascending order. The block with local field `g` stays.
pub fn plan_fused_local_global(
    shard: &LocalShard,
    local_start: usize,
    global_start: usize,
    s: usize,
    cfg: &DistConfig,
    gate_seq: u64,
    phase: usize,
) -> Result<Vec<Step>> {
    let m = shard.m();
    if local_start + s > m || global_start < m {
        return Err(SimError::Config(format!(
            "fused swap [{local_start}, +{s}) ↔ [{global_start}, +{s}) is not local↔global"
        )));
    }
    check_fused_ranges(shard.n(), local_start, global_start, s)?;
    let shift = global_start - m;
    let field = (shard.rank() >> shift) & ((1 << s) - 1);
    let per_partner = shard.amplitudes().len() >> s;
    let block = cfg.swap_block(shard.amplitudes().len(), per_partner)?;
    let mut steps = Vec::new();
    for x in 1..(1usize << s) {
        let partner = shard.rank() ^ (x << shift);
        let mut start = 0;
        while start < per_partner {
            let len = block.min(per_partner - start);
            steps.push(Step {
                partner,
                tag: tag(gate_seq, phase, steps.len(), shard.rank(), partner),
                region: Region {
                    bit_pos: local_start,
                    width: s,
                    value: field ^ x,
                    start,
                    len,
                },
                update: Update::Replace,
            });
            start += len;
        }
    }
    Ok(steps)
}

fn plan_swap(shard: &LocalShard, i: usize, j: usize, cfg: &DistConfig, gate_seq: u64, phase: usize) -> Result<Phase> {
    check_qubit(shard, i)?;
    check_qubit(shard, j)?;
    if i == j {
        return Err(SimError::DuplicateQubit(i));
    }
    let m = shard.m();
    let (lo, hi) = (i.min(j), i.max(j));
    Ok(if hi < m {
        Phase::Local(LocalOp::Swap(lo, hi))
    } else if lo < m {
        Phase::Exchange {
            steps: plan_fused_local_global(shard, lo, hi, 1, cfg, gate_seq, phase)?,
            pipelinable: false,
        }
    } else {
        // Ranks whose two bits differ trade their whole shard.
        let steps = if shard.global_bit(lo) != shard.global_bit(hi) {
            let partner = shard.rank() ^ (1 << (lo - m)) ^ (1 << (hi - m));
            let plan = cfg.chunk_plan(shard.amplitudes().len())?;
            chunked_steps(shard, partner, Update::Replace, plan, gate_seq, phase)
        } else {
            Vec::new()
        };
        Phase::Exchange {
            steps,
            pipelinable: false,
        }
    })
}

/// Whether `[p, p+s)` / `[q, q+s)` is one fully local and one fully global
/// range; returns `(local_start, global_start)`.
pub fn local_global_split(m: usize, p: usize, q: usize, s: usize) -> Option<(usize, usize)> {
    let local = |a: usize| a + s <= m;
    let global = |a: usize| a >= m;
    if local(p) && global(q) {
        Some((p, q))
    } else if local(q) && global(p) {
        Some((q, p))
    } else {
        None
    }
}

fn plan_fused(shard: &LocalShard, p: usize, q: usize, s: usize, cfg: &DistConfig, gate_seq: u64) -> Result<Vec<Phase>> {
    check_fused_ranges(shard.n(), p, q, s)?;
    if let Some((l, g)) = local_global_split(shard.m(), p, q, s) {
        return Ok(vec![Phase::Exchange {
            steps: plan_fused_local_global(shard, l, g, s, cfg, gate_seq, 0)?,
            pipelinable: true,
        }]);
    }
    (0..s)
        .map(|k| plan_swap(shard, p + k, q + k, cfg, gate_seq, k))
        .collect()
}

/// Plans `op` (operands are physical positions) for `shard`'s rank.
/// `gate_seq` must be the same on every rank and unique within a run.
pub fn plan_op(shard: &LocalShard, op: &GateOp, gate_seq: u64, cfg: &DistConfig) -> Result<Vec<Phase>> {
    let m = shard.m();
    let one_qubit = |u: Matrix2, q: usize| -> Result<Vec<Phase>> {
        check_qubit(shard, q)?;
        Ok(vec![if q < m {
            Phase::Local(LocalOp::OneQubit(u, q))
        } else {
            let plan = cfg.chunk_plan(shard.amplitudes().len())?;
            Phase::Exchange {
                steps: plan_1q_global(shard, &u, q, plan, gate_seq)?,
                pipelinable: false,
            }
        }])
    };
    match *op {
        GateOp::H { q } => one_qubit(Matrix2::hadamard(), q),
        GateOp::Rx { q, theta } => one_qubit(Matrix2::rx(theta), q),
        GateOp::Rz { q, theta } => one_qubit(Matrix2::rz(theta), q),
        GateOp::Dense1 { q, u } => one_qubit(u, q),
        GateOp::Cnot { control, target } => {
            check_qubit(shard, control)?;
            check_qubit(shard, target)?;
            if control == target {
                return Err(SimError::DuplicateQubit(control));
            }
            Ok(vec![match (control < m, target < m) {
                (true, true) => Phase::Local(LocalOp::Cnot { control, target }),
                (false, true) => Phase::Local(if shard.global_bit(control) == 1 {
                    LocalOp::X(target)
                } else {
                    LocalOp::Nop
                }),
                (_, false) => {
                    let plan = cfg.chunk_plan(shard.amplitudes().len())?;
                    Phase::Exchange {
                        steps: plan_cnot_global_target(shard, control, target, plan, gate_seq)?,
                        pipelinable: false,
                    }
                }
            }])
        }
        GateOp::Dense2 { q0, q1, u } => {
            check_qubit(shard, q0)?;
            check_qubit(shard, q1)?;
            if q0 == q1 {
                return Err(SimError::DuplicateQubit(q0));
            }
            if q0 >= m || q1 >= m {
                return Err(SimError::NonLocalDense2 {
                    index: gate_seq as usize,
                    q0,
                    q1,
                });
            }
            Ok(vec![Phase::Local(LocalOp::TwoQubit(u, q0, q1))])
        }
        GateOp::Swap { i, j } => Ok(vec![plan_swap(shard, i, j, cfg, gate_seq, 0)?]),
        GateOp::FusedSwap { p, q, s } => plan_fused(shard, p, q, s, cfg, gate_seq),
    }
}

/// Executes a plan on one rank with blocking exchanges. Pipelinable phases
/// use the double-buffered path when `pipelined` is set; their traces are
/// returned.
pub fn execute_phases(
    shard: &mut LocalShard,
    phases: &[Phase],
    transport: &dyn Transport,
    pipelined: bool,
) -> Result<Vec<PipelineTrace>> {
    let mut traces = Vec::new();
    for phase in phases {
        match phase {
            Phase::Local(op) => op.apply(shard)?,
            Phase::Exchange { steps, pipelinable } if *pipelinable && pipelined => {
                traces.push(run_steps_pipelined(shard, steps, transport)?);
            }
            Phase::Exchange { steps, .. } => run_steps(shard, steps, transport)?,
        }
    }
    Ok(traces)
}

/// Plans and executes `op` on one rank.
pub fn apply_op(
    shard: &mut LocalShard,
    op: &GateOp,
    gate_seq: u64,
    cfg: &DistConfig,
    transport: &dyn Transport,
    pipelined: bool,
) -> Result<Vec<PipelineTrace>> {
    let phases = plan_op(shard, op, gate_seq, cfg)?;
    execute_phases(shard, &phases, transport, pipelined)
}

/// Applies `u` to global qubit `q` by exchanging `plan.chunks()` chunks with
/// the partner rank. Every rank of the run must call this with the same
/// arguments.
pub fn apply_1q_global(
    shard: &mut LocalShard,
    u: &Matrix2,
    q: usize,
    plan: ChunkPlan,
    transport: &dyn Transport,
    gate_seq: u64,
) -> Result<()> {
    let steps = plan_1q_global(shard, u, q, plan, gate_seq)?;
    run_steps(shard, &steps, transport)
}

/// Exchanges qubits `i` and `j` of the distributed state.
pub fn apply_swap_dist(
    shard: &mut LocalShard,
    i: usize,
    j: usize,
    cfg: &DistConfig,
    transport: &dyn Transport,
    gate_seq: u64,
) -> Result<()> {
    let phase = plan_swap(shard, i, j, cfg, gate_seq, 0)?;
    execute_phases(shard, &[phase], transport, false).map(drop)
}

/// `swap(p+k, q+k)` for `k in 0..s`, as one gather/exchange/scatter pass when
/// one range is local and the other global.
pub fn apply_fused_swap(
    shard: &mut LocalShard,
    p: usize,
    q: usize,
    s: usize,
    cfg: &DistConfig,
    transport: &dyn Transport,
    gate_seq: u64,
) -> Result<()> {
    let phases = plan_fused(shard, p, q, s, cfg, gate_seq)?;
    execute_phases(shard, &phases, transport, false).map(drop)
}

/// Same result and traffic as [`apply_fused_swap`], with gather and scatter
/// overlapped against the exchanges through two buffer pairs.
pub fn run_fused_swap_pipelined(
    shard: &mut LocalShard,
    p: usize,
    q: usize,
    s: usize,
    cfg: &DistConfig,
    transport: &dyn Transport,
    gate_seq: u64,
) -> Result<PipelineTrace> {
    let phases = plan_fused(shard, p, q, s, cfg, gate_seq)?;
    let mut traces = execute_phases(shard, &phases, transport, true)?;
    // Fallback (non local↔global) ranges run unpipelined.
    Ok(traces.pop().unwrap_or_else(|| PipelineTrace {
        rank: shard.rank(),
        ..Default::default()
    }))
}

/// Single-thread counterpart of [`execute_phases`] over all shards.
pub fn execute_lockstep(shards: &mut [LocalShard], plans: &[Vec<Phase>], transport: &dyn Transport) -> Result<()> {
    let phases = plans.first().map_or(0, Vec::len);
    if plans.iter().any(|p| p.len() != phases) {
        return Err(SimError::Config("ranks planned different phase counts".into()));
    }
    for k in 0..phases {
        let mut exchange_plans = Vec::with_capacity(shards.len());
        for (shard, plan) in shards.iter_mut().zip(plans) {
            match &plan[k] {
                Phase::Local(op) => op.apply(shard)?,
                Phase::Exchange { steps, .. } => exchange_plans.push(steps.clone()),
            }
        }
        if !exchange_plans.is_empty() {
            if exchange_plans.len() != shards.len() {
                return Err(SimError::Config("ranks disagree on phase kind".into()));
            }
            run_steps_lockstep(shards, &exchange_plans, transport)?;
        }
    }
    Ok(())
}
