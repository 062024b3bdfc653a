//! A simulated cluster: one shard per rank plus the transport connecting
//! them, driven either by one worker thread per rank or by a single thread
//! stepping every rank in lockstep.

use std::thread;
use std::time::{Duration, Instant};

use crate::circuits::{Circuit, GateOp};
use crate::dist_ops::{self, DistConfig, PipelineTrace};
use crate::layout::GlobalLayout;
use crate::state::{init_zero_state, Amplitude, LocalShard};
use crate::transport::{watchdog_from_env, CommStats, LocalTransport, ProtocolError, Transport};
use crate::{Result, SimError};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Mode {
    /// One worker thread per rank, blocking rendezvous exchanges.
    #[default]
    Threaded,
    /// A single thread steps all ranks phase by phase.
    Sequential,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExecConfig {
    pub mode: Mode,
    pub dist: DistConfig,
    /// Use the double-buffered path for local↔global fused swaps
    /// (threaded mode only).
    pub pipelined: bool,
    pub watchdog: Duration,
    /// Keep pipeline traces in [`RunOutcome::traces`].
    pub record_traces: bool,
}

impl Default for ExecConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Threaded,
            dist: DistConfig::default(),
            pipelined: true,
            watchdog: watchdog_from_env(),
            record_traces: false,
        }
    }
}

impl ExecConfig {
    pub fn sequential() -> Self {
        Self {
            mode: Mode::Sequential,
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunOutcome {
    /// Traffic of this run only.
    pub stats: CommStats,
    pub traces: Vec<PipelineTrace>,
    pub elapsed: Duration,
}

pub struct Cluster {
    layout: GlobalLayout,
    cfg: ExecConfig,
    shards: Vec<LocalShard>,
    transport: LocalTransport,
}

impl Cluster {
    /// Ranks start in `|0…0⟩`. Only the rank count and the local/global
    /// split of `layout` matter; circuits run on it address physical
    /// positions.
    pub fn new(layout: &GlobalLayout, cfg: ExecConfig) -> Result<Self> {
        let shards = (0..layout.ranks())
            .map(|r| init_zero_state(layout, r))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            layout: layout.clone(),
            cfg,
            shards,
            transport: LocalTransport::with_watchdog(layout.ranks(), cfg.watchdog),
        })
    }

    pub fn layout(&self) -> &GlobalLayout {
        &self.layout
    }

    pub fn config(&self) -> &ExecConfig {
        &self.cfg
    }

    pub fn shards(&self) -> &[LocalShard] {
        &self.shards
    }

    /// Back to `|0…0⟩` with zeroed counters.
    pub fn reset(&mut self) -> Result<()> {
        for shard in &mut self.shards {
            *shard = init_zero_state(&self.layout, shard.rank())?;
        }
        self.fresh_transport();
        Ok(())
    }

    /// Loads a full physical state vector of `2^n` amplitudes.
    pub fn load_state(&mut self, amps: &[Amplitude]) -> Result<()> {
        let len = self.layout.shard_len();
        if amps.len() != len * self.layout.ranks() {
            return Err(SimError::Config(format!(
                "state needs {} amplitudes, got {}",
                len * self.layout.ranks(),
                amps.len()
            )));
        }
        for (shard, part) in self.shards.iter_mut().zip(amps.chunks_exact(len)) {
            shard.amplitudes_mut().copy_from_slice(part);
        }
        Ok(())
    }

    /// Physical state vector, shards concatenated in rank order.
    pub fn state(&self) -> Vec<Amplitude> {
        self.shards
            .iter()
            .flat_map(|s| s.amplitudes().iter().copied())
            .collect()
    }

    pub fn norm(&self) -> f64 {
        self.shards.iter().map(LocalShard::norm_squared).sum::<f64>().sqrt()
    }

    /// Cumulative counters since creation or the last reset.
    pub fn stats(&self) -> Result<CommStats> {
        Ok(self.transport.snapshot_stats()?)
    }

    pub fn apply_op(&mut self, op: &GateOp) -> Result<RunOutcome> {
        self.run_ops(std::slice::from_ref(op))
    }

    /// Runs `circuit` (physical operands) on the current state.
    pub fn run(&mut self, circuit: &Circuit) -> Result<RunOutcome> {
        if circuit.n != self.layout.n() {
            return Err(SimError::Config(format!(
                "circuit has {} qubits, cluster {}",
                circuit.n,
                self.layout.n()
            )));
        }
        self.run_ops(&circuit.ops)
    }

    fn run_ops(&mut self, ops: &[GateOp]) -> Result<RunOutcome> {
        for op in ops {
            op.validate(self.layout.n())?;
        }
        let before = self.transport.snapshot_stats()?;
        let start = Instant::now();
        let result = match self.cfg.mode {
            Mode::Threaded => self.run_threaded(ops),
            Mode::Sequential => self.run_sequential(ops).map(|()| Vec::new()),
        };
        let elapsed = start.elapsed();
        match result {
            Ok(traces) => Ok(RunOutcome {
                stats: self.transport.snapshot_stats()?.since(&before),
                traces,
                elapsed,
            }),
            Err(e) => {
                // Undelivered messages or the abort flag would poison later runs.
                self.fresh_transport();
                Err(e)
            }
        }
    }

    fn fresh_transport(&mut self) {
        self.transport = LocalTransport::with_watchdog(self.layout.ranks(), self.cfg.watchdog);
    }

    fn run_threaded(&mut self, ops: &[GateOp]) -> Result<Vec<PipelineTrace>> {
        let cfg = self.cfg;
        let transport = &self.transport;
        let results: Vec<Result<Vec<PipelineTrace>>> = thread::scope(|scope| {
            let workers: Vec<_> = self
                .shards
                .iter_mut()
                .map(|shard| {
                    scope.spawn(move || {
                        let mut traces = Vec::new();
                        for (k, op) in ops.iter().enumerate() {
                            match dist_ops::apply_op(shard, op, k as u64, &cfg.dist, transport, cfg.pipelined) {
                                Ok(t) if cfg.record_traces => traces.extend(t),
                                Ok(_) => {}
                                Err(e) => {
                                    transport.abort(&format!("rank {} failed at op {k}: {e}", shard.rank()));
                                    return Err(e);
                                }
                            }
                        }
                        Ok(traces)
                    })
                })
                .collect();
            workers
                .into_iter()
                .map(|w| {
                    w.join().unwrap_or_else(|_| {
                        transport.abort("rank worker panicked");
                        Err(SimError::Protocol(ProtocolError::Aborted(
                            "rank worker panicked".into(),
                        )))
                    })
                })
                .collect()
        });

        let mut traces = Vec::new();
        let mut secondary = None;
        for r in results {
            match r {
                Ok(t) => traces.extend(t),
                Err(SimError::Protocol(ProtocolError::Aborted(msg))) => {
                    secondary.get_or_insert(SimError::Protocol(ProtocolError::Aborted(msg)));
                }
                Err(e) => return Err(e),
            }
        }
        match secondary {
            Some(e) => Err(e),
            None => Ok(traces),
        }
    }

    fn run_sequential(&mut self, ops: &[GateOp]) -> Result<()> {
        for (k, op) in ops.iter().enumerate() {
            let plans = self
                .shards
                .iter()
                .map(|s| dist_ops::plan_op(s, op, k as u64, &self.cfg.dist))
                .collect::<Result<Vec<_>>>()?;
            dist_ops::execute_lockstep(&mut self.shards, &plans, &self.transport)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuits::gen_qsb;

    fn run(mode: Mode, n: usize, p: usize) -> (Vec<Amplitude>, CommStats) {
        let layout = GlobalLayout::new(n, p).unwrap();
        let mut c = Cluster::new(
            &layout,
            ExecConfig {
                mode,
                ..ExecConfig::default()
            },
        )
        .unwrap();
        let out = c.run(&gen_qsb(n, 5).unwrap()).unwrap();
        (c.state(), out.stats)
    }

    #[test]
    fn modes_agree_bitwise() {
        let (a, sa) = run(Mode::Threaded, 6, 2);
        let (b, sb) = run(Mode::Sequential, 6, 2);
        assert_eq!(a, b);
        assert_eq!(sa, sb);
        assert!(sa.bytes_total > 0);
    }

    #[test]
    fn single_rank_moves_nothing() {
        let (state, stats) = run(Mode::Threaded, 5, 0);
        assert_eq!(stats.bytes_total, 0);
        let norm: f64 = state.iter().map(|a| a.norm_sqr()).sum();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn error_names_root_cause_and_cluster_recovers() {
        let layout = GlobalLayout::new(4, 2).unwrap();
        let mut c = Cluster::new(&layout, ExecConfig::default()).unwrap();
        let bad = GateOp::Dense2 {
            q0: 0,
            q1: 3,
            u: crate::Matrix4::identity(),
        };
        assert!(matches!(c.apply_op(&bad), Err(SimError::NonLocalDense2 { .. })));
        let out = c.apply_op(&GateOp::H { q: 3 }).unwrap();
        assert_eq!(out.stats.bytes_total, 256);
    }

    #[test]
    fn load_and_reset() {
        let layout = GlobalLayout::new(3, 1).unwrap();
        let mut c = Cluster::new(&layout, ExecConfig::sequential()).unwrap();
        let amps: Vec<Amplitude> = (0..8).map(|k| Amplitude::new(k as f64, 0.0)).collect();
        c.load_state(&amps).unwrap();
        assert_eq!(c.state(), amps);
        assert!(c.load_state(&amps[..4]).is_err());
        c.reset().unwrap();
        assert_eq!(c.state()[0], Amplitude::new(1.0, 0.0));
        assert_eq!(c.stats().unwrap().bytes_total, 0);
    }

    #[test]
    fn qubit_count_mismatch() {
        let layout = GlobalLayout::new(3, 1).unwrap();
        let mut c = Cluster::new(&layout, ExecConfig::default()).unwrap();
        assert!(c.run(&Circuit::new(4)).is_err());
    }
}
