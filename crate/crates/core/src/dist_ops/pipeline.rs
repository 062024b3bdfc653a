//! Double-buffered execution of exchange steps.
//!
//! Two send/receive buffer pairs alternate: while block `j` is in flight on
//! the communication thread, the rank thread scatters block `j-1` and gathers
//! block `j+1`. Block boundaries ignore partner boundaries, so the last
//! scatter for one partner overlaps the first exchange with the next.
//!
//! Steps must address pairwise disjoint regions: block `j+1` is gathered
//! before block `j` is scattered.

use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use serde::Serialize;

use super::steps::{gather, scatter, Step};
use crate::state::{Amplitude, LocalShard};
use crate::transport::{ProtocolError, Transport};
use crate::Result;

/// One send/receive pair, sized for the largest block.
#[derive(Debug)]
pub struct SwapBufferPair {
    pub send: Vec<Amplitude>,
    pub recv: Vec<Amplitude>,
}

impl SwapBufferPair {
    fn new(cap: usize) -> Self {
        Self {
            send: vec![Amplitude::default(); cap],
            recv: vec![Amplitude::default(); cap],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Stage {
    Gather,
    /// Block handed to the communication thread until the rank thread
    /// collects the result (the non-blocking send/receive window).
    Exchange,
    /// The transport call itself, as seen by the communication thread.
    Transfer,
    Scatter,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StageInterval {
    pub stage: Stage,
    pub block: usize,
    pub start: Duration,
    pub end: Duration,
}

impl StageInterval {
    fn overlaps(&self, other: &StageInterval) -> bool {
        self.start < other.end && other.start < self.end
    }
}

/// Stage timeline of one pipelined run on one rank.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct PipelineTrace {
    pub rank: usize,
    pub blocks: usize,
    pub intervals: Vec<StageInterval>,
}

impl PipelineTrace {
    /// Pairs `(exchange block, compute interval)` where a gather or scatter
    /// ran while an exchange was in flight.
    pub fn overlaps(&self) -> Vec<(usize, StageInterval)> {
        let mut out = Vec::new();
        for ex in self.intervals.iter().filter(|i| i.stage == Stage::Exchange) {
            for c in &self.intervals {
                if matches!(c.stage, Stage::Gather | Stage::Scatter) && ex.overlaps(c) {
                    out.push((ex.block, *c));
                }
            }
        }
        out
    }

    pub fn has_overlap(&self) -> bool {
        !self.overlaps().is_empty()
    }
}

struct Outcome {
    block: usize,
    bufs: SwapBufferPair,
    result: Result<(), ProtocolError>,
    transfer: (Duration, Duration),
}

/// Runs `steps` with gather/scatter overlapped against the exchanges.
pub fn run_steps_pipelined(shard: &mut LocalShard, steps: &[Step], transport: &dyn Transport) -> Result<PipelineTrace> {
    let rank = shard.rank();
    let mut trace = PipelineTrace {
        rank,
        blocks: steps.len(),
        intervals: Vec::with_capacity(steps.len() * 4),
    };
    if steps.is_empty() {
        return Ok(trace);
    }
    let cap = steps.iter().map(|s| s.region.len).max().unwrap_or(0);
    let origin = Instant::now();

    thread::scope(|scope| -> Result<PipelineTrace> {
        let (dispatch_tx, dispatch_rx) = mpsc::channel::<(usize, SwapBufferPair)>();
        let (done_tx, done_rx) = mpsc::channel::<Outcome>();
        scope.spawn(move || {
            for (block, mut bufs) in dispatch_rx {
                let step = &steps[block];
                let len = step.region.len;
                let t0 = origin.elapsed();
                let result = transport.exchange(rank, step.partner, step.tag, &bufs.send[..len], &mut bufs.recv[..len]);
                let t1 = origin.elapsed();
                let failed = result.is_err();
                let sent = done_tx.send(Outcome {
                    block,
                    bufs,
                    result,
                    transfer: (t0, t1),
                });
                if failed || sent.is_err() {
                    break;
                }
            }
        });

        let record = |trace: &mut PipelineTrace, stage, block, start| {
            trace.intervals.push(StageInterval {
                stage,
                block,
                start,
                end: origin.elapsed(),
            });
        };
        let dispatch = |block: usize, bufs: SwapBufferPair| {
            dispatch_tx
                .send((block, bufs))
                .map_err(|_| ProtocolError::Aborted("communication thread exited".into()))
        };

        let mut spare = Some(SwapBufferPair::new(cap));
        let mut first = SwapBufferPair::new(cap);
        let t = origin.elapsed();
        gather(shard, &steps[0].region, &mut first.send[..steps[0].region.len]);
        record(&mut trace, Stage::Gather, 0, t);
        dispatch(0, first)?;
        let mut in_flight_since = origin.elapsed();
        // Buffer pair whose exchange completed but is not yet scattered.
        let mut pending: Option<(usize, SwapBufferPair)> = None;

        for j in 0..steps.len() {
            let mut free = spare.take();
            if let Some((done, bufs)) = pending.take() {
                let t = origin.elapsed();
                let len = steps[done].region.len;
                scatter(shard, &steps[done].region, steps[done].update, &bufs.recv[..len]);
                record(&mut trace, Stage::Scatter, done, t);
                free = Some(bufs);
            }
            let next = j + 1;
            let mut staged = None;
            if next < steps.len() {
                let mut bufs = free.take().expect("a free buffer pair");
                let t = origin.elapsed();
                gather(shard, &steps[next].region, &mut bufs.send[..steps[next].region.len]);
                record(&mut trace, Stage::Gather, next, t);
                staged = Some(bufs);
            }
            spare = free;

            let out = done_rx
                .recv()
                .map_err(|_| ProtocolError::Aborted("communication thread exited".into()))?;
            debug_assert_eq!(out.block, j);
            record(&mut trace, Stage::Exchange, j, in_flight_since);
            trace.intervals.push(StageInterval {
                stage: Stage::Transfer,
                block: j,
                start: out.transfer.0,
                end: out.transfer.1,
            });
            out.result?;

            if let Some(bufs) = staged {
                dispatch(next, bufs)?;
                in_flight_since = origin.elapsed();
            }
            pending = Some((j, out.bufs));
        }
        drop(dispatch_tx);

        if let Some((done, bufs)) = pending {
            let t = origin.elapsed();
            let len = steps[done].region.len;
            scatter(shard, &steps[done].region, steps[done].update, &bufs.recv[..len]);
            record(&mut trace, Stage::Scatter, done, t);
        }
        Ok(std::mem::take(&mut trace))
    })
}
