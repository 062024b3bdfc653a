//! Exchange steps: gather a region of the shard, swap it with a partner rank,
//! and fold the received block back into the same region.

use num_complex::Complex64;

use crate::state::{Amplitude, LocalShard};
use crate::transport::{ExchangeTag, Transport};
use crate::Result;

/// An ordered set of local amplitude indices.
///
/// The set is every index whose bits `[bit_pos, bit_pos + width)` equal
/// `value`, enumerated in ascending order; the region covers enumeration
/// positions `[start, start + len)`. `width == 0` is a plain contiguous range.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Region {
    pub bit_pos: usize,
    pub width: usize,
    pub value: usize,
    pub start: usize,
    pub len: usize,
}

impl Region {
    pub fn contiguous(start: usize, len: usize) -> Self {
        Self {
            bit_pos: 0,
            width: 0,
            value: 0,
            start,
            len,
        }
    }

    /// `k`-th index of the (unwindowed) enumeration.
    #[inline]
    pub fn index(&self, k: usize) -> usize {
        if self.width == 0 {
            return k;
        }
        let low = k & ((1 << self.bit_pos) - 1);
        let high = k >> self.bit_pos;
        (high << (self.bit_pos + self.width)) | (self.value << self.bit_pos) | low
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        (self.start..self.start + self.len).map(|k| self.index(k))
    }
}

/// How a received block combines with the local amplitudes of its region.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Update {
    /// Local amplitudes are replaced by the partner's.
    Replace,
    /// `a' = local·a + remote·b`
    Linear { local: Complex64, remote: Complex64 },
    /// Replace only where local bit `control` is set.
    ControlledReplace { control: usize },
    /// Leave the region untouched (the exchange still happens).
    Keep,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub partner: usize,
    pub tag: ExchangeTag,
    pub region: Region,
    pub update: Update,
}

pub(crate) fn gather(shard: &LocalShard, region: &Region, send: &mut [Amplitude]) {
    let amps = shard.amplitudes();
    if region.width == 0 {
        send.copy_from_slice(&amps[region.start..region.start + region.len]);
        return;
    }
    for (slot, idx) in send.iter_mut().zip(region.indices()) {
        *slot = amps[idx];
    }
}

pub(crate) fn scatter(shard: &mut LocalShard, region: &Region, update: Update, recv: &[Amplitude]) {
    let amps = shard.amplitudes_mut();
    match update {
        Update::Keep => {}
        Update::Replace if region.width == 0 => {
            amps[region.start..region.start + region.len].copy_from_slice(recv);
        }
        Update::Replace => {
            for (&b, idx) in recv.iter().zip(region.indices()) {
                amps[idx] = b;
            }
        }
        Update::Linear { local, remote } => {
            for (&b, idx) in recv.iter().zip(region.indices()) {
                amps[idx] = local * amps[idx] + remote * b;
            }
        }
        Update::ControlledReplace { control } => {
            for (&b, idx) in recv.iter().zip(region.indices()) {
                if idx >> control & 1 == 1 {
                    amps[idx] = b;
                }
            }
        }
    }
}

fn max_len(steps: &[Step]) -> usize {
    steps.iter().map(|s| s.region.len).max().unwrap_or(0)
}

/// Gather, exchange, scatter; one step at a time.
pub fn run_steps(shard: &mut LocalShard, steps: &[Step], transport: &dyn Transport) -> Result<()> {
    let cap = max_len(steps);
    let mut send = vec![Amplitude::default(); cap];
    let mut recv = vec![Amplitude::default(); cap];
    for step in steps {
        let len = step.region.len;
        gather(shard, &step.region, &mut send[..len]);
        transport.exchange(shard.rank(), step.partner, step.tag, &send[..len], &mut recv[..len])?;
        scatter(shard, &step.region, step.update, &recv[..len]);
    }
    Ok(())
}

/// Drives every rank's step list from one thread. Step `j` of all ranks is
/// posted before any rank collects, so no exchange ever blocks.
pub fn run_steps_lockstep(shards: &mut [LocalShard], plans: &[Vec<Step>], transport: &dyn Transport) -> Result<()> {
    let rounds = plans.iter().map(Vec::len).max().unwrap_or(0);
    let cap = plans.iter().map(|p| max_len(p)).max().unwrap_or(0);
    let mut buf = vec![Amplitude::default(); cap];
    for j in 0..rounds {
        for (shard, plan) in shards.iter().zip(plans) {
            if let Some(step) = plan.get(j) {
                let len = step.region.len;
                gather(shard, &step.region, &mut buf[..len]);
                transport.post(step.tag, shard.rank(), step.partner, &buf[..len])?;
            }
        }
        for (shard, plan) in shards.iter_mut().zip(plans) {
            if let Some(step) = plan.get(j) {
                let len = step.region.len;
                transport.collect(step.tag, shard.rank(), step.partner, &mut buf[..len], false)?;
                scatter(shard, &step.region, step.update, &buf[..len]);
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn region_enumerates_fixed_bit_field() {
        // bits [1,3) == 0b10 over a 5-bit index space
        let r = Region {
            bit_pos: 1,
            width: 2,
            value: 0b10,
            start: 0,
            len: 8,
        };
        let got: Vec<_> = r.indices().collect();
        let want: Vec<_> = (0..32).filter(|i| (i >> 1) & 0b11 == 0b10).collect();
        assert_eq!(got, want);
        let window = Region { start: 3, len: 2, ..r };
        assert_eq!(window.indices().collect::<Vec<_>>(), want[3..5].to_vec());
    }

    #[test]
    fn contiguous_region_is_identity_enumeration() {
        let r = Region::contiguous(4, 3);
        assert_eq!(r.indices().collect::<Vec<_>>(), vec![4, 5, 6]);
    }
}
