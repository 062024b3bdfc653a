//! Message passing between rank workers with exact payload accounting.
//!
//! [`LocalTransport`] is an in-process rendezvous implementation: an
//! [`Transport::exchange`] returns only once the partner has posted the
//! mirrored message carrying the same [`ExchangeTag`]. Messages are matched
//! by tag and by per-direction FIFO order, never by arrival time, so results
//! and counters are independent of thread scheduling.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::sync::{Condvar, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::state::{Amplitude, AMPLITUDE_BYTES};

/// Environment variable overriding the watchdog timeout, in seconds.
pub const WATCHDOG_ENV: &str = "DVSIM_WATCHDOG_SECS";

pub const DEFAULT_WATCHDOG: Duration = Duration::from_secs(30);

/// Watchdog timeout from [`WATCHDOG_ENV`], falling back to 30 s.
pub fn watchdog_from_env() -> Duration {
    std::env::var(WATCHDOG_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<f64>().ok())
        .filter(|s| s.is_finite() && *s > 0.0)
        .map(Duration::from_secs_f64)
        .unwrap_or(DEFAULT_WATCHDOG)
}

/// Identifies one pairwise exchange within a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExchangeTag {
    pub gate_seq: u64,
    pub step: u64,
    pub pair_low_rank: usize,
}

impl ExchangeTag {
    pub fn new(gate_seq: u64, step: u64, rank: usize, partner: usize) -> Self {
        Self {
            gate_seq,
            step,
            pair_low_rank: rank.min(partner),
        }
    }
}

impl fmt::Display for ExchangeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "gate {} step {} pair {}",
            self.gate_seq, self.step, self.pair_low_rank
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("rank {rank} expected message {expected} from rank {from}, found {found}")]
    TagMismatch {
        rank: usize,
        from: usize,
        expected: ExchangeTag,
        found: ExchangeTag,
    },
    #[error("exchange {tag}: expected {expected} amplitudes, partner sent {found}")]
    LengthMismatch {
        tag: ExchangeTag,
        expected: usize,
        found: usize,
    },
    #[error("rank {rank} waited {waited:?} for rank {partner} on {tag}")]
    Timeout {
        rank: usize,
        partner: usize,
        tag: ExchangeTag,
        waited: Duration,
    },
    #[error("rank {rank} is not part of a {ranks}-rank transport")]
    UnknownRank { rank: usize, ranks: usize },
    #[error("rank {0} cannot exchange with itself")]
    SelfExchange(usize),
    #[error("statistics accessed with {0} message(s) in flight")]
    InFlight(usize),
    #[error("no message from rank {from} to rank {to} for {tag}")]
    Missing { from: usize, to: usize, tag: ExchangeTag },
    #[error("run aborted: {0}")]
    Aborted(String),
}

/// Payload counters. Only amplitude bytes are counted (16 per amplitude);
/// each rank is credited with what it sends.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommStats {
    pub bytes_sent_per_rank: Vec<u64>,
    pub messages_per_rank: Vec<u64>,
    pub bytes_total: u64,
}

impl CommStats {
    pub fn new(ranks: usize) -> Self {
        Self {
            bytes_sent_per_rank: vec![0; ranks],
            messages_per_rank: vec![0; ranks],
            bytes_total: 0,
        }
    }

    fn credit(&mut self, rank: usize, amplitudes: usize) {
        let bytes = amplitudes as u64 * AMPLITUDE_BYTES;
        self.bytes_sent_per_rank[rank] += bytes;
        self.messages_per_rank[rank] += 1;
        self.bytes_total += bytes;
    }

    pub fn messages_total(&self) -> u64 {
        self.messages_per_rank.iter().sum()
    }

    /// Counter deltas since `earlier`.
    pub fn since(&self, earlier: &CommStats) -> CommStats {
        let sub = |a: &[u64], b: &[u64]| a.iter().zip(b).map(|(x, y)| x - y).collect();
        CommStats {
            bytes_sent_per_rank: sub(&self.bytes_sent_per_rank, &earlier.bytes_sent_per_rank),
            messages_per_rank: sub(&self.messages_per_rank, &earlier.messages_per_rank),
            bytes_total: self.bytes_total - earlier.bytes_total,
        }
    }
}

/// Pairwise amplitude exchange between ranks.
///
/// `post` and `collect` are the two halves of an exchange; they are exposed
/// so a single thread can step every rank in lockstep. Rank workers normally
/// call [`Transport::exchange`].
pub trait Transport: Send + Sync {
    fn ranks(&self) -> usize;

    /// Queues `payload` for `to` under `tag` and credits `from`'s counters.
    fn post(&self, tag: ExchangeTag, from: usize, to: usize, payload: &[Amplitude]) -> Result<(), ProtocolError>;

    /// Takes the next message from `from` to `me` into `out`. With `wait`
    /// unset, a missing message is an error instead of a blocking wait.
    fn collect(
        &self,
        tag: ExchangeTag,
        me: usize,
        from: usize,
        out: &mut [Amplitude],
        wait: bool,
    ) -> Result<(), ProtocolError>;

    /// Symmetric rendezvous: sends `send` to `partner` and fills `recv` with
    /// the partner's block once it arrives.
    fn exchange(
        &self,
        self_rank: usize,
        partner_rank: usize,
        tag: ExchangeTag,
        send: &[Amplitude],
        recv: &mut [Amplitude],
    ) -> Result<(), ProtocolError> {
        self.post(tag, self_rank, partner_rank, send)?;
        self.collect(tag, self_rank, partner_rank, recv, true)
    }

    fn snapshot_stats(&self) -> Result<CommStats, ProtocolError>;

    fn reset_stats(&self) -> Result<(), ProtocolError>;

    /// Fails every pending and future exchange with `reason`.
    fn abort(&self, reason: &str);
}

struct Message {
    tag: ExchangeTag,
    data: Vec<Amplitude>,
}

#[derive(Default)]
struct Mailboxes {
    /// (from, to) → messages in posting order
    queues: HashMap<(usize, usize), VecDeque<Message>>,
    in_flight: usize,
    stats: CommStats,
    aborted: Option<String>,
}

/// In-process rendezvous transport for `ranks` workers.
pub struct LocalTransport {
    ranks: usize,
    watchdog: Duration,
    state: Mutex<Mailboxes>,
    arrived: Condvar,
}

impl LocalTransport {
    pub fn new(ranks: usize) -> Self {
        Self::with_watchdog(ranks, DEFAULT_WATCHDOG)
    }

    pub fn with_watchdog(ranks: usize, watchdog: Duration) -> Self {
        Self {
            ranks,
            watchdog,
            state: Mutex::new(Mailboxes {
                stats: CommStats::new(ranks),
                ..Default::default()
            }),
            arrived: Condvar::new(),
        }
    }

    pub fn watchdog(&self) -> Duration {
        self.watchdog
    }

    fn lock(&self) -> MutexGuard<'_, Mailboxes> {
        // A panicking worker leaves the counters consistent; keep going.
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn check_rank(&self, rank: usize) -> Result<(), ProtocolError> {
        if rank < self.ranks {
            Ok(())
        } else {
            Err(ProtocolError::UnknownRank {
                rank,
                ranks: self.ranks,
            })
        }
    }

    fn check_pair(&self, a: usize, b: usize) -> Result<(), ProtocolError> {
        self.check_rank(a)?;
        self.check_rank(b)?;
        if a == b {
            return Err(ProtocolError::SelfExchange(a));
        }
        Ok(())
    }
}

impl Transport for LocalTransport {
    fn ranks(&self) -> usize {
        self.ranks
    }

    fn post(&self, tag: ExchangeTag, from: usize, to: usize, payload: &[Amplitude]) -> Result<(), ProtocolError> {
        self.check_pair(from, to)?;
        let mut st = self.lock();
        if let Some(reason) = &st.aborted {
            return Err(ProtocolError::Aborted(reason.clone()));
        }
        st.queues.entry((from, to)).or_default().push_back(Message {
            tag,
            data: payload.to_vec(),
        });
        st.in_flight += 1;
        st.stats.credit(from, payload.len());
        drop(st);
        self.arrived.notify_all();
        Ok(())
    }

    fn collect(
        &self,
        tag: ExchangeTag,
        me: usize,
        from: usize,
        out: &mut [Amplitude],
        wait: bool,
    ) -> Result<(), ProtocolError> {
        self.check_pair(me, from)?;
        let deadline = Instant::now() + self.watchdog;
        let mut st = self.lock();
        loop {
            if let Some(reason) = &st.aborted {
                return Err(ProtocolError::Aborted(reason.clone()));
            }
            if let Some(front) = st.queues.get(&(from, me)).and_then(|q| q.front()) {
                if front.tag != tag {
                    return Err(ProtocolError::TagMismatch {
                        rank: me,
                        from,
                        expected: tag,
                        found: front.tag,
                    });
                }
                if front.data.len() != out.len() {
                    return Err(ProtocolError::LengthMismatch {
                        tag,
                        expected: out.len(),
                        found: front.data.len(),
                    });
                }
                let msg = st
                    .queues
                    .get_mut(&(from, me))
                    .and_then(VecDeque::pop_front)
                    .expect("front exists");
                st.in_flight -= 1;
                out.copy_from_slice(&msg.data);
                return Ok(());
            }
            if !wait {
                return Err(ProtocolError::Missing { from, to: me, tag });
            }
            let now = Instant::now();
            if now >= deadline {
                return Err(ProtocolError::Timeout {
                    rank: me,
                    partner: from,
                    tag,
                    waited: self.watchdog,
                });
            }
            st = self
                .arrived
                .wait_timeout(st, deadline - now)
                .unwrap_or_else(|e| e.into_inner())
                .0;
        }
    }

    fn snapshot_stats(&self) -> Result<CommStats, ProtocolError> {
        let st = self.lock();
        if st.in_flight > 0 {
            return Err(ProtocolError::InFlight(st.in_flight));
        }
        Ok(st.stats.clone())
    }

    fn reset_stats(&self) -> Result<(), ProtocolError> {
        let mut st = self.lock();
        if st.in_flight > 0 {
            return Err(ProtocolError::InFlight(st.in_flight));
        }
        st.stats = CommStats::new(self.ranks);
        Ok(())
    }

    fn abort(&self, reason: &str) {
        let mut st = self.lock();
        if st.aborted.is_none() {
            st.aborted = Some(reason.to_string());
        }
        drop(st);
        self.arrived.notify_all();
    }
}
