//! Index arithmetic for the `(n, p, m)` partition and the logical→physical
//! qubit permutation tracked during transpilation.

use crate::{Result, SimError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Locality {
    Local,
    Global,
}

/// Partition of `n` qubits into `m` local and `p` global positions over
/// `2^p` ranks, plus a logical→physical qubit permutation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GlobalLayout {
    n: usize,
    p: usize,
    /// physical position → logical qubit
    phys_to_log: Vec<usize>,
    /// logical qubit → physical position
    log_to_phys: Vec<usize>,
}

impl GlobalLayout {
    /// Layout for `n` qubits over `2^p` ranks with an identity permutation.
    pub fn new(n: usize, p: usize) -> Result<Self> {
        if p >= n {
            return Err(SimError::InvalidLayout(format!(
                "{n} qubits over 2^{p} ranks leaves no local qubit"
            )));
        }
        if n >= usize::BITS as usize - 1 {
            return Err(SimError::InvalidLayout(format!("{n} qubits is too many")));
        }
        let ident: Vec<usize> = (0..n).collect();
        Ok(Self {
            n,
            p,
            phys_to_log: ident.clone(),
            log_to_phys: ident,
        })
    }

    /// Layout from a rank count, which must be a power of two.
    pub fn with_ranks(n: usize, ranks: usize) -> Result<Self> {
        if ranks == 0 || !ranks.is_power_of_two() {
            return Err(SimError::InvalidLayout(format!(
                "rank count {ranks} is not a power of two"
            )));
        }
        Self::new(n, ranks.trailing_zeros() as usize)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn m(&self) -> usize {
        self.n - self.p
    }

    pub fn ranks(&self) -> usize {
        1 << self.p
    }

    /// Amplitudes per rank.
    pub fn shard_len(&self) -> usize {
        1 << self.m()
    }

    fn check_position(&self, q: usize) -> Result<()> {
        if q < self.n {
            Ok(())
        } else {
            Err(SimError::QubitOutOfRange { qubit: q, n: self.n })
        }
    }

    pub fn classify(&self, physical_q: usize) -> Result<Locality> {
        self.check_position(physical_q)?;
        Ok(if physical_q < self.m() {
            Locality::Local
        } else {
            Locality::Global
        })
    }

    pub fn is_local(&self, physical_q: usize) -> bool {
        physical_q < self.m()
    }

    /// The rank that holds the other half of every amplitude pair of global
    /// qubit `physical_q`: `rank XOR 2^(q-m)`.
    pub fn partner_rank(&self, rank: usize, physical_q: usize) -> Result<usize> {
        if self.classify(physical_q)? == Locality::Local {
            return Err(SimError::NotGlobal {
                qubit: physical_q,
                m: self.m(),
            });
        }
        if rank >= self.ranks() {
            return Err(SimError::RankOutOfRange {
                rank,
                ranks: self.ranks(),
            });
        }
        Ok(rank ^ (1 << (physical_q - self.m())))
    }

    /// Physical position currently holding logical qubit `logical_q`.
    pub fn resolve(&self, logical_q: usize) -> Result<usize> {
        self.check_position(logical_q)?;
        Ok(self.log_to_phys[logical_q])
    }

    /// Logical qubit currently stored at `physical_q`.
    pub fn logical_at(&self, physical_q: usize) -> Result<usize> {
        self.check_position(physical_q)?;
        Ok(self.phys_to_log[physical_q])
    }

    /// logical → physical table.
    pub fn permutation(&self) -> &[usize] {
        &self.log_to_phys
    }

    pub fn is_identity(&self) -> bool {
        self.log_to_phys.iter().enumerate().all(|(l, &p)| l == p)
    }

    /// Records that the data at physical positions `a` and `b` was exchanged.
    pub fn swap_positions(&mut self, a: usize, b: usize) -> Result<()> {
        self.check_position(a)?;
        self.check_position(b)?;
        let (la, lb) = (self.phys_to_log[a], self.phys_to_log[b]);
        self.phys_to_log.swap(a, b);
        self.log_to_phys[la] = b;
        self.log_to_phys[lb] = a;
        Ok(())
    }

    /// Records a fused swap of positions `[p, p+s)` with `[q, q+s)`.
    pub fn fused_swap_positions(&mut self, p: usize, q: usize, s: usize) -> Result<()> {
        check_fused_ranges(self.n, p, q, s)?;
        for i in 0..s {
            self.swap_positions(p + i, q + i)?;
        }
        Ok(())
    }

    /// Replaces the permutation; `log_to_phys` must be a bijection on `[0, n)`.
    pub fn set_permutation(&mut self, log_to_phys: Vec<usize>) -> Result<()> {
        if log_to_phys.len() != self.n {
            return Err(SimError::InvalidLayout("permutation length mismatch".into()));
        }
        let mut phys_to_log = vec![usize::MAX; self.n];
        for (l, &p) in log_to_phys.iter().enumerate() {
            if p >= self.n || phys_to_log[p] != usize::MAX {
                return Err(SimError::InvalidLayout("permutation is not a bijection".into()));
            }
            phys_to_log[p] = l;
        }
        self.log_to_phys = log_to_phys;
        self.phys_to_log = phys_to_log;
        Ok(())
    }
}

/// Validates fused-swap operands: both ranges inside `[0, n)`, `s >= 1`,
/// and disjoint.
pub fn check_fused_ranges(n: usize, p: usize, q: usize, s: usize) -> Result<()> {
    let disjoint = p + s <= q || q + s <= p;
    if s == 0 || !disjoint {
        return Err(SimError::InvalidFusedSwap { p, q, s });
    }
    let top = p.max(q) + s;
    if top > n {
        return Err(SimError::QubitOutOfRange { qubit: top - 1, n });
    }
    Ok(())
}
