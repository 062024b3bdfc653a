//! Per-rank amplitude storage and the purely local gate kernels.
//!
//! Qubit `q` is bit `q` of the global amplitude index. A shard on rank `r`
//! holds the `2^m` amplitudes whose global index is `(r << m) | j`.

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::layout::GlobalLayout;
use crate::{Result, SimError};

/// A double-precision probability amplitude (16 bytes).
pub type Amplitude = Complex64;

/// Payload size of one amplitude on the wire.
pub const AMPLITUDE_BYTES: u64 = 16;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Row-major 2x2 complex matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Matrix2(pub [Complex64; 4]);

/// Row-major 4x4 complex matrix.
///
/// Basis ordering of the 4-element subvector is `(b1 b0)` where `b0` is the
/// bit of the first operand (`q0`, weight 1) and `b1` the bit of the second
/// operand (`q1`, weight 2).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Matrix4(pub [Complex64; 16]);

impl Matrix2 {
    pub fn identity() -> Self {
        Self([ONE, ZERO, ZERO, ONE])
    }

    pub fn hadamard() -> Self {
        let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        Self([h, h, h, -h])
    }

    pub fn pauli_x() -> Self {
        Self([ZERO, ONE, ONE, ZERO])
    }

    /// `cos(θ/2)·I − i·sin(θ/2)·X`
    pub fn rx(theta: f64) -> Self {
        let (s, c) = (theta / 2.0).sin_cos();
        let c = Complex64::new(c, 0.0);
        let nis = -I * s;
        Self([c, nis, nis, c])
    }

    /// `diag(e^{−iθ/2}, e^{+iθ/2})`
    pub fn rz(theta: f64) -> Self {
        Self([
            Complex64::from_polar(1.0, -theta / 2.0),
            ZERO,
            ZERO,
            Complex64::from_polar(1.0, theta / 2.0),
        ])
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.0[row * 2 + col]
    }

    /// Maximum elementwise deviation of `U†U` from the identity.
    pub fn unitarity_error(&self) -> f64 {
        unitarity_error(&self.0, 2)
    }
}

impl Matrix4 {
    pub fn identity() -> Self {
        let mut m = [ZERO; 16];
        for k in 0..4 {
            m[k * 5] = ONE;
        }
        Self(m)
    }

    /// Exchanges the two operand bits: `|b1 b0⟩ → |b0 b1⟩`.
    pub fn swap() -> Self {
        Self::from_permutation([0, 2, 1, 3])
    }

    /// CNOT with `q1` (weight 2) as control and `q0` (weight 1) as target.
    pub fn cnot() -> Self {
        Self::from_permutation([0, 1, 3, 2])
    }

    /// Permutation matrix sending basis state `k` to `target[k]`.
    fn from_permutation(target: [usize; 4]) -> Self {
        let mut m = [ZERO; 16];
        for (col, &row) in target.iter().enumerate() {
            m[row * 4 + col] = ONE;
        }
        Self(m)
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.0[row * 4 + col]
    }

    pub fn unitarity_error(&self) -> f64 {
        unitarity_error(&self.0, 4)
    }
}

fn unitarity_error(u: &[Complex64], dim: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..dim {
        for j in 0..dim {
            let mut acc = ZERO;
            for k in 0..dim {
                acc += u[k * dim + i].conj() * u[k * dim + j];
            }
            let expect = if i == j { ONE } else { ZERO };
            worst = worst.max((acc - expect).norm());
        }
    }
    worst
}

// Matrices travel as row-major lists of `[re, im]` pairs.
fn serialize_entries<S: Serializer>(entries: &[Complex64], ser: S) -> Result<S::Ok, S::Error> {
    let pairs: Vec<[f64; 2]> = entries.iter().map(|c| [c.re, c.im]).collect();
    pairs.serialize(ser)
}

fn deserialize_entries<'de, D: Deserializer<'de>, const N: usize>(de: D) -> Result<[Complex64; N], D::Error> {
    let pairs = Vec::<[f64; 2]>::deserialize(de)?;
    if pairs.len() != N {
        return Err(serde::de::Error::invalid_length(
            pairs.len(),
            &format!("{N} complex entries").as_str(),
        ));
    }
    let mut out = [ZERO; N];
    for (slot, [re, im]) in out.iter_mut().zip(pairs) {
        *slot = Complex64::new(re, im);
    }
    Ok(out)
}

impl Serialize for Matrix2 {
    fn serialize<S: Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        serialize_entries(&self.0, ser)
    }
}

impl<'de> Deserialize<'de> for Matrix2 {
    fn deserialize<D: Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        deserialize_entries::<D, 4>(de).map(Self)
    }
}

impl Serialize for Matrix4 {
    fn serialize<S: Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        serialize_entries(&self.0, ser)
    }
}

impl<'de> Deserialize<'de> for Matrix4 {
    fn deserialize<D: Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        deserialize_entries::<D, 16>(de).map(Self)
    }
}

/// One rank's slice of the state vector.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalShard {
    rank: usize,
    n: usize,
    m: usize,
    amps: Vec<Amplitude>,
}

/// Prepares rank `rank`'s slice of `|0…0⟩`.
pub fn init_zero_state(layout: &GlobalLayout, rank: usize) -> Result<LocalShard> {
    if rank >= layout.ranks() {
        return Err(SimError::RankOutOfRange {
            rank,
            ranks: layout.ranks(),
        });
    }
    let mut amps = vec![ZERO; 1 << layout.m()];
    if rank == 0 {
        amps[0] = ONE;
    }
    Ok(LocalShard {
        rank,
        n: layout.n(),
        m: layout.m(),
        amps,
    })
}

impl LocalShard {
    /// Builds a shard from explicit amplitudes; `amps.len()` must be `2^m`.
    pub fn from_amplitudes(layout: &GlobalLayout, rank: usize, amps: Vec<Amplitude>) -> Result<Self> {
        let mut shard = init_zero_state(layout, rank)?;
        if amps.len() != shard.amps.len() {
            return Err(SimError::Config(format!(
                "shard needs {} amplitudes, got {}",
                shard.amps.len(),
                amps.len()
            )));
        }
        shard.amps = amps;
        Ok(shard)
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn amplitudes(&self) -> &[Amplitude] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Amplitude] {
        &mut self.amps
    }

    /// Global index of local amplitude `j`.
    #[inline]
    pub fn global_index(&self, j: usize) -> usize {
        (self.rank << self.m) | j
    }

    /// Bit `global_q - m` of the rank id, i.e. the value this rank fixes for
    /// global qubit `global_q`.
    #[inline]
    pub(crate) fn global_bit(&self, global_q: usize) -> usize {
        (self.rank >> (global_q - self.m)) & 1
    }

    pub fn norm_squared(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub(crate) fn check_local(&self, q: usize) -> Result<()> {
        if q >= self.n {
            Err(SimError::QubitOutOfRange { qubit: q, n: self.n })
        } else if q >= self.m {
            Err(SimError::NotLocal { qubit: q, m: self.m })
        } else {
            Ok(())
        }
    }

    fn check_local_pair(&self, a: usize, b: usize) -> Result<()> {
        self.check_local(a)?;
        self.check_local(b)?;
        if a == b {
            return Err(SimError::DuplicateQubit(a));
        }
        Ok(())
    }

    /// Applies `u` to every amplitude pair differing only in local bit `q`.
    pub fn apply_1q_local(&mut self, u: &Matrix2, q: usize) -> Result<()> {
        self.check_local(q)?;
        let [u00, u01, u10, u11] = u.0;
        let stride = 1usize << q;
        // Contiguous runs of `stride` lower/upper halves keep the inner loop
        // vectorizable for any q.
        for block in self.amps.chunks_exact_mut(stride << 1) {
            let (lo, hi) = block.split_at_mut(stride);
            for (a0, a1) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x0, x1) = (*a0, *a1);
                *a0 = u00 * x0 + u01 * x1;
                *a1 = u10 * x0 + u11 * x1;
            }
        }
        Ok(())
    }

    /// Applies `u` to each 4-amplitude group addressed by bits `(q1, q0)`.
    pub fn apply_2q_local(&mut self, u: &Matrix4, q0: usize, q1: usize) -> Result<()> {
        self.check_local_pair(q0, q1)?;
        let (b0, b1) = (1usize << q0, 1usize << q1);
        let (lo, hi) = (q0.min(q1), q0.max(q1));
        for k in 0..self.amps.len() >> 2 {
            let base = insert_zero_bit(insert_zero_bit(k, lo), hi);
            let idx = [base, base | b0, base | b1, base | b0 | b1];
            let v = idx.map(|i| self.amps[i]);
            for (row, &i) in idx.iter().enumerate() {
                let r = &u.0[row * 4..row * 4 + 4];
                self.amps[i] = r[0] * v[0] + r[1] * v[1] + r[2] * v[2] + r[3] * v[3];
            }
        }
        Ok(())
    }

    /// Flips local bit `target` wherever local bit `control` is set.
    pub fn apply_cnot_local(&mut self, control: usize, target: usize) -> Result<()> {
        self.check_local_pair(control, target)?;
        let (cb, tb) = (1usize << control, 1usize << target);
        let (lo, hi) = (control.min(target), control.max(target));
        for k in 0..self.amps.len() >> 2 {
            let i = insert_zero_bit(insert_zero_bit(k, lo), hi) | cb;
            self.amps.swap(i, i | tb);
        }
        Ok(())
    }

    /// Exchanges local bits `a` and `b` of every amplitude index.
    pub fn apply_swap_local(&mut self, a: usize, b: usize) -> Result<()> {
        self.check_local_pair(a, b)?;
        let (ab, bb) = (1usize << a, 1usize << b);
        let (lo, hi) = (a.min(b), a.max(b));
        for k in 0..self.amps.len() >> 2 {
            let i = insert_zero_bit(insert_zero_bit(k, lo), hi);
            self.amps.swap(i | ab, i | bb);
        }
        Ok(())
    }

    /// X on local qubit `q`.
    pub(crate) fn apply_x_local(&mut self, q: usize) -> Result<()> {
        self.check_local(q)?;
        let stride = 1usize << q;
        for block in self.amps.chunks_exact_mut(stride << 1) {
            let (lo, hi) = block.split_at_mut(stride);
            lo.swap_with_slice(hi);
        }
        Ok(())
    }
}

/// Inserts a zero at bit position `pos`, shifting higher bits up.
#[inline]
pub(crate) fn insert_zero_bit(k: usize, pos: usize) -> usize {
    let low = k & ((1 << pos) - 1);
    ((k >> pos) << (pos + 1)) | low
}
