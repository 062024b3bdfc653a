//! Comparison of distributed runs against a single-rank reference run.

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::circuits::{Circuit, GateOp};
use crate::cluster::{Cluster, ExecConfig, Mode};
use crate::layout::GlobalLayout;
use crate::state::Amplitude;
use crate::transpile::{Localized, Origin};
use crate::{Result, SimError};

pub const DEFAULT_ORACLE_LIMIT: usize = 12;
pub const DEFAULT_TOLERANCE: f64 = 1e-12;

/// Amplitudes are rounded to this grid before hashing.
pub const DIGEST_GRID: f64 = 1e-12;

/// SHA-256 (hex) over the real and imaginary parts rounded to
/// [`DIGEST_GRID`], as little-endian `i64`.
pub fn state_digest(amps: &[Amplitude]) -> String {
    let mut h = Sha256::new();
    for a in amps {
        for x in [a.re, a.im] {
            let q = (x / DIGEST_GRID).round() as i64;
            h.update(q.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

pub fn max_abs_diff(a: &[Amplitude], b: &[Amplitude]) -> f64 {
    assert_eq!(a.len(), b.len(), "state lengths differ");
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn norm(amps: &[Amplitude]) -> f64 {
    amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
}

/// Reorders a physical state vector into logical qubit order.
pub fn to_logical(physical: &[Amplitude], layout: &GlobalLayout) -> Vec<Amplitude> {
    if layout.is_identity() {
        return physical.to_vec();
    }
    let perm = layout.permutation();
    let mut out = vec![Amplitude::default(); physical.len()];
    for (logical, slot) in out.iter_mut().enumerate() {
        let mut phys = 0;
        for (q, &pos) in perm.iter().enumerate() {
            phys |= ((logical >> q) & 1) << pos;
        }
        *slot = physical[phys];
    }
    out
}

/// Final state of `circuit` on one rank.
pub fn reference_state(circuit: &Circuit) -> Result<Vec<Amplitude>> {
    let layout = GlobalLayout::new(circuit.n, 0)?;
    let mut c = Cluster::new(&layout, ExecConfig::sequential())?;
    c.run(circuit)?;
    Ok(c.state())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VerifyConfig {
    pub tolerance: f64,
    /// Largest qubit count accepted for the reference run.
    pub oracle_limit: usize,
    /// Replay op by op to find the first divergent op on failure.
    pub locate: bool,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            tolerance: DEFAULT_TOLERANCE,
            oracle_limit: DEFAULT_ORACLE_LIMIT,
            locate: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Divergence {
    /// Index into the localized circuit.
    pub op_index: usize,
    /// Index into the source circuit, if the op came from it.
    pub source_index: Option<usize>,
    pub max_abs_diff: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyReport {
    pub n: usize,
    pub ranks: usize,
    pub max_abs_diff: f64,
    pub norm: f64,
    pub digest: String,
    pub reference_digest: String,
    pub passed: bool,
    pub divergence: Option<Divergence>,
}

/// Layout after the inserted ops of `localized`, starting from `start`.
/// Derived from the ops themselves so a tampered circuit is mapped the way
/// it actually ran.
pub fn replay_layout(localized: &Localized, start: &GlobalLayout) -> Result<GlobalLayout> {
    let mut layout = start.clone();
    for (op, origin) in localized.circuit.ops.iter().zip(&localized.origins) {
        if *origin == Origin::Inserted {
            track(&mut layout, op)?;
        }
    }
    Ok(layout)
}

fn track(layout: &mut GlobalLayout, op: &GateOp) -> Result<()> {
    match *op {
        GateOp::FusedSwap { p, q, s } => layout.fused_swap_positions(p, q, s),
        GateOp::Swap { i, j } => layout.swap_positions(i, j),
        _ => Err(SimError::InvalidCircuit(format!(
            "inserted op {} is not a swap",
            op.name()
        ))),
    }
}

/// Runs `localized` on a cluster laid out as `layout` and compares the
/// result, in logical order, with a single-rank run of `source`.
pub fn verify_localized(
    source: &Circuit,
    localized: &Localized,
    layout: &GlobalLayout,
    exec: &ExecConfig,
    cfg: &VerifyConfig,
) -> Result<VerifyReport> {
    if source.n > cfg.oracle_limit {
        return Err(SimError::Config(format!(
            "{} qubits exceeds the reference limit of {}",
            source.n, cfg.oracle_limit
        )));
    }
    let reference = reference_state(source)?;
    let mut cluster = Cluster::new(layout, *exec)?;
    cluster.run(&localized.circuit)?;
    let state = to_logical(&cluster.state(), &replay_layout(localized, layout)?);
    let diff = max_abs_diff(&state, &reference);
    let passed = diff <= cfg.tolerance && (norm(&state) - 1.0).abs() <= cfg.tolerance;
    let divergence = if !passed && cfg.locate {
        locate_divergence(source, localized, layout, exec, cfg.tolerance)?
    } else {
        None
    };
    Ok(VerifyReport {
        n: source.n,
        ranks: layout.ranks(),
        max_abs_diff: diff,
        norm: norm(&state),
        digest: state_digest(&state),
        reference_digest: state_digest(&reference),
        passed,
        divergence,
    })
}

/// Replays `localized` one op at a time against the reference and returns
/// the first op after which the logical states differ by more than `tol`.
pub fn locate_divergence(
    source: &Circuit,
    localized: &Localized,
    layout: &GlobalLayout,
    exec: &ExecConfig,
    tol: f64,
) -> Result<Option<Divergence>> {
    let mut dist = Cluster::new(
        layout,
        ExecConfig {
            mode: Mode::Sequential,
            ..*exec
        },
    )?;
    let mut reference = Cluster::new(&GlobalLayout::new(source.n, 0)?, ExecConfig::sequential())?;
    let mut current = layout.clone();
    let ops = &localized.circuit.ops;
    let mut applied_source = None;
    for (k, (op, origin)) in ops.iter().zip(&localized.origins).enumerate() {
        dist.apply_op(op)?;
        match *origin {
            Origin::Inserted => track(&mut current, op)?,
            Origin::Source(i) if applied_source != Some(i) => {
                let src = source
                    .ops
                    .get(i)
                    .ok_or_else(|| SimError::InvalidCircuit(format!("origin {i} out of range")))?;
                reference.apply_op(src)?;
                applied_source = Some(i);
            }
            Origin::Source(_) => {}
        }
        // A source op may expand into several ops; compare after the last.
        if localized
            .origins
            .get(k + 1)
            .is_some_and(|next| next == origin && *origin != Origin::Inserted)
        {
            continue;
        }
        let diff = max_abs_diff(&to_logical(&dist.state(), &current), &reference.state());
        if diff > tol {
            return Ok(Some(Divergence {
                op_index: k,
                source_index: match *origin {
                    Origin::Source(i) => Some(i),
                    Origin::Inserted => None,
                },
                max_abs_diff: diff,
            }));
        }
    }
    Ok(None)
}

/// Test hook: removes the first transpiler-inserted swap, leaving the rest
/// of the circuit untouched. Returns the removed op's index.
pub fn corrupt_drop_first_inserted(localized: &mut Localized) -> Option<usize> {
    let k = localized.origins.iter().position(|o| *o == Origin::Inserted)?;
    localized.circuit.ops.remove(k);
    localized.origins.remove(k);
    localized.inserted_swaps -= 1;
    Some(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuits::{gen_hadamard_bench, gen_qsb, gen_qv};
    use crate::transpile::{localize, TranspileConfig};

    fn check(c: &Circuit, p: usize) -> VerifyReport {
        let layout = GlobalLayout::new(c.n, p).unwrap();
        let loc = localize(c, &layout, &TranspileConfig::default()).unwrap();
        verify_localized(c, &loc, &layout, &ExecConfig::default(), &VerifyConfig::default()).unwrap()
    }

    #[test]
    fn generators_verify() {
        for p in 1..=3 {
            for c in [
                gen_hadamard_bench(7).unwrap(),
                gen_qv(7, 4, 3).unwrap(),
                gen_qsb(7, 3).unwrap(),
            ] {
                let r = check(&c, p);
                assert!(r.passed, "{r:?}");
                assert!(r.max_abs_diff <= 1e-12);
            }
        }
    }

    #[test]
    fn single_rank_self_comparison_is_exact() {
        let r = check(&gen_qsb(6, 9).unwrap(), 0);
        assert_eq!(r.max_abs_diff, 0.0);
        assert_eq!(r.digest, r.reference_digest);
    }

    #[test]
    fn corruption_is_located() {
        let c = gen_hadamard_bench(4).unwrap();
        let layout = GlobalLayout::new(4, 2).unwrap();
        let mut loc = localize(&c, &layout, &TranspileConfig::default()).unwrap();
        let dropped = corrupt_drop_first_inserted(&mut loc).unwrap();
        let r = verify_localized(&c, &loc, &layout, &ExecConfig::default(), &VerifyConfig::default()).unwrap();
        assert!(!r.passed);
        let d = r.divergence.expect("divergence located");
        assert!(d.op_index >= dropped);
        assert!(d.source_index.is_some());
    }

    #[test]
    fn oracle_limit() {
        let c = gen_hadamard_bench(5).unwrap();
        let layout = GlobalLayout::new(5, 1).unwrap();
        let loc = localize(&c, &layout, &TranspileConfig::default()).unwrap();
        let cfg = VerifyConfig {
            oracle_limit: 4,
            ..VerifyConfig::default()
        };
        assert!(verify_localized(&c, &loc, &layout, &ExecConfig::default(), &cfg).is_err());
    }

    #[test]
    fn logical_reordering() {
        // logical qubit 0 stored at position 1 and vice versa
        let mut layout = GlobalLayout::new(2, 0).unwrap();
        layout.swap_positions(0, 1).unwrap();
        let phys: Vec<Amplitude> = (0..4).map(|k| Amplitude::new(k as f64, 0.0)).collect();
        let log = to_logical(&phys, &layout);
        assert_eq!(log.iter().map(|a| a.re).collect::<Vec<_>>(), vec![0.0, 2.0, 1.0, 3.0]);
    }

    #[test]
    fn digest_ignores_sub_grid_noise() {
        let a = vec![Amplitude::new(0.5, -0.25); 4];
        let mut b = a.clone();
        b[2].re += 1e-15;
        assert_eq!(state_digest(&a), state_digest(&b));
        b[2].re += 1e-9;
        assert_ne!(state_digest(&a), state_digest(&b));
    }
}
