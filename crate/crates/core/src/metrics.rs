//! Communication-volume prediction, quantum B/F ratio and effective memory
//! bandwidth.

use serde::Serialize;

use crate::circuits::{Circuit, GateOp};
use crate::dist_ops::local_global_split;
use crate::layout::GlobalLayout;
use crate::{Result, SimError};

/// Predicted payload bytes per op and in total.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CommPrediction {
    /// `(op index, bytes)` for every op, in circuit order.
    pub per_gate: Vec<(usize, u64)>,
    pub total_bytes: u64,
}

/// Bytes moved by one op whose operands are physical positions.
pub fn op_comm_bytes(op: &GateOp, index: usize, layout: &GlobalLayout) -> Result<u64> {
    op.validate(layout.n())?;
    let m = layout.m();
    // 2^(n+4): every amplitude crosses the wire once.
    let full = 16u64 << layout.n();
    let global = |q: usize| q >= m;
    Ok(match *op {
        GateOp::H { q } | GateOp::Rx { q, .. } | GateOp::Rz { q, .. } | GateOp::Dense1 { q, .. } => {
            if global(q) {
                full
            } else {
                0
            }
        }
        GateOp::Cnot { target, .. } => {
            if global(target) {
                full
            } else {
                0
            }
        }
        GateOp::Dense2 { q0, q1, .. } => {
            if global(q0) || global(q1) {
                return Err(SimError::NonLocalDense2 { index, q0, q1 });
            }
            0
        }
        GateOp::Swap { i, j } => swap_bytes(i, j, m, full),
        GateOp::FusedSwap { p, q, s } => match local_global_split(m, p, q, s) {
            Some(_) => full - (full >> s),
            None => (0..s).map(|k| swap_bytes(p + k, q + k, m, full)).sum(),
        },
    })
}

fn swap_bytes(i: usize, j: usize, m: usize, full: u64) -> u64 {
    if i < m && j < m {
        0
    } else {
        full / 2
    }
}

/// Exact bytes the transport will count when `circuit` (physical operands)
/// runs under `layout`.
pub fn predict_comm_bytes(circuit: &Circuit, layout: &GlobalLayout) -> Result<CommPrediction> {
    if circuit.n != layout.n() {
        return Err(SimError::Config(format!(
            "circuit has {} qubits, layout {}",
            circuit.n,
            layout.n()
        )));
    }
    let mut pred = CommPrediction::default();
    for (k, op) in circuit.ops.iter().enumerate() {
        let bytes = op_comm_bytes(op, k, layout)?;
        pred.per_gate.push((k, bytes));
        pred.total_bytes += bytes;
    }
    Ok(pred)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct QbfInput {
    pub n: usize,
    pub gates: u64,
    /// seconds
    pub exetime: f64,
    /// Total theoretical peak FLOP/s of all computing units.
    pub total_flops: f64,
}

/// Bytes read and written by one full pass over an `n`-qubit state.
pub fn memory_traffic_per_gate(n: usize) -> f64 {
    2f64.powi(n as i32 + 5)
}

fn positive(v: f64, name: &'static str) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(SimError::NonPositive(name))
    }
}

/// `2^(n+5)·gates / (exetime·total_flops)`
pub fn qbf(input: &QbfInput) -> Result<f64> {
    if input.n == 0 {
        return Err(SimError::NonPositive("n"));
    }
    if input.gates == 0 {
        return Err(SimError::NonPositive("gates"));
    }
    let t = positive(input.exetime, "exetime")?;
    let f = positive(input.total_flops, "total_flops")?;
    Ok(memory_traffic_per_gate(input.n) * input.gates as f64 / (t * f))
}

/// `2^(n+5)·gates / exetime`, in bytes per second.
pub fn effective_bandwidth(n: usize, gates: u64, exetime: f64) -> Result<f64> {
    if n == 0 {
        return Err(SimError::NonPositive("n"));
    }
    if gates == 0 {
        return Err(SimError::NonPositive("gates"));
    }
    let t = positive(exetime, "exetime")?;
    Ok(memory_traffic_per_gate(n) * gates as f64 / t)
}

/// Peak FLOP/s of one computing unit for the named presets.
pub fn flops_preset(name: &str) -> Option<f64> {
    match name.to_ascii_lowercase().as_str() {
        "a64fx" => Some(3.1e12),
        "a100" => Some(19.5e12),
        "v100" => Some(7.0e12),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn op_bytes(op: GateOp, n: usize, p: usize) -> u64 {
        op_comm_bytes(&op, 0, &GlobalLayout::new(n, p).unwrap()).unwrap()
    }

    #[test]
    fn per_op_formulas() {
        assert_eq!(op_bytes(GateOp::H { q: 3 }, 4, 2), 256);
        assert_eq!(op_bytes(GateOp::H { q: 1 }, 4, 2), 0);
        assert_eq!(op_bytes(GateOp::Cnot { control: 3, target: 0 }, 4, 2), 0);
        assert_eq!(op_bytes(GateOp::Cnot { control: 0, target: 3 }, 4, 2), 256);
        assert_eq!(op_bytes(GateOp::Swap { i: 0, j: 2 }, 4, 2), 128);
        assert_eq!(op_bytes(GateOp::Swap { i: 2, j: 3 }, 4, 2), 128);
        assert_eq!(op_bytes(GateOp::Swap { i: 0, j: 1 }, 4, 2), 0);
        assert_eq!(op_bytes(GateOp::FusedSwap { p: 0, q: 2, s: 2 }, 4, 2), 192);
        assert_eq!(
            op_bytes(GateOp::FusedSwap { p: 3, q: 6, s: 3 }, 9, 3),
            (16 << 9) * 7 / 8
        );
        // straddling range: pair (0,3) is local, pair (1,4) crosses
        assert_eq!(op_bytes(GateOp::FusedSwap { p: 0, q: 3, s: 2 }, 6, 2), 8 << 6);
    }

    #[test]
    fn dense2_on_global_is_an_error() {
        let layout = GlobalLayout::new(4, 2).unwrap();
        let mut c = Circuit::new(4);
        c.push(GateOp::H { q: 0 }).push(GateOp::Dense2 {
            q0: 0,
            q1: 2,
            u: crate::Matrix4::identity(),
        });
        assert!(matches!(
            predict_comm_bytes(&c, &layout),
            Err(SimError::NonLocalDense2 { index: 1, .. })
        ));
    }

    #[test]
    fn empty_circuit_predicts_zero() {
        let p = predict_comm_bytes(&Circuit::new(5), &GlobalLayout::new(5, 2).unwrap()).unwrap();
        assert_eq!(p.total_bytes, 0);
        assert!(p.per_gate.is_empty());
    }

    #[test]
    fn qbf_examples() {
        let base = QbfInput {
            n: 4,
            gates: 1,
            exetime: 1.0,
            total_flops: 512.0,
        };
        assert_eq!(qbf(&base).unwrap(), 1.0);
        let doubled = QbfInput {
            total_flops: 1024.0,
            ..base
        };
        assert_eq!(qbf(&doubled).unwrap(), 0.5);
        let strong = QbfInput {
            exetime: 0.5,
            total_flops: 1024.0,
            ..base
        };
        assert_eq!(qbf(&strong).unwrap(), 1.0);
        assert!(qbf(&QbfInput { exetime: 0.0, ..base }).is_err());
        assert!(qbf(&QbfInput { gates: 0, ..base }).is_err());
        assert!(qbf(&QbfInput {
            total_flops: -1.0,
            ..base
        })
        .is_err());
    }

    #[test]
    fn bandwidth_examples() {
        assert_eq!(effective_bandwidth(30, 1, 1.0).unwrap(), 2f64.powi(35));
        assert_eq!(effective_bandwidth(30, 1290, 2.0).unwrap(), 2f64.powi(35) * 645.0);
        assert_eq!(
            effective_bandwidth(10, 7, 2.0).unwrap() * 2.0,
            effective_bandwidth(10, 7, 1.0).unwrap()
        );
        assert!(effective_bandwidth(10, 7, f64::NAN).is_err());
    }

    #[test]
    fn presets() {
        assert_eq!(flops_preset("A64FX"), Some(3.1e12));
        assert_eq!(flops_preset("a100"), Some(19.5e12));
        assert_eq!(flops_preset("v100"), Some(7.0e12));
        assert_eq!(flops_preset("tpu"), None);
    }
}
