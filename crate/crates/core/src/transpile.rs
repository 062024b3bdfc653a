//! Localization: rewrite a logical circuit so that every non-swap gate acts
//! on local physical positions, by inserting fused-swap gates.
//!
//! The scan is greedy and in order. Gates that are already local under the
//! running permutation are emitted as-is. When a gate needs a global
//! position, the `s` global positions covering it are swapped with the top
//! `s` local positions `[m-s, m)`; if one of the gate's own local operands
//! sits in that window, the window slides down to the highest `s` local
//! positions that avoid it. CNOTs with a global control and local target are
//! left in place (they run without communication).

use crate::circuits::{Circuit, GateOp};
use crate::layout::GlobalLayout;
use crate::{Result, SimError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TranspileConfig {
    /// Fuse width `s`; `None` means every global qubit (capped at `m`).
    pub fuse_width: Option<usize>,
    /// Append fused swaps returning the permutation to its starting state.
    pub restore_layout: bool,
}

impl Default for TranspileConfig {
    fn default() -> Self {
        Self {
            fuse_width: None,
            restore_layout: true,
        }
    }
}

impl TranspileConfig {
    pub fn with_width(s: usize) -> Self {
        Self {
            fuse_width: Some(s),
            ..Self::default()
        }
    }

    /// Effective fuse width for `layout`.
    pub fn width(&self, layout: &GlobalLayout) -> Result<usize> {
        let (p, m) = (layout.p(), layout.m());
        match self.fuse_width {
            None => Ok(p.min(m)),
            Some(_) if p == 0 => Ok(0),
            Some(s) if s == 0 || s > p => Err(SimError::Config(format!("fuse width {s} outside 1..={p}"))),
            Some(s) if s > m => Err(SimError::Config(format!("fuse width {s} exceeds the {m} local qubits"))),
            Some(s) => Ok(s),
        }
    }
}

/// Where an op of a localized circuit came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Origin {
    /// Index of the op in the input circuit.
    Source(usize),
    /// Swap inserted by the transpiler.
    Inserted,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Localized {
    /// Ops address physical positions.
    pub circuit: Circuit,
    pub origins: Vec<Origin>,
    /// Permutation after the last op (the starting one when restored).
    pub final_layout: GlobalLayout,
    pub inserted_swaps: usize,
}

struct Planner {
    layout: GlobalLayout,
    width: usize,
    materialize: bool,
    ops: Vec<GateOp>,
    origins: Vec<Origin>,
    inserted: usize,
}

impl Planner {
    fn emit(&mut self, op: GateOp, origin: Origin) {
        if self.materialize {
            self.ops.push(op);
            self.origins.push(origin);
        }
    }

    fn insert_fused(&mut self, p: usize, q: usize, s: usize) -> Result<()> {
        self.layout.fused_swap_positions(p, q, s)?;
        self.inserted += 1;
        self.emit(GateOp::FusedSwap { p, q, s }, Origin::Inserted);
        Ok(())
    }

    /// Brings the physical positions in `need` (all global) into the local
    /// range without moving any position in `keep`.
    fn ensure_local(&mut self, need: &[usize], keep: &[usize]) -> Result<()> {
        let (n, m, s) = (self.layout.n(), self.layout.m(), self.width);
        if need.is_empty() {
            return Ok(());
        }
        if s == 0 {
            return Err(SimError::Config("no fuse width for a layout with global qubits".into()));
        }
        let (gmin, gmax) = (*need.iter().min().unwrap(), *need.iter().max().unwrap());
        let global_start = (m.max((gmax + 1).saturating_sub(s))..=gmin.min(n - s)).next();
        let local_start = (0..=m - s).rev().find(|&l| keep.iter().all(|&k| k < l || k >= l + s));
        if let (Some(g), Some(l)) = (global_start, local_start) {
            return self.insert_fused(l, g, s);
        }
        // Narrow fallback: one width-1 swap per needed position.
        let mut taken: Vec<usize> = keep.to_vec();
        for &g in need {
            let l = (0..m)
                .rev()
                .find(|l| !taken.contains(l))
                .ok_or_else(|| SimError::Config(format!("gate needs more than {m} local slots")))?;
            taken.push(l);
            self.insert_fused(l, g, 1)?;
        }
        Ok(())
    }

    fn place(&mut self, index: usize, op: &GateOp) -> Result<()> {
        let m = self.layout.m();
        let resolve = |layout: &GlobalLayout, q: usize| layout.resolve(q);
        match *op {
            GateOp::H { q } | GateOp::Rx { q, .. } | GateOp::Rz { q, .. } | GateOp::Dense1 { q, .. } => {
                let pq = resolve(&self.layout, q)?;
                if pq >= m {
                    self.ensure_local(&[pq], &[])?;
                }
            }
            GateOp::Cnot { target, .. } => {
                let pt = resolve(&self.layout, target)?;
                if pt >= m {
                    self.ensure_local(&[pt], &[])?;
                }
            }
            GateOp::Dense2 { q0, q1, .. } => {
                let pos = [resolve(&self.layout, q0)?, resolve(&self.layout, q1)?];
                let need: Vec<usize> = pos.iter().copied().filter(|&p| p >= m).collect();
                let keep: Vec<usize> = pos.iter().copied().filter(|&p| p < m).collect();
                self.ensure_local(&need, &keep)?;
            }
            GateOp::Swap { .. } => {}
            GateOp::FusedSwap { p, q, s } => {
                let rp = resolve(&self.layout, p)?;
                let rq = resolve(&self.layout, q)?;
                let contiguous = (0..s).all(|k| {
                    self.layout.resolve(p + k).ok() == Some(rp + k) && self.layout.resolve(q + k).ok() == Some(rq + k)
                });
                if !contiguous {
                    for k in 0..s {
                        let i = resolve(&self.layout, p + k)?;
                        let j = resolve(&self.layout, q + k)?;
                        self.emit(GateOp::Swap { i, j }, Origin::Source(index));
                    }
                    return Ok(());
                }
            }
        }
        let layout = &self.layout;
        let physical = op.remap(|q| layout.resolve(q).expect("validated operand"));
        self.emit(physical, Origin::Source(index));
        Ok(())
    }

    /// Fused swaps returning the permutation to `target`.
    fn restore(&mut self, target: &GlobalLayout) -> Result<()> {
        let (n, m) = (self.layout.n(), self.layout.m());
        let same_class = |a: usize, b: usize| (a < m) == (b < m);
        while let Some(i) = (0..n).find(|&i| self.layout.logical_at(i).ok() != target.logical_at(i).ok()) {
            let k = self.layout.resolve(target.logical_at(i)?)?;
            let mut t = 1;
            while i + t < k
                && k + t < n
                && same_class(i, i + t)
                && same_class(k, k + t)
                && self.layout.logical_at(k + t)? == target.logical_at(i + t)?
            {
                t += 1;
            }
            self.insert_fused(i, k, t)?;
        }
        Ok(())
    }
}

fn run_planner(circuit: &Circuit, layout: &GlobalLayout, cfg: &TranspileConfig, materialize: bool) -> Result<Planner> {
    circuit.validate()?;
    if circuit.n != layout.n() {
        return Err(SimError::Config(format!(
            "circuit has {} qubits, layout {}",
            circuit.n,
            layout.n()
        )));
    }
    let mut planner = Planner {
        layout: layout.clone(),
        width: cfg.width(layout)?,
        materialize,
        ops: Vec::new(),
        origins: Vec::new(),
        inserted: 0,
    };
    for (k, op) in circuit.ops.iter().enumerate() {
        planner.place(k, op)?;
    }
    if cfg.restore_layout {
        planner.restore(layout)?;
    }
    Ok(planner)
}

/// Rewrites `circuit` (logical operands) into a physical circuit whose
/// non-swap gates only touch local positions, except zero-communication
/// CNOTs with a global control.
pub fn localize(circuit: &Circuit, layout: &GlobalLayout, cfg: &TranspileConfig) -> Result<Localized> {
    let planner = run_planner(circuit, layout, cfg, true)?;
    Ok(Localized {
        circuit: Circuit {
            n: circuit.n,
            seed: circuit.seed,
            ops: planner.ops,
        },
        origins: planner.origins,
        final_layout: planner.layout,
        inserted_swaps: planner.inserted,
    })
}

/// Number of fused swaps [`localize`] would insert.
pub fn predict_swap_count(circuit: &Circuit, layout: &GlobalLayout, cfg: &TranspileConfig) -> Result<usize> {
    Ok(run_planner(circuit, layout, cfg, false)?.inserted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuits::{gen_hadamard_bench, gen_qsb, gen_qv};

    fn fig_circuit() -> Circuit {
        let mut c = Circuit::new(4);
        for q in 0..4 {
            c.push(GateOp::H { q }).push(GateOp::Rx { q, theta: 0.3 });
        }
        c
    }

    fn assert_local(l: &Localized, m: usize) {
        for op in &l.circuit.ops {
            match *op {
                GateOp::Swap { .. } | GateOp::FusedSwap { .. } => {}
                GateOp::Cnot { target, .. } => assert!(target < m, "{op:?}"),
                _ => assert!(op.qubits().iter().all(|&q| q < m), "{op:?}"),
            }
        }
    }

    #[test]
    fn four_qubit_example_gets_two_fused_swaps() {
        let layout = GlobalLayout::new(4, 2).unwrap();
        let cfg = TranspileConfig::with_width(2);
        let l = localize(&fig_circuit(), &layout, &cfg).unwrap();
        assert_eq!(l.inserted_swaps, 2);
        let fused: Vec<_> = l.circuit.ops.iter().filter(|o| o.is_swap()).collect();
        assert_eq!(fused, vec![&GateOp::FusedSwap { p: 0, q: 2, s: 2 }; 2]);
        assert!(l.final_layout.is_identity());
        assert_local(&l, 2);
        assert_eq!(predict_swap_count(&fig_circuit(), &layout, &cfg).unwrap(), 2);
    }

    #[test]
    fn single_rank_is_untouched() {
        let layout = GlobalLayout::new(5, 0).unwrap();
        let mut c = gen_qsb(5, 3).unwrap();
        c.push(GateOp::FusedSwap { p: 0, q: 2, s: 2 })
            .push(GateOp::Swap { i: 4, j: 1 });
        let l = localize(&c, &layout, &TranspileConfig::default()).unwrap();
        assert_eq!(l.circuit, c);
        assert_eq!(l.inserted_swaps, 0);
    }

    #[test]
    fn no_global_gates_means_no_swaps() {
        let layout = GlobalLayout::new(6, 2).unwrap();
        let mut c = Circuit::new(6);
        c.push(GateOp::H { q: 0 }).push(GateOp::Cnot { control: 5, target: 1 });
        assert_eq!(predict_swap_count(&c, &layout, &TranspileConfig::default()).unwrap(), 0);
    }

    #[test]
    fn generators_localize_for_every_width() {
        for (n, p) in [(6, 1), (8, 2), (8, 3), (9, 3)] {
            let layout = GlobalLayout::new(n, p).unwrap();
            let circuits = [
                gen_hadamard_bench(n).unwrap(),
                gen_qv(n, 4, 5).unwrap(),
                gen_qsb(n, 5).unwrap(),
            ];
            for s in 1..=p {
                for c in &circuits {
                    let cfg = TranspileConfig::with_width(s);
                    let l = localize(c, &layout, &cfg).unwrap();
                    assert_local(&l, n - p);
                    assert!(l.final_layout.is_identity());
                    assert_eq!(predict_swap_count(c, &layout, &cfg).unwrap(), l.inserted_swaps);
                    assert_eq!(l.circuit.gate_count(), c.gate_count());
                }
            }
        }
    }

    #[test]
    fn dense2_with_operand_in_top_window() {
        // q0 local at m-1, q1 global: window slides below m-1.
        let layout = GlobalLayout::new(6, 2).unwrap();
        let mut c = Circuit::new(6);
        c.push(GateOp::Dense2 {
            q0: 3,
            q1: 5,
            u: crate::Matrix4::cnot(),
        });
        let l = localize(&c, &layout, &TranspileConfig::default()).unwrap();
        assert_eq!(l.circuit.ops[0], GateOp::FusedSwap { p: 1, q: 4, s: 2 });
        assert_eq!(
            l.circuit.ops[1],
            GateOp::Dense2 {
                q0: 3,
                q1: 2,
                u: crate::Matrix4::cnot()
            }
        );
    }

    #[test]
    fn narrow_fallback_when_window_cannot_avoid_operand() {
        // m = s = 2: every window contains the local operand.
        let layout = GlobalLayout::new(4, 2).unwrap();
        let mut c = Circuit::new(4);
        c.push(GateOp::Dense2 {
            q0: 0,
            q1: 3,
            u: crate::Matrix4::swap(),
        });
        let l = localize(&c, &layout, &TranspileConfig::default()).unwrap();
        assert_eq!(l.circuit.ops[0], GateOp::FusedSwap { p: 1, q: 3, s: 1 });
        assert_local(&l, 2);
        assert!(l.final_layout.is_identity());
    }

    #[test]
    fn unrestored_layout_is_reported() {
        let layout = GlobalLayout::new(4, 2).unwrap();
        let cfg = TranspileConfig {
            restore_layout: false,
            ..TranspileConfig::default()
        };
        let l = localize(&fig_circuit(), &layout, &cfg).unwrap();
        assert_eq!(l.inserted_swaps, 1);
        assert_eq!(l.final_layout.resolve(2).unwrap(), 0);
        assert_eq!(l.final_layout.resolve(3).unwrap(), 1);
    }

    #[test]
    fn width_validation() {
        let layout = GlobalLayout::new(6, 3).unwrap();
        assert!(TranspileConfig::with_width(0).width(&layout).is_err());
        assert!(TranspileConfig::with_width(4).width(&layout).is_err());
        assert_eq!(TranspileConfig::default().width(&layout).unwrap(), 3);
        let thin = GlobalLayout::new(5, 3).unwrap();
        assert_eq!(TranspileConfig::default().width(&thin).unwrap(), 2);
        assert!(TranspileConfig::with_width(3).width(&thin).is_err());
    }
}
