mod common;

use common::*;
use dvsim_core::dist_ops::{DistConfig, Stage};
use dvsim_core::GlobalLayout;
use proptest::prelude::*;

fn block(b: usize) -> DistConfig {
    DistConfig {
        chunks: None,
        swap_block: Some(b),
    }
}

fn swap_loop(init: &[C], (p, q, s): (usize, usize, usize)) -> Vec<C> {
    (0..s).fold(init.to_vec(), |v, k| permute_bits(&v, p + k, q + k))
}

#[test]
fn many_blocks_overlap() {
    let layout = GlobalLayout::new(10, 2).unwrap();
    let init = random_state(10, 4);
    let ranges = (6, 8, 2);
    let run = fused_per_rank(&layout, &init, ranges, &block(16), true);
    assert_eq!(run.state, swap_loop(&init, ranges));
    assert_eq!(run.stats.bytes_total, (16 << 10) * 3 / 4);
    for t in &run.traces {
        assert_eq!(t.blocks, 3 * 64 / 16);
        assert!(t.has_overlap(), "rank {} shows no overlap", t.rank);
        let count = |st| t.intervals.iter().filter(|i| i.stage == st).count();
        assert_eq!(count(Stage::Gather), t.blocks);
        assert_eq!(count(Stage::Scatter), t.blocks);
        assert_eq!(count(Stage::Exchange), t.blocks);
        assert_eq!(count(Stage::Transfer), t.blocks);
    }
}

#[test]
fn single_block_degenerates() {
    let layout = GlobalLayout::new(6, 1).unwrap();
    let init = random_state(6, 2);
    let ranges = (4, 5, 1);
    let run = fused_per_rank(&layout, &init, ranges, &block(16), true);
    assert_eq!(run.state, swap_loop(&init, ranges));
    for t in &run.traces {
        assert_eq!(t.blocks, 1);
        assert!(!t.has_overlap());
    }
}

#[test]
fn non_local_global_ranges_fall_back() {
    let layout = GlobalLayout::new(7, 3).unwrap();
    let init = random_state(7, 8);
    // [2,5) straddles the local/global boundary at 4
    let ranges = (2, 0, 2);
    let naive = fused_per_rank(&layout, &init, ranges, &DistConfig::default(), false);
    let piped = fused_per_rank(&layout, &init, ranges, &DistConfig::default(), true);
    assert_eq!(naive.state, swap_loop(&init, ranges));
    assert_eq!(piped.state, naive.state);
    assert_eq!(piped.stats, naive.stats);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn pipelined_equals_naive(
        n in 5usize..=10,
        p_raw in 1usize..=3,
        s_raw in 1usize..=3,
        at_top in any::<bool>(),
        block_log in 0usize..6,
        seed: u64,
    ) {
        let p = p_raw.min(n - 1);
        let m = n - p;
        let s = s_raw.min(p).min(m);
        let l = if at_top { m - s } else { 0 };
        let g = if at_top { n - s } else { m };
        let layout = GlobalLayout::new(n, p).unwrap();
        let init = random_state(n, seed);
        let cfg = block(1 << block_log);
        let naive = fused_per_rank(&layout, &init, (l, g, s), &cfg, false);
        let piped = fused_per_rank(&layout, &init, (l, g, s), &cfg, true);
        prop_assert_eq!(&piped.state, &naive.state);
        prop_assert_eq!(&piped.stats, &naive.stats);
        prop_assert_eq!(&naive.state, &swap_loop(&init, (l, g, s)));
        for t in &piped.traces {
            prop_assert!(t.blocks < 3 || t.has_overlap());
        }
    }
}
