mod common;

use std::collections::BTreeSet;

use common::*;
use emanatrix::harmonics::*;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn matches_exact_oracle_across_layouts() {
    let nonempty = oracle_sweep(7, 1400).unwrap();
    assert!(nonempty.iter().all(|&n| n > 50), "{nonempty:?}");
}

#[test]
fn merged_and_distinct_imp_triplets() {
    let merged = [1000, 1007, 1014, 1070, 1077, 1084];
    let got = run(&merged, &exact_cfg(1, 200, true));
    assert_eq!(got, BTreeSet::from([(7, merged.to_vec())]));
    let apart = [1000, 1007, 1014, 1073, 1080, 1087];
    let got = run(&apart, &exact_cfg(1, 20, true));
    assert_eq!(
        got,
        BTreeSet::from([(7, apart[..3].to_vec()), (7, apart[3..].to_vec())])
    );
}

#[test]
fn stray_peaks_keep_true_groups() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..300 {
        let step = rng.random_range(10..50);
        let comb = ap(0, step, 1..=6);
        let mut f = comb.clone();
        for _ in 0..rng.random_range(1..=3) {
            f.push(rng.random_range(1..400));
        }
        f.sort();
        f.dedup();
        let cfg = DetectorConfig::new(2.0, 1000.0, false);
        let fs: Vec<f64> = f.iter().map(|&x| x as f64).collect();
        let (_, groups) = detect(&fs, &cfg).unwrap();
        let covered = groups.iter().any(|g| {
            comb.iter()
                .all(|c| g.member_freqs_hz.contains(&(*c as f64)))
        });
        assert!(covered, "{f:?} -> {groups:?}");
    }
}

fn cols_strategy(max: usize) -> impl Strategy<Value = Vec<DiffColumn>> {
    prop::collection::vec((0u32..50, 0usize..100, 0usize..100), 0..max).prop_map(|v| {
        v.into_iter()
            .map(|(d, a, b)| col(d as f64 * 0.5, a, b))
            .collect()
    })
}

fn sorted_multiset(cols: &[DiffColumn]) -> Vec<(u64, usize, usize)> {
    let mut v: Vec<_> = cols
        .iter()
        .map(|c| (c.diff_hz.to_bits(), c.idx_lo, c.idx_hi))
        .collect();
    v.sort();
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn quicksort_orders_and_preserves(cols in cols_strategy(200)) {
        let mut sorted = cols.clone();
        custom_quicksort(&mut sorted);
        let mut reference: Vec<f64> = cols.iter().map(|c| c.diff_hz).collect();
        reference.sort_by(f64::total_cmp);
        prop_assert_eq!(sorted.iter().map(|c| c.diff_hz).collect::<Vec<_>>(), reference);
        prop_assert_eq!(sorted_multiset(&sorted), sorted_multiset(&cols));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn quicksort_large(cols in cols_strategy(1000)) {
        let mut sorted = cols.clone();
        custom_quicksort(&mut sorted);
        prop_assert!(sorted.windows(2).all(|w| w[0].diff_hz <= w[1].diff_hz));
        prop_assert_eq!(sorted_multiset(&sorted), sorted_multiset(&cols));
    }

    #[test]
    fn fix_freq_var_is_idempotent(
        raw in prop::collection::vec(1.0f64..100.0, 0..60),
        eps in 0.0f64..0.1,
    ) {
        let mut cols: Vec<DiffColumn> = raw.iter().enumerate().map(|(i, &d)| col(d, i, i + 1)).collect();
        custom_quicksort(&mut cols);
        fix_freq_var(&mut cols, eps);
        let once = cols.clone();
        fix_freq_var(&mut cols, eps);
        prop_assert_eq!(&cols, &once);
        prop_assert!(once.windows(2).all(|w| w[0].diff_hz <= w[1].diff_hz));
    }

    #[test]
    fn fix_freq_var_averages_runs(
        centers in prop::collection::btree_set(1u32..20, 1..6),
        jitter in prop::collection::vec(-0.002f64..0.002, 30),
    ) {
        // clusters 10 apart with sub-eps jitter collapse to their means
        let mut cols = Vec::new();
        let mut expected = Vec::new();
        let mut j = 0;
        for c in &centers {
            let center = 10.0 * *c as f64;
            let members: Vec<f64> = (0..3).map(|_| { j += 1; center * (1.0 + jitter[j % 30]) }).collect();
            let mean = members.iter().sum::<f64>() / 3.0;
            for m in members {
                cols.push(col(m, j, j + 1));
                expected.push(mean);
            }
        }
        custom_quicksort(&mut cols);
        fix_freq_var(&mut cols, 0.01);
        for (c, e) in cols.iter().zip(&expected) {
            prop_assert!((c.diff_hz - e).abs() < 1e-9);
        }
    }
}

fn random_instance() -> impl Strategy<Value = (Vec<i64>, u64, bool)> {
    (0usize..7, any::<u64>(), any::<bool>()).prop_map(|(t, seed, imp)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (instance(&mut rng, t), seed, imp)
    })
}

fn groups_as_sets(f: &[f64], cfg: &DetectorConfig, scale: f64) -> BTreeSet<Vec<u64>> {
    let (_, groups) = detect(f, cfg).unwrap();
    groups
        .iter()
        .map(|g| {
            let mut v: Vec<u64> = g
                .member_freqs_hz
                .iter()
                .map(|x| (x / scale).round() as u64)
                .collect();
            v.sort();
            v
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn permutation_invariance((f, seed, imp) in random_instance()) {
        let fs: Vec<f64> = f.iter().map(|&x| x as f64).collect();
        let mut shuffled = fs.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5a5a));
        let cfg = exact_cfg(1, 5000, imp);
        prop_assert_eq!(groups_as_sets(&fs, &cfg, 1.0), groups_as_sets(&shuffled, &cfg, 1.0));
    }

    #[test]
    fn scale_covariance((f, _seed, imp) in random_instance(), c in 0.01f64..1e6) {
        let fs: Vec<f64> = f.iter().map(|&x| x as f64).collect();
        let scaled: Vec<f64> = fs.iter().map(|x| x * c).collect();
        let cfg = exact_cfg(1, 5000, imp);
        let mut scaled_cfg = cfg;
        // integer bounds are inclusive; keep scaled edges clear of rounding
        scaled_cfg.d_min_hz *= c * (1.0 - 1e-9);
        scaled_cfg.d_max_hz *= c * (1.0 + 1e-9);
        scaled_cfg.eps_freq = 1e-7;
        scaled_cfg.eps_mult = 1e-7;
        prop_assert_eq!(groups_as_sets(&fs, &cfg, 1.0), groups_as_sets(&scaled, &scaled_cfg, c));
        let (_, a) = detect(&fs, &cfg).unwrap();
        let (_, b) = detect(&scaled, &scaled_cfg).unwrap();
        let steps = |g: &[emanatrix::HarmonicGroup], s: f64| {
            let mut v: Vec<u64> = g.iter().map(|g| (g.step_hz / s).round() as u64).collect();
            v.sort();
            v
        };
        prop_assert_eq!(steps(&a, 1.0), steps(&b, c));
    }

    #[test]
    fn steps_are_minimal_and_groups_are_combs((f, _seed, imp) in random_instance()) {
        let fs: Vec<f64> = f.iter().map(|&x| x as f64).collect();
        let cfg = exact_cfg(1, 5000, imp);
        let (_, groups) = detect(&fs, &cfg).unwrap();
        for g in &groups {
            prop_assert!(g.member_indices.len() >= 3);
            for w in g.member_freqs_hz.windows(2) {
                prop_assert!(is_multiple(w[1] - w[0], g.step_hz, cfg.eps_mult));
            }
            for h in &groups {
                let same = {
                    let mut a = g.member_indices.clone();
                    let mut b = h.member_indices.clone();
                    a.sort();
                    b.sort();
                    a == b
                };
                if h.step_hz < g.step_hz && same {
                    prop_assert!(!is_multiple(g.step_hz, h.step_hz, cfg.eps_mult));
                }
            }
        }
    }
}
