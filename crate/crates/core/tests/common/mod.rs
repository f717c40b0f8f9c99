//! Integer oracle and random peak layouts shared by the detector suites.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use emanatrix::harmonics::*;
use emanatrix::GroupKind;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TOPOLOGIES: usize = 7;

pub fn col(d: f64, lo: usize, hi: usize) -> DiffColumn {
    DiffColumn {
        diff_hz: d,
        idx_lo: lo,
        idx_hi: hi,
    }
}

pub fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// Exact-integer grouping: steps are the differences not divisible by any
/// smaller difference; each pair goes to the smallest step dividing it; a
/// step with more than two pairs yields the residue classes (mod step) of the
/// frequencies those pairs touch, kept when they have three or more members.
/// Each group's step is the gcd of its member separations.
pub fn oracle(freqs: &[i64], d_min: i64, d_max: i64, imp: bool) -> BTreeSet<(i64, Vec<i64>)> {
    let mut pairs = Vec::new();
    for j in 0..freqs.len() {
        for k in j + 1..freqs.len() {
            let d = (freqs[k] - freqs[j]).abs();
            if d >= d_min && d <= d_max {
                pairs.push((d, j, k));
            }
        }
    }
    let mut out = BTreeSet::new();
    if pairs.len() < 2 {
        return out;
    }
    let diffs: BTreeSet<i64> = pairs.iter().map(|p| p.0).collect();
    let steps: Vec<i64> = diffs
        .iter()
        .copied()
        .filter(|&d| !diffs.iter().any(|&s| s < d && d % s == 0))
        .collect();
    let mut by_step: BTreeMap<i64, Vec<(i64, usize, usize)>> = BTreeMap::new();
    for &p in &pairs {
        let s = *steps.iter().find(|&&s| p.0 % s == 0).unwrap();
        by_step.entry(s).or_default().push(p);
    }
    for (s, group) in by_step {
        if group.len() <= 2 {
            continue;
        }
        if imp && group.iter().all(|p| p.0 == group[0].0) {
            continue;
        }
        let touched: BTreeSet<usize> = group.iter().flat_map(|p| [p.1, p.2]).collect();
        let mut classes: BTreeMap<i64, Vec<i64>> = BTreeMap::new();
        for i in touched {
            classes
                .entry(freqs[i].rem_euclid(s))
                .or_default()
                .push(freqs[i]);
        }
        for (_, mut members) in classes {
            if members.len() < 3 {
                continue;
            }
            members.sort();
            let g = members.windows(2).fold(0, |acc, w| gcd(acc, w[1] - w[0]));
            out.insert((g, members));
        }
    }
    out
}

pub fn exact_cfg(d_min: i64, d_max: i64, imp: bool) -> DetectorConfig {
    DetectorConfig {
        d_min_hz: d_min as f64,
        d_max_hz: d_max as f64,
        eps_freq: 1e-9,
        eps_mult: 1e-9,
        flag_subband: imp,
    }
}

pub fn run(freqs: &[i64], cfg: &DetectorConfig) -> BTreeSet<(i64, Vec<i64>)> {
    let f: Vec<f64> = freqs.iter().map(|&x| x as f64).collect();
    let (_, groups) = detect(&f, cfg).unwrap();
    for g in &groups {
        let expected = if cfg.flag_subband {
            GroupKind::Imp
        } else {
            GroupKind::Harmonic
        };
        assert_eq!(g.kind, expected);
        for (&i, &fr) in g.member_indices.iter().zip(&g.member_freqs_hz) {
            assert_eq!(f[i], fr);
        }
    }
    groups
        .iter()
        .map(|g| {
            let step = g.step_hz.round() as i64;
            assert!((g.step_hz - step as f64).abs() < 1e-6, "{}", g.step_hz);
            (step, g.member_freqs_hz.iter().map(|&x| x as i64).collect())
        })
        .collect()
}

pub fn ap(start: i64, step: i64, terms: impl IntoIterator<Item = i64>) -> Vec<i64> {
    terms.into_iter().map(|t| start + step * t).collect()
}

/// Random instance of one of the seven comb/IMP layouts plus a few stray
/// peaks, at most twelve distinct frequencies.
pub fn instance(rng: &mut ChaCha8Rng, topology: usize) -> Vec<i64> {
    let step = rng.random_range(5..40);
    let base = 1000 + rng.random_range(0..200);
    let mut f = match topology {
        0 => ap(0, step, 1..=rng.random_range(3..=7)),
        1 => {
            let n = rng.random_range(4..=7);
            let gap = rng.random_range(2..n);
            ap(0, step, (1..=n).filter(|&h| h != gap))
        }
        2 => {
            let keep: Vec<i64> = (1..=9).filter(|_| rng.random_bool(0.55)).collect();
            let mut v = ap(0, step, keep);
            v.extend(ap(0, step, [1, 10, 11]));
            v
        }
        3 => {
            let other = rng.random_range(5..40);
            let common = step * other;
            let mut v = ap(common, step, -2..=2);
            v.extend(ap(common, other, -2..=2));
            v
        }
        4 => {
            let shift = rng.random_range(1..step);
            let mut v = ap(base, step, 0..3);
            v.extend(ap(base + shift, step, 0..3));
            v
        }
        5 => {
            let n = rng.random_range(4..12);
            let mut v = ap(base, step, 0..3);
            v.extend(ap(base + n * step, step, 0..3));
            v
        }
        _ => {
            let n = rng.random_range(4..12);
            let off = rng.random_range(1..step);
            let mut v = ap(base, step, 0..3);
            v.extend(ap(base + n * step + off, step, 0..3));
            v
        }
    };
    for _ in 0..rng.random_range(0..=3) {
        f.push(rng.random_range(0..2000));
    }
    f.sort();
    f.dedup();
    f.truncate(12);
    f.shuffle(rng);
    f
}

/// One oracle comparison per trial, cycling through the layouts. Returns
/// the number of instances with a non-empty answer per layout, or the first
/// mismatch.
pub fn oracle_sweep(seed: u64, trials: usize) -> Result<[usize; TOPOLOGIES], String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nonempty = [0usize; TOPOLOGIES];
    for trial in 0..trials {
        let topology = trial % TOPOLOGIES;
        let f = instance(&mut rng, topology);
        let imp = rng.random_bool(0.5);
        let d_min = rng.random_range(1..5);
        let d_max = if rng.random_bool(0.5) {
            5000
        } else {
            rng.random_range(40..600)
        };
        let want = oracle(&f, d_min, d_max, imp);
        let got = run(&f, &exact_cfg(d_min, d_max, imp));
        if got != want {
            return Err(format!(
                "freqs {f:?} imp {imp} d {d_min}..{d_max}: got {got:?}, want {want:?}"
            ));
        }
        if !want.is_empty() {
            nonempty[topology] += 1;
        }
    }
    Ok(nonempty)
}
