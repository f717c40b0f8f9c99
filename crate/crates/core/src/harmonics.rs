//! Harmonic and intermodulation-product grouping over a list of peak
//! frequencies.
//!
//! All pairwise differences inside `[d_min, d_max]` are collected with their
//! index pairs and sorted. Scanning from the smallest difference, a value
//! that is not an integer multiple of an already registered step becomes a
//! new step; every other difference joins the group of the smallest step it
//! is a multiple of. Each group with more than two pairs is then walked pair
//! by pair to assemble member lists.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{GroupKind, HarmonicGroup, Peak};

/// Default coarse-pass lower bound as a fraction of the spectrum bandwidth.
pub const DEFAULT_SPLIT_FRACTION: f64 = 1.0 / 12.0;

/// Hard ceiling on the distance from the nearest integer in a multiple test,
/// in units of the step.
const MAX_MULTIPLE_SLACK: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffColumn {
    pub diff_hz: f64,
    pub idx_lo: usize,
    pub idx_hi: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DifferenceMatrix {
    pub columns: Vec<DiffColumn>,
}

impl DifferenceMatrix {
    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn diffs(&self) -> Vec<f64> {
        self.columns.iter().map(|c| c.diff_hz).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub d_min_hz: f64,
    pub d_max_hz: f64,
    /// Relative tolerance for merging near-equal differences and for the
    /// separation test between member lists.
    pub eps_freq: f64,
    /// Relative tolerance for integer-multiple tests.
    pub eps_mult: f64,
    /// `false` for harmonic combs, `true` for IMP families.
    pub flag_subband: bool,
}

impl DetectorConfig {
    pub fn new(d_min_hz: f64, d_max_hz: f64, flag_subband: bool) -> Self {
        DetectorConfig {
            d_min_hz,
            d_max_hz,
            eps_freq: 0.005,
            eps_mult: 0.01,
            flag_subband,
        }
    }

    /// Coarse and fine configurations for a spectrum of the given bandwidth
    /// and bin width.
    pub fn for_spectrum(bandwidth_hz: f64, resolution_hz: f64) -> (Self, Self) {
        let half = bandwidth_hz / 2.0;
        (
            DetectorConfig::new(bandwidth_hz * DEFAULT_SPLIT_FRACTION, half, false),
            DetectorConfig::new(2.0 * resolution_hz, half, true),
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d_min_hz > 0.0 && self.d_min_hz < self.d_max_hz && self.d_max_hz.is_finite()) {
            return Err(Error::Config(format!(
                "need 0 < d_min ({}) < d_max ({})",
                self.d_min_hz, self.d_max_hz
            )));
        }
        for (name, eps) in [("eps_freq", self.eps_freq), ("eps_mult", self.eps_mult)] {
            if !(eps > 0.0 && eps <= 0.1) {
                return Err(Error::Config(format!(
                    "{name} must lie in (0, 0.1], got {eps}"
                )));
            }
        }
        Ok(())
    }
}

/// True when `x` is within `eps` (relative to the multiple) of a positive
/// integer multiple of `step`.
pub fn is_multiple(x: f64, step: f64, eps: f64) -> bool {
    let r = x / step;
    let n = r.round();
    n >= 1.0 && (r - n).abs() <= (eps * r.max(1.0)).min(MAX_MULTIPLE_SLACK)
}

fn partition(cols: &mut [DiffColumn]) -> usize {
    let last = cols.len() - 1;
    let pivot = cols[last].diff_hz;
    let mut store = 0;
    for j in 0..last {
        if cols[j].diff_hz <= pivot {
            cols.swap(store, j);
            store += 1;
        }
    }
    cols.swap(store, last);
    store
}

/// Quicksort on the difference row with the last column as pivot; index
/// pairs travel with their difference.
pub fn custom_quicksort(mut cols: &mut [DiffColumn]) {
    while cols.len() >= 2 {
        let p = partition(cols);
        let (left, right) = cols.split_at_mut(p);
        let right = &mut right[1..];
        // recurse into the shorter side to bound stack depth
        if left.len() < right.len() {
            custom_quicksort(left);
            cols = right;
        } else {
            custom_quicksort(right);
            cols = left;
        }
    }
}

fn merge_runs(cols: &mut [DiffColumn], eps: f64) -> bool {
    let mut changed = false;
    let mut i = 0;
    while i < cols.len() {
        let anchor = cols[i].diff_hz;
        let mut j = i;
        while j + 1 < cols.len()
            && (anchor - cols[j + 1].diff_hz).abs() <= eps * cols[j + 1].diff_hz
        {
            j += 1;
        }
        let run = &mut cols[i..=j];
        let avg = run.iter().map(|c| c.diff_hz).sum::<f64>() / run.len() as f64;
        for c in run {
            changed |= c.diff_hz != avg;
            c.diff_hz = avg;
        }
        i = j + 1;
    }
    changed
}

/// Replaces runs of near-equal sorted differences with their average,
/// repeating until no run changes.
pub fn fix_freq_var(cols: &mut [DiffColumn], eps_freq: f64) {
    while merge_runs(cols, eps_freq) {}
}

/// One column per pair `j < k` whose separation lies in `[d_min, d_max]`.
pub fn build_difference_matrix(freqs: &[f64], cfg: &DetectorConfig) -> DifferenceMatrix {
    let mut columns = Vec::new();
    for j in 0..freqs.len() {
        for k in j + 1..freqs.len() {
            let d = (freqs[k] - freqs[j]).abs();
            if d >= cfg.d_min_hz && d <= cfg.d_max_hz {
                columns.push(DiffColumn {
                    diff_hz: d,
                    idx_lo: j,
                    idx_hi: k,
                });
            }
        }
    }
    DifferenceMatrix { columns }
}

/// Assembles member lists from the columns of one step's group. Columns are
/// taken in order: a pair already covered is skipped, a pair touching a list
/// extends it, and a new pair joins the first list whose last member sits a
/// multiple of `step_hz` away (within `eps`), or else starts a list. Lists
/// with fewer than three members are dropped; the rest come back sorted.
pub fn find_harmonics(
    group: &[DiffColumn],
    freqs: &[f64],
    step_hz: f64,
    eps: f64,
) -> Vec<Vec<usize>> {
    let mut lists: Vec<Vec<usize>> = Vec::new();
    for col in group {
        let (lo, hi) = (col.idx_lo, col.idx_hi);
        let holder = |i: usize| lists.iter().position(|l| l.contains(&i));
        match (holder(lo), holder(hi)) {
            (Some(_), Some(_)) => {}
            (Some(a), None) => lists[a].push(hi),
            (None, Some(b)) => lists[b].push(lo),
            (None, None) => {
                let target = lists.iter().position(|l| {
                    let last = *l.last().expect("lists are never empty");
                    is_multiple((freqs[lo] - freqs[last]).abs(), step_hz, eps)
                });
                match target {
                    Some(a) => lists[a].extend([lo, hi]),
                    None => lists.push(vec![lo, hi]),
                }
            }
        }
    }
    lists.retain(|l| l.len() > 2);
    for l in &mut lists {
        l.sort_unstable();
    }
    lists
}

/// Largest step that divides every consecutive member separation, searched
/// downward from the smallest separation and bounded below by `generator`.
fn member_step(member_freqs: &[f64], generator: f64, eps: f64) -> f64 {
    let gaps: Vec<f64> = member_freqs
        .windows(2)
        .map(|w| (w[1] - w[0]).abs())
        .collect();
    let min_gap = gaps.iter().copied().fold(f64::INFINITY, f64::min);
    let max_k = (min_gap / generator).round().max(1.0) as usize;
    for k in 1..=max_k {
        let cand = min_gap / k as f64;
        if gaps.iter().all(|&g| is_multiple(g, cand, eps)) {
            let total: f64 = gaps.iter().map(|&g| (g / cand).round()).sum();
            let span = member_freqs[member_freqs.len() - 1] - member_freqs[0];
            return span.abs() / total;
        }
    }
    generator
}

fn distinct_indices(freqs: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..freqs.len()).collect();
    order.sort_by(|&a, &b| freqs[a].total_cmp(&freqs[b]).then(a.cmp(&b)));
    let mut keep: Vec<usize> = Vec::with_capacity(order.len());
    for i in order {
        match keep.last() {
            Some(&p) if freqs[i] == freqs[p] => {}
            _ => keep.push(i),
        }
    }
    keep.sort_unstable();
    keep
}

/// Finds harmonic combs (or IMP families with `flag_subband`). Returns the
/// registered steps, smallest first, and the groups found.
pub fn detect(freqs: &[f64], cfg: &DetectorConfig) -> Result<(Vec<f64>, Vec<HarmonicGroup>)> {
    cfg.validate()?;
    if freqs.iter().any(|f| !f.is_finite()) {
        return Err(Error::Config("non-finite frequency".into()));
    }
    let keep = distinct_indices(freqs);
    let kept: Vec<f64> = keep.iter().map(|&i| freqs[i]).collect();
    let mut matrix = build_difference_matrix(&kept, cfg);
    if matrix.len() < 2 {
        return Ok((Vec::new(), Vec::new()));
    }
    custom_quicksort(&mut matrix.columns);
    if !cfg.flag_subband {
        fix_freq_var(&mut matrix.columns, cfg.eps_freq);
    }

    let mut steps: Vec<f64> = Vec::new();
    let mut products: Vec<Vec<DiffColumn>> = Vec::new();
    for col in &matrix.columns {
        match steps
            .iter()
            .position(|&s| is_multiple(col.diff_hz, s, cfg.eps_mult))
        {
            Some(k) => products[k].push(*col),
            None => {
                steps.push(col.diff_hz);
                products.push(vec![*col]);
            }
        }
    }

    let kind = if cfg.flag_subband {
        GroupKind::Imp
    } else {
        GroupKind::Harmonic
    };
    let mut groups: Vec<HarmonicGroup> = Vec::new();
    for (&step, group) in steps.iter().zip(&products) {
        if group.len() <= 2 {
            continue;
        }
        if cfg.flag_subband {
            let first = group[0].diff_hz;
            if group
                .iter()
                .all(|c| (c.diff_hz - first).abs() <= cfg.eps_freq * first)
            {
                continue;
            }
        }
        for members in find_harmonics(group, &kept, step, cfg.eps_freq) {
            let mut member_freqs: Vec<f64> = members.iter().map(|&i| kept[i]).collect();
            let mut member_indices: Vec<usize> = members.iter().map(|&i| keep[i]).collect();
            let mut order: Vec<usize> = (0..members.len()).collect();
            order.sort_by(|&a, &b| member_freqs[a].total_cmp(&member_freqs[b]));
            member_freqs = order.iter().map(|&o| member_freqs[o]).collect();
            member_indices = order.iter().map(|&o| member_indices[o]).collect();
            if groups
                .iter()
                .any(|g| same_members(&g.member_indices, &member_indices))
            {
                continue;
            }
            groups.push(HarmonicGroup {
                kind,
                step_hz: member_step(&member_freqs, step, cfg.eps_mult),
                member_freqs_hz: member_freqs,
                member_indices,
            });
        }
    }
    Ok((steps, groups))
}

fn same_members(a: &[usize], b: &[usize]) -> bool {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_unstable();
    b.sort_unstable();
    a == b
}

/// Peaks from one spectrum, with neighbours one bin apart collapsed onto the
/// stronger. Returns indices into `peaks`, in frequency order.
fn distinct_peaks(peaks: &[Peak]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..peaks.len()).collect();
    order.sort_by(|&a, &b| peaks[a].freq_hz.total_cmp(&peaks[b].freq_hz));
    let mut keep: Vec<usize> = Vec::new();
    for i in order {
        match keep.last_mut() {
            Some(p) if peaks[i].bin_index.abs_diff(peaks[*p].bin_index) <= 1 => {
                if peaks[i].power_dbm > peaks[*p].power_dbm {
                    *p = i;
                }
            }
            _ => keep.push(i),
        }
    }
    keep
}

/// Drops IMP sidebands: within each fine group, only members that are local
/// power maxima along the group's frequency order survive.
fn carriers_only(peaks: &[Peak], groups: &[HarmonicGroup]) -> Vec<bool> {
    let mut alive = vec![true; peaks.len()];
    for g in groups {
        let m = &g.member_indices;
        for (pos, &i) in m.iter().enumerate() {
            let p = peaks[i].power_dbm;
            let left = pos
                .checked_sub(1)
                .map_or(f64::NEG_INFINITY, |q| peaks[m[q]].power_dbm);
            let right = m
                .get(pos + 1)
                .map_or(f64::NEG_INFINITY, |&q| peaks[q].power_dbm);
            if !(p >= left && p >= right) {
                alive[i] = false;
            }
        }
    }
    alive
}

fn run_on(peaks: &[Peak], subset: &[usize], cfg: &DetectorConfig) -> Result<Vec<HarmonicGroup>> {
    if cfg.d_min_hz >= cfg.d_max_hz {
        return Ok(Vec::new());
    }
    let freqs: Vec<f64> = subset.iter().map(|&i| peaks[i].freq_hz).collect();
    let (_, mut groups) = detect(&freqs, cfg)?;
    for g in &mut groups {
        for idx in &mut g.member_indices {
            *idx = subset[*idx];
        }
    }
    Ok(groups)
}

/// Harmonic combs and IMP families in one peak list.
///
/// A fine pass below `coarse.d_min_hz` first marks IMP sidebands so the
/// coarse harmonic pass runs on carriers only. A final fine pass then looks
/// for IMP families up to half the smallest harmonic step found (or up to
/// `fine.d_max_hz` when there is none). Member indices refer to `peaks`.
pub fn detect_two_pass(
    peaks: &[Peak],
    coarse: &DetectorConfig,
    fine: &DetectorConfig,
) -> Result<Vec<HarmonicGroup>> {
    coarse.validate()?;
    fine.validate()?;
    let all = distinct_peaks(peaks);

    let pre = DetectorConfig {
        d_max_hz: coarse.d_min_hz,
        ..*fine
    };
    let alive = carriers_only(peaks, &run_on(peaks, &all, &pre)?);
    let carriers: Vec<usize> = all.iter().copied().filter(|&i| alive[i]).collect();
    let mut groups = run_on(peaks, &carriers, coarse)?;

    let smallest = groups
        .iter()
        .map(|g| g.step_hz)
        .fold(f64::INFINITY, f64::min);
    let last = DetectorConfig {
        d_max_hz: if smallest.is_finite() {
            0.5 * smallest
        } else {
            fine.d_max_hz
        },
        ..*fine
    };
    for g in run_on(peaks, &all, &last)? {
        if !groups
            .iter()
            .any(|h| same_members(&h.member_indices, &g.member_indices))
        {
            groups.push(g);
        }
    }
    groups.sort_by(|a, b| {
        a.step_hz
            .total_cmp(&b.step_hz)
            .then_with(|| a.member_indices.cmp(&b.member_indices))
    });
    Ok(groups)
}
