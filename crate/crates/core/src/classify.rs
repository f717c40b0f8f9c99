//! Device fingerprinting, the power-threshold baseline, and the final verdict.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::types::{
    DetectionReport, DeviceProfile, FingerprintCandidates, GroupKind, HarmonicGroup, PowerSpectrum,
};

pub const DEFAULT_TOL_REL: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FingerprintMatch {
    /// Index of the harmonic group in the detector output.
    pub group_id: usize,
    pub candidates: Vec<String>,
    /// Worst fundamental error over the candidates, relative to the profile.
    pub fundamental_error_rel: f64,
    pub imp_error_rel: Option<f64>,
}

impl FingerprintMatch {
    /// 1 for an exact fundamental match, 0 at the tolerance edge or with no
    /// candidates.
    pub fn score(&self, tol_rel: f64) -> f64 {
        if self.candidates.is_empty() {
            0.0
        } else {
            (1.0 - self.fundamental_error_rel / tol_rel).clamp(0.0, 1.0)
        }
    }
}

fn rel_err(measured: f64, reference: f64) -> f64 {
    (measured - reference).abs() / reference
}

/// One entry per harmonic group. Candidates are profiles whose fundamental is
/// within `tol_rel` of the group step. When IMP groups were found and some
/// candidate's IMP step matches one of them, candidates with a different IMP
/// step are dropped; profiles without an IMP step always stay. A group with no
/// matching profile gets an empty candidate list.
pub fn match_fingerprint(
    groups: &[HarmonicGroup],
    profiles: &[DeviceProfile],
    tol_rel: f64,
) -> Vec<FingerprintMatch> {
    let imp_steps: Vec<f64> = groups
        .iter()
        .filter(|g| g.kind == GroupKind::Imp)
        .map(|g| g.step_hz)
        .collect();
    let imp_err = |p: &DeviceProfile| {
        p.imp_step_hz.and_then(|d| {
            imp_steps
                .iter()
                .map(|&s| rel_err(s, d))
                .filter(|&e| e <= tol_rel)
                .min_by(f64::total_cmp)
        })
    };

    let mut out = Vec::new();
    for (id, g) in groups.iter().enumerate() {
        if g.kind != GroupKind::Harmonic {
            continue;
        }
        let mut hits: Vec<(&DeviceProfile, f64)> = profiles
            .iter()
            .map(|p| (p, rel_err(g.step_hz, p.fundamental_hz)))
            .filter(|&(_, e)| e <= tol_rel)
            .collect();
        if hits.iter().any(|(p, _)| imp_err(p).is_some()) {
            hits.retain(|(p, _)| p.imp_step_hz.is_none() || imp_err(p).is_some());
        }
        let imp_error_rel = hits
            .iter()
            .filter_map(|(p, _)| imp_err(p))
            .max_by(f64::total_cmp);
        out.push(FingerprintMatch {
            group_id: id,
            candidates: hits.iter().map(|(p, _)| p.name.clone()).collect(),
            fundamental_error_rel: hits.iter().map(|&(_, e)| e).fold(0.0, f64::max),
            imp_error_rel,
        });
    }
    out
}

/// True when any bin exceeds `threshold_dbm`. With `mask_dc`, the centre bin
/// and its two neighbours are ignored.
pub fn threshold_detect(spec: &PowerSpectrum, threshold_dbm: f64, mask_dc: bool) -> bool {
    let center = spec.len() / 2;
    spec.power_dbm()
        .iter()
        .enumerate()
        .any(|(i, &p)| p > threshold_dbm && !(mask_dc && i.abs_diff(center) <= 1))
}

/// Assembles the report; the verdict follows from whether any group exists.
pub fn decide(
    groups: Vec<HarmonicGroup>,
    matches: &[FingerprintMatch],
    tol_rel: f64,
    stats: BTreeMap<String, f64>,
) -> DetectionReport {
    let fps = matches
        .iter()
        .map(|m| FingerprintCandidates {
            group_id: m.group_id,
            candidates: m.candidates.clone(),
            match_score: m.score(tol_rel),
        })
        .collect();
    DetectionReport::new(groups, fps, stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::builtin_profiles;
    use crate::types::Verdict;

    const MHZ: f64 = 1e6;

    fn group(kind: GroupKind, step_mhz: f64) -> HarmonicGroup {
        let step = step_mhz * MHZ;
        HarmonicGroup {
            kind,
            step_hz: step,
            member_freqs_hz: vec![step, 2.0 * step, 3.0 * step],
            member_indices: vec![0, 1, 2],
        }
    }

    fn names(groups: &[HarmonicGroup]) -> Vec<Vec<String>> {
        match_fingerprint(groups, &builtin_profiles(), DEFAULT_TOL_REL)
            .into_iter()
            .map(|m| m.candidates)
            .collect()
    }

    #[test]
    fn hdmi_and_monitor_together() {
        let g = [
            group(GroupKind::Harmonic, 148.5),
            group(GroupKind::Imp, 0.07),
        ];
        assert_eq!(
            names(&g),
            vec![vec!["HDMI".to_owned(), "Monitor".to_owned()]]
        );
        let alone = [group(GroupKind::Harmonic, 148.9)];
        assert_eq!(
            names(&alone),
            vec![vec!["HDMI".to_owned(), "Monitor".to_owned()]]
        );
    }

    #[test]
    fn zigbee_and_arduino() {
        let g = [group(GroupKind::Harmonic, 24.0), group(GroupKind::Imp, 3.0)];
        assert_eq!(names(&g), vec![vec!["ZigBee".to_owned()]]);
        let g = [group(GroupKind::Harmonic, 16.1)];
        let m = match_fingerprint(&g, &builtin_profiles(), DEFAULT_TOL_REL);
        assert_eq!(m[0].candidates, vec!["Arduino".to_owned()]);
        assert!((m[0].fundamental_error_rel - 0.1 / 16.0).abs() < 1e-12);
        assert!((m[0].score(DEFAULT_TOL_REL) - (1.0 - 0.3125)).abs() < 1e-9);
        assert_eq!(m[0].imp_error_rel, None);
    }

    #[test]
    fn imp_from_another_device_keeps_fundamental_match() {
        // a 3 MHz IMP family does not veto PSoC's fundamental on its own
        let g = [group(GroupKind::Harmonic, 64.0), group(GroupKind::Imp, 3.0)];
        assert_eq!(names(&g), vec![vec!["PSoC".to_owned()]]);
    }

    #[test]
    fn unidentified_group() {
        let g = vec![group(GroupKind::Harmonic, 10.0)];
        let m = match_fingerprint(&g, &builtin_profiles(), DEFAULT_TOL_REL);
        assert_eq!(m.len(), 1);
        assert!(m[0].candidates.is_empty());
        let report = decide(g, &m, DEFAULT_TOL_REL, BTreeMap::new());
        assert_eq!(report.verdict(), Verdict::EmanationDetected);
        assert!(report.all_candidates().is_empty());
        assert_eq!(report.fingerprint_candidates()[0].match_score, 0.0);
    }

    #[test]
    fn near_fundamentals_separate() {
        assert_eq!(
            names(&[group(GroupKind::Harmonic, 3.3)]),
            vec![vec!["Desktop".to_owned()]]
        );
        assert_eq!(
            names(&[group(GroupKind::Harmonic, 6.0)]),
            vec![vec!["ESP32".to_owned()]]
        );
    }

    #[test]
    fn no_groups_is_clean() {
        let report = decide(Vec::new(), &[], DEFAULT_TOL_REL, BTreeMap::new());
        assert_eq!(report.verdict(), Verdict::Clean);
    }

    #[test]
    fn threshold_examples() {
        let mut p = vec![-80.0; 64];
        p[10] = -50.0;
        let spec = PowerSpectrum::from_uniform(0.0, 1.0, p).unwrap();
        assert!(!threshold_detect(&spec, -45.0, false));
        assert!(threshold_detect(&spec, -55.0, false));
        let mut p = vec![-80.0; 64];
        p[32] = -50.0;
        let dc = PowerSpectrum::from_uniform(0.0, 1.0, p).unwrap();
        assert!(threshold_detect(&dc, -55.0, false));
        assert!(!threshold_detect(&dc, -55.0, true));
    }

    #[test]
    fn threshold_is_monotone() {
        let p: Vec<f64> = (0..200).map(|i| -90.0 + ((i * 37) % 41) as f64).collect();
        let spec = PowerSpectrum::from_uniform(0.0, 1.0, p).unwrap();
        let mut seen_false = false;
        for t in (-100..=-40).map(f64::from) {
            let v = threshold_detect(&spec, t, false);
            assert!(!(seen_false && v));
            seen_false |= !v;
        }
        assert!(seen_false);
    }
}
