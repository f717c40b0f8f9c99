//! End-to-end analysis of one capture: spectrum, peaks, groups, fingerprints.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::classify::{decide, match_fingerprint, DEFAULT_TOL_REL};
use crate::dsp::{noise_floor_dbm, process_pipeline, PipelineConfig};
use crate::error::Result;
use crate::harmonics::{detect_two_pass, DetectorConfig, DEFAULT_SPLIT_FRACTION};
use crate::peaks::{detect_peaks, PeakConfig};
use crate::types::{DetectionReport, DeviceProfile, IqRecording, Peak, PowerSpectrum};

/// Detector settings relative to the analysed spectrum. Unset bounds follow
/// the spectrum: the coarse pass starts at `split_fraction` of the bandwidth,
/// the fine pass at two bins, and both end at half the bandwidth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorSettings {
    pub split_fraction: f64,
    pub coarse_d_min_hz: Option<f64>,
    pub fine_d_min_hz: Option<f64>,
    pub d_max_hz: Option<f64>,
    pub eps_freq: f64,
    pub eps_mult: f64,
}

impl Default for DetectorSettings {
    fn default() -> Self {
        DetectorSettings {
            split_fraction: DEFAULT_SPLIT_FRACTION,
            coarse_d_min_hz: None,
            fine_d_min_hz: None,
            d_max_hz: None,
            eps_freq: 0.005,
            eps_mult: 0.01,
        }
    }
}

impl DetectorSettings {
    /// Coarse and fine configurations for `spec`.
    pub fn configs(&self, spec: &PowerSpectrum) -> (DetectorConfig, DetectorConfig) {
        let bw = spec.bandwidth_hz();
        let d_max = self.d_max_hz.unwrap_or(bw / 2.0);
        let coarse = DetectorConfig {
            d_min_hz: self.coarse_d_min_hz.unwrap_or(bw * self.split_fraction),
            d_max_hz: d_max,
            eps_freq: self.eps_freq,
            eps_mult: self.eps_mult,
            flag_subband: false,
        };
        let fine = DetectorConfig {
            d_min_hz: self.fine_d_min_hz.unwrap_or(2.0 * spec.resolution_hz()),
            flag_subband: true,
            ..coarse
        };
        (coarse, fine)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisConfig {
    pub pipeline: PipelineConfig,
    pub peaks: PeakConfig,
    pub detector: DetectorSettings,
    pub tol_rel: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            pipeline: PipelineConfig::default(),
            peaks: PeakConfig::default(),
            detector: DetectorSettings::default(),
            tol_rel: DEFAULT_TOL_REL,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub spectrum: PowerSpectrum,
    pub peaks: Vec<Peak>,
    pub report: DetectionReport,
}

/// Runs everything after the spectrum estimate.
pub fn analyze_spectrum(
    spectrum: PowerSpectrum,
    cfg: &AnalysisConfig,
    profiles: &[DeviceProfile],
) -> Result<Analysis> {
    let t0 = Instant::now();
    let peaks = detect_peaks(&spectrum, &cfg.peaks)?;
    let (coarse, fine) = cfg.detector.configs(&spectrum);
    let groups = detect_two_pass(&peaks, &coarse, &fine)?;
    let matches = match_fingerprint(&groups, profiles, cfg.tol_rel);

    let mut stats = BTreeMap::new();
    stats.insert("peak_count".to_owned(), peaks.len() as f64);
    stats.insert("noise_floor_dbm".to_owned(), noise_floor_dbm(&spectrum));
    stats.insert("resolution_hz".to_owned(), spectrum.resolution_hz());
    stats.insert("detect_runtime_s".to_owned(), t0.elapsed().as_secs_f64());
    let report = decide(groups, &matches, cfg.tol_rel, stats);
    Ok(Analysis {
        spectrum,
        peaks,
        report,
    })
}

pub fn analyze(
    rec: &IqRecording,
    cfg: &AnalysisConfig,
    profiles: &[DeviceProfile],
) -> Result<Analysis> {
    let t0 = Instant::now();
    let spectrum = process_pipeline(rec, &cfg.pipeline)?;
    let pipeline_s = t0.elapsed().as_secs_f64();
    let mut out = analyze_spectrum(spectrum, cfg, profiles)?;
    out.report.set_stat("pipeline_runtime_s", pipeline_s);
    out.report
        .set_stat("total_runtime_s", t0.elapsed().as_secs_f64());
    Ok(out)
}
