//! Domain types shared across the pipeline.

use std::collections::BTreeMap;

use num_complex::Complex32;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default capture rate of the reference receiver, 4 MS/s.
pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 4e6;

/// Complex baseband capture plus the metadata needed to place it in frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct IqRecording {
    samples: Vec<Complex32>,
    sample_rate_hz: f64,
    center_freq_hz: f64,
    label: Option<String>,
}

impl IqRecording {
    pub fn new(
        samples: Vec<Complex32>,
        sample_rate_hz: f64,
        center_freq_hz: f64,
        label: Option<String>,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidRecording("no samples".into()));
        }
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::InvalidRecording(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if !(center_freq_hz.is_finite() && center_freq_hz >= 0.0) {
            return Err(Error::InvalidRecording(format!(
                "center frequency must be non-negative, got {center_freq_hz}"
            )));
        }
        if let Some(i) = samples
            .iter()
            .position(|s| !(s.re.is_finite() && s.im.is_finite()))
        {
            return Err(Error::InvalidRecording(format!(
                "non-finite sample at index {i}"
            )));
        }
        Ok(IqRecording {
            samples,
            sample_rate_hz,
            center_freq_hz,
            label,
        })
    }

    pub fn samples(&self) -> &[Complex32] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn center_freq_hz(&self) -> f64 {
        self.center_freq_hz
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn with_label(mut self, label: Option<String>) -> Self {
        self.label = label;
        self
    }

    /// Lowest absolute frequency represented by the capture.
    pub fn band_lo_hz(&self) -> f64 {
        self.center_freq_hz - self.sample_rate_hz / 2.0
    }

    /// Exclusive upper edge of the captured band.
    pub fn band_hi_hz(&self) -> f64 {
        self.center_freq_hz + self.sample_rate_hz / 2.0
    }

    pub fn into_samples(self) -> Vec<Complex32> {
        self.samples
    }
}

/// Frequency-indexed power estimate in dBm on a uniform axis.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSpectrum {
    freqs_hz: Vec<f64>,
    power_dbm: Vec<f64>,
    resolution_hz: f64,
}

impl PowerSpectrum {
    /// Builds a spectrum whose first bin sits at `start_hz`.
    pub fn from_uniform(start_hz: f64, resolution_hz: f64, power_dbm: Vec<f64>) -> Result<Self> {
        if !(resolution_hz.is_finite() && resolution_hz > 0.0) {
            return Err(Error::InvalidSpectrum(format!(
                "resolution must be positive, got {resolution_hz}"
            )));
        }
        let freqs_hz = (0..power_dbm.len())
            .map(|k| start_hz + k as f64 * resolution_hz)
            .collect();
        Self::new(freqs_hz, power_dbm, resolution_hz)
    }

    pub fn new(freqs_hz: Vec<f64>, power_dbm: Vec<f64>, resolution_hz: f64) -> Result<Self> {
        if freqs_hz.is_empty() {
            return Err(Error::InvalidSpectrum("empty spectrum".into()));
        }
        if freqs_hz.len() != power_dbm.len() {
            return Err(Error::InvalidSpectrum(format!(
                "{} frequencies but {} power values",
                freqs_hz.len(),
                power_dbm.len()
            )));
        }
        if !(resolution_hz.is_finite() && resolution_hz > 0.0) {
            return Err(Error::InvalidSpectrum(format!(
                "resolution must be positive, got {resolution_hz}"
            )));
        }
        if power_dbm.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidSpectrum("non-finite power value".into()));
        }
        for (k, w) in freqs_hz.windows(2).enumerate() {
            let step = w[1] - w[0];
            let scale = resolution_hz.max(w[1].abs());
            if (step - resolution_hz).abs() > 1e-9 * scale {
                return Err(Error::InvalidSpectrum(format!(
                    "non-uniform axis at bin {k}: step {step} Hz, expected {resolution_hz} Hz"
                )));
            }
        }
        Ok(PowerSpectrum {
            freqs_hz,
            power_dbm,
            resolution_hz,
        })
    }

    pub fn freqs_hz(&self) -> &[f64] {
        &self.freqs_hz
    }

    pub fn power_dbm(&self) -> &[f64] {
        &self.power_dbm
    }

    pub fn resolution_hz(&self) -> f64 {
        self.resolution_hz
    }

    pub fn len(&self) -> usize {
        self.freqs_hz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs_hz.is_empty()
    }

    /// Span covered by the axis, `len * resolution`.
    pub fn bandwidth_hz(&self) -> f64 {
        self.len() as f64 * self.resolution_hz
    }

    /// Nearest bin to `freq_hz`, clamped to the axis.
    pub fn nearest_bin(&self, freq_hz: f64) -> usize {
        let k = ((freq_hz - self.freqs_hz[0]) / self.resolution_hz).round();
        k.clamp(0.0, (self.len() - 1) as f64) as usize
    }

    pub fn max_power_dbm(&self) -> f64 {
        self.power_dbm
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Same axis, new power values.
    pub fn with_power(&self, power_dbm: Vec<f64>) -> Result<Self> {
        Self::new(self.freqs_hz.clone(), power_dbm, self.resolution_hz)
    }

    /// Writes `freq_hz,power_dbm` rows with a header line.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "freq_hz,power_dbm")?;
        for (f, p) in self.freqs_hz.iter().zip(&self.power_dbm) {
            writeln!(out, "{f},{p}")?;
        }
        Ok(())
    }
}

/// One spectral energy peak.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub freq_hz: f64,
    pub power_dbm: f64,
    pub bin_index: usize,
    /// Peak power above the spectrum's noise floor.
    pub snr_db: f64,
}

/// Writes `freq_hz,power_dbm,snr_db` rows with a header line.
pub fn write_peaks_csv<W: std::io::Write>(peaks: &[Peak], mut out: W) -> std::io::Result<()> {
    writeln!(out, "freq_hz,power_dbm,snr_db")?;
    for p in peaks {
        writeln!(out, "{},{},{}", p.freq_hz, p.power_dbm, p.snr_db)?;
    }
    Ok(())
}

/// Harmonic/IMP signature of a known emanation source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub name: String,
    pub fundamental_hz: f64,
    /// `None` when no single IMP step characterizes the device.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub imp_step_hz: Option<f64>,
}

impl DeviceProfile {
    pub fn new(
        name: impl Into<String>,
        fundamental_hz: f64,
        imp_step_hz: Option<f64>,
    ) -> Result<Self> {
        let profile = DeviceProfile {
            name: name.into(),
            fundamental_hz,
            imp_step_hz,
        };
        profile.validate()?;
        Ok(profile)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fundamental_hz.is_finite() && self.fundamental_hz > 0.0) {
            return Err(Error::Config(format!(
                "profile {}: fundamental must be positive",
                self.name
            )));
        }
        if let Some(d) = self.imp_step_hz {
            if !(d.is_finite() && d > 0.0 && d < self.fundamental_hz) {
                return Err(Error::Config(format!(
                    "profile {}: IMP step must lie in (0, fundamental)",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKind {
    Harmonic,
    Imp,
}

/// One detected harmonic comb or IMP family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicGroup {
    pub kind: GroupKind,
    /// Fundamental for harmonics, sideband separation for IMPs.
    pub step_hz: f64,
    pub member_freqs_hz: Vec<f64>,
    /// Ascending indices into the frequency list the detector was given.
    pub member_indices: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    EmanationDetected,
    Clean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FingerprintCandidates {
    pub group_id: usize,
    pub candidates: Vec<String>,
    pub match_score: f64,
}

/// Outcome of one analysis run. Serializes to the documented JSON report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    verdict: Verdict,
    groups: Vec<HarmonicGroup>,
    fingerprint_candidates: Vec<FingerprintCandidates>,
    pipeline_stats: BTreeMap<String, f64>,
}

impl DetectionReport {
    /// The verdict is derived from `groups`, never supplied.
    pub fn new(
        groups: Vec<HarmonicGroup>,
        fingerprint_candidates: Vec<FingerprintCandidates>,
        pipeline_stats: BTreeMap<String, f64>,
    ) -> Self {
        let verdict = if groups.is_empty() {
            Verdict::Clean
        } else {
            Verdict::EmanationDetected
        };
        DetectionReport {
            verdict,
            groups,
            fingerprint_candidates,
            pipeline_stats,
        }
    }

    pub fn verdict(&self) -> Verdict {
        self.verdict
    }

    pub fn groups(&self) -> &[HarmonicGroup] {
        &self.groups
    }

    pub fn fingerprint_candidates(&self) -> &[FingerprintCandidates] {
        &self.fingerprint_candidates
    }

    pub fn pipeline_stats(&self) -> &BTreeMap<String, f64> {
        &self.pipeline_stats
    }

    pub fn set_stat(&mut self, name: impl Into<String>, value: f64) {
        self.pipeline_stats.insert(name.into(), value);
    }

    /// Union of every candidate set in the report.
    pub fn all_candidates(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .fingerprint_candidates
            .iter()
            .flat_map(|c| c.candidates.iter().cloned())
            .collect();
        names.sort();
        names.dedup();
        names
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
