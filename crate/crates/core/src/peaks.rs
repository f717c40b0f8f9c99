//! Wavelet peak detection on dB spectra.
//!
//! Candidates are local maxima of the power spectrum that clear
//! `min_snr_db` above the noise floor. Each candidate is confirmed by a
//! ridge line: starting at the smallest Ricker scale on the candidate bin,
//! the CWT local maximum is followed upward through the scales, allowing the
//! position to drift by `max(1, w/4)` bins and tolerating `gap_thresh` scales
//! without a maximum. A ridge passes when it is long enough, its strongest
//! coefficient clears `min_ridge_snr` times the noise level of the
//! smallest-scale row, and that strongest coefficient does not sit at the
//! widest scale (step edges keep growing with scale, lines do not).
//!
//! CWT coefficients are only evaluated near candidates; they equal the
//! corresponding entries of [`cwt_ricker`] on the full spectrum.

use std::f64::consts::PI;
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::dsp::{percentile, percentile_sorted};
use crate::error::{Error, Result};
use crate::types::{Peak, PowerSpectrum};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PeakConfig {
    /// Ricker scales, in bins.
    pub widths_bins: RangeInclusive<usize>,
    /// Minimum peak power above the noise floor.
    pub min_snr_db: f64,
    /// Percentile of the power bins taken as the noise floor, and of the
    /// smallest-scale CWT magnitudes taken as the CWT noise level.
    pub noise_percentile: f64,
    pub max_peaks: usize,
    /// Minimum ridge length in scales; `None` means a quarter of the scales.
    pub min_ridge_len: Option<usize>,
    /// Minimum ratio of the strongest ridge coefficient to the CWT noise level.
    pub min_ridge_snr: f64,
    /// Consecutive scales a ridge may skip.
    pub gap_thresh: usize,
    /// Ignore the centre (DC) bin and this many bins either side.
    pub mask_dc: bool,
    pub dc_mask_bins: usize,
}

impl Default for PeakConfig {
    fn default() -> Self {
        PeakConfig {
            widths_bins: 1..=30,
            min_snr_db: 3.0,
            noise_percentile: 10.0,
            max_peaks: 512,
            min_ridge_len: None,
            min_ridge_snr: 80.0,
            gap_thresh: 2,
            mask_dc: true,
            dc_mask_bins: 2,
        }
    }
}

impl PeakConfig {
    pub fn validate(&self) -> Result<()> {
        if self.widths_bins.is_empty() || *self.widths_bins.start() == 0 {
            return Err(Error::Config(
                "width range must be non-empty and start at >= 1".into(),
            ));
        }
        if !(self.min_snr_db >= 0.0) {
            return Err(Error::Config("min_snr_db must be >= 0".into()));
        }
        if !(self.noise_percentile > 0.0 && self.noise_percentile < 100.0) {
            return Err(Error::Config(
                "noise_percentile must lie in (0, 100)".into(),
            ));
        }
        Ok(())
    }

    fn ridge_len_threshold(&self) -> usize {
        self.min_ridge_len
            .unwrap_or_else(|| self.widths_bins.clone().count().div_ceil(4))
    }
}

/// Ricker (Mexican-hat) wavelet of scale `a`, sampled at integer offsets
/// `-half..=half` with `half = ceil(5a)`, shifted to an exact zero sum.
pub fn ricker_kernel(a: f64) -> Vec<f64> {
    let half = (5.0 * a).ceil() as i64;
    let amp = 2.0 / ((3.0 * a).sqrt() * PI.powf(0.25));
    let mut k: Vec<f64> = (-half..=half)
        .map(|k| {
            let t2 = (k * k) as f64 / (a * a);
            amp * (1.0 - t2) * (-t2 / 2.0).exp()
        })
        .collect();
    let mean = k.iter().sum::<f64>() / k.len() as f64;
    k.iter_mut().for_each(|v| *v -= mean);
    k
}

/// Edge-replicated sample.
#[inline]
fn at(signal: &[f64], i: i64) -> f64 {
    signal[i.clamp(0, signal.len() as i64 - 1) as usize]
}

#[inline]
fn cwt_at(signal: &[f64], kernel: &[f64], pos: i64) -> f64 {
    let half = (kernel.len() / 2) as i64;
    kernel
        .iter()
        .enumerate()
        .map(|(j, &k)| k * at(signal, pos + j as i64 - half))
        .sum()
}

/// Continuous wavelet transform with Ricker wavelets, one row per width,
/// each row the same length as `signal`. Samples beyond the ends repeat the
/// edge values.
pub fn cwt_ricker(signal: &[f64], widths: RangeInclusive<usize>) -> Result<Vec<Vec<f64>>> {
    if signal.is_empty() {
        return Err(Error::Config("empty signal".into()));
    }
    if widths.is_empty() || *widths.start() == 0 {
        return Err(Error::Config("empty width range".into()));
    }
    Ok(widths
        .map(|w| {
            let kernel = ricker_kernel(w as f64);
            (0..signal.len() as i64)
                .map(|p| cwt_at(signal, &kernel, p))
                .collect()
        })
        .collect())
}

struct Ridge {
    len: usize,
    strength: f64,
    best_scale: usize,
}

fn trace_ridge(
    signal: &[f64],
    kernels: &[Vec<f64>],
    widths: &[usize],
    start: usize,
    gap_thresh: usize,
) -> Ridge {
    let mut pos = start as i64;
    let mut len = 0;
    let mut gap = 0;
    let mut strength = f64::NEG_INFINITY;
    let mut best_scale = widths[0];
    let n = signal.len() as i64;
    for (kernel, &w) in kernels.iter().zip(widths) {
        let reach = (w as i64 / 4).max(1);
        let lo = (pos - reach).max(0);
        let hi = (pos + reach).min(n - 1);
        let mut best = (pos, f64::NEG_INFINITY);
        for p in lo..=hi {
            let v = cwt_at(signal, kernel, p);
            if v > best.1 {
                best = (p, v);
            }
        }
        let (p, v) = best;
        let is_local_max = v > 0.0
            && (p == 0 || v >= cwt_at(signal, kernel, p - 1))
            && (p == n - 1 || v >= cwt_at(signal, kernel, p + 1));
        if is_local_max {
            len += 1;
            gap = 0;
            pos = p;
            if v > strength {
                strength = v;
                best_scale = w;
            }
        } else {
            gap += 1;
            if gap > gap_thresh {
                break;
            }
        }
    }
    Ridge {
        len,
        strength,
        best_scale,
    }
}

/// Noise floor of a spectrum: the configured percentile of its power bins.
pub fn spectrum_floor_dbm(spec: &PowerSpectrum, cfg: &PeakConfig) -> f64 {
    percentile(spec.power_dbm(), cfg.noise_percentile)
}

/// Detects spectral energy peaks. Returns them sorted by frequency.
pub fn detect_peaks(spec: &PowerSpectrum, cfg: &PeakConfig) -> Result<Vec<Peak>> {
    cfg.validate()?;
    let x = spec.power_dbm();
    let n = x.len();
    if n < 3 {
        return Ok(Vec::new());
    }
    let floor = spectrum_floor_dbm(spec, cfg);

    let center = n / 2;
    let masked = |i: usize| cfg.mask_dc && i.abs_diff(center) <= cfg.dc_mask_bins;
    let candidates: Vec<usize> = (1..n - 1)
        .filter(|&i| x[i] > x[i - 1] && x[i] >= x[i + 1])
        .filter(|&i| x[i] - floor >= cfg.min_snr_db && !masked(i))
        .collect();
    if candidates.is_empty() {
        return Ok(Vec::new());
    }

    let widths: Vec<usize> = cfg.widths_bins.clone().collect();
    let kernels: Vec<Vec<f64>> = widths.iter().map(|&w| ricker_kernel(w as f64)).collect();
    let mut row0: Vec<f64> = (0..n as i64)
        .map(|p| cwt_at(x, &kernels[0], p).abs())
        .collect();
    row0.sort_by(|a, b| a.total_cmp(b));
    let cwt_noise = percentile_sorted(&row0, cfg.noise_percentile).max(f64::MIN_POSITIVE);

    let widest = *widths.last().expect("non-empty");
    let min_len = cfg.ridge_len_threshold();
    let mut peaks: Vec<Peak> = candidates
        .into_iter()
        .filter(|&i| {
            let r = trace_ridge(x, &kernels, &widths, i, cfg.gap_thresh);
            r.len >= min_len
                && r.strength / cwt_noise >= cfg.min_ridge_snr
                && (r.best_scale < widest || widths.len() == 1)
        })
        .map(|i| Peak {
            freq_hz: spec.freqs_hz()[i],
            power_dbm: x[i],
            bin_index: i,
            snr_db: x[i] - floor,
        })
        .collect();

    if peaks.len() > cfg.max_peaks {
        peaks.sort_by(|a, b| b.power_dbm.total_cmp(&a.power_dbm));
        peaks.truncate(cfg.max_peaks);
    }
    peaks.sort_by(|a, b| a.freq_hz.total_cmp(&b.freq_hz));
    Ok(peaks)
}
