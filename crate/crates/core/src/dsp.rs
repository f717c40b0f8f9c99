//! SNR-improvement front end: Kaiser windowing, Welch modified-periodogram
//! PSD, and frequency-domain averaging over consecutive sequences.
//!
//! Power is referenced to 1 Ω and 1 mW: a complex sample `x` carries
//! `|x|^2` watts. Spectra use power-spectrum scaling (`|X|^2 / (sum w)^2`),
//! so a bin-centred tone of amplitude `A` reads `A^2` regardless of window,
//! and white noise of variance `s^2` reads `s^2 * sum(w^2) / (sum w)^2` per
//! bin. The windowed periodogram is the Fourier transform of the windowed
//! segment's autocorrelation, so it yields the same estimate as transforming
//! the autocorrelation without forming it.

use std::cell::RefCell;
use std::sync::Arc;

use num_complex::{Complex32, Complex64};
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{IqRecording, PowerSpectrum};

/// Watts to dBm.
pub fn watts_to_dbm(p: f64) -> f64 {
    10.0 * (p / 1e-3).log10()
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    1e-3 * 10f64.powf(dbm / 10.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub kaiser_beta: f64,
    /// Samples per Welch sequence.
    pub seq_len: usize,
    pub n_segments: usize,
    pub segment_overlap: f64,
    /// Consecutive sequences averaged in the frequency domain.
    pub n_sequences: usize,
    pub sequence_overlap: f64,
    /// Transform length; `None` rounds the segment length up to a power of two.
    pub fft_size: Option<usize>,
    /// Added to every output bin, in dB.
    pub calibration_offset_db: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            kaiser_beta: 5.66,
            seq_len: 400_000,
            n_segments: 8,
            segment_overlap: 0.5,
            n_sequences: 9,
            sequence_overlap: 0.5,
            fft_size: None,
            calibration_offset_db: 0.0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(0.0..1.0).contains(&self.segment_overlap) {
            return bad(format!(
                "segment_overlap {} not in [0,1)",
                self.segment_overlap
            ));
        }
        if !(0.0..1.0).contains(&self.sequence_overlap) {
            return bad(format!(
                "sequence_overlap {} not in [0,1)",
                self.sequence_overlap
            ));
        }
        if self.n_segments == 0 || self.n_sequences == 0 {
            return bad("n_segments and n_sequences must be >= 1".into());
        }
        if !(self.kaiser_beta.is_finite() && self.kaiser_beta >= 0.0) {
            return bad(format!("kaiser_beta {} must be >= 0", self.kaiser_beta));
        }
        if self.segment_len() == 0 {
            return bad("seq_len too short for the segment layout".into());
        }
        if let Some(n) = self.fft_size {
            if n < self.segment_len() {
                return bad(format!(
                    "fft_size {n} smaller than segment length {}",
                    self.segment_len()
                ));
            }
        }
        Ok(())
    }

    /// Length of one Welch segment so that `n_segments` overlapping segments
    /// span `seq_len`.
    pub fn segment_len(&self) -> usize {
        let span = 1.0 + (self.n_segments as f64 - 1.0) * (1.0 - self.segment_overlap);
        (self.seq_len as f64 / span).floor() as usize
    }

    /// Nominal hop, shortened when rounding would push the last segment past
    /// the end of the sequence.
    pub fn segment_hop(&self) -> usize {
        let seg = self.segment_len();
        let hop = ((seg as f64 * (1.0 - self.segment_overlap)).round() as usize).max(1);
        if self.n_segments > 1 {
            hop.min((self.seq_len - seg) / (self.n_segments - 1)).max(1)
        } else {
            hop
        }
    }

    pub fn sequence_hop(&self) -> usize {
        ((self.seq_len as f64 * (1.0 - self.sequence_overlap)).round() as usize).max(1)
    }

    pub fn fft_len(&self) -> usize {
        self.fft_size
            .unwrap_or_else(|| self.segment_len().next_power_of_two())
    }

    /// Samples needed by [`process_pipeline`].
    pub fn required_samples(&self) -> usize {
        (self.n_sequences - 1) * self.sequence_hop() + self.seq_len
    }

    /// Equivalent noise bandwidth of the segment window in bins of the
    /// segment length: `L * sum(w^2) / (sum w)^2`.
    pub fn window_enbw(&self) -> f64 {
        let w = kaiser_window(self.segment_len(), self.kaiser_beta).expect("validated");
        let s1: f64 = w.iter().sum();
        let s2: f64 = w.iter().map(|x| x * x).sum();
        w.len() as f64 * s2 / (s1 * s1)
    }

    /// Per-bin noise power produced by white noise of unit variance.
    pub fn noise_gain(&self) -> f64 {
        self.window_enbw() / self.segment_len() as f64
    }
}

/// Zeroth-order modified Bessel function of the first kind.
pub fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    loop {
        term *= q / (k * k);
        sum += term;
        if term < sum * 1e-17 {
            return sum;
        }
        k += 1.0;
    }
}

/// Symmetric Kaiser window, peak 1 at the centre.
pub fn kaiser_window(n: usize, beta: f64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::Config("window length must be >= 1".into()));
    }
    if n == 1 {
        return Ok(vec![1.0]);
    }
    let denom = bessel_i0(beta);
    let m = (n - 1) as f64;
    let half = n / 2;
    let mut w = vec![0.0; n];
    for k in 0..n.div_ceil(2) {
        let r = 2.0 * k as f64 / m - 1.0;
        let v = bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / denom;
        w[k] = v;
        w[n - 1 - k] = v;
    }
    if n % 2 == 1 {
        w[half] = 1.0;
    }
    Ok(w)
}

/// Relative sidelobe level of a window: highest sidelobe relative to the
/// main-lobe peak, in dB (negative). The response is sampled on a grid
/// `oversample` times finer than the window length.
pub fn relative_sidelobe_db(window: &[f64], oversample: usize) -> f64 {
    let n = (window.len() * oversample.max(1)).next_power_of_two();
    let mut buf: Vec<Complex64> = window.iter().map(|&w| Complex64::new(w, 0.0)).collect();
    buf.resize(n, Complex64::new(0.0, 0.0));
    plan_fft_f64(n, false).process(&mut buf);
    let mag: Vec<f64> = buf[..n / 2].iter().map(|c| c.norm_sqr()).collect();
    // Walk down the main lobe to its first null.
    let mut k = 1;
    while k + 1 < mag.len() && mag[k + 1] < mag[k] {
        k += 1;
    }
    let side = mag[k..].iter().copied().fold(0.0, f64::max);
    10.0 * (side / mag[0]).log10()
}

thread_local! {
    static PLANNER_F64: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
    static PLANNER_F32: RefCell<FftPlanner<f32>> = RefCell::new(FftPlanner::new());
}

/// FFT plan from a per-thread planner, so repeated sizes reuse twiddles.
pub(crate) fn plan_fft_f64(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER_F64.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(n)
        } else {
            p.plan_fft_forward(n)
        }
    })
}

/// FFT plan from a per-thread planner, single precision.
pub(crate) fn plan_fft_f32(n: usize, inverse: bool) -> Arc<dyn Fft<f32>> {
    PLANNER_F32.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(n)
        } else {
            p.plan_fft_forward(n)
        }
    })
}

/// Reusable Welch estimator for one configuration.
pub struct WelchEngine {
    cfg: PipelineConfig,
    window: Vec<f32>,
    fft: Arc<dyn Fft<f32>>,
    norm: f64,
}

impl WelchEngine {
    pub fn new(cfg: &PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        let window = kaiser_window(cfg.segment_len(), cfg.kaiser_beta)?;
        let s1: f64 = window.iter().sum();
        let fft = plan_fft_f32(cfg.fft_len(), false);
        Ok(WelchEngine {
            cfg: cfg.clone(),
            window: window.iter().map(|&w| w as f32).collect(),
            fft,
            norm: 1.0 / (s1 * s1),
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    /// Linear power per bin of one `seq_len` sequence, in natural FFT order.
    fn sequence_power(&self, seq: &[Complex32], acc: &mut [f64], buf: &mut Vec<Complex32>) {
        let n_fft = self.cfg.fft_len();
        let seg_len = self.window.len();
        let hop = self.cfg.segment_hop();
        let scale = self.norm / self.cfg.n_segments as f64;
        for s in 0..self.cfg.n_segments {
            let start = s * hop;
            buf.clear();
            buf.extend(
                seq[start..start + seg_len]
                    .iter()
                    .zip(&self.window)
                    .map(|(x, &w)| x * w),
            );
            buf.resize(n_fft, Complex32::new(0.0, 0.0));
            self.fft.process(buf);
            for (a, c) in acc.iter_mut().zip(buf.iter()) {
                let (re, im) = (c.re as f64, c.im as f64);
                *a += (re * re + im * im) * scale;
            }
        }
    }

    /// Welch estimate of one sequence starting at `offset`, linear watts,
    /// shifted so bin 0 is the lowest frequency.
    pub fn welch_linear(&self, rec: &IqRecording, offset: usize) -> Result<Vec<f64>> {
        let need = offset + self.cfg.seq_len;
        if rec.len() < need {
            return Err(Error::InsufficientSamples {
                required: need,
                available: rec.len(),
            });
        }
        let mut acc = vec![0.0; self.cfg.fft_len()];
        let mut buf = Vec::with_capacity(self.cfg.fft_len());
        self.sequence_power(&rec.samples()[offset..need], &mut acc, &mut buf);
        Ok(fftshift(acc))
    }

    /// Average of `n_sequences` Welch estimates, linear watts, shifted.
    pub fn pipeline_linear(&self, rec: &IqRecording) -> Result<Vec<f64>> {
        let required = self.cfg.required_samples();
        if rec.len() < required {
            return Err(Error::InsufficientSamples {
                required,
                available: rec.len(),
            });
        }
        let n_fft = self.cfg.fft_len();
        let mut acc = vec![0.0; n_fft];
        let mut buf = Vec::with_capacity(n_fft);
        let hop = self.cfg.sequence_hop();
        for q in 0..self.cfg.n_sequences {
            let start = q * hop;
            self.sequence_power(
                &rec.samples()[start..start + self.cfg.seq_len],
                &mut acc,
                &mut buf,
            );
        }
        let inv = 1.0 / self.cfg.n_sequences as f64;
        acc.iter_mut().for_each(|a| *a *= inv);
        Ok(fftshift(acc))
    }

    pub fn to_spectrum(&self, rec: &IqRecording, linear: &[f64]) -> Result<PowerSpectrum> {
        linear_to_spectrum(rec, linear, self.cfg.calibration_offset_db)
    }
}

fn fftshift(mut v: Vec<f64>) -> Vec<f64> {
    let half = v.len() / 2;
    let r = v.len() - half;
    v.rotate_left(r);
    v
}

/// Floor applied before taking logarithms so empty bins stay finite.
const MIN_WATTS: f64 = 1e-30;

fn linear_to_spectrum(rec: &IqRecording, linear: &[f64], offset_db: f64) -> Result<PowerSpectrum> {
    let n = linear.len();
    let res = rec.sample_rate_hz() / n as f64;
    let start = rec.center_freq_hz() - (n / 2) as f64 * res;
    let power = linear
        .iter()
        .map(|&p| watts_to_dbm(p.max(MIN_WATTS)) + offset_db)
        .collect();
    PowerSpectrum::from_uniform(start, res, power)
}

/// Welch PSD of the first `seq_len` samples.
pub fn welch_psd(rec: &IqRecording, cfg: &PipelineConfig) -> Result<PowerSpectrum> {
    let engine = WelchEngine::new(cfg)?;
    let lin = engine.welch_linear(rec, 0)?;
    engine.to_spectrum(rec, &lin)
}

/// Per-bin mean in the linear power domain.
pub fn average_spectra(spectra: &[PowerSpectrum]) -> Result<PowerSpectrum> {
    let first = spectra
        .first()
        .ok_or_else(|| Error::InvalidSpectrum("nothing to average".into()))?;
    if spectra.len() == 1 {
        return Ok(first.clone());
    }
    let mut acc = vec![0.0; first.len()];
    for s in spectra {
        if s.len() != first.len()
            || s.resolution_hz() != first.resolution_hz()
            || s.freqs_hz()[0] != first.freqs_hz()[0]
        {
            return Err(Error::AxisMismatch);
        }
        for (a, &p) in acc.iter_mut().zip(s.power_dbm()) {
            *a += 10f64.powf(p / 10.0);
        }
    }
    let k = spectra.len() as f64;
    let power = acc.iter().map(|a| 10.0 * (a / k).log10()).collect();
    first.with_power(power)
}

/// Full front end: Welch per sequence, then frequency-domain averaging.
pub fn process_pipeline(rec: &IqRecording, cfg: &PipelineConfig) -> Result<PowerSpectrum> {
    let engine = WelchEngine::new(cfg)?;
    let lin = engine.pipeline_linear(rec)?;
    engine.to_spectrum(rec, &lin)
}

/// Single rectangular-window FFT of the first `fft_size` samples with the
/// same power scaling as the pipeline. Baseline for SNR comparisons.
pub fn direct_fft_spectrum(rec: &IqRecording, fft_size: usize) -> Result<PowerSpectrum> {
    if rec.len() < fft_size {
        return Err(Error::InsufficientSamples {
            required: fft_size,
            available: rec.len(),
        });
    }
    let mut buf: Vec<Complex64> = rec.samples()[..fft_size]
        .iter()
        .map(|x| Complex64::new(x.re as f64, x.im as f64))
        .collect();
    plan_fft_f64(fft_size, false).process(&mut buf);
    let norm = 1.0 / (fft_size as f64 * fft_size as f64);
    let lin = fftshift(buf.iter().map(|c| c.norm_sqr() * norm).collect());
    linear_to_spectrum(rec, &lin, 0.0)
}

/// Median bin power in dBm; a line-robust estimate of the mean noise level
/// of an averaged spectrum.
pub fn noise_floor_dbm(spec: &PowerSpectrum) -> f64 {
    percentile(spec.power_dbm(), 50.0)
}

/// Linear-interpolated percentile (0..=100) of unsorted values.
pub fn percentile(values: &[f64], pct: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    percentile_sorted(&v, pct)
}

pub(crate) fn percentile_sorted(v: &[f64], pct: f64) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let pos = pct.clamp(0.0, 100.0) / 100.0 * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}
