//! Synthetic captures: emanation combs with IMP sidebands, background
//! interference, and gain-weighted mixing.
//!
//! Emanation lines are pure tones. Harmonic `h` has relative amplitude
//! `decay^(h-1)`; the `k`-th sideband pair around it is a further `decay^k`
//! down. These amplitudes are a modelling choice, not measured values. The
//! whole comb is scaled so the strongest line sits `peak_snr_db` above the
//! mean per-bin noise level of the reference pipeline.

use std::collections::BTreeSet;
use std::f64::consts::TAU;

use num_complex::{Complex32, Complex64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dsp::{dbm_to_watts, kaiser_window, PipelineConfig};
use crate::error::{Error, Result};
use crate::types::{DeviceProfile, IqRecording};

fn default_decay() -> f64 {
    0.7
}

fn default_sidebands() -> usize {
    3
}

fn default_harmonics() -> usize {
    4
}

fn default_noise_dbm() -> f64 {
    -20.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub profile: DeviceProfile,
    #[serde(default = "default_harmonics")]
    pub n_harmonics: usize,
    /// IMP tone pairs around each harmonic.
    #[serde(default = "default_sidebands")]
    pub n_sidebands: usize,
    #[serde(default = "default_decay")]
    pub harmonic_decay: f64,
    /// Strongest line above the mean noise level after the pipeline.
    pub peak_snr_db: f64,
    #[serde(default)]
    pub missing_harmonics: BTreeSet<usize>,
    pub duration_s: f64,
    #[serde(default)]
    pub seed: u64,
    /// Per-sample AWGN power.
    #[serde(default = "default_noise_dbm")]
    pub noise_dbm: f64,
    /// Pipeline the SNR target refers to.
    #[serde(default)]
    pub pipeline: PipelineConfig,
}

impl SynthParams {
    pub fn new(profile: DeviceProfile, peak_snr_db: f64, duration_s: f64, seed: u64) -> Self {
        let n_sidebands = if profile.imp_step_hz.is_some() {
            default_sidebands()
        } else {
            0
        };
        SynthParams {
            profile,
            n_harmonics: default_harmonics(),
            n_sidebands,
            harmonic_decay: default_decay(),
            peak_snr_db,
            missing_harmonics: BTreeSet::new(),
            duration_s,
            seed,
            noise_dbm: default_noise_dbm(),
            pipeline: PipelineConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.profile.validate()?;
        let bad = |m: &str| Err(Error::Config(m.to_owned()));
        if self.n_harmonics == 0 {
            return bad("n_harmonics must be >= 1");
        }
        if self.profile.imp_step_hz.is_none() && self.n_sidebands > 0 {
            return bad("profile has no IMP step; n_sidebands must be 0");
        }
        if !(self.harmonic_decay > 0.0 && self.harmonic_decay <= 1.0) {
            return bad("harmonic_decay must lie in (0, 1]");
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return bad("duration_s must be positive");
        }
        if !self.peak_snr_db.is_finite() || !self.noise_dbm.is_finite() {
            return bad("peak_snr_db and noise_dbm must be finite");
        }
        if (1..=self.n_harmonics).all(|h| self.missing_harmonics.contains(&h)) {
            return bad("every harmonic is marked missing");
        }
        self.pipeline.validate()
    }

    /// Absolute frequencies and relative amplitudes of every line, strongest
    /// carrier first among equals.
    pub fn lines(&self) -> Vec<(f64, f64)> {
        let f = self.profile.fundamental_hz;
        let mut out = Vec::new();
        for h in 1..=self.n_harmonics {
            if self.missing_harmonics.contains(&h) {
                continue;
            }
            let carrier = self.harmonic_decay.powi(h as i32 - 1);
            let fh = h as f64 * f;
            out.push((fh, carrier));
            if let Some(d) = self.profile.imp_step_hz {
                for k in 1..=self.n_sidebands {
                    let a = carrier * self.harmonic_decay.powi(k as i32);
                    out.push((fh - k as f64 * d, a));
                    out.push((fh + k as f64 * d, a));
                }
            }
        }
        out
    }
}

/// Sample rate and centre frequency for a capture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapturePlan {
    pub sample_rate_hz: f64,
    pub center_freq_hz: f64,
}

impl CapturePlan {
    /// Capture wide enough to hold harmonics `1..=n_harmonics` of every
    /// profile, with a margin of one lowest fundamental around the comb and
    /// the centre (DC) kept off every harmonic.
    pub fn covering(profiles: &[&DeviceProfile], n_harmonics: usize) -> Self {
        let lo = profiles
            .iter()
            .map(|p| p.fundamental_hz)
            .fold(f64::INFINITY, f64::min);
        let hi = profiles
            .iter()
            .map(|p| p.fundamental_hz * n_harmonics as f64)
            .fold(0.0, f64::max);
        let rate = hi - lo + 2.0 * lo;
        let mut center = (lo + hi) / 2.0 + 0.25 * lo;
        // Nudge the centre off any harmonic it lands on.
        for _ in 0..8 {
            let clash = profiles.iter().any(|p| {
                let h = (center / p.fundamental_hz).round();
                (center - h * p.fundamental_hz).abs() < 0.05 * lo
            });
            if !clash {
                break;
            }
            center += 0.1 * lo;
        }
        CapturePlan {
            sample_rate_hz: rate,
            center_freq_hz: center,
        }
    }

    pub fn for_profile(profile: &DeviceProfile, n_harmonics: usize) -> Self {
        Self::covering(&[profile], n_harmonics)
    }

    /// Samples needed to feed one full pipeline run.
    pub fn duration_for(&self, cfg: &PipelineConfig) -> f64 {
        cfg.required_samples() as f64 / self.sample_rate_hz
    }
}

/// Smallest IMP step, in analysis bins, that gets sidebands by default.
/// Finer sidebands sit inside their carrier's main lobe.
pub const MIN_SIDEBAND_BINS: f64 = 64.0;

impl SynthParams {
    /// Parameters sized for one pipeline run over `plan`, with sidebands
    /// dropped when the IMP step is under [`MIN_SIDEBAND_BINS`].
    pub fn for_plan(
        profile: DeviceProfile,
        peak_snr_db: f64,
        plan: &CapturePlan,
        pipeline: &PipelineConfig,
        seed: u64,
    ) -> Self {
        let res = plan.sample_rate_hz / pipeline.fft_len() as f64;
        let mut p = SynthParams::new(profile, peak_snr_db, plan.duration_for(pipeline), seed);
        if p.profile
            .imp_step_hz
            .is_some_and(|d| d < MIN_SIDEBAND_BINS * res)
        {
            p.n_sidebands = 0;
        }
        p.pipeline = pipeline.clone();
        p
    }
}

/// Power gain of the pipeline window for a tone `offset_bins` away from the
/// nearest FFT bin, relative to a bin-centred tone.
pub fn scallop_gain(cfg: &PipelineConfig, offset_bins: f64) -> f64 {
    let w = kaiser_window(cfg.segment_len(), cfg.kaiser_beta).expect("validated config");
    let n_fft = cfg.fft_len() as f64;
    let s1: f64 = w.iter().sum();
    let omega = TAU * offset_bins / n_fft;
    let acc: Complex64 = w
        .iter()
        .enumerate()
        .map(|(n, &wn)| Complex64::from_polar(wn, -omega * n as f64))
        .sum();
    acc.norm_sqr() / (s1 * s1)
}

fn sample_count(duration_s: f64, rate_hz: f64) -> Result<usize> {
    let n = (duration_s * rate_hz).round();
    if !(n >= 1.0) {
        return Err(Error::Config(format!(
            "duration {duration_s} s at {rate_hz} Hz yields no samples"
        )));
    }
    Ok(n as usize)
}

fn check_in_band(what: &'static str, freq_hz: f64, rate_hz: f64, center_hz: f64) -> Result<()> {
    let lo = center_hz - rate_hz / 2.0;
    let hi = center_hz + rate_hz / 2.0;
    if freq_hz < lo || freq_hz >= hi {
        return Err(Error::OutOfBand {
            what,
            freq_hz,
            lo_hz: lo,
            hi_hz: hi,
        });
    }
    Ok(())
}

/// One complex exponential: baseband frequency, amplitude, initial phase.
#[derive(Debug, Clone, Copy)]
struct Tone {
    baseband_hz: f64,
    amp: f64,
    phase: f64,
}

const LANES: usize = 4;

/// Adds a sum of complex exponentials to `acc`. Phasors advance by
/// recurrence and are re-anchored every block so rounding never drifts;
/// tones are processed in groups of four so the recurrences vectorize.
fn add_tones(acc: &mut [Complex64], tones: &[Tone], rate_hz: f64) {
    const BLOCK: usize = 4096;
    if tones.is_empty() {
        return;
    }
    let groups = tones.len().div_ceil(LANES);
    let lane = |g: usize, l: usize| tones.get(g * LANES + l);
    let omega = |g: usize, l: usize| lane(g, l).map_or(0.0, |t| TAU * t.baseband_hz / rate_hz);
    let mut rot_re = vec![[0.0; LANES]; groups];
    let mut rot_im = vec![[0.0; LANES]; groups];
    for g in 0..groups {
        for l in 0..LANES {
            rot_re[g][l] = omega(g, l).cos();
            rot_im[g][l] = omega(g, l).sin();
        }
    }
    let mut z_re = vec![[0.0; LANES]; groups];
    let mut z_im = vec![[0.0; LANES]; groups];
    for (b, chunk) in acc.chunks_mut(BLOCK).enumerate() {
        let start = (b * BLOCK) as f64;
        for g in 0..groups {
            for l in 0..LANES {
                let (amp, ph) = lane(g, l).map_or((0.0, 0.0), |t| {
                    (t.amp, t.phase + (omega(g, l) * start).rem_euclid(TAU))
                });
                z_re[g][l] = amp * ph.cos();
                z_im[g][l] = amp * ph.sin();
            }
        }
        for s in chunk {
            let mut sr = [0.0; LANES];
            let mut si = [0.0; LANES];
            for g in 0..groups {
                let (zr, zi) = (&mut z_re[g], &mut z_im[g]);
                let (rr, ri) = (&rot_re[g], &rot_im[g]);
                for l in 0..LANES {
                    sr[l] += zr[l];
                    si[l] += zi[l];
                    let nr = zr[l] * rr[l] - zi[l] * ri[l];
                    zi[l] = zr[l] * ri[l] + zi[l] * rr[l];
                    zr[l] = nr;
                }
            }
            s.re += sr.iter().sum::<f64>();
            s.im += si.iter().sum::<f64>();
        }
    }
}

fn add_noise(acc: &mut [Complex64], variance: f64, rng: &mut ChaCha8Rng) {
    let sigma = (variance / 2.0).sqrt();
    for s in acc.iter_mut() {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        *s += Complex64::new(re * sigma, im * sigma);
    }
}

fn finish(
    acc: Vec<Complex64>,
    rate: f64,
    center: f64,
    label: Option<String>,
) -> Result<IqRecording> {
    let samples = acc
        .into_iter()
        .map(|c| Complex32::new(c.re as f32, c.im as f32))
        .collect();
    IqRecording::new(samples, rate, center, label)
}

/// Accumulates sources into one capture before quantizing to `f32`.
#[derive(Debug, Clone)]
pub struct Scene {
    acc: Vec<Complex64>,
    rate_hz: f64,
    center_hz: f64,
    labels: Vec<String>,
}

impl Scene {
    pub fn new(rate_hz: f64, center_hz: f64, duration_s: f64) -> Result<Self> {
        if !(rate_hz.is_finite() && rate_hz > 0.0) {
            return Err(Error::Config(format!(
                "sample rate {rate_hz} must be positive"
            )));
        }
        if !(center_hz.is_finite() && center_hz >= 0.0) {
            return Err(Error::Config(format!(
                "centre frequency {center_hz} must be >= 0"
            )));
        }
        let n = sample_count(duration_s, rate_hz)?;
        Ok(Scene {
            acc: vec![Complex64::new(0.0, 0.0); n],
            rate_hz,
            center_hz,
            labels: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.acc.len()
    }

    pub fn is_empty(&self) -> bool {
        self.acc.is_empty()
    }

    /// Adds the comb described by `p` and its AWGN. `p.duration_s` is
    /// ignored in favour of the scene length.
    pub fn add_emanation(&mut self, p: &SynthParams) -> Result<()> {
        p.validate()?;
        let lines = p.lines();
        for &(f, _) in &lines {
            check_in_band("emanation line", f, self.rate_hz, self.center_hz)?;
        }

        // Calibrate against the strongest line, including its scalloping loss.
        let (f_ref, a_ref) =
            lines
                .iter()
                .copied()
                .fold((0.0, 0.0), |best, l| if l.1 > best.1 { l } else { best });
        let res = self.rate_hz / p.pipeline.fft_len() as f64;
        let bin_pos = (f_ref - self.center_hz) / res;
        let offset = bin_pos - bin_pos.round();
        let noise_w = dbm_to_watts(p.noise_dbm);
        let target_w = noise_w * p.pipeline.noise_gain() * 10f64.powf(p.peak_snr_db / 10.0);
        let scale = (target_w / scallop_gain(&p.pipeline, offset)).sqrt() / a_ref;

        let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
        let tones: Vec<Tone> = lines
            .iter()
            .map(|&(f, a)| Tone {
                baseband_hz: f - self.center_hz,
                amp: a * scale,
                phase: rng.random::<f64>() * TAU,
            })
            .collect();
        add_tones(&mut self.acc, &tones, self.rate_hz);
        add_noise(&mut self.acc, noise_w, &mut rng);
        self.labels.push(p.profile.name.to_lowercase());
        Ok(())
    }

    /// Adds AWGN at `noise_dbm` per sample (`-inf` for none) and the
    /// interferers.
    pub fn add_background(
        &mut self,
        interferers: &[InterfererSpec],
        noise_dbm: f64,
        seed: u64,
    ) -> Result<()> {
        for i in interferers {
            i.validate(self.rate_hz, self.center_hz)?;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        if noise_dbm > f64::NEG_INFINITY {
            add_noise(&mut self.acc, dbm_to_watts(noise_dbm), &mut rng);
        }
        for i in interferers {
            match *i {
                InterfererSpec::LteBlock {
                    start_hz,
                    stop_hz,
                    power_dbm,
                } => add_band_noise(
                    &mut self.acc,
                    start_hz - self.center_hz,
                    stop_hz - self.center_hz,
                    dbm_to_watts(power_dbm),
                    self.rate_hz,
                    &mut rng,
                ),
                InterfererSpec::DcOffset { power_dbm } => {
                    let phase = rng.random::<f64>() * TAU;
                    let c = Complex64::from_polar(dbm_to_watts(power_dbm).sqrt(), phase);
                    self.acc.iter_mut().for_each(|s| *s += c);
                }
                InterfererSpec::Tone { freq_hz, power_dbm } => {
                    let tone = Tone {
                        baseband_hz: freq_hz - self.center_hz,
                        amp: dbm_to_watts(power_dbm).sqrt(),
                        phase: rng.random::<f64>() * TAU,
                    };
                    add_tones(&mut self.acc, &[tone], self.rate_hz);
                }
            }
        }
        self.labels.push("background".to_owned());
        Ok(())
    }

    /// Labels of the added sources joined with `+`.
    pub fn finish(self) -> Result<IqRecording> {
        let label = (!self.labels.is_empty()).then(|| self.labels.join("+"));
        finish(self.acc, self.rate_hz, self.center_hz, label)
    }
}

/// Emanation comb plus AWGN.
pub fn synth_emanation(p: &SynthParams, rate_hz: f64, center_hz: f64) -> Result<IqRecording> {
    let mut scene = Scene::new(rate_hz, center_hz, p.duration_s)?;
    scene.add_emanation(p)?;
    scene.finish()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InterfererSpec {
    /// Band-limited noise filling `[start_hz, stop_hz)`; `power_dbm` is the
    /// total power of the block.
    LteBlock {
        start_hz: f64,
        stop_hz: f64,
        power_dbm: f64,
    },
    /// Constant complex bias, which lands in the centre bin.
    DcOffset {
        power_dbm: f64,
    },
    Tone {
        freq_hz: f64,
        power_dbm: f64,
    },
}

impl InterfererSpec {
    pub fn validate(&self, rate_hz: f64, center_hz: f64) -> Result<()> {
        match *self {
            InterfererSpec::LteBlock {
                start_hz, stop_hz, ..
            } => {
                if !(start_hz < stop_hz) {
                    return Err(Error::Config(format!(
                        "LTE block start {start_hz} must be below stop {stop_hz}"
                    )));
                }
                check_in_band("LTE block start", start_hz, rate_hz, center_hz)?;
                // The stop edge is exclusive, so it may sit on the band edge.
                if stop_hz > center_hz + rate_hz / 2.0 {
                    check_in_band("LTE block stop", stop_hz, rate_hz, center_hz)?;
                }
                Ok(())
            }
            InterfererSpec::DcOffset { .. } => Ok(()),
            InterfererSpec::Tone { freq_hz, .. } => {
                check_in_band("interfering tone", freq_hz, rate_hz, center_hz)
            }
        }
    }
}

fn add_band_noise(
    acc: &mut [Complex64],
    lo_hz: f64,
    hi_hz: f64,
    power_w: f64,
    rate_hz: f64,
    rng: &mut ChaCha8Rng,
) {
    let n = acc.len();
    let res = rate_hz / n as f64;
    let mut spec = vec![Complex32::new(0.0, 0.0); n];
    let k_lo = (lo_hz / res).ceil() as i64;
    let k_hi = (hi_hz / res).ceil() as i64;
    let mut filled = 0usize;
    for k in k_lo..k_hi {
        let idx = k.rem_euclid(n as i64) as usize;
        let re: f32 = rng.sample(StandardNormal);
        let im: f32 = rng.sample(StandardNormal);
        spec[idx] = Complex32::new(re, im);
        filled += 1;
    }
    if filled == 0 {
        return;
    }
    crate::dsp::plan_fft_f32(n, true).process(&mut spec);
    let energy: f64 = spec.iter().map(|c| c.norm_sqr() as f64).sum::<f64>() / n as f64;
    let g = (power_w / energy).sqrt();
    for (a, s) in acc.iter_mut().zip(&spec) {
        a.re += s.re as f64 * g;
        a.im += s.im as f64 * g;
    }
}

/// AWGN at `noise_dbm` per sample (`-inf` for none) plus interferers.
pub fn synth_background(
    interferers: &[InterfererSpec],
    noise_dbm: f64,
    rate_hz: f64,
    center_hz: f64,
    duration_s: f64,
    seed: u64,
) -> Result<IqRecording> {
    let mut scene = Scene::new(rate_hz, center_hz, duration_s)?;
    scene.add_background(interferers, noise_dbm, seed)?;
    scene.finish()
}

/// Sample-wise sum of gain-scaled recordings. A gain of `-inf` dB drops the
/// input.
pub fn mix(recs: &[IqRecording], gains_db: &[f64]) -> Result<IqRecording> {
    let first = recs
        .first()
        .ok_or_else(|| Error::MixMismatch("no recordings".into()))?;
    if recs.len() != gains_db.len() {
        return Err(Error::MixMismatch(format!(
            "{} recordings but {} gains",
            recs.len(),
            gains_db.len()
        )));
    }
    for r in &recs[1..] {
        if r.sample_rate_hz() != first.sample_rate_hz()
            || r.center_freq_hz() != first.center_freq_hz()
        {
            return Err(Error::MixMismatch("sample rate or centre differs".into()));
        }
        if r.len() != first.len() {
            return Err(Error::MixMismatch(format!(
                "lengths {} and {} differ",
                first.len(),
                r.len()
            )));
        }
    }
    if recs.len() == 1 && gains_db[0] == 0.0 {
        return Ok(first.clone());
    }
    let mut acc = vec![Complex64::new(0.0, 0.0); first.len()];
    for (r, &g) in recs.iter().zip(gains_db) {
        let lin = if g == f64::NEG_INFINITY {
            0.0
        } else {
            10f64.powf(g / 20.0)
        };
        if lin == 0.0 {
            continue;
        }
        for (a, s) in acc.iter_mut().zip(r.samples()) {
            *a += Complex64::new(s.re as f64, s.im as f64) * lin;
        }
    }
    let labels: Vec<&str> = recs
        .iter()
        .zip(gains_db)
        .filter(|(_, &g)| g > f64::NEG_INFINITY)
        .filter_map(|(r, _)| r.label())
        .collect();
    let label = (!labels.is_empty()).then(|| labels.join("+"));
    finish(acc, first.sample_rate_hz(), first.center_freq_hz(), label)
}

/// Free-space amplitude gain, in dB, of moving from `ref_m` to `distance_m`.
/// Bench reports use it to put SNR points on a nominal distance axis.
pub fn free_space_gain_db(distance_m: f64, ref_m: f64) -> f64 {
    -20.0 * (distance_m / ref_m).log10()
}

fn default_snr_db() -> f64 {
    10.0
}

/// Device named from the profile table, or spelled out inline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DeviceRef {
    Named(String),
    Inline(DeviceProfile),
}

/// A capture described as JSON. Without `device` only the background is
/// generated, and the sample rate and centre must be given. Unset capture
/// fields follow [`CapturePlan::for_profile`] and the pipeline length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthScenario {
    #[serde(default)]
    pub device: Option<DeviceRef>,
    #[serde(default = "default_snr_db")]
    pub snr_db: f64,
    #[serde(default)]
    pub interferers: Vec<InterfererSpec>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub sample_rate_hz: Option<f64>,
    #[serde(default)]
    pub center_freq_hz: Option<f64>,
    #[serde(default)]
    pub duration_s: Option<f64>,
    #[serde(default = "default_harmonics")]
    pub n_harmonics: usize,
    #[serde(default)]
    pub n_sidebands: Option<usize>,
    #[serde(default = "default_decay")]
    pub harmonic_decay: f64,
    #[serde(default)]
    pub missing_harmonics: BTreeSet<usize>,
    #[serde(default = "default_noise_dbm")]
    pub noise_dbm: f64,
}

impl Default for SynthScenario {
    fn default() -> Self {
        SynthScenario {
            device: None,
            snr_db: default_snr_db(),
            interferers: Vec::new(),
            seed: 0,
            sample_rate_hz: None,
            center_freq_hz: None,
            duration_s: None,
            n_harmonics: default_harmonics(),
            n_sidebands: None,
            harmonic_decay: default_decay(),
            missing_harmonics: BTreeSet::new(),
            noise_dbm: default_noise_dbm(),
        }
    }
}

impl SynthScenario {
    pub fn profile(&self, profiles: &[DeviceProfile]) -> Result<Option<DeviceProfile>> {
        match &self.device {
            None => Ok(None),
            Some(DeviceRef::Named(name)) => crate::profiles::find_profile(profiles, name)
                .cloned()
                .map(Some),
            Some(DeviceRef::Inline(p)) => {
                p.validate()?;
                Ok(Some(p.clone()))
            }
        }
    }

    /// Emanation parameters, capture plan and interferers, resolved against
    /// the profile table and the analysis pipeline.
    pub fn resolve(
        &self,
        profiles: &[DeviceProfile],
        pipeline: &PipelineConfig,
    ) -> Result<(Option<SynthParams>, CapturePlan, f64)> {
        let profile = self.profile(profiles)?;
        let default_plan = profile
            .as_ref()
            .map(|p| CapturePlan::for_profile(p, self.n_harmonics.max(1)));
        let pick = |v: Option<f64>, d: Option<f64>, what: &str| {
            v.or(d)
                .ok_or_else(|| Error::Config(format!("background-only scenario needs {what}")))
        };
        let plan = CapturePlan {
            sample_rate_hz: pick(
                self.sample_rate_hz,
                default_plan.map(|p| p.sample_rate_hz),
                "sample_rate_hz",
            )?,
            center_freq_hz: pick(
                self.center_freq_hz,
                default_plan.map(|p| p.center_freq_hz),
                "center_freq_hz",
            )?,
        };
        let duration = self
            .duration_s
            .unwrap_or_else(|| plan.duration_for(pipeline));
        let params = profile.map(|p| {
            let mut sp = SynthParams::for_plan(p, self.snr_db, &plan, pipeline, self.seed);
            sp.duration_s = duration;
            sp.n_harmonics = self.n_harmonics;
            if let Some(n) = self.n_sidebands {
                sp.n_sidebands = n;
            }
            sp.harmonic_decay = self.harmonic_decay;
            sp.missing_harmonics = self.missing_harmonics.clone();
            sp.noise_dbm = self.noise_dbm;
            sp
        });
        Ok((params, plan, duration))
    }

    pub fn render(
        &self,
        profiles: &[DeviceProfile],
        pipeline: &PipelineConfig,
    ) -> Result<IqRecording> {
        let (params, plan, duration) = self.resolve(profiles, pipeline)?;
        let mut scene = Scene::new(plan.sample_rate_hz, plan.center_freq_hz, duration)?;
        let bg_seed = self.seed ^ 0xBB67_AE85_84CA_A73B;
        match params {
            Some(p) => {
                scene.add_emanation(&p)?;
                if !self.interferers.is_empty() {
                    scene.add_background(&self.interferers, f64::NEG_INFINITY, bg_seed)?;
                }
            }
            None => scene.add_background(&self.interferers, self.noise_dbm, bg_seed)?,
        }
        scene.finish()
    }
}
