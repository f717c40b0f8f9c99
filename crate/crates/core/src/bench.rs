//! Synthetic corpora and detection metrics.
//!
//! A corpus is built once: every trial is synthesized, run through the
//! pipeline and the harmonic detector, and reduced to a [`TrialRecord`]
//! holding its ground-truth label, the harmonic verdict and the spectrum
//! maximum. Scoring a detector (or a whole threshold sweep) then only reads
//! the records.
//!
//! Positive trials add an emanation comb to the scenario's interferers;
//! background trials hold AWGN and interferers only and cycle through the
//! capture plans of every active profile. Interferer levels are given
//! relative to the mean per-bin noise floor and positions relative to the
//! capture band, so one template fits every plan.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{analyze_spectrum, AnalysisConfig};
use crate::dsp::{dbm_to_watts, watts_to_dbm, WelchEngine};
use crate::error::{Error, Result};
use crate::profiles::find_profile;
use crate::synth::{CapturePlan, InterfererSpec, Scene, SynthParams};
use crate::types::{DeviceProfile, PowerSpectrum, Verdict};

pub const BACKGROUND: &str = "background";

fn default_harmonics() -> usize {
    4
}

fn default_noise_dbm() -> f64 {
    -20.0
}

/// Interferer placed relative to the capture band. Levels are per-bin power
/// above the mean noise floor of the pipeline; each trial draws a level
/// uniformly within `± jitter_db`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InterfererTemplate {
    LteBlock {
        start_frac: f64,
        stop_frac: f64,
        level_db: f64,
        #[serde(default)]
        jitter_db: f64,
    },
    DcOffset {
        level_db: f64,
        #[serde(default)]
        jitter_db: f64,
    },
    Tone {
        offset_frac: f64,
        level_db: f64,
        #[serde(default)]
        jitter_db: f64,
    },
}

impl InterfererTemplate {
    fn validate(&self) -> Result<()> {
        let frac_ok = |f: f64| (0.0..=1.0).contains(&f);
        let (ok, jitter) = match *self {
            InterfererTemplate::LteBlock {
                start_frac,
                stop_frac,
                jitter_db,
                ..
            } => (
                frac_ok(start_frac) && frac_ok(stop_frac) && start_frac < stop_frac,
                jitter_db,
            ),
            InterfererTemplate::DcOffset { jitter_db, .. } => (true, jitter_db),
            InterfererTemplate::Tone {
                offset_frac,
                jitter_db,
                ..
            } => (frac_ok(offset_frac) && offset_frac < 1.0, jitter_db),
        };
        if !ok || !(jitter >= 0.0) {
            return Err(Error::Bench(format!(
                "invalid interferer template {self:?}"
            )));
        }
        Ok(())
    }

    fn realize(
        &self,
        plan: &CapturePlan,
        noise_w: f64,
        floor_w: f64,
        rng: &mut ChaCha8Rng,
    ) -> InterfererSpec {
        let mut level = |db: f64, jitter: f64| {
            let j = if jitter > 0.0 {
                rng.random_range(-jitter..=jitter)
            } else {
                0.0
            };
            10f64.powf((db + j) / 10.0)
        };
        let lo = plan.center_freq_hz - plan.sample_rate_hz / 2.0;
        match *self {
            InterfererTemplate::LteBlock {
                start_frac,
                stop_frac,
                level_db,
                jitter_db,
            } => InterfererSpec::LteBlock {
                start_hz: lo + start_frac * plan.sample_rate_hz,
                stop_hz: lo + stop_frac * plan.sample_rate_hz,
                power_dbm: watts_to_dbm(
                    noise_w * (stop_frac - start_frac) * level(level_db, jitter_db),
                ),
            },
            InterfererTemplate::DcOffset {
                level_db,
                jitter_db,
            } => InterfererSpec::DcOffset {
                power_dbm: watts_to_dbm(floor_w * level(level_db, jitter_db)),
            },
            InterfererTemplate::Tone {
                offset_frac,
                level_db,
                jitter_db,
            } => InterfererSpec::Tone {
                freq_hz: lo + offset_frac * plan.sample_rate_hz,
                power_dbm: watts_to_dbm(floor_w * level(level_db, jitter_db)),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchScenario {
    pub name: String,
    /// Profile name, or `"background"` for emanation-free trials.
    pub device: String,
    /// Post-pipeline SNR of the strongest line; empty for background.
    #[serde(default)]
    pub snr_sweep_db: Vec<f64>,
    /// Trials per SNR point, or the trial count for background.
    pub n_trials_per_point: usize,
    #[serde(default)]
    pub interferers: Vec<InterfererTemplate>,
    #[serde(default)]
    pub seed_base: u64,
    #[serde(default = "default_harmonics")]
    pub n_harmonics: usize,
    /// Per-sample AWGN power.
    #[serde(default = "default_noise_dbm")]
    pub noise_dbm: f64,
}

impl BenchScenario {
    pub fn is_background(&self) -> bool {
        self.device.eq_ignore_ascii_case(BACKGROUND)
    }

    pub fn validate(&self, profiles: &[DeviceProfile]) -> Result<()> {
        if self.n_trials_per_point == 0 {
            return Err(Error::Bench(format!(
                "{}: n_trials_per_point must be >= 1",
                self.name
            )));
        }
        if !self.noise_dbm.is_finite() {
            return Err(Error::Bench(format!(
                "{}: noise_dbm must be finite",
                self.name
            )));
        }
        if self.is_background() {
            if !self.snr_sweep_db.is_empty() {
                return Err(Error::Bench(format!(
                    "{}: background takes no SNR sweep",
                    self.name
                )));
            }
        } else {
            find_profile(profiles, &self.device)?;
            if self.snr_sweep_db.is_empty() || self.snr_sweep_db.iter().any(|s| !s.is_finite()) {
                return Err(Error::Bench(format!(
                    "{}: needs a finite SNR sweep",
                    self.name
                )));
            }
        }
        self.interferers
            .iter()
            .try_for_each(InterfererTemplate::validate)
    }
}

/// Scenario file contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchPlan {
    pub scenarios: Vec<BenchScenario>,
    /// Thresholds for the baseline sweep.
    #[serde(default)]
    pub threshold_sweep_dbm: Vec<f64>,
}

impl BenchPlan {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let plan: BenchPlan = serde_json::from_str(&text)?;
        if plan.scenarios.is_empty() {
            return Err(Error::Bench(format!("{}: no scenarios", path.display())));
        }
        Ok(plan)
    }

    /// The bundled evaluation plan: every profile over an SNR sweep, an
    /// equal number of background captures, LTE and DC interference.
    pub fn builtin() -> Self {
        serde_json::from_str(include_str!("../scenarios/default.json"))
            .expect("bundled scenario parses")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub scenario: String,
    pub device: String,
    pub snr_db: Option<f64>,
    pub seed: u64,
    pub positive: bool,
    pub harmonic_detected: bool,
    pub candidates: Vec<String>,
    pub max_power_dbm: f64,
    /// Maximum with the centre bin and its neighbours excluded.
    pub max_power_masked_dbm: f64,
    pub pipeline_s: f64,
    pub detect_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub trials: Vec<TrialRecord>,
}

fn trial_seed(base: u64, point: usize, trial: usize) -> u64 {
    // splitmix64 finalizer over the packed coordinates
    let mut z = base
        .wrapping_add((point as u64) << 32)
        .wrapping_add(trial as u64)
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn masked_max(spec: &PowerSpectrum) -> f64 {
    let center = spec.len() / 2;
    spec.power_dbm()
        .iter()
        .enumerate()
        .filter(|(i, _)| i.abs_diff(center) > 1)
        .map(|(_, &p)| p)
        .fold(f64::NEG_INFINITY, f64::max)
}

struct TrialSpec<'a> {
    scenario: &'a BenchScenario,
    profile: Option<&'a DeviceProfile>,
    plan: CapturePlan,
    snr_db: Option<f64>,
    seed: u64,
}

fn run_trial(
    t: &TrialSpec,
    cfg: &AnalysisConfig,
    engine: &WelchEngine,
    profiles: &[DeviceProfile],
) -> Result<TrialRecord> {
    let s = t.scenario;
    let duration = t.plan.duration_for(&cfg.pipeline);
    let noise_w = dbm_to_watts(s.noise_dbm);
    let floor_w = noise_w * cfg.pipeline.noise_gain();
    let mut jitter = ChaCha8Rng::seed_from_u64(t.seed ^ 0x6A09_E667_F3BC_C908);
    let interferers: Vec<InterfererSpec> = s
        .interferers
        .iter()
        .map(|i| i.realize(&t.plan, noise_w, floor_w, &mut jitter))
        .collect();

    let mut scene = Scene::new(t.plan.sample_rate_hz, t.plan.center_freq_hz, duration)?;
    match (t.profile, t.snr_db) {
        (Some(profile), Some(snr)) => {
            let mut p = SynthParams::for_plan(profile.clone(), snr, &t.plan, &cfg.pipeline, t.seed);
            p.n_harmonics = s.n_harmonics;
            p.noise_dbm = s.noise_dbm;
            scene.add_emanation(&p)?;
            scene.add_background(
                &interferers,
                f64::NEG_INFINITY,
                t.seed ^ 0xBB67_AE85_84CA_A73B,
            )?;
        }
        _ => scene.add_background(&interferers, s.noise_dbm, t.seed ^ 0xBB67_AE85_84CA_A73B)?,
    }
    let rec = scene.finish()?;

    let t0 = Instant::now();
    let spectrum = engine.to_spectrum(&rec, &engine.pipeline_linear(&rec)?)?;
    let pipeline_s = t0.elapsed().as_secs_f64();
    let max_power_dbm = spectrum.max_power_dbm();
    let max_power_masked_dbm = masked_max(&spectrum);
    let t1 = Instant::now();
    let analysis = analyze_spectrum(spectrum, cfg, profiles)?;
    let detect_s = t1.elapsed().as_secs_f64();
    Ok(TrialRecord {
        scenario: s.name.clone(),
        device: s.device.clone(),
        snr_db: t.snr_db,
        seed: t.seed,
        positive: t.profile.is_some(),
        harmonic_detected: analysis.report.verdict() == Verdict::EmanationDetected,
        candidates: analysis.report.all_candidates(),
        max_power_dbm,
        max_power_masked_dbm,
        pipeline_s,
        detect_s,
    })
}

/// Synthesizes and analyses every trial of every scenario, in scenario order.
/// `progress` is called after each trial with (done, total).
pub fn build_corpus(
    scenarios: &[BenchScenario],
    cfg: &AnalysisConfig,
    profiles: &[DeviceProfile],
    mut progress: impl FnMut(usize, usize),
) -> Result<Corpus> {
    if scenarios.is_empty() {
        return Err(Error::Bench("no scenarios".into()));
    }
    if profiles.is_empty() {
        return Err(Error::Bench("no profiles".into()));
    }
    let mut specs = Vec::new();
    for s in scenarios {
        s.validate(profiles)?;
        if s.is_background() {
            for i in 0..s.n_trials_per_point {
                let host = &profiles[i % profiles.len()];
                specs.push(TrialSpec {
                    scenario: s,
                    profile: None,
                    plan: CapturePlan::for_profile(host, s.n_harmonics),
                    snr_db: None,
                    seed: trial_seed(s.seed_base, 0, i),
                });
            }
        } else {
            let profile = find_profile(profiles, &s.device)?;
            let plan = CapturePlan::for_profile(profile, s.n_harmonics);
            for (j, &snr) in s.snr_sweep_db.iter().enumerate() {
                for i in 0..s.n_trials_per_point {
                    specs.push(TrialSpec {
                        scenario: s,
                        profile: Some(profile),
                        plan,
                        snr_db: Some(snr),
                        seed: trial_seed(s.seed_base, j + 1, i),
                    });
                }
            }
        }
    }
    let engine = WelchEngine::new(&cfg.pipeline)?;
    let total = specs.len();
    let mut trials = Vec::with_capacity(total);
    for (k, spec) in specs.iter().enumerate() {
        trials.push(run_trial(spec, cfg, &engine, profiles)?);
        progress(k + 1, total);
    }
    Ok(Corpus { trials })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Detector {
    Harmonic,
    Threshold { threshold_dbm: f64, mask_dc: bool },
}

impl Detector {
    pub fn name(&self) -> String {
        match *self {
            Detector::Harmonic => "harmonic".to_owned(),
            Detector::Threshold { threshold_dbm, .. } => format!("threshold({threshold_dbm} dBm)"),
        }
    }

    pub fn flags(&self, t: &TrialRecord) -> bool {
        match *self {
            Detector::Harmonic => t.harmonic_detected,
            Detector::Threshold {
                threshold_dbm,
                mask_dc,
            } => {
                let max = if mask_dc {
                    t.max_power_masked_dbm
                } else {
                    t.max_power_dbm
                };
                max > threshold_dbm
            }
        }
    }

    fn runtime(&self, t: &TrialRecord) -> f64 {
        match self {
            Detector::Harmonic => t.pipeline_s + t.detect_s,
            Detector::Threshold { .. } => t.pipeline_s,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn add(&mut self, positive: bool, flagged: bool) {
        match (positive, flagged) {
            (true, true) => self.tp += 1,
            (true, false) => self.fn_ += 1,
            (false, true) => self.fp += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.total())
    }

    /// False positives over negatives.
    pub fn fp_rate(&self) -> f64 {
        ratio(self.fp, self.fp + self.tn)
    }

    /// False negatives over positives.
    pub fn fn_rate(&self) -> f64 {
        ratio(self.fn_, self.fn_ + self.tp)
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    SnrDb,
    ThresholdDbm,
}

impl SweepAxis {
    fn label(self) -> &'static str {
        match self {
            SweepAxis::SnrDb => "snr_db",
            SweepAxis::ThresholdDbm => "threshold_dbm",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub value: f64,
    pub confusion: Confusion,
    pub accuracy: f64,
    pub fp_rate: f64,
    pub fn_rate: f64,
    pub mean_runtime_s: f64,
}

impl PointRecord {
    fn new(value: f64, confusion: Confusion, runtime_sum: f64) -> Self {
        PointRecord {
            value,
            confusion,
            accuracy: confusion.accuracy(),
            fp_rate: confusion.fp_rate(),
            fn_rate: confusion.fn_rate(),
            mean_runtime_s: runtime_sum / confusion.total().max(1) as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub detector: String,
    pub axis: SweepAxis,
    pub points: Vec<PointRecord>,
    /// Over the whole corpus; empty for threshold sweeps.
    pub confusion: Confusion,
    pub accuracy: f64,
    pub mean_runtime_s: f64,
}

impl BenchResult {
    /// Copy with runtimes zeroed, for comparing reruns.
    pub fn without_timing(&self) -> Self {
        let mut r = self.clone();
        r.mean_runtime_s = 0.0;
        for p in &mut r.points {
            p.mean_runtime_s = 0.0;
        }
        r
    }

    /// Most accurate point; ties go to the lower axis value.
    pub fn best_point(&self) -> Option<&PointRecord> {
        self.points.iter().max_by(|a, b| {
            a.accuracy
                .total_cmp(&b.accuracy)
                .then(b.value.total_cmp(&a.value))
        })
    }

    pub fn point(&self, value: f64) -> Option<&PointRecord> {
        self.points.iter().find(|p| p.value == value)
    }
}

fn snr_points(corpus: &Corpus) -> Vec<f64> {
    let set: BTreeSet<u64> = corpus
        .trials
        .iter()
        .filter_map(|t| t.snr_db)
        .map(|s| s.to_bits())
        .collect();
    let mut v: Vec<f64> = set.into_iter().map(f64::from_bits).collect();
    v.sort_by(f64::total_cmp);
    v
}

fn tally<'a>(trials: impl Iterator<Item = &'a TrialRecord>, det: &Detector) -> (Confusion, f64) {
    let mut c = Confusion::default();
    let mut rt = 0.0;
    for t in trials {
        c.add(t.positive, det.flags(t));
        rt += det.runtime(t);
    }
    (c, rt)
}

/// Metrics per SNR point. Each point scores the positives at that SNR
/// together with every background trial.
pub fn score(corpus: &Corpus, det: &Detector) -> BenchResult {
    let points = snr_points(corpus)
        .into_iter()
        .map(|snr| {
            let (c, rt) = tally(
                corpus
                    .trials
                    .iter()
                    .filter(|t| !t.positive || t.snr_db == Some(snr)),
                det,
            );
            PointRecord::new(snr, c, rt)
        })
        .collect();
    let (c, rt) = tally(corpus.trials.iter(), det);
    BenchResult {
        detector: det.name(),
        axis: SweepAxis::SnrDb,
        points,
        confusion: c,
        accuracy: c.accuracy(),
        mean_runtime_s: rt / c.total().max(1) as f64,
    }
}

/// Threshold baseline over the whole corpus at each threshold.
pub fn threshold_sweep(corpus: &Corpus, thresholds_dbm: &[f64], mask_dc: bool) -> BenchResult {
    let points: Vec<PointRecord> = thresholds_dbm
        .iter()
        .map(|&thr| {
            let det = Detector::Threshold {
                threshold_dbm: thr,
                mask_dc,
            };
            let (c, rt) = tally(corpus.trials.iter(), &det);
            PointRecord::new(thr, c, rt)
        })
        .collect();
    BenchResult {
        detector: "threshold sweep".to_owned(),
        axis: SweepAxis::ThresholdDbm,
        points,
        confusion: Confusion::default(),
        accuracy: 0.0,
        mean_runtime_s: 0.0,
    }
}

/// Builds the corpus and scores one detector on it.
pub fn run_corpus(
    scenarios: &[BenchScenario],
    det: &Detector,
    cfg: &AnalysisConfig,
    profiles: &[DeviceProfile],
) -> Result<BenchResult> {
    Ok(score(
        &build_corpus(scenarios, cfg, profiles, |_, _| {})?,
        det,
    ))
}

/// Side-by-side metrics of results that share one sweep axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub results: Vec<BenchResult>,
}

impl Comparison {
    /// One row per sweep point; accuracy, FP and FN rates per detector.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(self.axis.label());
        for r in &self.results {
            for m in ["accuracy", "fp_rate", "fn_rate"] {
                let _ = write!(out, ",{} {m}", r.detector);
            }
        }
        out.push('\n');
        for (k, v) in self.values.iter().enumerate() {
            let _ = write!(out, "{v}");
            for r in &self.results {
                let p = &r.points[k];
                let _ = write!(out, ",{},{},{}", p.accuracy, p.fp_rate, p.fn_rate);
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub fn compare_report(results: &[BenchResult]) -> Result<Comparison> {
    let first = results
        .first()
        .ok_or_else(|| Error::Bench("no results to compare".into()))?;
    let values: Vec<f64> = first.points.iter().map(|p| p.value).collect();
    for r in &results[1..] {
        let v: Vec<f64> = r.points.iter().map(|p| p.value).collect();
        if r.axis != first.axis || v != values {
            return Err(Error::AxisMismatch);
        }
    }
    Ok(Comparison {
        axis: first.axis,
        values,
        results: results.to_vec(),
    })
}
