//! Command-line front end.
//!
//! Exit codes: 0 success or clean capture, 10 emanation detected, 2 usage,
//! 3 I/O, 4 malformed input data, 5 invalid configuration, 6 unknown profile.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::analysis::{analyze, AnalysisConfig, DetectorSettings};
use crate::bench::{build_corpus, compare_report, score, threshold_sweep, BenchPlan, Detector};
use crate::classify::DEFAULT_TOL_REL;
use crate::dsp::PipelineConfig;
use crate::error::{Error, Result};
use crate::iq::{default_meta_path, load_iq, save_iq};
use crate::peaks::PeakConfig;
use crate::profiles::{active_profiles, load_profiles};
use crate::synth::{DeviceRef, InterfererSpec, SynthScenario};
use crate::types::{write_peaks_csv, DeviceProfile, Verdict};

pub const EXIT_DETECTED: u8 = 10;

#[derive(Debug, Parser)]
#[command(
    name = "emanatrix",
    version,
    about = "Detect unintended EM emanation in IQ captures"
)]
pub struct Cli {
    /// Progress and timing on stderr; repeat for more.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    /// Machine-readable JSON on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    /// Profile table (JSON array); overrides EMANATRIX_PROFILES.
    #[arg(long, global = true, value_name = "FILE")]
    pub profiles: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic IQ capture and its metadata sidecar.
    Synth(SynthArgs),
    /// Run the detector on an IQ capture.
    Analyze(AnalyzeArgs),
    /// Score detectors over a synthetic corpus.
    Bench(BenchArgs),
    /// List the device profile table.
    Profiles,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[arg(long = "pipeline.kaiser-beta", default_value_t = PipelineConfig::default().kaiser_beta)]
    pub kaiser_beta: f64,
    #[arg(long = "pipeline.seq-len", default_value_t = PipelineConfig::default().seq_len)]
    pub seq_len: usize,
    #[arg(long = "pipeline.n-segments", default_value_t = PipelineConfig::default().n_segments)]
    pub n_segments: usize,
    #[arg(long = "pipeline.segment-overlap", default_value_t = PipelineConfig::default().segment_overlap)]
    pub segment_overlap: f64,
    #[arg(long = "pipeline.n-sequences", default_value_t = PipelineConfig::default().n_sequences)]
    pub n_sequences: usize,
    #[arg(long = "pipeline.sequence-overlap", default_value_t = PipelineConfig::default().sequence_overlap)]
    pub sequence_overlap: f64,
    /// [default: segment length rounded up to a power of two]
    #[arg(long = "pipeline.fft-size")]
    pub fft_size: Option<usize>,
    #[arg(long = "pipeline.calibration-offset-db", allow_negative_numbers = true, default_value_t = PipelineConfig::default().calibration_offset_db)]
    pub calibration_offset_db: f64,
}

impl PipelineArgs {
    pub fn config(&self) -> PipelineConfig {
        PipelineConfig {
            kaiser_beta: self.kaiser_beta,
            seq_len: self.seq_len,
            n_segments: self.n_segments,
            segment_overlap: self.segment_overlap,
            n_sequences: self.n_sequences,
            sequence_overlap: self.sequence_overlap,
            fft_size: self.fft_size,
            calibration_offset_db: self.calibration_offset_db,
        }
    }
}

#[derive(Debug, Args)]
pub struct DetectionArgs {
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[arg(long = "peaks.min-width", default_value_t = *PeakConfig::default().widths_bins.start())]
    pub min_width: usize,
    #[arg(long = "peaks.max-width", default_value_t = *PeakConfig::default().widths_bins.end())]
    pub max_width: usize,
    #[arg(long = "peaks.min-snr-db", allow_negative_numbers = true, default_value_t = PeakConfig::default().min_snr_db)]
    pub min_snr_db: f64,
    #[arg(long = "peaks.noise-percentile", default_value_t = PeakConfig::default().noise_percentile)]
    pub noise_percentile: f64,
    #[arg(long = "peaks.max-peaks", default_value_t = PeakConfig::default().max_peaks)]
    pub max_peaks: usize,
    /// [default: a quarter of the width count]
    #[arg(long = "peaks.min-ridge-len")]
    pub min_ridge_len: Option<usize>,
    #[arg(long = "peaks.min-ridge-snr", default_value_t = PeakConfig::default().min_ridge_snr)]
    pub min_ridge_snr: f64,
    #[arg(long = "peaks.gap-thresh", default_value_t = PeakConfig::default().gap_thresh)]
    pub gap_thresh: usize,
    /// Keep peaks at the centre (DC) bins.
    #[arg(long = "peaks.no-dc-mask")]
    pub no_dc_mask: bool,
    #[arg(long = "peaks.dc-mask-bins", default_value_t = PeakConfig::default().dc_mask_bins)]
    pub dc_mask_bins: usize,
    #[arg(long = "detector.split-fraction", default_value_t = DetectorSettings::default().split_fraction)]
    pub split_fraction: f64,
    /// [default: split fraction of the bandwidth]
    #[arg(long = "detector.coarse-d-min")]
    pub coarse_d_min: Option<f64>,
    /// [default: two bins]
    #[arg(long = "detector.fine-d-min")]
    pub fine_d_min: Option<f64>,
    /// [default: half the bandwidth]
    #[arg(long = "detector.d-max")]
    pub d_max: Option<f64>,
    #[arg(long = "detector.eps-freq", default_value_t = DetectorSettings::default().eps_freq)]
    pub eps_freq: f64,
    #[arg(long = "detector.eps-mult", default_value_t = DetectorSettings::default().eps_mult)]
    pub eps_mult: f64,
    #[arg(long = "fingerprint.tol-rel", default_value_t = DEFAULT_TOL_REL)]
    pub tol_rel: f64,
}

impl DetectionArgs {
    pub fn config(&self) -> AnalysisConfig {
        AnalysisConfig {
            pipeline: self.pipeline.config(),
            peaks: PeakConfig {
                widths_bins: self.min_width..=self.max_width,
                min_snr_db: self.min_snr_db,
                noise_percentile: self.noise_percentile,
                max_peaks: self.max_peaks,
                min_ridge_len: self.min_ridge_len,
                min_ridge_snr: self.min_ridge_snr,
                gap_thresh: self.gap_thresh,
                mask_dc: !self.no_dc_mask,
                dc_mask_bins: self.dc_mask_bins,
            },
            detector: DetectorSettings {
                split_fraction: self.split_fraction,
                coarse_d_min_hz: self.coarse_d_min,
                fine_d_min_hz: self.fine_d_min,
                d_max_hz: self.d_max,
                eps_freq: self.eps_freq,
                eps_mult: self.eps_mult,
            },
            tol_rel: self.tol_rel,
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Scenario JSON; flags below override its fields.
    #[arg(long, value_name = "FILE")]
    pub scenario: Option<PathBuf>,
    /// Profile name; omit for a background-only capture.
    #[arg(long)]
    pub device: Option<String>,
    /// Strongest line above the pipeline noise floor, dB [default: 10].
    #[arg(long, allow_negative_numbers = true)]
    pub snr: Option<f64>,
    /// [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Seconds [default: one full pipeline run].
    #[arg(long)]
    pub duration: Option<f64>,
    /// Hz [default: covers the first harmonics of the device].
    #[arg(long)]
    pub rate: Option<f64>,
    /// Hz [default: chosen with the rate].
    #[arg(long)]
    pub center: Option<f64>,
    /// [default: 4]
    #[arg(long)]
    pub harmonics: Option<usize>,
    /// IMP pairs per harmonic [default: 3 when resolvable].
    #[arg(long)]
    pub sidebands: Option<usize>,
    /// [default: 0.7]
    #[arg(long)]
    pub decay: Option<f64>,
    /// Harmonic orders to leave out, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub missing: Vec<usize>,
    /// Per-sample AWGN power, dBm [default: -20].
    #[arg(long, allow_negative_numbers = true)]
    pub noise_dbm: Option<f64>,
    /// Band-limited noise block, START_HZ:STOP_HZ:TOTAL_DBM.
    #[arg(long, value_name = "SPEC", allow_hyphen_values = true)]
    pub lte: Vec<String>,
    /// Constant bias power, dBm.
    #[arg(long, allow_negative_numbers = true)]
    pub dc_dbm: Option<f64>,
    /// Interfering tone, FREQ_HZ:DBM.
    #[arg(long, value_name = "SPEC", allow_hyphen_values = true)]
    pub tone: Vec<String>,
    #[arg(long, short)]
    pub out: PathBuf,
    /// Metadata path [default: <out>.json].
    #[arg(long)]
    pub meta: Option<PathBuf>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    pub input: PathBuf,
    /// Metadata path [default: <input>.json].
    #[arg(long)]
    pub meta: Option<PathBuf>,
    /// Also write the JSON report here.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    #[arg(long, value_name = "CSV")]
    pub emit_spectrum: Option<PathBuf>,
    #[arg(long, value_name = "CSV")]
    pub emit_peaks: Option<PathBuf>,
    #[command(flatten)]
    pub detection: DetectionArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DetectorChoice {
    Harmonic,
    Threshold,
    Both,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Scenario plan JSON [default: bundled plan].
    #[arg(long, value_name = "FILE")]
    pub scenario: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = DetectorChoice::Both)]
    pub detector: DetectorChoice,
    /// Single threshold in dBm instead of the plan's sweep.
    #[arg(long, allow_negative_numbers = true)]
    pub threshold: Option<f64>,
    /// Ignore the centre bins in the threshold baseline.
    #[arg(long)]
    pub threshold_mask_dc: bool,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub detection: DetectionArgs,
}

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } => 3,
        Error::TruncatedRecord { .. }
        | Error::Metadata(_)
        | Error::InvalidRecording(_)
        | Error::InsufficientSamples { .. }
        | Error::Json(_) => 4,
        Error::UnknownProfile(_) => 6,
        _ => 5,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn flush_to(
    path: &Path,
    f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<()> {
    let mut w = create(path)?;
    f(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

fn parse_fields<const N: usize>(spec: &str, what: &str) -> Result<[f64; N]> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || {
        Error::Config(format!(
            "--{what} expects {N} ':'-separated numbers, got `{spec}`"
        ))
    };
    if parts.len() != N {
        return Err(bad());
    }
    let mut out = [0.0; N];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.trim().parse().map_err(|_| bad())?;
    }
    Ok(out)
}

fn profile_table(cli: &Cli) -> Result<Vec<DeviceProfile>> {
    match &cli.profiles {
        Some(path) => load_profiles(path),
        None => active_profiles(),
    }
}

fn synth_scenario(a: &SynthArgs) -> Result<SynthScenario> {
    let mut s = match &a.scenario {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        }
        None => SynthScenario::default(),
    };
    if let Some(d) = &a.device {
        s.device = Some(DeviceRef::Named(d.clone()));
    }
    macro_rules! set {
        ($field:ident, $value:expr) => {
            if let Some(v) = $value {
                s.$field = v;
            }
        };
    }
    set!(snr_db, a.snr);
    set!(seed, a.seed);
    set!(n_harmonics, a.harmonics);
    set!(harmonic_decay, a.decay);
    set!(noise_dbm, a.noise_dbm);
    s.duration_s = a.duration.or(s.duration_s);
    s.sample_rate_hz = a.rate.or(s.sample_rate_hz);
    s.center_freq_hz = a.center.or(s.center_freq_hz);
    s.n_sidebands = a.sidebands.or(s.n_sidebands);
    s.missing_harmonics.extend(a.missing.iter().copied());
    for spec in &a.lte {
        let [start_hz, stop_hz, power_dbm] = parse_fields(spec, "lte")?;
        s.interferers.push(InterfererSpec::LteBlock {
            start_hz,
            stop_hz,
            power_dbm,
        });
    }
    if let Some(power_dbm) = a.dc_dbm {
        s.interferers.push(InterfererSpec::DcOffset { power_dbm });
    }
    for spec in &a.tone {
        let [freq_hz, power_dbm] = parse_fields(spec, "tone")?;
        s.interferers
            .push(InterfererSpec::Tone { freq_hz, power_dbm });
    }
    Ok(s)
}

fn cmd_synth(cli: &Cli, a: &SynthArgs) -> Result<u8> {
    let profiles = profile_table(cli)?;
    let scenario = synth_scenario(a)?;
    let pipeline = a.pipeline.config();
    pipeline.validate()?;
    let (params, plan, _) = scenario.resolve(&profiles, &pipeline)?;
    let rec = scenario.render(&profiles, &pipeline)?;
    let meta = a.meta.clone().unwrap_or_else(|| default_meta_path(&a.out));
    save_iq(&rec, &a.out, &meta)?;

    let tones = params.as_ref().map_or(0, |p| p.lines().len());
    if cli.json {
        let summary = json!({
            "out": a.out,
            "meta": meta,
            "label": rec.label(),
            "samples": rec.len(),
            "sample_rate_hz": plan.sample_rate_hz,
            "center_freq_hz": plan.center_freq_hz,
            "tones": tones,
            "snr_target_db": params.as_ref().map(|p| p.peak_snr_db),
            "interferers": scenario.interferers.len(),
        });
        println!("{}", serde_json::to_string_pretty(&summary)?);
    } else {
        println!(
            "wrote {} ({} samples at {} Hz, centre {} Hz)",
            a.out.display(),
            rec.len(),
            plan.sample_rate_hz,
            plan.center_freq_hz
        );
        match &params {
            Some(p) => println!(
                "{}: {tones} tones, strongest line {} dB above the floor",
                p.profile.name, p.peak_snr_db
            ),
            None => println!("background only"),
        }
        if !scenario.interferers.is_empty() {
            println!("{} interferer(s)", scenario.interferers.len());
        }
    }
    Ok(0)
}

fn cmd_analyze(cli: &Cli, a: &AnalyzeArgs) -> Result<u8> {
    let profiles = profile_table(cli)?;
    let cfg = a.detection.config();
    cfg.pipeline.validate()?;
    cfg.peaks.validate()?;
    let meta = a
        .meta
        .clone()
        .unwrap_or_else(|| default_meta_path(&a.input));
    let rec = load_iq(&a.input, &meta)?;
    let result = analyze(&rec, &cfg, &profiles)?;
    let report = &result.report;

    if let Some(path) = &a.emit_spectrum {
        flush_to(path, |w| result.spectrum.write_csv(w))?;
    }
    if let Some(path) = &a.emit_peaks {
        flush_to(path, |w| write_peaks_csv(&result.peaks, w))?;
    }
    let text = report.to_json_pretty()?;
    if let Some(path) = &a.out {
        write_text(path, &text)?;
    }
    if cli.json {
        println!("{text}");
    } else {
        let verdict = match report.verdict() {
            Verdict::EmanationDetected => "emanation detected",
            Verdict::Clean => "clean",
        };
        println!("{}: {verdict}", a.input.display());
        for (i, g) in report.groups().iter().enumerate() {
            let cands = report
                .fingerprint_candidates()
                .iter()
                .find(|c| c.group_id == i)
                .map(|c| c.candidates.join(", "))
                .unwrap_or_default();
            println!(
                "  group {i}: {:?} step {:.6} MHz, {} members{}",
                g.kind,
                g.step_hz / 1e6,
                g.member_freqs_hz.len(),
                if cands.is_empty() {
                    String::new()
                } else {
                    format!(" -> {cands}")
                }
            );
        }
        let candidates = report.all_candidates();
        if !candidates.is_empty() {
            println!("candidates: {}", candidates.join(", "));
        }
    }
    if cli.verbose > 0 {
        for (k, v) in report.pipeline_stats() {
            eprintln!("{k} = {v}");
        }
    }
    Ok(match report.verdict() {
        Verdict::EmanationDetected => EXIT_DETECTED,
        Verdict::Clean => 0,
    })
}

fn cmd_bench(cli: &Cli, a: &BenchArgs) -> Result<u8> {
    let profiles = profile_table(cli)?;
    let cfg = a.detection.config();
    cfg.pipeline.validate()?;
    cfg.peaks.validate()?;
    let plan = match &a.scenario {
        Some(path) => BenchPlan::load(path)?,
        None => BenchPlan::builtin(),
    };
    let thresholds = match a.threshold {
        Some(t) => vec![t],
        None => plan.threshold_sweep_dbm.clone(),
    };
    let want_threshold = a.detector != DetectorChoice::Harmonic;
    if want_threshold && thresholds.is_empty() {
        return Err(Error::Config(
            "threshold detector needs --threshold or a sweep in the plan".into(),
        ));
    }
    std::fs::create_dir_all(&a.out_dir).map_err(|e| Error::io(&a.out_dir, e))?;

    let verbose = cli.verbose > 0;
    let corpus = build_corpus(&plan.scenarios, &cfg, &profiles, |done, total| {
        if verbose && (done % 50 == 0 || done == total) {
            eprintln!("trial {done}/{total}");
        }
    })?;

    let mut by_snr = Vec::new();
    if a.detector != DetectorChoice::Threshold {
        by_snr.push(score(&corpus, &Detector::Harmonic));
    }
    let mut written = Vec::new();
    let mut best = None;
    if want_threshold {
        let sweep = threshold_sweep(&corpus, &thresholds, a.threshold_mask_dc);
        let table = compare_report(std::slice::from_ref(&sweep))?;
        let (csv, json_path) = (
            a.out_dir.join("threshold.csv"),
            a.out_dir.join("threshold.json"),
        );
        write_text(&csv, &table.to_csv())?;
        write_text(&json_path, &table.to_json_pretty()?)?;
        written.extend([csv, json_path]);
        if let Some(b) = sweep.best_point() {
            best = Some(b.clone());
            by_snr.push(score(
                &corpus,
                &Detector::Threshold {
                    threshold_dbm: b.value,
                    mask_dc: a.threshold_mask_dc,
                },
            ));
        }
    }
    if by_snr.iter().any(|r| !r.points.is_empty()) {
        let table = compare_report(&by_snr)?;
        let (csv, json_path) = (a.out_dir.join("snr.csv"), a.out_dir.join("snr.json"));
        write_text(&csv, &table.to_csv())?;
        write_text(&json_path, &table.to_json_pretty()?)?;
        written.extend([csv, json_path]);
    }

    if cli.json {
        let summary = json!({
            "trials": corpus.trials.len(),
            "results": by_snr.iter().map(|r| json!({
                "detector": r.detector,
                "accuracy": r.accuracy,
                "confusion": r.confusion,
                "mean_runtime_s": r.mean_runtime_s,
            })).collect::<Vec<_>>(),
            "best_threshold": best,
            "files": written,
        });
        println!("{}", serde_json::to_string_pretty(&summary)?);
    } else {
        println!("{} trials", corpus.trials.len());
        for r in &by_snr {
            let c = r.confusion;
            println!(
                "{}: accuracy {:.4} (tp {} fp {} tn {} fn {}), {:.3} s/trial",
                r.detector, r.accuracy, c.tp, c.fp, c.tn, c.fn_, r.mean_runtime_s
            );
        }
        if let Some(b) = &best {
            println!(
                "best threshold {} dBm: accuracy {:.4}, fp {:.4}, fn {:.4}",
                b.value, b.accuracy, b.fp_rate, b.fn_rate
            );
        }
        for path in &written {
            println!("wrote {}", path.display());
        }
    }
    Ok(0)
}

fn cmd_profiles(cli: &Cli) -> Result<u8> {
    let profiles = profile_table(cli)?;
    if cli.json {
        println!("{}", serde_json::to_string_pretty(&profiles)?);
    } else {
        println!("{:<10} {:>14} {:>14}", "device", "fundamental", "imp step");
        for p in &profiles {
            let imp = p
                .imp_step_hz
                .map_or_else(|| "-".to_owned(), |d| format!("{} MHz", d / 1e6));
            println!(
                "{:<10} {:>14} {:>14}",
                p.name,
                format!("{} MHz", p.fundamental_hz / 1e6),
                imp
            );
        }
    }
    Ok(0)
}

pub fn run(cli: &Cli) -> Result<u8> {
    match &cli.command {
        Command::Synth(a) => cmd_synth(cli, a),
        Command::Analyze(a) => cmd_analyze(cli, a),
        Command::Bench(a) => cmd_bench(cli, a),
        Command::Profiles => cmd_profiles(cli),
    }
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
