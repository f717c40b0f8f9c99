use emanatrix::dsp::{process_pipeline, PipelineConfig};
use emanatrix::peaks::{detect_peaks, PeakConfig};
use emanatrix::synth::synth_background;
use emanatrix::PowerSpectrum;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const BINS: usize = 4096;
const FLOOR: f64 = -80.0;

/// Flat floor with small dB jitter plus Kaiser-like lines (Gaussian in
/// linear power, about one bin wide).
fn spectrum(seed: u64, lines: &[(usize, f64)]) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = Normal::new(0.0, 0.3).unwrap();
    let mut lin: Vec<f64> = (0..BINS)
        .map(|_| 10f64.powf((FLOOR + jitter.sample(&mut rng)) / 10.0))
        .collect();
    for &(bin, level_db) in lines {
        let peak = 10f64.powf((FLOOR + level_db) / 10.0);
        for (k, v) in lin.iter_mut().enumerate() {
            let x = k as f64 - bin as f64;
            if x.abs() < 12.0 {
                *v += peak * (-x * x / 2.0).exp();
            }
        }
    }
    lin.iter().map(|v| 10.0 * v.log10()).collect()
}

fn to_spec(p: Vec<f64>) -> PowerSpectrum {
    PowerSpectrum::from_uniform(0.0, 1000.0, p).unwrap()
}

fn no_dc() -> PeakConfig {
    PeakConfig {
        mask_dc: false,
        ..PeakConfig::default()
    }
}

fn local_maxima_above(p: &[f64], level: f64) -> Vec<usize> {
    (1..p.len() - 1)
        .filter(|&i| p[i] >= p[i - 1] && p[i] >= p[i + 1] && p[i] > level)
        .collect()
}

#[test]
fn five_lines_exactly() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut lines: Vec<(usize, f64)> = Vec::new();
        while lines.len() < 5 {
            let bin = rng.random_range(100..BINS - 100);
            if lines.iter().all(|&(b, _)| b.abs_diff(bin) > 60) {
                lines.push((bin, rng.random_range(10.0..30.0)));
            }
        }
        let p = spectrum(seed, &lines);
        let oracle = local_maxima_above(&p, FLOOR + 6.0);
        let mut want: Vec<usize> = lines.iter().map(|l| l.0).collect();
        want.sort();
        assert_eq!(oracle, want, "oracle disagrees with construction");
        let got: Vec<usize> = detect_peaks(&to_spec(p), &no_dc())
            .unwrap()
            .iter()
            .map(|pk| pk.bin_index)
            .collect();
        assert_eq!(got, want, "seed {seed}");
    }
}

#[test]
fn pipeline_noise_gives_few_peaks() {
    // reduced sizes keep 100 seeds quick; the averaging depth matches the defaults
    let cfg = PipelineConfig {
        seq_len: 40_000,
        ..PipelineConfig::default()
    };
    let n = cfg.required_samples();
    let mut clean = 0;
    for seed in 0..100 {
        let rec = synth_background(&[], -20.0, 1e6, 0.0, n as f64 / 1e6, seed).unwrap();
        let spec = process_pipeline(&rec, &cfg).unwrap();
        if detect_peaks(&spec, &PeakConfig::default()).unwrap().len() <= 2 {
            clean += 1;
        }
    }
    assert!(clean >= 95, "{clean}/100 seeds with at most two peaks");
}

fn lines_strategy() -> impl Strategy<Value = (u64, Vec<(usize, f64)>)> {
    (
        any::<u64>(),
        prop::collection::btree_map(6usize..60, 6.0f64..30.0, 1..8),
    )
        .prop_map(|(seed, m)| {
            // slots 64 bins apart keep lines resolvable
            let lines = m.into_iter().map(|(slot, db)| (slot * 64, db)).collect();
            (seed, lines)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn peaks_are_local_maxima((seed, lines) in lines_strategy()) {
        let p = spectrum(seed, &lines);
        for pk in detect_peaks(&to_spec(p.clone()), &PeakConfig::default()).unwrap() {
            let i = pk.bin_index;
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(BINS - 1);
            prop_assert!((lo..=hi).all(|j| p[j] <= p[i]), "bin {i}");
            prop_assert_eq!(pk.power_dbm, p[i]);
        }
    }

    #[test]
    fn shift_equivariance((seed, lines) in lines_strategy(), shift in 1usize..200) {
        let p = spectrum(seed, &lines);
        let mut rotated = p.clone();
        rotated.rotate_right(shift);
        let cfg = no_dc();
        let margin = 2 * cfg.widths_bins.end() + 8;
        let inner = |b: usize| b >= margin && b < BINS - margin;
        let a: Vec<usize> = detect_peaks(&to_spec(p), &cfg).unwrap().iter()
            .map(|pk| pk.bin_index + shift)
            .filter(|&b| inner(b) && inner(b - shift))
            .collect();
        let b: Vec<usize> = detect_peaks(&to_spec(rotated), &cfg).unwrap().iter()
            .map(|pk| pk.bin_index)
            .filter(|&b| inner(b) && b >= shift && inner(b - shift))
            .collect();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn raising_min_snr_never_adds((seed, lines) in lines_strategy(), lo in 0.0f64..10.0, step in 0.0f64..10.0) {
        let spec = to_spec(spectrum(seed, &lines));
        let loose = PeakConfig { min_snr_db: lo, ..PeakConfig::default() };
        let strict = PeakConfig { min_snr_db: lo + step, ..PeakConfig::default() };
        let a: Vec<usize> = detect_peaks(&spec, &loose).unwrap().iter().map(|p| p.bin_index).collect();
        let b: Vec<usize> = detect_peaks(&spec, &strict).unwrap().iter().map(|p| p.bin_index).collect();
        prop_assert!(b.iter().all(|x| a.contains(x)), "{b:?} not within {a:?}");
    }
}
