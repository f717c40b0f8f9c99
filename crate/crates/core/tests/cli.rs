use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn emanatrix(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_emanatrix"))
        .args(args)
        .env_remove("EMANATRIX_PROFILES")
        .output()
        .expect("binary runs")
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json_stdout(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn synth_then_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let iq = dir.path().join("a.iq");
    let out = emanatrix(&[
        "synth",
        "--device",
        "arduino",
        "--snr",
        "16",
        "--seed",
        "3",
        "--out",
        arg(&iq),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let meta: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("a.iq.json")).unwrap())
            .unwrap();
    assert_eq!(meta["label"], "arduino");

    let spectrum = dir.path().join("s.csv");
    let peaks = dir.path().join("p.csv");
    let report = dir.path().join("r.json");
    let out = emanatrix(&[
        "analyze",
        arg(&iq),
        "--json",
        "--out",
        arg(&report),
        "--emit-spectrum",
        arg(&spectrum),
        "--emit-peaks",
        arg(&peaks),
    ]);
    assert_eq!(out.status.code(), Some(10));
    let v = json_stdout(&out);
    assert_eq!(v["verdict"], "emanation_detected");
    let candidates: Vec<&str> = v["fingerprint_candidates"]
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|c| {
            c["candidates"]
                .as_array()
                .unwrap()
                .iter()
                .map(|s| s.as_str().unwrap())
        })
        .collect();
    assert!(candidates.contains(&"Arduino"));
    assert_eq!(
        std::fs::read_to_string(&report).unwrap().trim(),
        String::from_utf8_lossy(&out.stdout).trim()
    );
    let rows = std::fs::read_to_string(&spectrum).unwrap().lines().count();
    assert_eq!(rows, 131_072 + 1);
    assert!(std::fs::read_to_string(&peaks)
        .unwrap()
        .starts_with("freq_hz,"));
}

#[test]
fn background_is_clean() {
    let dir = tempfile::tempdir().unwrap();
    let iq = dir.path().join("bg.iq");
    let out = emanatrix(&[
        "synth",
        "--rate",
        "20e6",
        "--center",
        "100e6",
        "--dc-dbm",
        "-45",
        "--lte",
        "105e6:108e6:-35",
        "--out",
        arg(&iq),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let out = emanatrix(&["analyze", arg(&iq), "--json"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json_stdout(&out);
    assert_eq!(v["verdict"], "clean");
    assert!(out.stderr.is_empty());
}

#[test]
fn errors_have_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = emanatrix(&[
        "synth",
        "--device",
        "nosuch",
        "--out",
        arg(&dir.path().join("x.iq")),
    ]);
    assert_eq!(out.status.code(), Some(6));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown profile"));

    let out = emanatrix(&["analyze", arg(&dir.path().join("missing.iq"))]);
    assert_eq!(out.status.code(), Some(3));

    std::fs::write(dir.path().join("odd.iq"), [0u8; 12]).unwrap();
    std::fs::write(
        dir.path().join("odd.iq.json"),
        r#"{"sample_rate_hz": 1e6, "center_freq_hz": 0}"#,
    )
    .unwrap();
    let out = emanatrix(&["analyze", arg(&dir.path().join("odd.iq"))]);
    assert_eq!(out.status.code(), Some(4));

    let out = emanatrix(&["analyze", "x.iq", "--pipeline.n-segments", "0"]);
    assert_eq!(out.status.code(), Some(5));

    let out = emanatrix(&["bench", "--scenario", arg(&dir.path().join("none.json"))]);
    assert_ne!(out.status.code(), Some(0));

    let out = emanatrix(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn scenario_file_and_custom_profiles() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("profiles.json");
    std::fs::write(
        &table,
        r#"[{"name": "Widget", "fundamental_hz": 10e6, "imp_step_hz": null}]"#,
    )
    .unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_emanatrix"))
        .args(["profiles", "--json"])
        .env("EMANATRIX_PROFILES", &table)
        .output()
        .unwrap();
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 1);
    assert_eq!(v[0]["name"], "Widget");

    let scenario = dir.path().join("s.json");
    std::fs::write(
        &scenario,
        r#"{"device": {"name": "Widget", "fundamental_hz": 10e6, "imp_step_hz": null}, "snr_db": 18, "seed": 4}"#,
    )
    .unwrap();
    let iq = dir.path().join("w.iq");
    let out = emanatrix(&[
        "synth",
        "--scenario",
        arg(&scenario),
        "--out",
        arg(&iq),
        "--json",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(json_stdout(&out)["label"], "widget");
    let out = emanatrix(&["analyze", arg(&iq), "--profiles", arg(&table), "--json"]);
    assert_eq!(out.status.code(), Some(10));
    assert_eq!(
        json_stdout(&out)["fingerprint_candidates"][0]["candidates"][0],
        "Widget"
    );

    std::fs::write(&scenario, r#"{"device": "Arduino", "bogus": 1}"#).unwrap();
    let out = emanatrix(&["synth", "--scenario", arg(&scenario), "--out", arg(&iq)]);
    assert_eq!(out.status.code(), Some(5));
}

#[test]
fn bench_threshold_row() {
    let dir = tempfile::tempdir().unwrap();
    let plan = dir.path().join("plan.json");
    std::fs::write(
        &plan,
        r#"{"scenarios": [
            {"name": "esp", "device": "ESP32", "snr_sweep_db": [20], "n_trials_per_point": 2, "seed_base": 1},
            {"name": "bg", "device": "background", "n_trials_per_point": 2, "seed_base": 2,
             "interferers": [{"kind": "dc_offset", "level_db": 15}]}
        ]}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = emanatrix(&[
        "bench",
        "--scenario",
        arg(&plan),
        "--detector",
        "threshold",
        "--threshold",
        "-55",
        "--out-dir",
        arg(&out_dir),
        "--json",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(out_dir.join("threshold.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[1].starts_with("-55,"), "{csv}");
    let v = json_stdout(&out);
    assert_eq!(v["trials"], 4);

    let out = emanatrix(&[
        "bench",
        "--scenario",
        arg(&plan),
        "--detector",
        "harmonic",
        "--out-dir",
        arg(&out_dir),
        "--json",
    ]);
    assert!(out.status.success());
    let v = json_stdout(&out);
    assert_eq!(v["results"][0]["accuracy"], 1.0);
    let snr = std::fs::read_to_string(out_dir.join("snr.csv")).unwrap();
    assert!(snr.starts_with("snr_db,harmonic accuracy"));
}
