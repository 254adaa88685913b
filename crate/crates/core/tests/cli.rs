use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use tsgan::cli::{run, RunManifest, EPOCH_CSV_HEADER, EXIT_DIVERGED, EXIT_OK, EXIT_RUNTIME, EXIT_USAGE};
use tsgan::data::read_series_csv;

fn tsgan(args: &[&str]) -> i32 {
    run(std::iter::once("tsgan").chain(args.iter().copied()))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

/// Small sine corpus under `dir/data`.
fn corpus(dir: &Path, n_train: usize, n_test: usize) -> PathBuf {
    let cfg = write(dir, "datagen.json", &format!(r#"{{"n_train": {n_train}, "n_test": {n_test}}}"#));
    let out = dir.join("data");
    assert_eq!(tsgan(&["datagen", "--config", s(&cfg), "--out", s(&out)]), EXIT_OK);
    out
}

fn train_small(data: &Path, out: &Path, seed: &str, extra: &[&str]) -> i32 {
    let (train, test) = (data.join("train.csv"), data.join("test.csv"));
    let mut args = vec![
        "train",
        "--preset",
        "1cnn-gan",
        "--train",
        s(&train),
        "--test",
        s(&test),
        "--epochs",
        "1",
        "--batches",
        "2",
        "--seed",
        seed,
        "--out",
        s(out),
    ];
    args.extend_from_slice(extra);
    let args: Vec<String> = args.into_iter().map(String::from).collect();
    run(std::iter::once("tsgan".to_string()).chain(args))
}

fn assert_manifest_outputs(dir: &Path) {
    let m = RunManifest::load(&dir.join("manifest.json")).unwrap();
    assert!(!m.outputs.is_empty());
    for o in &m.outputs {
        assert!(dir.join(o).is_file(), "{o} listed but missing");
    }
    let manifests = fs::read_dir(dir).unwrap().filter(|e| e.as_ref().unwrap().file_name() == "manifest.json").count();
    assert_eq!(manifests, 1);
}

#[test]
fn datagen_defaults_and_repeatability() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    assert_eq!(tsgan(&["datagen", "--out", s(&a)]), EXIT_OK);
    let train = read_series_csv(&a.join("train.csv")).unwrap();
    let test = read_series_csv(&a.join("test.csv")).unwrap();
    assert_eq!((train.len(), test.len(), train.length()), (10_000, 3_000, 40));
    assert_manifest_outputs(&a);

    let b = tmp.path().join("b");
    assert_eq!(tsgan(&["datagen", "--out", s(&b)]), EXIT_OK);
    assert_eq!(fs::read(a.join("train.csv")).unwrap(), fs::read(b.join("train.csv")).unwrap());
    let c = tmp.path().join("c");
    assert_eq!(tsgan(&["datagen", "--seed", "1", "--out", s(&c)]), EXIT_OK);
    assert_ne!(fs::read(a.join("test.csv")).unwrap(), fs::read(c.join("test.csv")).unwrap());
}

#[test]
fn config_errors_exit_with_usage_code() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = write(tmp.path(), "bad.json", r#"{"amplitude": [0.9, 0.1]}"#);
    assert_eq!(tsgan(&["datagen", "--config", s(&bad), "--out", s(tmp.path())]), EXIT_USAGE);
    let typo = write(tmp.path(), "typo.json", r#"{"preset": "lstm-gan", "epochz": 3}"#);
    assert_eq!(tsgan(&["train", "--config", s(&typo), "--out", s(tmp.path())]), EXIT_USAGE);
    assert_eq!(tsgan(&["train", "--preset", "3cnn-gan", "--out", s(tmp.path())]), EXIT_USAGE);
    assert_eq!(tsgan(&["train", "--preset", "lstm-gan", "--out", s(tmp.path())]), EXIT_USAGE);
    assert_eq!(tsgan(&["frobnicate"]), EXIT_USAGE);
    assert_eq!(tsgan(&["datagen", "--config", "/nonexistent/x.json", "--out", s(tmp.path())]), EXIT_USAGE);
}

#[test]
fn train_smoke_run_writes_one_epoch() {
    let tmp = tempfile::tempdir().unwrap();
    let data = corpus(tmp.path(), 120, 30);
    let a = tmp.path().join("a");
    assert_eq!(train_small(&data, &a, "4", &[]), EXIT_OK);
    let csv = fs::read_to_string(a.join("epochs.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], EPOCH_CSV_HEADER);
    let id = lines[1].rsplit(',').next().unwrap();
    let ck = fs::read(a.join("checkpoints/epoch-001.json")).unwrap();
    assert_eq!(id, tsgan::gan::content_id(&ck));
    assert!(fs::read_to_string(a.join("shapes.txt")).unwrap().contains("10*18"));
    assert_manifest_outputs(&a);

    let b = tmp.path().join("b");
    assert_eq!(train_small(&data, &b, "4", &[]), EXIT_OK);
    assert_eq!(csv, fs::read_to_string(b.join("epochs.csv")).unwrap());
}

#[test]
fn exploding_run_exits_with_diverged_code() {
    let tmp = tempfile::tempdir().unwrap();
    let data = corpus(tmp.path(), 120, 30);
    // Clamped losses stay bounded, so only non-finite input can blow up.
    let row = format!("{},0\n", vec!["NaN"; 40].join(","));
    write(tmp.path(), "nan.csv", &row.repeat(40));
    let cfg = write(
        tmp.path(),
        "boom.json",
        &format!(
            r#"{{"preset": "1cnn-gan", "train": "nan.csv", "test": "{}", "epochs": 3, "batch_size": 20}}"#,
            s(&data.join("test.csv"))
        ),
    );
    let out = tmp.path().join("run");
    assert_eq!(tsgan(&["train", "--config", s(&cfg), "--out", s(&out)]), EXIT_DIVERGED);
    let m = RunManifest::load(&out.join("manifest.json")).unwrap();
    assert_eq!(m.status, "diverged");
    assert!(fs::read_to_string(out.join("epochs.csv")).unwrap().starts_with(EPOCH_CSV_HEADER));
}

#[test]
fn sweep_trains_each_seed_in_its_own_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let data = corpus(tmp.path(), 60, 20);
    let out = tmp.path().join("sweep");
    assert_eq!(train_small(&data, &out, "10", &["--sweep", "2"]), EXIT_OK);
    for seed in [10, 11] {
        let dir = out.join(format!("seed-{seed}"));
        assert_manifest_outputs(&dir);
        assert_eq!(RunManifest::load(&dir.join("manifest.json")).unwrap().seed, seed);
    }
}

#[test]
fn synth_eval_and_attack() {
    let tmp = tempfile::tempdir().unwrap();
    let data = corpus(tmp.path(), 100, 100);
    let run_dir = tmp.path().join("run");
    assert_eq!(train_small(&data, &run_dir, "0", &[]), EXIT_OK);
    let ck = run_dir.join("checkpoints/epoch-001.json");

    let empty = tmp.path().join("s0");
    assert_eq!(tsgan(&["synth", "--checkpoint", s(&ck), "--n", "0", "--out", s(&empty)]), EXIT_OK);
    let text = fs::read_to_string(empty.join("synth.csv")).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert!(text.starts_with("t0,") && text.trim_end().ends_with(",label"));

    let s1 = tmp.path().join("s1");
    let s2 = tmp.path().join("s2");
    for d in [&s1, &s2] {
        assert_eq!(tsgan(&["synth", "--checkpoint", s(&ck), "--n", "30", "--seed", "2", "--out", s(d)]), EXIT_OK);
    }
    let synth = read_series_csv(&s1.join("synth.csv")).unwrap();
    assert_eq!((synth.len(), synth.length()), (30, 40));
    assert_eq!(fs::read(s1.join("synth.csv")).unwrap(), fs::read(s2.join("synth.csv")).unwrap());
    assert_eq!(
        tsgan(&["synth", "--checkpoint", s(&ck), "--length", "187", "--out", s(&tmp.path().join("s3"))]),
        EXIT_RUNTIME
    );

    let test = data.join("test.csv");
    let ev = tmp.path().join("eval");
    assert_eq!(tsgan(&["eval", "--real", s(&test), "--synth", s(&test), "--paired", "--out", s(&ev)]), EXIT_OK);
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(ev.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(m["metrics"]["dtw_mean"], 0.0);
    assert_eq!(m["protocol"]["mmd_fraction"], 1.0);
    assert_eq!(m["protocol"]["dtw_fraction"], 0.13);
    assert_manifest_outputs(&ev);
    let ev2 = tmp.path().join("eval-ecg");
    assert_eq!(tsgan(&["eval", "--real", s(&test), "--synth", s(&s1.join("synth.csv")), "--ecg", "--out", s(&ev2)]), EXIT_OK);
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(ev2.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(m["protocol"]["mmd_fraction"], 0.65);
    assert_eq!(m["metrics"]["mmd_rows"][1], 20);
    let one = write(tmp.path(), "one.csv", &format!("{}\n", vec!["0.5"; 41].join(",")));
    assert_eq!(
        tsgan(&["eval", "--real", s(&one), "--synth", s(&test), "--out", s(&tmp.path().join("e3"))]),
        EXIT_RUNTIME
    );

    let grid = write(tmp.path(), "grid.json", r#"{"r_values": [20, 50], "epsilon_fractions": [0.05, 0.25, 0.5]}"#);
    let at = tmp.path().join("attack");
    let train = data.join("train.csv");
    assert_eq!(
        tsgan(&["attack", "--config", s(&grid), "--train", s(&train), "--test", s(&test), "--synth", s(&train), "--out", s(&at)]),
        EXIT_OK
    );
    let csv = fs::read_to_string(at.join("attack.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r.ends_with(",1")), "{csv}");
    assert_manifest_outputs(&at);
    assert_eq!(
        tsgan(&["attack", "--train", s(&train), "--test", s(&test), "--synth", s(&train), "--out", s(&at)]),
        EXIT_USAGE
    );
}

#[test]
fn attack_grids_default_to_the_published_ranges() {
    let sine = tsgan::cli::AttackRunConfig::default().grid();
    assert_eq!(sine.r_values, (1..=12).map(|i| i * 250).collect::<Vec<_>>());
    assert_eq!(sine.epsilon_fractions.len(), 10);
    assert!((sine.epsilon_fractions[0] - 0.05).abs() < 1e-12 && (sine.epsilon_fractions[9] - 0.5).abs() < 1e-12);
    let ecg = tsgan::cli::AttackRunConfig {
        ecg: true,
        ..Default::default()
    }
    .grid();
    assert_eq!(ecg.r_values, (1..=10).map(|i| i * 1000).collect::<Vec<_>>());
}

#[test]
fn ingest_kachuee_fixture() {
    let tmp = tempfile::tempdir().unwrap();
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/ecg_fixture.csv");
    let out = tmp.path().join("ecg");
    assert_eq!(tsgan(&["ingest", "--kachuee-train", s(&fixture), "--out", s(&out)]), EXIT_OK);
    let batch = read_series_csv(&out.join("train.csv")).unwrap();
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("ingest.json")).unwrap()).unwrap();
    assert_eq!(summary[0]["records"], 200);
    assert_eq!(summary[0]["written"], batch.len());
    assert_eq!(batch.length(), 187);
    assert!(batch.values().iter().all(|v| (0.0..=1.0).contains(v)));
    assert_manifest_outputs(&out);
    assert_eq!(tsgan(&["ingest", "--out", s(&out)]), EXIT_USAGE);
}

#[test]
fn ingest_raw_signal_with_sidecar() {
    let tmp = tempfile::tempdir().unwrap();
    // 30 s at 360 Hz with a 5-sample plateau every 300 samples (1.2 Hz).
    let signal: Vec<String> =
        (0..10_800).map(|i| if (148..153).contains(&(i % 300)) { "400" } else { "20" }.to_string()).collect();
    let sig = write(tmp.path(), "rec.txt", &signal.join("\n"));
    write(tmp.path(), "rec.json", r#"{"source_hz": 360, "gain": 200}"#);
    let out = tmp.path().join("raw");
    assert_eq!(tsgan(&["ingest", "--raw", s(&sig), "--out", s(&out)]), EXIT_OK);
    let beats = read_series_csv(&out.join("beats.csv")).unwrap();
    assert!(beats.len() >= 20, "{}", beats.len());
    assert_eq!(beats.length(), 187);
    assert!(beats.iter().all(|b| b[0] == 1.0));
}

#[test]
fn binary_reports_version_and_usage() {
    let bin = env!("CARGO_BIN_EXE_tsgan");
    let v = Command::new(bin).arg("--version").output().unwrap();
    assert!(v.status.success());
    assert!(String::from_utf8_lossy(&v.stdout).contains(tsgan::cli::VERSION));
    let none = Command::new(bin).output().unwrap();
    assert_eq!(none.status.code(), Some(EXIT_USAGE));
    let tmp = tempfile::tempdir().unwrap();
    let missing = Command::new(bin)
        .args(["eval", "--real", "/nonexistent.csv", "--synth", "/nonexistent.csv", "--out"])
        .arg(tmp.path())
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(EXIT_RUNTIME));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("nonexistent"));
}
