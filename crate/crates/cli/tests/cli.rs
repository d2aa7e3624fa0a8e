use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gaitasym::features::{Feature, FeatureRow, FeatureVector};
use gaitasym::io::{write_measurement, MeasurementFile};
use gaitasym::pipeline::{analyze, AnalysisConfig};
use gaitasym::sim::{synthesize_return, Direction, IqSignal, Label, RadarConfig, WalkerConfig};
use gaitasym_cli::manifest::{sha256_hex, RunManifest};
use gaitasym_cli::table::{read_feature_table, write_dataset, write_feature_table, DatasetEntry, TableRow};
use tempfile::TempDir;

const SMALL: &str = "\
[cohort]
master_seed = 3
[cohort.radar]
duration = 4.0
[cohort.reference]
healthy = 2
walks = 1
patients = [{ asymmetry_factor = 0.6 }]
";

fn gaitasym(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gaitasym")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = gaitasym(args);
    assert_eq!(code(&out), 0, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write(dir: &Path, name: &str, bytes: &[u8]) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, bytes).unwrap();
    p
}

fn manifest(dir: &Path, command: &str) -> RunManifest {
    let text = std::fs::read(dir.join(RunManifest::file_name(command))).unwrap();
    serde_json::from_slice(&text).unwrap()
}

fn walk(direction: Direction, rho: f64) -> IqSignal {
    let walker = WalkerConfig {
        direction,
        asymmetry_factor: rho,
        ..WalkerConfig::default()
    };
    synthesize_return(&walker, &RadarConfig::default()).unwrap()
}

fn measurement(signal: IqSignal, direction: Direction, label: Label, subject: &str) -> Vec<u8> {
    let mut bytes = Vec::new();
    let file = MeasurementFile {
        signal,
        direction,
        label,
        subject: subject.into(),
    };
    write_measurement(&mut bytes, &file).unwrap();
    bytes
}

#[test]
fn simulate_is_deterministic_in_the_seed() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "c.toml", SMALL.as_bytes());
    let runs: Vec<RunManifest> = ["a", "b", "c"]
        .iter()
        .zip(["5", "5", "6"])
        .map(|(name, seed)| {
            let out = tmp.path().join(name);
            ok(&["--config", path(&cfg), "--seed", seed, "--out", path(&out), "simulate"]);
            manifest(&out, "simulate")
        })
        .collect();
    assert_eq!(runs[0].outputs, runs[1].outputs);
    assert_eq!(runs[0].config_hash, runs[1].config_hash);
    assert_eq!(runs[0].seeds["master_seed"], 5);
    assert_ne!(runs[0].outputs, runs[2].outputs);
    assert_ne!(runs[0].config_hash, runs[2].config_hash);
    // 2 healthy subjects with a limp variant plus one patient, 1 walk each way
    let measurements = runs[0].outputs.iter().filter(|a| a.path.ends_with(".mdgs")).count();
    assert_eq!(measurements, 10);
}

#[test]
fn every_artifact_is_listed_with_its_hash() {
    let tmp = TempDir::new().unwrap();
    let file = write(tmp.path(), "w.mdgs", &measurement(walk(Direction::Toward, 1.0), Direction::Toward, Label::Symmetric, "S"));
    let out = tmp.path().join("out");
    ok(&["--out", path(&out), "analyze", path(&file)]);
    let m = manifest(&out, "analyze");
    let on_disk: BTreeSet<String> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n != "analyze.manifest.json")
        .collect();
    let listed: BTreeSet<String> = m.outputs.iter().map(|a| a.path.clone()).collect();
    assert_eq!(on_disk, listed);
    for a in &m.outputs {
        assert_eq!(sha256_hex(&std::fs::read(out.join(&a.path)).unwrap()), a.sha256, "{}", a.path);
    }
    for name in ["spectrogram.pgm", "spectrogram.csv", "gaitstats.json", "step_a.pgm", "step_b.pgm", "steps.json", "features.csv"] {
        assert!(listed.contains(name), "{name}");
    }
    assert_eq!(m.inputs[0].sha256, sha256_hex(&std::fs::read(&file).unwrap()));
    assert!(std::fs::read(out.join("step_a.pgm")).unwrap().starts_with(b"P5\n"));
}

#[test]
fn analyze_of_a_symmetric_walk_matches_the_library() {
    let tmp = TempDir::new().unwrap();
    for direction in [Direction::Toward, Direction::Away] {
        let signal = walk(direction, 1.0);
        let file = write(tmp.path(), "w.mdgs", &measurement(signal.clone(), direction, Label::Symmetric, "S1"));
        let out = tmp.path().join(direction.as_str());
        ok(&["--out", path(&out), "analyze", path(&file)]);
        let emitted = std::fs::read(out.join("features.csv")).unwrap();
        let table = read_feature_table(&emitted).unwrap();
        assert_eq!(table.len(), 1);
        assert!(table[0].flags.is_empty(), "{}", table[0].flags);
        let r = table[0].values.unwrap()[Feature::R.index()];
        assert!(r >= 0.9, "{direction:?}: r = {r}");

        let a = analyze(&signal, direction, &AnalysisConfig::default()).unwrap();
        let row = FeatureRow::new("S1", direction, Label::Symmetric, a.features);
        assert_eq!(emitted, write_feature_table(&[TableRow::accepted(&row)]).unwrap());
    }
}

#[test]
fn features_and_analyze_emit_the_same_row() {
    let tmp = TempDir::new().unwrap();
    write(tmp.path(), "w.mdgs", &measurement(walk(Direction::Away, 0.7), Direction::Away, Label::Asymmetric, "P"));
    let entry = DatasetEntry {
        path: "w.mdgs".into(),
        subject: "P".into(),
        direction: Direction::Away,
        label: Label::Asymmetric,
        seed: 0,
    };
    let list = write(tmp.path(), "manifest.csv", &write_dataset(&[entry]).unwrap());
    let (a, f) = (tmp.path().join("a"), tmp.path().join("f"));
    ok(&["--out", path(&a), "analyze", path(&tmp.path().join("w.mdgs"))]);
    ok(&["--out", path(&f), "features", path(&list)]);
    let read = |p: PathBuf| std::fs::read(p.join("features.csv")).unwrap();
    assert_eq!(read(a), read(f));
}

#[test]
fn rejected_measurements_are_flagged_not_dropped() {
    let tmp = TempDir::new().unwrap();
    let good = measurement(walk(Direction::Toward, 1.0), Direction::Toward, Label::Symmetric, "G");
    let short = IqSignal::new(walk(Direction::Toward, 1.0).samples[..100].to_vec(), 2560.0).unwrap();
    write(tmp.path(), "good.mdgs", &good);
    write(tmp.path(), "short.mdgs", &measurement(short, Direction::Toward, Label::Symmetric, "S"));
    write(tmp.path(), "corrupt.mdgs", &good[..good.len() / 2]);
    let entry = |file: &str, subject: &str| DatasetEntry {
        path: file.into(),
        subject: subject.into(),
        direction: Direction::Toward,
        label: Label::Symmetric,
        seed: 0,
    };
    let entries = [
        entry("good.mdgs", "G"),
        entry("short.mdgs", "S"),
        entry("corrupt.mdgs", "C"),
        entry("absent.mdgs", "A"),
        entry("good.mdgs", "not-G"),
    ];
    let list = write(tmp.path(), "manifest.csv", &write_dataset(&entries).unwrap());
    let out = tmp.path().join("out");
    ok(&["--out", path(&out), "features", path(&list)]);
    let table = read_feature_table(&std::fs::read(out.join("features.csv")).unwrap()).unwrap();
    let flags: Vec<&str> = table.iter().map(|r| r.flags.as_str()).collect();
    assert!(table[0].values.is_some());
    assert_eq!(
        &flags[1..],
        ["rejected:signal_too_short", "rejected:corrupt_file", "rejected:missing_file", "rejected:manifest_mismatch"]
    );
    assert!(table[1..].iter().all(|r| r.values.is_none()));
    assert_eq!(manifest(&out, "features").summary["rejected"], 4);

    // a batch where nothing survives is a data error, but still fully reported
    let list = write(tmp.path(), "bad.csv", &write_dataset(&entries[1..]).unwrap());
    let out = tmp.path().join("bad");
    assert_eq!(code(&gaitasym(&["--out", path(&out), "features", path(&list)])), 3);
    assert_eq!(read_feature_table(&std::fs::read(out.join("features.csv")).unwrap()).unwrap().len(), 4);
    assert!(out.join("features.manifest.json").exists());
}

#[test]
fn exit_codes_separate_validation_from_data_errors() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let o = path(&out);
    let cfg = |name: &str, text: &str| write(tmp.path(), name, text.as_bytes());
    let unknown = cfg("unknown.toml", "[analysis]\nmargin = 3.0\n");
    let range = cfg("range.toml", "[model]\nfa_bound = 2.0\n");
    let invalid = cfg("invalid.toml", "[analysis.stft]\nhop = 0\n");
    let missing = tmp.path().join("none.toml");
    for p in [&unknown, &range, &invalid, &missing] {
        assert_eq!(code(&gaitasym(&["--config", path(p), "--out", o, "simulate"])), 2, "{p:?}");
    }
    assert_eq!(code(&gaitasym(&["--out", o, "frobnicate"])), 2);
    assert_eq!(code(&gaitasym(&["--out", o, "select", "x.csv", "--scenario", "sideways"])), 2);
    assert_eq!(code(&gaitasym(&["--help"])), 0);

    let corrupt = write(tmp.path(), "corrupt.mdgs", b"MDGS garbage");
    let noise = IqSignal::new(vec![Default::default(); 6 * 2560], 2560.0).unwrap();
    let silent = write(tmp.path(), "silent.mdgs", &measurement(noise, Direction::Toward, Label::Symmetric, "Z"));
    for file in [tmp.path().join("absent.mdgs"), corrupt, silent] {
        assert_eq!(code(&gaitasym(&["--out", o, "analyze", path(&file)])), 3, "{file:?}");
    }
    let table = write(tmp.path(), "t.csv", b"subject,direction\nA,toward\n");
    assert_eq!(code(&gaitasym(&["--out", o, "select", path(&table)])), 3);

    let planted = write(tmp.path(), "planted.csv", &planted_table(4));
    assert_eq!(code(&gaitasym(&["--out", o, "evaluate", path(&planted), "--held-out", "nobody"])), 2);
}

#[test]
fn direction_can_be_inferred_instead_of_read() {
    let tmp = TempDir::new().unwrap();
    // the header claims the wrong direction
    let file = write(tmp.path(), "w.mdgs", &measurement(walk(Direction::Away, 1.0), Direction::Toward, Label::Symmetric, "S"));
    let out = tmp.path().join("out");
    ok(&["--out", path(&out), "gaitstats", path(&file), "--infer-direction"]);
    let stats: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("gaitstats.json")).unwrap()).unwrap();
    assert_eq!(stats["direction"], "away");
    assert!(stats["f_step_hz"].as_f64().unwrap() > 1.0);

    let out = tmp.path().join("steps");
    ok(&["--out", path(&out), "steps", path(&file), "--infer-direction"]);
    let sidecar: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("steps.json")).unwrap()).unwrap();
    assert_eq!(sidecar["direction"], "away");
    assert_eq!(sidecar["refined_step_times"].as_array().unwrap().len(), 4);
}

#[test]
fn job_count_does_not_change_outputs() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "c.toml", SMALL.as_bytes());
    let sim = tmp.path().join("sim");
    ok(&["--config", path(&cfg), "--out", path(&sim), "simulate"]);
    let list = sim.join("manifest.csv");
    let tables: Vec<Vec<u8>> = ["1", "2", "0"]
        .iter()
        .map(|jobs| {
            let out = tmp.path().join(format!("f{jobs}"));
            ok(&["--config", path(&cfg), "--jobs", jobs, "--out", path(&out), "features", path(&list)]);
            std::fs::read(out.join("features.csv")).unwrap()
        })
        .collect();
    assert_eq!(tables[0], tables[1]);
    assert_eq!(tables[0], tables[2]);
}

/// Subjects `S0..` with noisy features; asymmetric walks have lower `r`.
fn planted_table(subjects: usize) -> Vec<u8> {
    let mut k = 0u32;
    let mut noise = move || {
        k += 1;
        ((k as f64 * 12.9898).sin() * 43758.5453).fract()
    };
    let mut rows = Vec::new();
    for s in 0..subjects {
        for direction in [Direction::Toward, Direction::Away] {
            for label in [Label::Symmetric, Label::Asymmetric] {
                for _ in 0..6 {
                    let shift = if label.is_positive() { 0.08 } else { 0.0 };
                    let mut values: [f64; 8] = std::array::from_fn(|_| 0.5 + 0.2 * noise());
                    values[Feature::R.index()] = 0.9 - shift + 0.1 * noise();
                    let features = FeatureVector { values, flags: Vec::new() };
                    rows.push(TableRow::accepted(&FeatureRow::new(format!("S{s}"), direction, label, features)));
                }
            }
        }
    }
    write_feature_table(&rows).unwrap()
}

#[test]
fn select_and_evaluate_emit_the_documented_tables() {
    let tmp = TempDir::new().unwrap();
    let table = write(tmp.path(), "features.csv", &planted_table(5));
    let out = tmp.path().join("out");
    ok(&["--out", path(&out), "select", path(&table), "--scenario", "away"]);
    let model: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("model_away.json")).unwrap()).unwrap();
    let coefficients = model["coefficients"].as_array().unwrap();
    assert_eq!(coefficients.len(), model["predictors"].as_array().unwrap().len() + 1);
    for c in coefficients {
        let keys: BTreeSet<&str> = c.as_object().unwrap().keys().map(String::as_str).collect();
        assert_eq!(keys, BTreeSet::from(["predictor", "coefficient", "std_error", "p_value"]));
    }
    let bic = std::fs::read_to_string(out.join("bic_away.csv")).unwrap();
    assert!(bic.starts_with("order,predictors,bic\n"));
    assert_eq!(bic.lines().count(), 9);
    assert_eq!(std::fs::read_to_string(out.join("subsets_away.csv")).unwrap().lines().count(), 256);

    ok(&["--out", path(&out), "evaluate", path(&table)]);
    let report = std::fs::read_to_string(out.join("report.csv")).unwrap();
    let mut lines = report.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    for column in ["held_out", "direction", "tau", "pd_train", "pd_test"] {
        assert!(header.contains(&column), "{column}");
    }
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 5 * 2);
    let pairs: BTreeSet<(&str, &str)> = rows.iter().map(|r| (r[0], r[1])).collect();
    assert_eq!(pairs.len(), 10);
    for r in &rows {
        let tau: f64 = r[3].parse().unwrap();
        assert!((0.0..=1.0).contains(&tau));
        assert!(r[10].is_empty());
    }
    for direction in ["toward", "away"] {
        let roc = std::fs::read_to_string(out.join(format!("roc_{direction}.csv"))).unwrap();
        assert!(roc.starts_with("threshold,fa,detection\ninf,0,0\n"), "{roc}");
        assert!(roc.trim_end().ends_with(",1,1"));
    }
    let m = manifest(&out, "evaluate");
    assert!(m.summary["auc_toward"].as_f64().unwrap() > 0.5);

    ok(&["--out", path(&out), "evaluate", path(&table), "--held-out", "S1,S3", "--scenario", "both"]);
    assert_eq!(std::fs::read_to_string(out.join("report.csv")).unwrap().lines().count(), 3);
}

#[test]
fn simulated_cohort_runs_end_to_end() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "c.toml",
        b"[cohort]\nmaster_seed = 7\n[cohort.reference]\nhealthy = 4\nwalks = 3\npatients = [{ asymmetry_factor = 0.7 }]\n",
    );
    let c = path(&cfg);
    let out = tmp.path().join("out");
    let o = path(&out);
    ok(&["--config", c, "--out", o, "simulate"]);
    ok(&["--config", c, "--out", o, "features", path(&out.join("manifest.csv"))]);
    let table = out.join("features.csv");
    ok(&["--config", c, "--out", o, "select", path(&table)]);
    ok(&["--config", c, "--out", o, "evaluate", path(&table)]);
    let report = std::fs::read_to_string(out.join("report.csv")).unwrap();
    assert_eq!(report.lines().count(), 1 + 5 * 2);
    for command in ["simulate", "features", "select", "evaluate"] {
        assert_eq!(manifest(&out, command).command, command);
    }
}
