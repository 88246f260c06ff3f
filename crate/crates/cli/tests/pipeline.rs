use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use blood_core::eval::{auroc, mann_whitney_one_sided};
use blood_core::record::{write_jsonl, ScoreRecord};

const STAGES: [&str; 6] = ["generate", "train", "score", "eval", "analyze", "report"];

fn demo_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/demo-2class.toml")
}

fn blood(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_blood")).args(args).output().unwrap()
}

fn run_ok(args: &[&str]) {
    let out = blood(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Relative path → bytes, manifest excluded (it records wall-clock times).
fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().unwrap() != "manifest.json" {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn pipeline(cfg: &Path, out: &Path, jobs: &str) {
    for stage in STAGES {
        run_ok(&[
            stage,
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--jobs",
            jobs,
        ]);
    }
}

#[test]
fn demo_pipeline_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    pipeline(&demo_config(), &a, "1");
    pipeline(&demo_config(), &b, "4");
    let (sa, sb) = (snapshot(&a), snapshot(&b));
    assert!(sa.contains_key(Path::new("report-seeds-0-1-2-3-4.md")));
    assert!(sa.contains_key(Path::new("scores/blood_ob-s4.jsonl")));
    assert_eq!(sa.keys().collect::<Vec<_>>(), sb.keys().collect::<Vec<_>>());
    for (k, v) in &sa {
        assert!(sb[k] == *v, "{} differs", k.display());
    }

    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(a.join("manifest.json")).unwrap()).unwrap();
    for stage in STAGES {
        assert!(manifest["stages"][stage]["wall_clock_seconds"].is_number(), "{stage}");
    }
    assert_eq!(manifest["config"]["blood"]["m_samples"], 50);
}

const TINY: &str = r#"
seeds = [0]
detectors = ["blood_m", "blood_l", "msp", "mc", "ensm", "md"]
[dataset]
classes = 2
dim = 4
separation = 3.0
train_per_class = 20
validation_per_class = 10
test_per_class = 10
[[dataset.shifts]]
name = "far"
kind = "far"
degree = 6.0
[model]
width = 8
depth = 2
[train]
epochs = 3
[blood]
m_samples = 10
[detector]
mc_passes = 5
ensemble_size = 2
[analyze]
mdl_blocks = 2
"#;

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn interrupted_scoring_resumes_to_the_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = dir.path().join("out");
    pipeline(&cfg, &out, "2");
    let raw = out.join("scores/blood-s0.jsonl");
    let full = fs::read(&raw).unwrap();
    // keep a few complete lines and half of the next one
    let cut = full.iter().enumerate().filter(|(_, &b)| b == b'\n').nth(4).unwrap().0 + 20;
    fs::write(&raw, &full[..cut]).unwrap();
    fs::remove_file(out.join("scores/md-s0.jsonl")).unwrap();
    run_ok(&[
        "score",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(fs::read(&raw).unwrap(), full);
    assert!(out.join("scores/md-s0.jsonl").exists());
}

#[test]
fn seed_flag_overrides_the_seed_list() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = dir.path().join("out");
    run_ok(&[
        "generate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "9",
    ]);
    assert!(out.join("data/train-s9.csv").exists());
    assert!(!out.join("data/train-s0.csv").exists());
}

#[test]
fn missing_artifact_exits_3_naming_the_producer() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = dir.path().join("out");
    for (stage, producer) in [("train", "generate"), ("eval", "score"), ("report", "eval")] {
        let o = blood(&[stage, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(3), "{stage}");
        let err = String::from_utf8_lossy(&o.stderr);
        assert!(err.contains(&format!("blood {producer}")), "{stage}: {err}");
    }
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "seeds = []\n");
    let o = blood(&["generate", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let o = blood(&["generate", "--config", dir.path().join("absent.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let bad = write_config(
        dir.path(),
        "detectors = [\"ash\"]\nbaseline = \"ash\"\n[detector]\nash_prune = 1.5\n",
    );
    let o = blood(&["generate", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn diverging_training_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &TINY.replace("epochs = 3", "epochs = 3\nlearning_rate = 1e300"),
    );
    let out = dir.path().join("out");
    run_ok(&[
        "generate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let o = blood(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
}

fn records(detector: &str, seed: u64, id: &[f64], ood: &[f64]) -> Vec<ScoreRecord> {
    let rec = |split: &str, i: usize, score: f64| ScoreRecord {
        instance_id: i as u64,
        detector: detector.into(),
        split: split.into(),
        per_layer: None,
        score,
        seed,
    };
    let mut out: Vec<ScoreRecord> = id.iter().enumerate().map(|(i, &s)| rec("test-id", i, s)).collect();
    out.extend(ood.iter().enumerate().map(|(i, &s)| rec("ood-far", i, s)));
    out
}

fn put_scores(out: &Path, detector: &str, seed: u64, id: &[f64], ood: &[f64]) {
    let path = out.join(format!("scores/{detector}-s{seed}.jsonl"));
    fs::create_dir_all(path.parent().unwrap()).unwrap();
    let mut buf = Vec::new();
    write_jsonl(&mut buf, &records(detector, seed, id, ood)).unwrap();
    fs::write(path, buf).unwrap();
}

const HAND: &str = r#"
seeds = [0]
detectors = ["msp"]
[[dataset.shifts]]
name = "far"
kind = "far"
degree = 8.0
"#;

#[test]
fn hand_crafted_scores_give_a_perfect_cell() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), HAND);
    let out = dir.path().join("out");
    put_scores(&out, "msp", 0, &[1.0, 2.0], &[3.0, 4.0]);
    run_ok(&[
        "eval",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--latex",
    ]);
    let md = fs::read_to_string(out.join("eval/table-seeds-0.md")).unwrap();
    assert!(md.contains("| far | **1.000** |"), "{md}");
    let tex = fs::read_to_string(out.join("eval/table-seeds-0.tex")).unwrap();
    assert!(tex.contains("\\textbf{1.000}"), "{tex}");
}

/// The `egy` column: OOD scores shifted by `shift[seed]` against a fixed
/// ID set, so its AUROC varies by seed; `msp` stays near chance.
fn star_case(shift: [f64; 5]) -> (bool, bool) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &HAND
            .replace("seeds = [0]", "seeds = [0, 1, 2, 3, 4]")
            .replace("[\"msp\"]", "[\"msp\", \"egy\"]"),
    );
    let out = dir.path().join("out");
    let id: Vec<f64> = (0..20).map(|i| i as f64).collect();
    let (mut a_msp, mut a_egy) = (Vec::new(), Vec::new());
    for seed in 0..5u64 {
        let msp_ood: Vec<f64> = (0..20).map(|i| i as f64 + 0.5 - (seed % 2) as f64).collect();
        let egy_ood: Vec<f64> = (0..20).map(|i| i as f64 + shift[seed as usize]).collect();
        put_scores(&out, "msp", seed, &id, &msp_ood);
        put_scores(&out, "egy", seed, &id, &egy_ood);
        a_msp.push(auroc(&id, &msp_ood).unwrap());
        a_egy.push(auroc(&id, &egy_ood).unwrap());
    }
    run_ok(&[
        "eval",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let md = fs::read_to_string(out.join("eval/table-seeds-0-1-2-3-4.md")).unwrap();
    let row = md.lines().find(|l| l.starts_with("| far |")).unwrap();
    let egy_cell = row.split('|').nth(3).unwrap();
    let p = mann_whitney_one_sided(&a_egy, &a_msp).unwrap();
    (egy_cell.contains("\\*"), p < 0.05)
}

#[test]
fn significance_stars_match_a_direct_mann_whitney_call() {
    for shift in [
        [6.0, 7.0, 8.0, 9.0, 10.0],
        [-1.0, 2.0, 0.0, 1.0, -2.0],
        [1.0, 1.5, 2.0, 2.5, 3.0],
    ] {
        let (starred, significant) = star_case(shift);
        assert_eq!(starred, significant, "{shift:?}");
    }
    assert_eq!(star_case([6.0, 7.0, 8.0, 9.0, 10.0]), (true, true));
    assert_eq!(star_case([-1.0, 2.0, 0.0, 1.0, -2.0]), (false, false));
}
