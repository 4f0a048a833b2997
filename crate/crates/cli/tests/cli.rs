use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const TINY: &str = r#"{
  "model": {
    "encoder": { "depth": 1, "filters_per_branch": 4, "kernel_lengths": [9, 5, 3], "bottleneck_channels": 4 },
    "embedding_dim": 8,
    "classifier_hidden": 8
  },
  "optimizer": { "lr": 0.003, "batch_size": 16, "max_epochs": 1, "patience": 0 }
}"#;

fn ecgcl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ecgcl"))
        .args(args)
        .env_remove("ECGCL_DATA_DIR")
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn ecgcl")
}

fn ok(args: &[&str]) -> String {
    let out = ecgcl(args);
    assert!(
        out.status.success(),
        "ecgcl {args:?} failed ({:?}): {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Workspace {
    _tmp: tempfile::TempDir,
    config: PathBuf,
    data: PathBuf,
    out: PathBuf,
}

fn workspace(n: usize) -> Workspace {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("tiny.json");
    std::fs::write(&config, TINY).unwrap();
    let data = tmp.path().join("data");
    let out = tmp.path().join("out");
    ok(&["synth", "--n", &n.to_string(), "--seed", "2", "--out", s(&data)]);
    Workspace {
        _tmp: tmp,
        config,
        data,
        out,
    }
}

fn summary(stdout: &str) -> Value {
    serde_json::from_str(stdout).unwrap_or_else(|e| panic!("{e}: {stdout}"))
}

#[test]
fn two_step_protocol_end_to_end() {
    let w = workspace(160);
    let common = ["--config", s(&w.config), "--data-dir", s(&w.data), "--out", s(&w.out)];

    let teacher = summary(&ok(&[&["train-teacher"][..], &common].concat()));
    assert_eq!(teacher["leads"], 12);
    let teacher_dir = teacher["checkpoint"].as_str().unwrap().to_string();
    assert!(Path::new(&teacher_dir).join("params.bin").is_file());
    let name = Path::new(&teacher_dir).file_name().unwrap().to_str().unwrap().to_string();
    assert!(w.out.join("logs").join(format!("{name}.csv")).is_file());
    assert!(w.out.join("logs").join(format!("{name}.config.json")).is_file());

    let export = ok(&["export-embeddings", "--teacher", &teacher_dir, "--data-dir", s(&w.data), "--out", s(&w.out)]);
    assert!(export.contains("embeddings of dimension 8"), "{export}");

    let student = summary(&ok(&[
        &["train-student", "--teacher", &teacher_dir, "--subset", "3", "--alpha", "0.5", "--sim", "cosine"][..],
        &common,
    ]
    .concat()));
    assert_eq!(student["role"], "student");
    assert_eq!(student["leads"], 3);

    let baseline = summary(&ok(&[&["train-baseline", "--subset", "3"][..], &common].concat()));
    assert_eq!(baseline["role"], "baseline");

    // eval reproduces the recorded metric of the stored checkpoint
    let eval = summary(&ok(&[
        "eval",
        "--checkpoint",
        student["checkpoint"].as_str().unwrap(),
        "--data-dir",
        s(&w.data),
    ]));
    let recorded = eval["recorded_macro_auc"].as_f64().unwrap();
    let measured = eval["report"]["macro_auc"].as_f64().unwrap();
    assert!((recorded - measured).abs() < 1e-6, "{recorded} vs {measured}");
    assert_eq!(eval["report"]["pseudo"], true);
}

#[test]
fn training_twice_gives_the_same_checkpoint() {
    let w = workspace(120);
    let args = [
        "train-baseline",
        "--subset",
        "2",
        "--config",
        s(&w.config),
        "--data-dir",
        s(&w.data),
        "--out",
        s(&w.out),
    ];
    let a = summary(&ok(&args));
    let b = summary(&ok(&args));
    assert_eq!(a["content_hash"], b["content_hash"]);
    assert_eq!(a["config_hash"], b["config_hash"]);
    let c = summary(&ok(&[&args[..], &["--seed", "5"]].concat()));
    assert_ne!(a["config_hash"], c["config_hash"]);
}

#[test]
fn prepare_with_a_missing_directory_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("cache");
    let res = ecgcl(&["prepare", "--data-dir", s(&tmp.path().join("nope")), "--out", s(&out)]);
    assert_eq!(res.status.code(), Some(2));
    assert!(!out.exists());
    assert_eq!(std::fs::read_dir(tmp.path()).unwrap().count(), 0, "partial files left behind");
}

#[test]
fn prepare_of_an_incomplete_directory_leaves_nothing_behind() {
    let tmp = tempfile::tempdir().unwrap();
    let raw = tmp.path().join("raw");
    std::fs::create_dir(&raw).unwrap();
    let out = tmp.path().join("cache");
    let res = ecgcl(&["prepare", "--data-dir", s(&raw), "--out", s(&out)]);
    assert_eq!(res.status.code(), Some(2), "{}", String::from_utf8_lossy(&res.stderr));
    assert!(!out.exists());
}

#[test]
fn bad_arguments_exit_with_code_two() {
    let w = workspace(60);
    let base = ["--config", s(&w.config), "--data-dir", s(&w.data), "--out", s(&w.out)];
    for extra in [
        &["train-baseline", "--subset", "5"][..],
        &["train-baseline", "--subset", "2", "--sim", "manhattan"][..],
        &["train-baseline", "--subset", "2", "--optimizer", "lbfgs"][..],
        &["train-baseline", "--subset", "12"][..],
    ] {
        let res = ecgcl(&[extra, &base].concat());
        assert_eq!(res.status.code(), Some(2), "{extra:?}: {}", String::from_utf8_lossy(&res.stderr));
    }
    let res = ecgcl(&["eval", "--checkpoint", s(&w.out.join("missing")), "--data-dir", s(&w.data)]);
    assert_eq!(res.status.code(), Some(2));
    let res = ecgcl(&["train-teacher", "--config", s(&w.out.join("missing.json")), "--data-dir", s(&w.data)]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn corrupted_checkpoint_is_rejected_on_eval() {
    let w = workspace(80);
    let teacher = summary(&ok(&[
        "train-teacher",
        "--config",
        s(&w.config),
        "--data-dir",
        s(&w.data),
        "--out",
        s(&w.out),
    ]));
    let dir = PathBuf::from(teacher["checkpoint"].as_str().unwrap());
    let params = dir.join("params.bin");
    let mut bytes = std::fs::read(&params).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 0x40;
    std::fs::write(&params, bytes).unwrap();
    let res = ecgcl(&["eval", "--checkpoint", s(&dir), "--data-dir", s(&w.data)]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("hash"));
}

#[test]
fn reproduce_table_writes_the_table_and_resumes() {
    let w = workspace(120);
    let args = [
        "reproduce-table",
        "--subsets",
        "2",
        "--seeds",
        "2",
        "--jobs",
        "2",
        "--config",
        s(&w.config),
        "--data-dir",
        s(&w.data),
        "--out",
        s(&w.out),
    ];
    let first = ok(&args);
    let row = |leads: &str| first.lines().find(|l| l.starts_with(&format!("| {leads} |"))).unwrap_or_default().to_string();
    assert!(row("12").contains("| N/A |") && !row("12").starts_with("| 12 | N/A"), "{first}");
    assert!(!row("2").contains("N/A"), "{first}");
    assert!(row("6").starts_with("| 6 | N/A | N/A"), "{first}");
    let table = std::fs::read_to_string(w.out.join("table.md")).unwrap();
    let results = std::fs::read_to_string(w.out.join("results.csv")).unwrap();
    // teacher + 2 seeds x (student, baseline)
    assert_eq!(results.lines().count(), 1 + 1 + 4, "{results}");
    assert!(w.out.join("table.csv").is_file());

    let ckpts = w.out.join("checkpoints");
    let stamp = |p: &Path| std::fs::metadata(p.join("params.bin")).unwrap().modified().unwrap();
    let before: Vec<_> = std::fs::read_dir(&ckpts).unwrap().map(|e| e.unwrap().path()).collect();
    let times: Vec<_> = before.iter().map(|p| stamp(p)).collect();

    let second = ok(&args);
    assert_eq!(std::fs::read_to_string(w.out.join("table.md")).unwrap(), table);
    assert_eq!(std::fs::read_to_string(w.out.join("results.csv")).unwrap(), results);
    assert_eq!(first, second);
    let after: Vec<_> = before.iter().map(|p| stamp(p)).collect();
    assert_eq!(times, after, "completed legs were retrained");
}
