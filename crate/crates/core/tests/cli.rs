use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use pcq::scorer::io::load_weights;
use pcq::ScorerWeights;
use serde_json::Value;
use tempfile::TempDir;

fn pcq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pcq")).args(args).output().expect("spawn pcq")
}

fn ok(args: &[&str]) -> String {
    let out = pcq(args);
    assert!(
        out.status.success(),
        "pcq {args:?} exited {:?}\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn config(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.display().to_string()
}

fn jsonl(path: &Path) -> Vec<Value> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A small dataset and a one-epoch model, shared by the read-only tests.
struct Fixture {
    _dir: TempDir,
    root: PathBuf,
    ds: PathBuf,
    weights: PathBuf,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = TempDir::new().unwrap();
        let root = dir.path().to_path_buf();
        let ds = root.join("ds");
        let build = config(&root, "build.cfg", "n = 40\noracle = retrieval\nbank_per_kind = 2\n");
        ok(&["build-dataset", "--config", &build, "--seed", "5", "--out", s(&ds)]);
        let train = config(&root, "train.cfg", &format!("dataset = {}\nepochs = 1\n", ds.display()));
        let tr = root.join("tr");
        ok(&["train", "--config", &train, "--out", s(&tr)]);
        Fixture {
            weights: tr.join("weights.pcqw"),
            _dir: dir,
            root,
            ds,
        }
    })
}

#[test]
fn build_minimal_config_writes_ten_records() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), "b.cfg", "n = 10\noracle = retrieval\nbank_per_kind = 2\n");
    let out = dir.path().join("ds");
    ok(&["build-dataset", "--config", &cfg, "--out", s(&out)]);
    assert_eq!(jsonl(&out.join("manifest.jsonl")).len(), 10);
    for f in ["config.txt", "summary.csv", "summary.txt"] {
        assert!(out.join(f).is_file(), "{f}");
    }
}

#[test]
fn build_missing_oracle_exits_2_naming_the_key() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), "b.cfg", "n = 10\n");
    let out = pcq(&["build-dataset", "--config", &cfg, "--out", s(&dir.path().join("ds"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("oracle"));
}

#[test]
fn unknown_key_exits_2() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), "b.cfg", "n = 10\noracle = retrieval\ncolour = red\n");
    let out = pcq(&["build-dataset", "--config", &cfg, "--out", s(&dir.path().join("ds"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));
}

#[test]
fn build_is_byte_identical_across_runs() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), "b.cfg", "n = 12\noracle = retrieval\nbank_per_kind = 2\n");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["build-dataset", "--config", &cfg, "--seed", "3", "--out", s(&a)]);
    ok(&["build-dataset", "--config", &cfg, "--seed", "3", "--out", s(&b)]);
    assert_eq!(fs::read(a.join("manifest.jsonl")).unwrap(), fs::read(b.join("manifest.jsonl")).unwrap());
    let c = dir.path().join("c");
    ok(&["build-dataset", "--config", &cfg, "--seed", "4", "--out", s(&c)]);
    assert_ne!(fs::read(a.join("manifest.jsonl")).unwrap(), fs::read(c.join("manifest.jsonl")).unwrap());
}

#[test]
fn train_zero_epochs_keeps_initialization() {
    let f = fixture();
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), "t.cfg", &format!("dataset = {}\nepochs = 0\n", f.ds.display()));
    let out = dir.path().join("tr");
    ok(&["train", "--config", &cfg, "--seed", "9", "--out", s(&out)]);
    assert_eq!(load_weights(out.join("weights.pcqw")).unwrap(), ScorerWeights::init(9));
    let log = jsonl(&out.join("train_log.jsonl"));
    assert_eq!(log.len(), 1, "only the config line");
    assert!(log[0].get("config").is_some() && log[0]["seed"] == 9);
}

#[test]
fn train_log_embeds_config_and_epochs() {
    let f = fixture();
    let log = jsonl(&f.weights.with_file_name("train_log.jsonl"));
    assert_eq!(log.len(), 2);
    assert!(log[0].get("config").is_some());
    assert!(log[1]["mean_loss"].as_f64().unwrap().is_finite());
}

#[test]
fn train_resume_is_rejected() {
    let f = fixture();
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), "t.cfg", &format!("dataset = {}\nepochs = 1\n", f.ds.display()));
    let out = pcq(&["train", "--config", &cfg, "--resume", "--out", s(&dir.path().join("tr"))]);
    assert_eq!(out.status.code(), Some(2));
}

fn filter_at(th: &str) -> (Vec<Value>, Vec<Value>, Vec<Value>) {
    let f = fixture();
    let dir = f.root.join(format!("filter-{th}"));
    let cfg = config(
        &f.root,
        &format!("filter-{th}.cfg"),
        &format!("weights = {}\nclouds = {}\n", f.weights.display(), f.ds.display()),
    );
    ok(&["filter", "--config", &cfg, "--threshold", th, "--out", s(&dir)]);
    (
        jsonl(&dir.join("accepted.jsonl")),
        jsonl(&dir.join("rejected.jsonl")),
        jsonl(&dir.join("reports.jsonl")),
    )
}

fn ids(v: &[Value]) -> HashSet<String> {
    v.iter().map(|r| r["id"].as_str().unwrap().to_string()).collect()
}

#[test]
fn filter_gate_is_monotone_and_consistent() {
    let (acc5, rej5, rep5) = filter_at("0.5");
    let (acc9, _, rep9) = filter_at("0.9");
    assert!(ids(&acc9).is_subset(&ids(&acc5)));
    assert_eq!(acc5.len() + rej5.len(), 40);
    for reports in [&rep5, &rep9] {
        for r in reports {
            let (score, th) = (r["score"].as_f64().unwrap(), r["threshold"].as_f64().unwrap());
            assert_eq!(r["accept"].as_bool().unwrap(), score >= th, "{r}");
            assert!(score > 0.0 && score < 1.0);
        }
    }
}

#[test]
fn filter_empty_dir_gives_empty_manifests() {
    let f = fixture();
    let dir = TempDir::new().unwrap();
    let empty = dir.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let cfg = config(
        dir.path(),
        "f.cfg",
        &format!("weights = {}\nclouds = {}\n", f.weights.display(), empty.display()),
    );
    let out = dir.path().join("out");
    ok(&["filter", "--config", &cfg, "--out", s(&out)]);
    for m in ["accepted.jsonl", "rejected.jsonl", "reports.jsonl"] {
        assert!(jsonl(&out.join(m)).is_empty(), "{m}");
    }
}

fn mmd_rows(csv: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(csv)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

#[test]
fn eval_mmd_of_bank_members_is_zero() {
    let f = fixture();
    let bank = f.ds.join("bank");
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), "m.cfg", &format!("clouds = {}\noracle = passthrough\n", bank.display()));
    let out = dir.path().join("m");
    ok(&["eval-mmd", "--config", &cfg, "--out", s(&out)]);
    let rows = mmd_rows(&out.join("mmd.csv"));
    assert!(!rows.is_empty());
    for r in &rows {
        assert_eq!(r[3].parse::<f64>().unwrap(), 0.0, "{r:?}");
    }
    assert!(out.join("mmd.txt").is_file() && out.join("per_cloud.csv").is_file());
}

#[test]
fn eval_mmd_threshold_zero_matches_unfiltered() {
    let f = fixture();
    let dir = TempDir::new().unwrap();
    let cfg = config(
        dir.path(),
        "m.cfg",
        &format!("clouds = {}\noracle = retrieval\nweights = {}\n", f.ds.display(), f.weights.display()),
    );
    let out = dir.path().join("m");
    ok(&["eval-mmd", "--config", &cfg, "--threshold", "0", "--out", s(&out)]);
    let rows = mmd_rows(&out.join("mmd.csv"));
    let (before, after): (Vec<_>, Vec<_>) = rows.iter().partition(|r| r[0] == "unfiltered");
    assert_eq!(before.len(), after.len());
    for (b, a) in before.iter().zip(&after) {
        assert_eq!(a[0], "score>=0");
        assert_eq!(b[1..], a[1..]);
    }
}

#[test]
fn eval_mmd_without_bank_outside_dataset_exits_2() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), "m.cfg", &format!("clouds = {}\noracle = passthrough\n", dir.path().display()));
    assert_eq!(pcq(&["eval-mmd", "--config", &cfg]).status.code(), Some(2));
}

#[test]
fn bench_writes_full_grid() {
    let f = fixture();
    let dir = TempDir::new().unwrap();
    let cfg = config(
        dir.path(),
        "b.cfg",
        &format!("weights = {}\nbatches = 1,2\npoints = 64,128,256\nruns = 3\nwarmup = 0\n", f.weights.display()),
    );
    let out = dir.path().join("b");
    ok(&["bench", "--config", &cfg, "--out", s(&out)]);
    let long = mmd_rows(&out.join("latency_long.csv"));
    assert_eq!(long.len(), 6);
    assert!(!fs::read_to_string(out.join("machine.txt")).unwrap().trim().is_empty());
    let grid = fs::read_to_string(out.join("latency.csv")).unwrap();
    assert_eq!(grid.lines().count(), 1 + 2, "{grid}");
    assert!(out.join("latency.txt").is_file());
}

#[test]
fn help_exits_0_and_bad_subcommand_exits_2() {
    assert_eq!(pcq(&["--help"]).status.code(), Some(0));
    assert_eq!(pcq(&["polish"]).status.code(), Some(2));
    assert_eq!(pcq(&["filter"]).status.code(), Some(2));
}
