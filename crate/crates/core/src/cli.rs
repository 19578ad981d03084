//! The `pcq` command line.
//!
//! ```text
//! pcq build-dataset|train|filter|eval-mmd|bench --config <file>
//!     [--seed N] [--threshold X] [--out DIR] [--set key=value]...
//! ```
//!
//! Each subcommand reads a flat `key = value` file, applies `--set`
//! overrides and then the dedicated flags, rejects keys it does not know,
//! and echoes the resolved configuration before doing any work. Tables are
//! printed as aligned text and, when an output directory is given, also
//! written there as `.csv` and `.txt`.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 configuration error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::KvConfig;
use crate::error::{Error, Result};
use crate::geometry::{read_cloud, PointCloud};
use crate::metrics::{mmd, ShapeBank};
use crate::oracle::{build_oracle, CompletionOracle, OracleKind};
use crate::scorer::{
    self, latency_grid, load_samples, load_weights, machine_id, roc_auc, save_weights, train_samples, EpochLog,
    LatencyCell, Prepared, ScoreReport, ScorerWeights, TrainConfig, BENCH_BATCHES, BENCH_POINTS, MIN_RUNS,
    TRAIN_KEYS,
};
use crate::synthesis::{build_dataset, BuildConfig, Dataset, Split};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

/// Clouds are scored in batches of this size.
const SCORE_BATCH: usize = 32;

#[derive(Debug, Parser)]
#[command(name = "pcq", version, about = "Point-cloud quality scoring for completion gating")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize a labeled dataset of object crops.
    BuildDataset(CommonArgs),
    /// Train the scorer on a dataset's training split.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        /// Not supported; training always starts from the seeded initialization.
        #[arg(long)]
        resume: bool,
    },
    /// Score clouds and split them into accepted and rejected sets.
    Filter(CommonArgs),
    /// Complete clouds and report MMD before and after filtering.
    EvalMmd(CommonArgs),
    /// Per-object latency over batch sizes and point counts.
    Bench(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Flat key = value configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Master seed (overrides `seed`; default 0).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Acceptance threshold (`threshold`, or `thresholds` for eval-mmd).
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Output directory (overrides `out`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Override a configuration key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code. Errors go to stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                EXIT_CONFIG
            } else {
                EXIT_RUNTIME
            }
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::BuildDataset(a) => cmd_build_dataset(&resolve(&a, "threshold")?),
        Command::Train { common, resume } => {
            if resume {
                return Err(Error::Config(
                    "`--resume` is not supported: training always starts from the seeded initialization".into(),
                ));
            }
            cmd_train(&resolve(&common, "threshold")?)
        }
        Command::Filter(a) => cmd_filter(&resolve(&a, "threshold")?),
        Command::EvalMmd(a) => cmd_eval_mmd(&resolve(&a, "thresholds")?),
        Command::Bench(a) => cmd_bench(&resolve(&a, "threshold")?),
    }
}

/// Config file, then `--set`, then the dedicated flags. `threshold_key`
/// names the key `--threshold` writes to.
fn resolve(a: &CommonArgs, threshold_key: &str) -> Result<KvConfig> {
    let mut kv = KvConfig::load(&a.config)?;
    for s in &a.set {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("`--set {s}`: expected key=value")))?;
        kv.set(k.trim(), v.trim());
    }
    if let Some(seed) = a.seed {
        kv.set("seed", seed);
    }
    if let Some(t) = a.threshold {
        kv.set(threshold_key, t);
    }
    if let Some(out) = &a.out {
        kv.set("out", out.display());
    }
    if !kv.contains("seed") {
        kv.set("seed", 0);
    }
    Ok(kv)
}

fn echo(command: &str, kv: &KvConfig) {
    println!("# pcq {command}: resolved config");
    print!("{}", kv.to_text());
    println!();
}

fn out_dir(kv: &KvConfig) -> Result<Option<PathBuf>> {
    let Some(out) = kv.get::<String>("out")? else {
        return Ok(None);
    };
    let out = PathBuf::from(out);
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    Ok(Some(out))
}

fn require_out(kv: &KvConfig) -> Result<PathBuf> {
    out_dir(kv)?.ok_or_else(|| Error::Config("missing required key `out` (or pass --out)".into()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut buf = Vec::new();
    for it in items {
        serde_json::to_writer(&mut buf, it)?;
        buf.push(b'\n');
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// A table emitted both as CSV and as aligned text.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(headers: &[&str]) -> Self {
        Table {
            headers: headers.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.headers.len(), "row width");
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let field = |s: &String| {
            if s.contains([',', '"', '\n']) {
                format!("\"{}\"", s.replace('"', "\"\""))
            } else {
                s.clone()
            }
        };
        let mut out = String::new();
        for row in std::iter::once(&self.headers).chain(&self.rows) {
            out.push_str(&row.iter().map(field).collect::<Vec<_>>().join(","));
            out.push('\n');
        }
        out
    }

    /// Text columns are left-aligned, numeric ones right-aligned.
    pub fn to_text(&self) -> String {
        let widths: Vec<usize> = (0..self.headers.len())
            .map(|c| {
                std::iter::once(&self.headers[c])
                    .chain(self.rows.iter().map(|r| &r[c]))
                    .map(|s| s.chars().count())
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let numeric: Vec<bool> = (0..self.headers.len())
            .map(|c| !self.rows.is_empty() && self.rows.iter().all(|r| r[c].parse::<f64>().is_ok() || r[c] == "-"))
            .collect();
        let mut out = String::new();
        for row in std::iter::once(&self.headers).chain(&self.rows) {
            let cells: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(c, s)| {
                    if numeric[c] {
                        format!("{s:>w$}", w = widths[c])
                    } else {
                        format!("{s:<w$}", w = widths[c])
                    }
                })
                .collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        }
        out
    }

    /// Prints the text form and, with a directory, writes `stem.csv` and `stem.txt`.
    pub fn emit(&self, dir: Option<&Path>, stem: &str) -> Result<()> {
        print!("{}", self.to_text());
        println!();
        if let Some(dir) = dir {
            write_text(&dir.join(format!("{stem}.csv")), &self.to_csv())?;
            write_text(&dir.join(format!("{stem}.txt")), &self.to_text())?;
        }
        Ok(())
    }
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x:.digits$}"),
        _ => "-".into(),
    }
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    Some(v[v.len() / 2])
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

// ---------------------------------------------------------------- build-dataset

pub fn cmd_build_dataset(kv: &KvConfig) -> Result<()> {
    kv.reject_unknown(crate::synthesis::dataset::BUILD_KEYS)?;
    let out = require_out(kv)?;
    let mut build_kv = kv.clone();
    build_kv.remove("out");
    let cfg = BuildConfig::from_kv(&build_kv)?;
    echo("build-dataset", kv);

    let start = std::time::Instant::now();
    let ds = build_dataset(&cfg, &out)?;
    println!("{} samples in {:.1}s -> {}\n", ds.len(), start.elapsed().as_secs_f64(), out.display());
    dataset_summary(&ds).emit(Some(&out), "summary")
}

/// Label statistics per bucket of a dataset.
pub fn dataset_summary(ds: &Dataset) -> Table {
    let mut t = Table::new(&["bucket", "count", "median_s_g", "below_0.5", "at_least_0.9"]);
    let buckets: [(&str, Box<dyn Fn(&crate::synthesis::SampleRecord) -> bool>); 7] = [
        ("all", Box::new(|_| true)),
        ("train", Box::new(|r| r.split == Split::Train)),
        ("test", Box::new(|r| r.split == Split::Test)),
        ("clean_view", Box::new(|r| r.p_r == r.p)),
        ("roi_crops", Box::new(|r| r.roi_rank.is_some())),
        ("ground_ge_50pct", Box::new(|r| r.ground_fraction >= 0.5)),
        ("clutter_ge_30pct", Box::new(|r| r.clutter_fraction >= 0.3)),
    ];
    for (name, keep) in &buckets {
        let v: Vec<f64> = ds.records.iter().filter(|r| keep(r)).map(|r| r.s_g).collect();
        t.push(vec![
            name.to_string(),
            v.len().to_string(),
            fmt_opt(median(v.clone()), 3),
            v.iter().filter(|&&s| s < 0.5).count().to_string(),
            v.iter().filter(|&&s| s >= 0.9).count().to_string(),
        ]);
    }
    t
}

// ---------------------------------------------------------------- train

pub fn cmd_train(kv: &KvConfig) -> Result<()> {
    let mut keys = TRAIN_KEYS.to_vec();
    keys.extend(["dataset", "out"]);
    kv.reject_unknown(&keys)?;
    let dataset: String = kv.require("dataset")?;
    let out = require_out(kv)?;
    let cfg = TrainConfig::from_kv(kv)?;
    echo("train", kv);

    let ds = Dataset::open(&dataset)?;
    let samples = load_samples(&ds, Split::Train)?;
    if samples.is_empty() {
        return Err(Error::Dataset(format!("{dataset}: no training samples")));
    }
    println!("training on {} samples", samples.len());

    let log_path = out.join("train_log.jsonl");
    let mut log = fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let header = serde_json::json!({ "config": kv.iter().collect::<std::collections::BTreeMap<_, _>>(), "seed": cfg.seed });
    writeln!(log, "{header}").map_err(|e| Error::io(&log_path, e))?;
    let mut io_err = None;
    let outcome = train_samples(&samples, &cfg, |e: &EpochLog| {
        println!("epoch {:>3}  loss {:.6}  {:.1}s", e.epoch, e.mean_loss, e.wall_ms / 1e3);
        let line = serde_json::json!({ "epoch": e.epoch, "mean_loss": e.mean_loss, "wall_ms": e.wall_ms, "samples": e.samples });
        if let Err(err) = writeln!(log, "{line}") {
            io_err.get_or_insert(err);
        }
    })?;
    if let Some(err) = io_err {
        return Err(Error::io(&log_path, err));
    }
    println!();
    let weights_path = out.join("weights.pcqw");
    save_weights(&weights_path, &outcome.weights)?;
    write_text(&out.join("config.txt"), &kv.to_text())?;

    let mut epochs = Table::new(&["epoch", "mean_loss", "wall_s"]);
    for e in &outcome.epochs {
        epochs.push(vec![e.epoch.to_string(), format!("{:.6}", e.mean_loss), format!("{:.2}", e.wall_ms / 1e3)]);
    }
    epochs.emit(Some(&out), "train_log")?;

    let test = load_samples(&ds, Split::Test)?;
    held_out_table(&outcome.weights, &test, &outcome.epochs, cfg.huber_delta).emit(Some(&out), "held_out")?;
    println!("weights -> {}", weights_path.display());
    Ok(())
}

/// Training progress and held-out separation of a trained scorer.
pub fn held_out_table(weights: &ScorerWeights, test: &[scorer::Sample], epochs: &[EpochLog], delta: f64) -> Table {
    let refs: Vec<&Prepared> = test.iter().map(|s| &s.prepared).collect();
    let scores = if refs.is_empty() { Vec::new() } else { weights.score_batch(&refs) };
    let losses: Vec<f64> = scores.iter().zip(test).map(|(s, t)| scorer::huber(s - t.target, delta)).collect();
    let (mut good, mut bad) = (Vec::new(), Vec::new());
    for (s, t) in scores.iter().zip(test) {
        if t.target >= 0.8 {
            good.push(*s);
        } else if t.target <= 0.4 {
            bad.push(*s);
        }
    }
    let ratio = match (epochs.first(), epochs.last()) {
        (Some(a), Some(b)) if a.mean_loss > 0.0 => Some(b.mean_loss / a.mean_loss),
        _ => None,
    };
    let mut t = Table::new(&["metric", "value"]);
    t.push(vec!["first_epoch_loss".into(), fmt_opt(epochs.first().map(|e| e.mean_loss), 6)]);
    t.push(vec!["last_epoch_loss".into(), fmt_opt(epochs.last().map(|e| e.mean_loss), 6)]);
    t.push(vec!["loss_ratio".into(), fmt_opt(ratio, 4)]);
    t.push(vec!["test_samples".into(), test.len().to_string()]);
    t.push(vec!["test_mean_loss".into(), fmt_opt(mean(&losses), 6)]);
    t.push(vec!["test_good_ge_0.8".into(), good.len().to_string()]);
    t.push(vec!["test_bad_le_0.4".into(), bad.len().to_string()]);
    t.push(vec!["test_auc".into(), fmt_opt(roc_auc(&good, &bad), 4)]);
    t
}

// ---------------------------------------------------------------- inputs

/// A cloud to score or evaluate, with where it came from.
#[derive(Clone, Debug)]
pub struct InputCloud {
    pub id: String,
    pub path: PathBuf,
    pub category: Option<String>,
    pub cloud: PointCloud,
}

/// Clouds of a directory: the crops of a dataset (optionally one split),
/// the entries of a shape bank, or every `.pcq`/`.xyz`/`.txt` file in it
/// (sorted by name, id = file stem).
pub fn load_inputs(dir: &Path, split: Option<Split>) -> Result<Vec<InputCloud>> {
    if Dataset::is_dataset_dir(dir) {
        let ds = Dataset::open(dir)?;
        return ds
            .records
            .par_iter()
            .filter(|r| split.is_none_or(|s| r.split == s))
            .map(|r| {
                Ok(InputCloud {
                    id: r.id.clone(),
                    path: dir.join(&r.p_r),
                    category: Some(r.shape_kind.name().to_string()),
                    cloud: ds.crop(r)?,
                })
            })
            .collect();
    }
    if ShapeBank::is_bank_dir(dir) {
        let bank = ShapeBank::load_dir(dir)?;
        return Ok(bank
            .entries()
            .iter()
            .map(|e| InputCloud {
                id: e.id.clone(),
                path: dir.join(format!("{}.pcq", e.id)),
                category: Some(e.category.clone()),
                cloud: e.cloud.clone(),
            })
            .collect());
    }
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| matches!(e, "pcq" | "xyz" | "txt"))
        })
        .collect();
    files.sort();
    files
        .par_iter()
        .map(|p| {
            let id = p.file_stem().and_then(|s| s.to_str()).unwrap_or("cloud").to_string();
            Ok(InputCloud {
                id: id.clone(),
                path: p.clone(),
                category: None,
                cloud: read_cloud(p)?.with_id(id),
            })
        })
        .collect()
}

fn parse_split(kv: &KvConfig, default: &str) -> Result<Option<Split>> {
    let s: String = kv.get_or("split", default.to_string())?;
    match s.as_str() {
        "all" => Ok(None),
        other => other.parse().map(Some),
    }
}

/// Scores in fixed-size batches, keeping input order.
pub fn score_inputs(weights: &ScorerWeights, inputs: &[InputCloud], threshold: f64) -> Result<Vec<ScoreReport>> {
    let mut reports = Vec::with_capacity(inputs.len());
    for chunk in inputs.chunks(SCORE_BATCH) {
        let clouds: Vec<PointCloud> = chunk.iter().map(|i| i.cloud.clone().with_id(i.id.clone())).collect();
        reports.extend(scorer::score_batch(weights, &clouds, threshold)?);
    }
    Ok(reports)
}

// ---------------------------------------------------------------- filter

#[derive(Clone, Debug, Serialize)]
struct ManifestLine<'a> {
    id: &'a str,
    path: String,
    score: f64,
}

pub fn cmd_filter(kv: &KvConfig) -> Result<()> {
    kv.reject_unknown(&["weights", "clouds", "threshold", "split", "out", "seed"])?;
    let weights_path: String = kv.require("weights")?;
    let clouds: String = kv.require("clouds")?;
    let threshold: f64 = kv.get_or("threshold", 0.5)?;
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Config(format!("`threshold` must lie in [0, 1], got {threshold}")));
    }
    let split = parse_split(kv, "all")?;
    let out = out_dir(kv)?;
    echo("filter", kv);

    let weights = load_weights(&weights_path)?;
    let inputs = load_inputs(Path::new(&clouds), split)?;
    let reports = score_inputs(&weights, &inputs, threshold)?;

    let mut table = Table::new(&["id", "score", "verdict", "latency_ms"]);
    for r in &reports {
        table.push(vec![
            r.id.clone(),
            format!("{:.6}", r.score),
            if r.accept { "accept" } else { "reject" }.into(),
            format!("{:.3}", r.latency_ms),
        ]);
    }
    let accepted = reports.iter().filter(|r| r.accept).count();
    let mut summary = Table::new(&["threshold", "total", "accepted", "rejected", "mean_score"]);
    let scores: Vec<f64> = reports.iter().map(|r| r.score).collect();
    summary.push(vec![
        format!("{threshold}"),
        reports.len().to_string(),
        accepted.to_string(),
        (reports.len() - accepted).to_string(),
        fmt_opt(mean(&scores), 4),
    ]);

    match &out {
        Some(dir) => {
            let lines = |accept: bool| -> Vec<ManifestLine> {
                reports
                    .iter()
                    .zip(&inputs)
                    .filter(|(r, _)| r.accept == accept)
                    .map(|(r, i)| ManifestLine {
                        id: &r.id,
                        path: i.path.display().to_string(),
                        score: r.score,
                    })
                    .collect()
            };
            write_jsonl(&dir.join("accepted.jsonl"), &lines(true))?;
            write_jsonl(&dir.join("rejected.jsonl"), &lines(false))?;
            write_jsonl(&dir.join("reports.jsonl"), &reports)?;
            write_text(&dir.join("reports.csv"), &table.to_csv())?;
            write_text(&dir.join("reports.txt"), &table.to_text())?;
            write_text(&dir.join("config.txt"), &kv.to_text())?;
        }
        None => print!("{}\n", table.to_text()),
    }
    summary.emit(out.as_deref(), "summary")
}

// ---------------------------------------------------------------- eval-mmd

/// Per-cloud outcome of completion followed by MMD against a reference bank.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MmdRecord {
    pub id: String,
    pub category: String,
    pub mmd: f64,
    pub matched: String,
    pub score: Option<f64>,
}

/// Completes every input with `oracle` and measures its MMD to `reference`,
/// within the input's category when known, otherwise across all categories.
pub fn complete_and_measure(
    inputs: &[InputCloud],
    oracle: &dyn CompletionOracle,
    reference: &ShapeBank,
    fixed_category: Option<&str>,
) -> Result<Vec<MmdRecord>> {
    inputs
        .par_iter()
        .map(|i| {
            let done = oracle.complete(&i.cloud).map_err(|e| Error::Oracle {
                id: i.id.clone(),
                source: Box::new(e),
            })?;
            let (d, matched, category) = match fixed_category.or(i.category.as_deref()) {
                Some(c) => {
                    let (d, m) = mmd(&done, reference, c)?;
                    (d, m, c.to_string())
                }
                None => {
                    let mut best: Option<(f64, String, String)> = None;
                    for c in reference.categories() {
                        let (d, m) = mmd(&done, reference, &c)?;
                        if best.as_ref().is_none_or(|b| d < b.0) {
                            best = Some((d, m, c));
                        }
                    }
                    best.ok_or_else(|| Error::Bank("reference bank is empty".into()))?
                }
            };
            Ok(MmdRecord {
                id: i.id.clone(),
                category,
                mmd: d,
                matched,
                score: None,
            })
        })
        .collect()
}

/// The before/after table: one row per (filter, bucket) with counts and mean
/// MMD scaled by 1e6. `thresholds` adds a row set per threshold; records
/// without a score only appear in the unfiltered rows.
pub fn mmd_table(records: &[MmdRecord], thresholds: &[f64]) -> Table {
    let mut cats: Vec<&str> = records.iter().map(|r| r.category.as_str()).collect();
    cats.sort_unstable();
    cats.dedup();
    let mut t = Table::new(&["filter", "bucket", "count", "mean_mmd_x1e6"]);
    let mut rows = |name: String, keep: &dyn Fn(&MmdRecord) -> bool| {
        for bucket in std::iter::once("all").chain(cats.iter().copied()) {
            let v: Vec<f64> = records
                .iter()
                .filter(|r| keep(r) && (bucket == "all" || r.category == bucket))
                .map(|r| r.mmd * 1e6)
                .collect();
            t.push(vec![name.clone(), bucket.to_string(), v.len().to_string(), fmt_opt(mean(&v), 2)]);
        }
    };
    rows("unfiltered".into(), &|_| true);
    for &th in thresholds {
        rows(format!("score>={th}"), &|r| r.score.is_some_and(|s| s >= th));
    }
    t
}

pub fn cmd_eval_mmd(kv: &KvConfig) -> Result<()> {
    kv.reject_unknown(&[
        "clouds",
        "oracle",
        "bank",
        "oracle_bank",
        "weights",
        "thresholds",
        "split",
        "category",
        "out",
        "seed",
    ])?;
    let clouds: String = kv.require("clouds")?;
    let oracle_kind: OracleKind = kv.require("oracle")?;
    let clouds_dir = Path::new(&clouds);
    let is_dataset = Dataset::is_dataset_dir(clouds_dir);
    let bank_dir: PathBuf = match kv.get::<String>("bank")? {
        Some(b) => b.into(),
        None if is_dataset => clouds_dir.join(crate::synthesis::dataset::REFERENCE_DIR),
        None if ShapeBank::is_bank_dir(clouds_dir) => clouds_dir.to_path_buf(),
        None => return Err(Error::Config("missing required key `bank`".into())),
    };
    let oracle_bank_dir: PathBuf = match kv.get::<String>("oracle_bank")? {
        Some(b) => b.into(),
        None if is_dataset => clouds_dir.join(crate::synthesis::dataset::BANK_DIR),
        None => bank_dir.clone(),
    };
    let weights_path: Option<String> = kv.get("weights")?;
    let thresholds: Vec<f64> = match (kv.get_list::<f64>("thresholds")?, &weights_path) {
        (Some(t), Some(_)) => t,
        (Some(_), None) => return Err(Error::Config("`thresholds` needs `weights`".into())),
        (None, Some(_)) => vec![0.5, 0.9],
        (None, None) => Vec::new(),
    };
    if let Some(bad) = thresholds.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::Config(format!("threshold {bad} outside [0, 1]")));
    }
    let split = parse_split(kv, if is_dataset { "test" } else { "all" })?;
    let category: Option<String> = kv.get("category")?;
    let out = out_dir(kv)?;
    echo("eval-mmd", kv);

    let reference = ShapeBank::load_dir(&bank_dir)?;
    if reference.is_empty() {
        return Err(Error::Bank(format!("{}: reference bank is empty", bank_dir.display())));
    }
    let oracle_bank = if oracle_kind == OracleKind::Retrieval {
        Arc::new(ShapeBank::load_dir(&oracle_bank_dir)?)
    } else {
        Arc::new(ShapeBank::new())
    };
    let oracle = build_oracle(oracle_kind, oracle_bank)?;
    let inputs = load_inputs(clouds_dir, split)?;
    let mut records = complete_and_measure(&inputs, oracle.as_ref(), &reference, category.as_deref())?;
    if let Some(w) = &weights_path {
        let weights = load_weights(w)?;
        for (r, rep) in records.iter_mut().zip(score_inputs(&weights, &inputs, 0.0)?) {
            r.score = Some(rep.score);
        }
    }

    if let Some(dir) = &out {
        let mut per = Table::new(&["id", "category", "mmd_x1e6", "matched", "score"]);
        for r in &records {
            per.push(vec![
                r.id.clone(),
                r.category.clone(),
                format!("{:.3}", r.mmd * 1e6),
                r.matched.clone(),
                fmt_opt(r.score, 6),
            ]);
        }
        write_text(&dir.join("per_cloud.csv"), &per.to_csv())?;
        write_text(&dir.join("config.txt"), &kv.to_text())?;
    }
    println!("{} clouds completed with the {oracle_kind} oracle\n", records.len());
    mmd_table(&records, &thresholds).emit(out.as_deref(), "mmd")
}

// ---------------------------------------------------------------- bench

pub fn cmd_bench(kv: &KvConfig) -> Result<()> {
    kv.reject_unknown(&["weights", "batches", "points", "runs", "warmup", "seed", "out"])?;
    let batches = kv.get_list::<usize>("batches")?.unwrap_or_else(|| BENCH_BATCHES.to_vec());
    let points = kv.get_list::<usize>("points")?.unwrap_or_else(|| BENCH_POINTS.to_vec());
    let runs: usize = kv.get_or("runs", MIN_RUNS)?;
    let warmup: usize = kv.get_or("warmup", 3)?;
    let seed: u64 = kv.get_or("seed", 0)?;
    let out = out_dir(kv)?;
    echo("bench", kv);

    let weights = match kv.get::<String>("weights")? {
        Some(p) => load_weights(p)?,
        None => ScorerWeights::init(seed),
    };
    let machine = machine_id();
    println!("machine: {machine}");
    if runs < MIN_RUNS {
        println!("note: {runs} runs per cell (fewer than {MIN_RUNS})");
    }
    let cells = latency_grid(&weights, &batches, &points, runs, warmup, seed, |c| {
        println!("batch {:>3}  points {:>5}  {:.3} ms/object", c.batch, c.points, c.ms_per_object);
    })?;
    println!();
    let (long, grid) = latency_tables(&cells, &batches, &points);
    if let Some(dir) = &out {
        write_text(&dir.join("machine.txt"), &format!("{machine}\n"))?;
        write_text(&dir.join("latency_long.csv"), &long.to_csv())?;
        write_text(&dir.join("config.txt"), &kv.to_text())?;
    }
    grid.emit(out.as_deref(), "latency")
}

/// Long form (one row per cell) and the batch × points grid of ms/object.
pub fn latency_tables(cells: &[LatencyCell], batches: &[usize], points: &[usize]) -> (Table, Table) {
    let mut long = Table::new(&["batch", "points", "ms_per_object", "runs"]);
    for c in cells {
        long.push(vec![c.batch.to_string(), c.points.to_string(), format!("{:.4}", c.ms_per_object), c.runs.to_string()]);
    }
    let mut headers = vec!["batch".to_string()];
    headers.extend(points.iter().map(|p| format!("n={p}")));
    let mut grid = Table {
        headers,
        rows: Vec::new(),
    };
    for &b in batches {
        let mut row = vec![b.to_string()];
        for &p in points {
            let c = cells.iter().find(|c| c.batch == b && c.points == p);
            row.push(fmt_opt(c.map(|c| c.ms_per_object), 3));
        }
        grid.push(row);
    }
    (long, grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_forms() {
        let mut t = Table::new(&["name", "value"]);
        t.push(vec!["a".into(), "1.5".into()]);
        t.push(vec!["longer, with comma".into(), "10".into()]);
        assert_eq!(t.to_csv(), "name,value\na,1.5\n\"longer, with comma\",10\n");
        let text = t.to_text();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "name                value");
        assert_eq!(lines[1], "a                     1.5");
        assert_eq!(lines[2], "longer, with comma     10");
    }

    #[test]
    fn mmd_table_rows() {
        let rec = |id: &str, cat: &str, mmd: f64, score: f64| MmdRecord {
            id: id.into(),
            category: cat.into(),
            mmd,
            matched: String::new(),
            score: Some(score),
        };
        let records = [rec("a", "box", 2e-6, 0.95), rec("b", "box", 4e-6, 0.2), rec("c", "cylinder", 6e-6, 0.6)];
        let t = mmd_table(&records, &[0.5, 0.9]);
        let row = |f: &str, b: &str| t.rows.iter().find(|r| r[0] == f && r[1] == b).unwrap().clone();
        assert_eq!(row("unfiltered", "all")[2..], ["3", "4.00"]);
        assert_eq!(row("unfiltered", "box")[2..], ["2", "3.00"]);
        assert_eq!(row("score>=0.5", "all")[2..], ["2", "4.00"]);
        assert_eq!(row("score>=0.9", "all")[2..], ["1", "2.00"]);
        assert_eq!(row("score>=0.9", "cylinder")[2..], ["0", "-"]);
        assert_eq!(t.rows.len(), 9);
    }

    #[test]
    fn resolve_precedence() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.txt");
        fs::write(&cfg, "seed = 1\nthreshold = 0.2\nx = a\n").unwrap();
        let args = CommonArgs {
            config: cfg,
            seed: Some(9),
            threshold: None,
            out: Some("o".into()),
            set: vec!["x=b".into(), "threshold = 0.7".into()],
        };
        let kv = resolve(&args, "threshold").unwrap();
        assert_eq!(kv.raw("seed"), Some("9"));
        assert_eq!(kv.raw("threshold"), Some("0.7"));
        assert_eq!(kv.raw("x"), Some("b"));
        assert_eq!(kv.raw("out"), Some("o"));
        let bad = CommonArgs {
            set: vec!["novalue".into()],
            ..args
        };
        assert!(resolve(&bad, "threshold").unwrap_err().is_config());
    }

    #[test]
    fn exit_codes_for_usage_errors() {
        assert_eq!(main_with_args(["pcq", "frobnicate"]), EXIT_CONFIG);
        assert_eq!(main_with_args(["pcq", "train"]), EXIT_CONFIG);
        assert_eq!(main_with_args(["pcq", "train", "--config", "/nonexistent/cfg"]), EXIT_CONFIG);
    }
}
