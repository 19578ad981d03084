//! Builds a small labeled dataset and summarizes its labels.
//!
//!     cargo run --release --example synthesize_dataset -- [n] [out-dir] [key=value ...]
//!
//! Extra `key=value` arguments override the build defaults.

use std::time::Instant;

use pcq::config::KvConfig;
use pcq::synthesis::{build_dataset, BuildConfig, Split};

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn main() -> pcq::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map(|s| s.parse().expect("n")).unwrap_or(60);
    let out = args
        .next()
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("pcq-example-dataset"));

    let mut kv = KvConfig::default();
    kv.set("n", n);
    kv.set("oracle", "retrieval");
    for arg in args {
        let (k, v) = arg.split_once('=').expect("overrides are key=value");
        kv.set(k, v);
    }
    let cfg = BuildConfig::from_kv(&kv)?;
    let start = Instant::now();
    let ds = build_dataset(&cfg, &out)?;
    println!("{} samples in {:.1}s -> {}", ds.len(), start.elapsed().as_secs_f64(), out.display());

    let train = ds.split(Split::Train).count();
    println!("train {train}, test {}", ds.len() - train);

    let clean: Vec<f64> = ds.records.iter().filter(|r| r.p_r == r.p).map(|r| r.s_g).collect();
    let grounded: Vec<f64> = ds.records.iter().filter(|r| r.ground_fraction >= 0.5).map(|r| r.s_g).collect();
    let cluttered: Vec<f64> = ds.records.iter().filter(|r| r.clutter_fraction >= 0.3).map(|r| r.s_g).collect();
    let crops: Vec<f64> = ds.records.iter().filter(|r| r.roi_rank.is_some()).map(|r| r.s_g).collect();
    println!("{:<22} {:>6} {:>8}", "bucket", "count", "median");
    for (name, v) in [
        ("clean view", &clean),
        ("all crops", &crops),
        (">=50% ground", &grounded),
        (">=30% clutter", &cluttered),
    ] {
        println!("{:<22} {:>6} {:>8.3}", name, v.len(), median(v.clone()));
    }
    let hist = ds.records.iter().fold([0usize; 5], |mut h, r| {
        h[((r.s_g * 5.0) as usize).min(4)] += 1;
        h
    });
    println!("s_g histogram (fifths): {hist:?}");
    Ok(())
}
