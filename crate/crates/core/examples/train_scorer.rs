//! Trains the scorer on a dataset directory and reports held-out separation.
//!
//!     cargo run --release --example train_scorer -- <dataset-dir> [epochs] [weights-out]

use std::time::Instant;

use pcq::scorer::{load_samples, roc_auc, save_weights, train_samples, TrainConfig};
use pcq::synthesis::{Dataset, Split};

fn main() -> pcq::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = args.next().expect("usage: train_scorer <dataset-dir> [epochs] [weights-out]");
    let mut cfg = TrainConfig::default();
    if let Some(e) = args.next() {
        cfg.epochs = e.parse().expect("epochs");
    }
    let ds = Dataset::open(&dir)?;
    let train = load_samples(&ds, Split::Train)?;
    let test = load_samples(&ds, Split::Test)?;
    println!("train {} / test {} samples", train.len(), test.len());

    let start = Instant::now();
    let out = train_samples(&train, &cfg, |e| {
        println!("epoch {:>2}  loss {:.5}  {:.1}s", e.epoch, e.mean_loss, e.wall_ms / 1e3);
    })?;
    println!("trained in {:.1}s", start.elapsed().as_secs_f64());

    let refs: Vec<_> = test.iter().map(|s| &s.prepared).collect();
    let scores = out.weights.score_batch(&refs);
    let (mut good, mut bad) = (Vec::new(), Vec::new());
    for (s, sample) in scores.iter().zip(&test) {
        if sample.target >= 0.8 {
            good.push(*s);
        } else if sample.target <= 0.4 {
            bad.push(*s);
        }
    }
    match roc_auc(&good, &bad) {
        Some(auc) => println!("held-out AUC (s_g >= 0.8 vs <= 0.4): {auc:.3} ({} vs {})", good.len(), bad.len()),
        None => println!("held-out split lacks one of the classes"),
    }
    if let Some(path) = args.next() {
        save_weights(&path, &out.weights)?;
        println!("weights -> {path}");
    }
    Ok(())
}
