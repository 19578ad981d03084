//! Scores a dataset's test crops and reports MMD before and after gating
//! at several thresholds.
//!
//!     cargo run --release --example filter_and_mmd -- <dataset-dir> <weights>
//!
//! Build a dataset with `synthesize_dataset` and weights with `train_scorer`.

use std::sync::Arc;

use pcq::cli::{complete_and_measure, load_inputs, mmd_table, score_inputs};
use pcq::oracle::RetrievalOracle;
use pcq::scorer::load_weights;
use pcq::synthesis::{Dataset, Split};

fn main() -> pcq::Result<()> {
    let mut args = std::env::args().skip(1);
    let (Some(dir), Some(weights)) = (args.next(), args.next()) else {
        eprintln!("usage: filter_and_mmd <dataset-dir> <weights>");
        std::process::exit(2);
    };
    let ds = Dataset::open(&dir)?;
    let oracle = RetrievalOracle::new(Arc::new(ds.bank()?))?;
    let reference = ds.reference_bank()?;
    let inputs = load_inputs(ds.root(), Some(Split::Test))?;
    let weights = load_weights(&weights)?;

    let mut records = complete_and_measure(&inputs, &oracle, &reference, None)?;
    for (r, rep) in records.iter_mut().zip(score_inputs(&weights, &inputs, 0.0)?) {
        r.score = Some(rep.score);
    }
    print!("{}", mmd_table(&records, &[0.3, 0.5, 0.7, 0.9]).to_text());
    Ok(())
}
