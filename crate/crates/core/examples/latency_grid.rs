//! Per-object inference latency over batch sizes and point counts.
//!
//!     cargo run --release --example latency_grid -- [runs]

use pcq::cli::latency_tables;
use pcq::scorer::{latency_grid, machine_id, BENCH_BATCHES, BENCH_POINTS};
use pcq::ScorerWeights;

fn main() -> pcq::Result<()> {
    let runs: usize = std::env::args().nth(1).map(|s| s.parse().expect("runs")).unwrap_or(10);
    let weights = ScorerWeights::init(0);
    println!("{}\n{runs} timed runs per cell (the bench subcommand defaults to 50)\n", machine_id());
    let cells = latency_grid(&weights, &BENCH_BATCHES, &BENCH_POINTS, runs, 2, 0, |c| {
        eprintln!("batch {:>2} points {:>4}: {:.2} ms/object", c.batch, c.points, c.ms_per_object);
    })?;
    let (_, grid) = latency_tables(&cells, &BENCH_BATCHES, &BENCH_POINTS);
    print!("{}", grid.to_text());
    Ok(())
}
