//! Per-object inference latency over a grid of batch sizes and point counts.

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Prepared, ScorerWeights};
use crate::error::{Error, Result};
use crate::geometry::{Point, PointCloud};
use crate::seed;

pub const BENCH_BATCHES: [usize; 5] = [1, 4, 8, 16, 32];
pub const BENCH_POINTS: [usize; 5] = [128, 256, 512, 1024, 2048];
pub const MIN_RUNS: usize = 50;

const SALT_BENCH: u64 = 0x4245_4e43;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyCell {
    pub batch: usize,
    pub points: usize,
    /// Median over runs of batch wall time divided by batch size.
    pub ms_per_object: f64,
    pub runs: usize,
}

/// Random points on the unit sphere, jittered a little off the surface.
pub fn bench_cloud(n: usize, seed: u64) -> PointCloud {
    let mut rng = seed::stream(seed, SALT_BENCH, n as u64);
    let pts: Vec<Point> = (0..n)
        .map(|_| {
            let z: f32 = rng.gen_range(-1.0..1.0);
            let t: f32 = rng.gen_range(0.0..std::f32::consts::TAU);
            let r = (1.0 - z * z).sqrt() * rng.gen_range(0.95..1.0);
            [r * t.cos(), r * t.sin(), z]
        })
        .collect();
    PointCloud::new(pts).expect("finite")
}

/// Times the network on prepared inputs (preprocessing is excluded). Each
/// cell runs `warmup` untimed batches, then `runs` timed ones.
pub fn latency_grid(
    weights: &ScorerWeights,
    batches: &[usize],
    points: &[usize],
    runs: usize,
    warmup: usize,
    seed: u64,
    mut on_cell: impl FnMut(&LatencyCell),
) -> Result<Vec<LatencyCell>> {
    if runs == 0 || batches.contains(&0) || points.contains(&0) {
        return Err(Error::Config("bench needs runs, batch sizes and point counts of at least 1".into()));
    }
    let mut cells = Vec::with_capacity(batches.len() * points.len());
    for &n in points {
        let max_batch = batches.iter().copied().max().unwrap_or(0);
        let inputs: Vec<Prepared> = (0..max_batch)
            .map(|i| Prepared::new(&bench_cloud(n, seed.wrapping_add(i as u64))))
            .collect();
        for &b in batches {
            let refs: Vec<&Prepared> = inputs[..b].iter().collect();
            for _ in 0..warmup {
                std::hint::black_box(weights.score_batch(&refs));
            }
            let mut times: Vec<f64> = (0..runs)
                .map(|_| {
                    let start = Instant::now();
                    std::hint::black_box(weights.score_batch(&refs));
                    start.elapsed().as_secs_f64() * 1e3 / b as f64
                })
                .collect();
            times.sort_by(f64::total_cmp);
            let cell = LatencyCell {
                batch: b,
                points: n,
                ms_per_object: median_sorted(&times),
                runs,
            };
            on_cell(&cell);
            cells.push(cell);
        }
    }
    Ok(cells)
}

fn median_sorted(v: &[f64]) -> f64 {
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// A short description of the host for latency reports.
pub fn machine_id() -> String {
    let cpu = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split_once(':'))
                .map(|(_, v)| v.trim().to_string())
        })
        .unwrap_or_else(|| "unknown cpu".into());
    let host = std::fs::read_to_string("/proc/sys/kernel/hostname")
        .map(|s| s.trim().to_string())
        .unwrap_or_else(|_| "unknown-host".into());
    let threads = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let blas = if cfg!(feature = "openblas") { "openblas" } else { "matrixmultiply" };
    format!(
        "{host}; {cpu}; {threads} thread(s); {}-{}; {blas}",
        std::env::consts::OS,
        std::env::consts::ARCH
    )
}
