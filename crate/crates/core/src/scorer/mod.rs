//! Quality scorer: network, loss, optimizer, training and batch scoring.

pub mod bench;
pub mod io;
pub mod network;
pub mod train;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use bench::{latency_grid, machine_id, LatencyCell, BENCH_BATCHES, BENCH_POINTS, MIN_RUNS};
pub use io::{load_weights, read_weights, save_weights, write_weights};
pub use network::{Network, Prepared, Real, LAYER_DIMS};
pub use train::{load_samples, train, train_samples, Adam, EpochLog, Sample, TrainConfig, TrainOutcome, TRAIN_KEYS};

use crate::error::{Error, Result};
use crate::geometry::PointCloud;

/// Trained parameters as stored on disk.
pub type ScorerWeights = Network<f32>;

/// Huber loss of a residual.
pub fn huber(residual: f64, delta: f64) -> f64 {
    let a = residual.abs();
    if a <= delta {
        0.5 * residual * residual
    } else {
        delta * (a - 0.5 * delta)
    }
}

pub(crate) fn huber_grad(residual: f64, delta: f64) -> f64 {
    if residual.abs() <= delta {
        residual
    } else {
        delta * residual.signum()
    }
}

/// Training loss of one prediction.
pub fn loss(score: f64, target: f64, delta: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::InvalidDelta(delta));
    }
    Ok(huber(score - target, delta))
}

/// Area under the ROC curve for telling `positives` from `negatives` by
/// score (Mann-Whitney; ties count one half). `None` if either side is empty.
pub fn roc_auc(positives: &[f64], negatives: &[f64]) -> Option<f64> {
    if positives.is_empty() || negatives.is_empty() {
        return None;
    }
    let mut wins = 0.0;
    for &p in positives {
        for &n in negatives {
            wins += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    Some(wins / (positives.len() * negatives.len()) as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub id: String,
    pub score: f64,
    pub accept: bool,
    pub threshold: f64,
    /// Wall-clock time per cloud (the batch time divided by the batch size).
    pub latency_ms: f64,
}

fn check_threshold(threshold: f64) -> Result<()> {
    if (0.0..=1.0).contains(&threshold) {
        Ok(())
    } else {
        Err(Error::Config(format!("threshold {threshold} outside [0, 1]")))
    }
}

/// Score of a single cloud.
pub fn score(weights: &ScorerWeights, cloud: &PointCloud) -> f64 {
    weights.score(&Prepared::new(cloud))
}

/// Scores `clouds` as one batch and gates them at `threshold`.
pub fn score_batch(weights: &ScorerWeights, clouds: &[PointCloud], threshold: f64) -> Result<Vec<ScoreReport>> {
    check_threshold(threshold)?;
    if clouds.is_empty() {
        return Ok(Vec::new());
    }
    let start = Instant::now();
    let prepared: Vec<Prepared> = clouds.iter().map(Prepared::new).collect();
    let refs: Vec<&Prepared> = prepared.iter().collect();
    let scores = weights.score_batch(&refs);
    let per = start.elapsed().as_secs_f64() * 1e3 / clouds.len() as f64;
    Ok(clouds
        .iter()
        .zip(scores)
        .enumerate()
        .map(|(i, (c, s))| ScoreReport {
            id: c.id.clone().unwrap_or_else(|| format!("#{i}")),
            score: s,
            accept: s >= threshold,
            threshold,
            latency_ms: per,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn huber_examples() {
        assert_eq!(loss(0.3, 0.3, 2.0).unwrap(), 0.0);
        assert_eq!(huber(1.0, 2.0), 0.5);
        assert_eq!(huber(3.0, 2.0), 4.0);
        assert_eq!(huber(-3.0, 2.0), 4.0);
        assert!(matches!(loss(0.1, 0.2, 0.0), Err(Error::InvalidDelta(_))));
        assert!(loss(0.1, 0.2, -1.0).unwrap_err().is_config());
    }

    #[test]
    fn auc_examples() {
        assert_eq!(roc_auc(&[0.9, 0.8], &[0.1, 0.2]), Some(1.0));
        assert_eq!(roc_auc(&[0.1], &[0.9]), Some(0.0));
        assert_eq!(roc_auc(&[0.5], &[0.5]), Some(0.5));
        // 3 of 4 pairs ordered correctly
        assert_eq!(roc_auc(&[0.3, 0.9], &[0.2, 0.5]), Some(0.75));
        assert_eq!(roc_auc(&[], &[0.5]), None);
    }

    fn clouds() -> Vec<PointCloud> {
        (0..6)
            .map(|i| {
                PointCloud::new(
                    (0..(20 + 37 * i))
                        .map(|k| {
                            let t = k as f32 * 0.37 + i as f32;
                            [t.sin(), (t * 1.3).cos(), (t * 0.7).sin() * 0.5]
                        })
                        .collect(),
                )
                .unwrap()
                .with_id(format!("c{i}"))
            })
            .collect()
    }

    #[test]
    fn threshold_extremes() {
        let w = ScorerWeights::init(4);
        let cs = clouds();
        assert!(score_batch(&w, &cs, 0.0).unwrap().iter().all(|r| r.accept));
        assert!(score_batch(&w, &cs, 1.0).unwrap().iter().all(|r| !r.accept));
        assert!(score_batch(&w, &cs, 1.5).is_err());
        let reports = score_batch(&w, &cs, 0.5).unwrap();
        for (r, c) in reports.iter().zip(&cs) {
            assert_eq!(&r.id, c.id.as_ref().unwrap());
            assert_eq!(r.accept, r.score >= 0.5);
            assert!(r.score > 0.0 && r.score < 1.0);
            assert!(r.latency_ms > 0.0);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn gate_is_monotone(t1 in 0.0f64..=1.0, t2 in 0.0f64..=1.0) {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let w = ScorerWeights::init(9);
            let cs = clouds();
            let a = score_batch(&w, &cs, lo).unwrap();
            let b = score_batch(&w, &cs, hi).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!(!y.accept || x.accept);
            }
        }

        #[test]
        fn score_in_open_unit_interval(seed in 0u64..1000, scale in 0.01f32..100.0) {
            let w = ScorerWeights::init(seed);
            let c = PointCloud::new(
                (0..30).map(|k| [k as f32 * scale, (k * k) as f32 % 7.0, 1.0]).collect(),
            ).unwrap();
            let s = score(&w, &c);
            prop_assert!(s > 0.0 && s < 1.0);
        }
    }
}
