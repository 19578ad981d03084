//! Mini-batch training with Adam.

use std::time::Instant;

use ndarray::Zip;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::network::{Network, Prepared};
use super::{huber, ScorerWeights};
use crate::config::KvConfig;
use crate::error::{Error, Result};
use crate::seed;
use crate::synthesis::{Dataset, Split};

const SALT_SHUFFLE: u64 = 0x5348_5546;

/// Keys understood by [`TrainConfig::from_kv`].
pub const TRAIN_KEYS: &[&str] = &[
    "batch_size",
    "epochs",
    "learning_rate",
    "beta1",
    "beta2",
    "epsilon",
    "huber_delta",
    "seed",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub huber_delta: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            epochs: 12,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            huber_delta: 2.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Reads the training keys of `kv`, ignoring any others.
    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        let d = TrainConfig::default();
        let c = TrainConfig {
            batch_size: kv.get_or("batch_size", d.batch_size)?,
            epochs: kv.get_or("epochs", d.epochs)?,
            learning_rate: kv.get_or("learning_rate", d.learning_rate)?,
            beta1: kv.get_or("beta1", d.beta1)?,
            beta2: kv.get_or("beta2", d.beta2)?,
            epsilon: kv.get_or("epsilon", d.epsilon)?,
            huber_delta: kv.get_or("huber_delta", d.huber_delta)?,
            seed: kv.get_or("seed", d.seed)?,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("`batch_size` must be at least 1".into()));
        }
        if !(self.huber_delta > 0.0) {
            return Err(Error::InvalidDelta(self.huber_delta));
        }
        if !(self.learning_rate > 0.0) || !(self.epsilon > 0.0) {
            return Err(Error::Config("`learning_rate` and `epsilon` must be positive".into()));
        }
        for (k, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Config(format!("`{k}` must lie in [0, 1), got {v}")));
            }
        }
        Ok(())
    }
}

pub struct Adam {
    m: ScorerWeights,
    v: ScorerWeights,
    t: i32,
    lr: f32,
    beta1: f32,
    beta2: f32,
    eps: f32,
}

impl Adam {
    pub fn new(cfg: &TrainConfig) -> Self {
        Adam {
            m: Network::zeros(),
            v: Network::zeros(),
            t: 0,
            lr: cfg.learning_rate as f32,
            beta1: cfg.beta1 as f32,
            beta2: cfg.beta2 as f32,
            eps: cfg.epsilon as f32,
        }
    }

    pub fn step(&mut self, params: &mut ScorerWeights, grad: &ScorerWeights) {
        self.t += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let step = self.lr / c1;
        let c2_sqrt = c2.sqrt();
        let tensors = params
            .tensors_mut()
            .zip(grad.tensors())
            .zip(self.m.tensors_mut().zip(self.v.tensors_mut()));
        for (((_, _, p), (_, _, g)), ((_, _, m), (_, _, v))) in tensors {
            Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= step * *m / ((*v).sqrt() / c2_sqrt + eps);
            });
        }
    }
}

/// A prepared input with its quality label.
#[derive(Clone, Debug)]
pub struct Sample {
    pub prepared: Prepared,
    pub target: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub samples: usize,
    pub wall_ms: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub weights: ScorerWeights,
    pub epochs: Vec<EpochLog>,
}

/// Trains from a seeded initialization. Each epoch visits the samples in
/// a seeded shuffled order; each mini-batch takes one Adam step on the mean
/// loss. The epoch loss is the mean of the per-sample losses seen during the
/// epoch (before each batch's update). `on_epoch` is called after every epoch.
pub fn train_samples(
    samples: &[Sample],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if samples.is_empty() && cfg.epochs > 0 {
        return Err(Error::Dataset("no training samples".into()));
    }
    let mut weights = ScorerWeights::init(cfg.seed);
    let mut adam = Adam::new(cfg);
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        order.sort_unstable();
        order.shuffle(&mut seed::stream(cfg.seed, SALT_SHUFFLE, epoch as u64));
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let encoders: Vec<_> = batch.iter().map(|&i| weights.encode(&samples[i].prepared)).collect();
            let mut features = ndarray::Array2::zeros((batch.len(), encoders[0].feature.len()));
            for (mut row, e) in features.rows_mut().into_iter().zip(&encoders) {
                row.assign(&e.feature);
            }
            let head = weights.head(features);
            let targets: Vec<f64> = batch.iter().map(|&i| samples[i].target).collect();
            total += head
                .scores
                .iter()
                .zip(&targets)
                .map(|(s, t)| huber(s - t, cfg.huber_delta))
                .sum::<f64>();
            let scale = vec![1.0 / batch.len() as f64; batch.len()];
            let mut grad = Network::zeros();
            weights.backward_batch(&encoders, &head, &targets, &scale, cfg.huber_delta, &mut grad);
            adam.step(&mut weights, &grad);
        }
        let entry = EpochLog {
            epoch,
            mean_loss: total / samples.len() as f64,
            samples: samples.len(),
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        };
        on_epoch(&entry);
        log.push(entry);
    }
    if !weights.is_finite() {
        return Err(Error::Dataset("training diverged (non-finite weights)".into()));
    }
    Ok(TrainOutcome { weights, epochs: log })
}

/// Loads and prepares the crops of one split of a dataset.
pub fn load_samples(ds: &Dataset, split: Split) -> Result<Vec<Sample>> {
    let records: Vec<_> = ds.split(split).collect();
    records
        .par_iter()
        .map(|r| {
            Ok(Sample {
                prepared: Prepared::new(&ds.crop(r)?),
                target: r.s_g,
            })
        })
        .collect()
}

/// Trains on the training split of `ds`.
pub fn train(ds: &Dataset, cfg: &TrainConfig, on_epoch: impl FnMut(&EpochLog)) -> Result<TrainOutcome> {
    let samples = load_samples(ds, Split::Train)?;
    if samples.is_empty() {
        return Err(Error::Dataset(format!("{}: no training samples", ds.root().display())));
    }
    train_samples(&samples, cfg, on_epoch)
}
