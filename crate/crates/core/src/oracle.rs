//! Completion functions `F`: anything mapping a partial cloud to a complete
//! cloud of exactly `COMPLETE_POINTS` points. Labels are derived by running
//! `F` on the clean view and on a crop, so every variant here is a pure
//! function of its input.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{farthest_point_indices, Point, PointCloud};
use crate::metrics::{one_sided_indexed, ShapeBank};
use crate::COMPLETE_POINTS;

/// Standard deviation of the jitter added to duplicated points when upsampling.
pub const UPSAMPLE_SIGMA: f32 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OracleKind {
    Retrieval,
    Mirror,
    Passthrough,
}

impl FromStr for OracleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "retrieval" => Ok(OracleKind::Retrieval),
            "mirror" => Ok(OracleKind::Mirror),
            "passthrough" => Ok(OracleKind::Passthrough),
            other => Err(Error::Config(format!(
                "unknown oracle `{other}` (expected retrieval|mirror|passthrough)"
            ))),
        }
    }
}

impl fmt::Display for OracleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            OracleKind::Retrieval => "retrieval",
            OracleKind::Mirror => "mirror",
            OracleKind::Passthrough => "passthrough",
        })
    }
}

pub trait CompletionOracle: Send + Sync {
    fn kind(&self) -> OracleKind;

    fn complete(&self, partial: &PointCloud) -> Result<PointCloud>;
}

pub fn build_oracle(kind: OracleKind, bank: Arc<ShapeBank>) -> Result<Box<dyn CompletionOracle>> {
    Ok(match kind {
        OracleKind::Retrieval => Box::new(RetrievalOracle::new(bank)?),
        OracleKind::Mirror => Box::new(MirrorOracle),
        OracleKind::Passthrough => Box::new(PassthroughOracle),
    })
}

/// Returns the bank entry that best explains the partial under one-sided
/// Chamfer distance. Partials are compared in the frame they arrive in, which
/// for crops is the box-normalized model frame shared with the bank (see
/// [`crate::synthesis::to_model_frame`]); re-centering a partial on its own
/// centroid would discard exactly the offsets a bad box introduces.
pub struct RetrievalOracle {
    bank: Arc<ShapeBank>,
}

impl RetrievalOracle {
    pub fn new(bank: Arc<ShapeBank>) -> Result<Self> {
        if bank.is_empty() {
            return Err(Error::Bank("retrieval oracle needs a non-empty bank".into()));
        }
        Ok(RetrievalOracle { bank })
    }

    /// Position of the retrieved entry in the bank.
    pub fn retrieve(&self, partial: &PointCloud) -> usize {
        let scores: Vec<f64> = self
            .bank
            .entries()
            .par_iter()
            .map(|e| one_sided_indexed(partial.points(), &e.index))
            .collect();
        let mut best = 0;
        for (i, &s) in scores.iter().enumerate() {
            if s < scores[best] {
                best = i;
            }
        }
        best
    }
}

impl CompletionOracle for RetrievalOracle {
    fn kind(&self) -> OracleKind {
        OracleKind::Retrieval
    }

    fn complete(&self, partial: &PointCloud) -> Result<PointCloud> {
        let e = &self.bank.entries()[self.retrieve(partial)];
        Ok(e.cloud.clone().with_id(e.id.clone()))
    }
}

/// Reflects across `x = 0` and merges with the input.
pub struct MirrorOracle;

impl CompletionOracle for MirrorOracle {
    fn kind(&self) -> OracleKind {
        OracleKind::Mirror
    }

    fn complete(&self, partial: &PointCloud) -> Result<PointCloud> {
        let mut pts = partial.points().to_vec();
        pts.extend(partial.points().iter().map(|p| [-p[0], p[1], p[2]]));
        let union = partial.derive(pts)?;
        resample_to_complete(&union)
    }
}

/// Only resamples to `COMPLETE_POINTS`.
pub struct PassthroughOracle;

impl CompletionOracle for PassthroughOracle {
    fn kind(&self) -> OracleKind {
        OracleKind::Passthrough
    }

    fn complete(&self, partial: &PointCloud) -> Result<PointCloud> {
        resample_to_complete(partial)
    }
}

/// Brings a cloud to exactly `COMPLETE_POINTS` points.
///
/// Larger clouds are reduced by farthest-point sampling; smaller ones keep
/// every input point and are padded with jittered copies (cycling through the
/// input). Each jitter coordinate is normal with sigma `UPSAMPLE_SIGMA`,
/// truncated to `[-sigma, sigma]`. All randomness is seeded from the content
/// hash, so the result is a pure function of the input multiset.
pub fn resample_to_complete(cloud: &PointCloud) -> Result<PointCloud> {
    let n = cloud.len();
    let seed = cloud.content_hash();
    if n == COMPLETE_POINTS {
        return Ok(cloud.clone());
    }
    if n > COMPLETE_POINTS {
        let idx = farthest_point_indices(cloud.points(), COMPLETE_POINTS, seed)?;
        return cloud.derive(idx.into_iter().map(|i| cloud.points()[i]).collect());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0f32, UPSAMPLE_SIGMA).unwrap();
    let jitter = move |rng: &mut ChaCha8Rng| loop {
        let v = normal.sample(rng);
        if v.abs() <= UPSAMPLE_SIGMA {
            break v;
        }
    };
    let src = cloud.points();
    let mut out: Vec<Point> = src.to_vec();
    // start the cycle at a random offset so small inputs aren't biased to the first points
    let offset = rng.gen_range(0..n);
    for j in 0..COMPLETE_POINTS - n {
        let p = src[(offset + j) % n];
        out.push([p[0] + jitter(&mut rng), p[1] + jitter(&mut rng), p[2] + jitter(&mut rng)]);
    }
    cloud.derive(out)
}
