//! Point-cloud quality evaluation for completion gating.
//!
//! The crate covers the whole loop: synthesizing labeled partial-scan
//! datasets ([`synthesis`]), completion functions used to derive labels
//! ([`oracle`]), the multi-resolution scoring network and its training
//! ([`scorer`]), and the geometry metrics used to validate it ([`metrics`]).
//! The `pcq` binary wraps the experiment protocols in [`cli`].

pub mod cli;
pub mod config;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod oracle;
pub mod scorer;
pub mod seed;
pub mod synthesis;

#[cfg(feature = "openblas")]
extern crate blas_src;

pub use error::{Error, Result};
pub use geometry::{Aabb, Frame, Point, PointCloud, RigidTransform};
pub use metrics::{chamfer, chamfer_one_sided, mmd, KdIndex, ShapeBank};
pub use oracle::{CompletionOracle, OracleKind};
pub use scorer::{ScoreReport, ScorerWeights, TrainConfig};

/// Every complete cloud (ground truth, bank entry, oracle output) has this many points.
pub const COMPLETE_POINTS: usize = 2048;
