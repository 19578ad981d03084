//! Labeled training data: procedural shapes, single-view partials, scene
//! augmentation, detector-like crops and oracle-derived quality labels.

pub mod dataset;
pub mod label;
pub mod render;
pub mod roi;
pub mod scene;
pub mod shapes;

pub use dataset::{build_dataset, BuildConfig, Dataset, SampleRecord, Split};
pub use label::{label_group, Label};
pub use render::render_partial;
pub use roi::{crop_roi, propose_rois, to_model_frame, RoiBox};
pub use scene::{augment, augment_scene, GroundSpec, PointSource, Scene, SceneSpec};
pub use shapes::{generate_shape, ShapeKind, ShapeParams};

use crate::error::Result;
use crate::metrics::ShapeBank;
use crate::seed;

const SALT_BANK: u64 = 0x4241_4e4b;

/// `per_kind` complete shapes of every listed kind, on seeds disjoint from
/// the ones `build_dataset` uses for its ground truths.
pub fn synthetic_bank(kinds: &[ShapeKind], per_kind: usize, seed: u64) -> Result<ShapeBank> {
    let mut bank = ShapeBank::new();
    for &kind in kinds {
        for i in 0..per_kind {
            let s = seed::derive(seed, SALT_BANK, (kind as u64) << 32 | i as u64);
            bank.push(format!("bank-{kind}-{i}"), kind.name(), generate_shape(kind, s))?;
        }
    }
    Ok(bank)
}
