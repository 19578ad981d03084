//! Quality labels from the completion oracle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::metrics::chamfer;
use crate::oracle::CompletionOracle;
use crate::COMPLETE_POINTS;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Label {
    /// `min(1, s_plus / s_minus)`, or 1 when `s_minus` is zero.
    pub s_g: f64,
    /// CD between the completion of the clean view and the ground truth.
    pub s_plus: f64,
    /// CD between the completion of the crop and the ground truth.
    pub s_minus: f64,
    /// Unclamped ratio; `None` when `s_minus` is zero.
    pub raw_ratio: Option<f64>,
}

impl Label {
    pub fn from_distances(s_plus: f64, s_minus: f64) -> Self {
        if s_minus == 0.0 {
            return Label {
                s_g: 1.0,
                s_plus,
                s_minus,
                raw_ratio: None,
            };
        }
        let ratio = s_plus / s_minus;
        Label {
            s_g: ratio.clamp(0.0, 1.0),
            s_plus,
            s_minus,
            raw_ratio: Some(ratio),
        }
    }
}

/// Label of crop `p_r` relative to the clean view `p`, both judged by how
/// close the oracle's completion lands to `p_g`.
pub fn label_group(
    p: &PointCloud,
    p_r: &PointCloud,
    p_g: &PointCloud,
    oracle: &dyn CompletionOracle,
) -> Result<Label> {
    let f_p = complete_tagged(oracle, p)?;
    label_with_positive(&f_p, p_r, p_g, oracle)
}

/// As [`label_group`] with `F(p)` already computed (it is shared by every
/// crop of a scene).
pub fn label_with_positive(
    f_p: &PointCloud,
    p_r: &PointCloud,
    p_g: &PointCloud,
    oracle: &dyn CompletionOracle,
) -> Result<Label> {
    if p_g.len() != COMPLETE_POINTS {
        return Err(Error::Dataset(format!(
            "ground truth has {} points, expected {COMPLETE_POINTS}",
            p_g.len()
        )));
    }
    let f_r = complete_tagged(oracle, p_r)?;
    Ok(Label::from_distances(chamfer(f_p, p_g)?, chamfer(&f_r, p_g)?))
}

pub(crate) fn complete_tagged(oracle: &dyn CompletionOracle, cloud: &PointCloud) -> Result<PointCloud> {
    oracle.complete(cloud).map_err(|e| Error::Oracle {
        id: cloud.id.clone().unwrap_or_else(|| "<unnamed>".into()),
        source: Box::new(e),
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::geometry::Point;
    use crate::oracle::{OracleKind, PassthroughOracle, RetrievalOracle};
    use crate::synthesis::render::render_partial;
    use crate::synthesis::shapes::{generate_shape, ShapeKind};
    use crate::synthesis::synthetic_bank;
    use rand::Rng;

    #[test]
    fn ratio_rule() {
        assert_eq!(Label::from_distances(0.0, 0.0).s_g, 1.0);
        assert_eq!(Label::from_distances(1.0, 0.0).raw_ratio, None);
        assert_eq!(Label::from_distances(1.0, 2.0).s_g, 0.5);
        let l = Label::from_distances(3.0, 2.0);
        assert_eq!(l.s_g, 1.0);
        assert_eq!(l.raw_ratio, Some(1.5));
    }

    #[test]
    fn identical_crop_gets_one() {
        let g = generate_shape(ShapeKind::Ellipsoid, 4);
        let p = render_partial(&g, [0.3, 0.4, 0.8], 0).unwrap();
        let l = label_group(&p, &p, &g, &PassthroughOracle).unwrap();
        assert_eq!(l.s_g, 1.0);
        assert_eq!(l.s_plus, l.s_minus);
    }

    /// Oracle that returns fixed clouds keyed by input size.
    struct Table(Vec<(usize, PointCloud)>);

    impl CompletionOracle for Table {
        fn kind(&self) -> OracleKind {
            OracleKind::Passthrough
        }
        fn complete(&self, partial: &PointCloud) -> Result<PointCloud> {
            self.0
                .iter()
                .find(|(n, _)| *n == partial.len())
                .map(|(_, c)| c.clone())
                .ok_or(Error::EmptyOperand)
        }
    }

    fn shifted(c: &PointCloud, dx: f32) -> PointCloud {
        PointCloud::new(c.points().iter().map(|p| [p[0] + dx, p[1], p[2]]).collect()).unwrap()
    }

    #[test]
    fn doubled_distance_gives_half() {
        // on a unit lattice a shift by d << 1 keeps every nearest neighbour,
        // so CD is proportional to d^2 and a sqrt(2) larger shift doubles S-
        let g = PointCloud::new((0..COMPLETE_POINTS).map(|i| [(i % 16) as f32, (i / 16 % 16) as f32, (i / 256) as f32]).collect()).unwrap();
        let d = 0.05f32;
        let p = PointCloud::new(vec![[0.0; 3]; 3]).unwrap();
        let p_r = PointCloud::new(vec![[0.0; 3]; 5]).unwrap();
        let oracle = Table(vec![(3, shifted(&g, d)), (5, shifted(&g, d * 2f32.sqrt()))]);
        let l = label_group(&p, &p_r, &g, &oracle).unwrap();
        assert!((l.s_minus / l.s_plus - 2.0).abs() < 1e-4, "{} {}", l.s_plus, l.s_minus);
        assert!((l.s_g - 0.5).abs() < 1e-4, "{}", l.s_g);
        assert_eq!(l.raw_ratio, Some(l.s_g));
    }

    #[test]
    fn oracle_failure_carries_id() {
        let g = generate_shape(ShapeKind::Box, 1);
        let p = PointCloud::new(vec![[0.0; 3]; 3]).unwrap();
        let p_r = PointCloud::new(vec![[0.0; 3]; 4]).unwrap().with_id("crop-7");
        let oracle = Table(vec![(3, g.clone())]);
        match label_group(&p, &p_r, &g, &oracle) {
            Err(Error::Oracle { id, .. }) => assert_eq!(id, "crop-7"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ground_only_crop_scores_low_under_retrieval() {
        // judged over mixed kinds and views, not per instance
        let bank = Arc::new(synthetic_bank(&ShapeKind::ALL, 8, 11).unwrap());
        let oracle = RetrievalOracle::new(bank).unwrap();
        let mut labels = Vec::new();
        for seed in 0..24u64 {
            let g = generate_shape(ShapeKind::ALL[seed as usize % 4], 500 + seed);
            let mut rng = crate::seed::stream(seed, 1, 1);
            let (az, el) = (rng.gen_range(0.0..std::f64::consts::TAU), rng.gen_range(0.1..0.6f64));
            let p = render_partial(&g, [az.cos() * el.cos(), az.sin() * el.cos(), el.sin()], seed).unwrap();
            let zmin = g.points().iter().map(|q| q[2]).fold(f32::MAX, f32::min);
            let ground: Vec<Point> = (0..400)
                .map(|i| {
                    let jitter = rng.gen_range(-0.02..0.02);
                    [(i % 20) as f32 * 0.1 - 1.0 + jitter, (i / 20) as f32 * 0.1 - 1.0, zmin]
                })
                .collect();
            let l = label_group(&p, &PointCloud::new(ground).unwrap(), &g, &oracle).unwrap();
            labels.push(l.s_g);
        }
        // ordering against the clean view's label of 1.0, not an exact value:
        // a slab can land on the flat bottom of an entry the clean view also picks
        let below_clean = labels.iter().filter(|&&s| s < 1.0).count();
        assert!(below_clean * 4 >= labels.len() * 3, "{labels:?}");
        labels.sort_by(f64::total_cmp);
        assert!(labels[labels.len() / 2] <= 0.5, "{labels:?}");
    }
}
