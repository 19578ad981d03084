//! Detector stand-in: jittered oriented boxes around the true object (and
//! sometimes around clutter), plus cropping by such a box.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::scene::Scene;
use crate::error::{Error, Result};
use crate::geometry::{Aabb, Point, PointCloud};
use crate::seed;

/// Center jitter of the first box, as a fraction of the full extent per axis.
pub const CENTER_JITTER: f64 = 0.15;
/// Yaw jitter of the first box, radians (10°).
pub const YAW_JITTER: f64 = 10.0 * std::f64::consts::PI / 180.0;
/// Relative size jitter of the first box.
pub const SIZE_JITTER: f64 = 0.10;

const SALT_ROI: u64 = 0x524f_4931;

/// Oriented box: yaw about +z, half extents along the box's own axes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoiBox {
    pub center: [f64; 3],
    pub half_extents: [f64; 3],
    pub yaw: f64,
    pub confidence: f64,
}

impl RoiBox {
    pub fn new(center: [f64; 3], half_extents: [f64; 3], yaw: f64, confidence: f64) -> Result<Self> {
        if half_extents.iter().any(|h| !(*h > 0.0) || !h.is_finite()) {
            return Err(Error::InvalidBox(format!("half extents {half_extents:?}")));
        }
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::InvalidBox(format!("confidence {confidence}")));
        }
        Ok(RoiBox {
            center,
            half_extents,
            yaw,
            confidence,
        })
    }

    /// Coordinates of `p` in the box frame (origin at the center, axes
    /// aligned with the box).
    pub fn to_local(&self, p: [f64; 3]) -> [f64; 3] {
        let (s, c) = self.yaw.sin_cos();
        let d = [p[0] - self.center[0], p[1] - self.center[1], p[2] - self.center[2]];
        [c * d[0] + s * d[1], -s * d[0] + c * d[1], d[2]]
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        let l = self.to_local(p);
        (0..3).all(|k| l[k].abs() <= self.half_extents[k])
    }
}

/// `k` candidate boxes sorted by strictly descending confidence.
///
/// Box `i` is the true object box perturbed at level `i + 1`: center offset
/// up to `CENTER_JITTER · extent · level · amplitude` per axis, yaw up to
/// `YAW_JITTER · level · amplitude`, size up to `SIZE_JITTER · level ·
/// amplitude`. From the third box on, a box is re-centered on a clutter
/// object with probability one half. Confidence falls with rank and with
/// the box's own jitter magnitude; with `amplitude = 0` box 0 is the true box
/// with confidence 1.
pub fn propose_rois(scene: &Scene, k: usize, seed: u64, amplitude: f64) -> Result<Vec<RoiBox>> {
    if k == 0 {
        return Err(Error::Config("need at least one ROI".into()));
    }
    let amplitude = amplitude.max(0.0);
    let truth = scene.object_box;
    let mut rng = seed::stream(seed, SALT_ROI, 0);
    let mut out = Vec::with_capacity(k);
    for i in 0..k {
        let level = (i + 1) as f64 * amplitude;
        let u: [f64; 5] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let on_clutter = i >= 2 && !scene.clutter_centers.is_empty() && rng.gen_bool(0.5);
        let pick = rng.gen_range(0..scene.clutter_centers.len().max(1));

        let base = if on_clutter {
            let c = scene.clutter_centers[pick];
            [c[0], c[1], c[2] + truth.half_extents[2]]
        } else {
            truth.center
        };
        // offsets are drawn in the box frame and rotated into the world
        let local = [
            u[0] * CENTER_JITTER * 2.0 * truth.half_extents[0] * level,
            u[1] * CENTER_JITTER * 2.0 * truth.half_extents[1] * level,
            u[2] * CENTER_JITTER * 2.0 * truth.half_extents[2] * level,
        ];
        let (s, c) = truth.yaw.sin_cos();
        let center = [
            base[0] + c * local[0] - s * local[1],
            base[1] + s * local[0] + c * local[1],
            base[2] + local[2],
        ];
        let yaw = truth.yaw + u[3] * YAW_JITTER * level;
        let factor = (1.0 + u[4] * SIZE_JITTER * level).max(0.1);
        let magnitude = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let confidence = (k - i) as f64 - amplitude.min(1.0) * magnitude;
        out.push(RoiBox::new(
            center,
            truth.half_extents.map(|h| h * factor),
            yaw,
            confidence / k as f64,
        )?);
    }
    Ok(out)
}

/// Points of `cloud` inside `roi`, expressed in the box frame, with their
/// indices into `cloud`. `None` when the box is empty.
pub fn crop_roi(cloud: &PointCloud, roi: &RoiBox) -> Option<(PointCloud, Vec<usize>)> {
    let mut pts: Vec<Point> = Vec::new();
    let mut idx = Vec::new();
    for (i, p) in cloud.points().iter().enumerate() {
        let l = roi.to_local(p.map(|v| v as f64));
        if (0..3).all(|k| l[k].abs() <= roi.half_extents[k]) {
            pts.push(l.map(|v| v as f32));
            idx.push(i);
        }
    }
    if pts.is_empty() {
        return None;
    }
    let out = PointCloud::new(pts).ok()?;
    Some((out, idx))
}

/// Maps a box-frame crop into the model frame of `template`, the way a
/// detection is normalized before completion: the box is read as enclosing
/// the template's bounding box, so coordinates are divided by the mean ratio
/// of box to template half extents and shifted onto the template box center.
/// For the true object box this undoes the scene pose exactly.
pub fn to_model_frame(crop: &PointCloud, roi: &RoiBox, template: &Aabb) -> PointCloud {
    let half = template.half_extents();
    let center = template.center();
    let ratio = (0..3).map(|k| roi.half_extents[k] / half[k].max(1e-12)).sum::<f64>() / 3.0;
    let pts = crop
        .points()
        .iter()
        .map(|p| std::array::from_fn(|k| (p[k] as f64 / ratio + center[k]) as f32))
        .collect();
    crop.derive(pts).expect("finite")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::ShapeBank;
    use crate::synthesis::render::render_partial;
    use crate::synthesis::scene::{augment_scene, SceneSpec};
    use crate::synthesis::shapes::{generate_shape, ShapeKind};

    fn scene(seed: u64, clutter: usize) -> Scene {
        let shape = generate_shape(ShapeKind::CarComposite, seed);
        let part = render_partial(&shape, [0.6, 0.5, 0.4], seed).unwrap();
        let mut bank = ShapeBank::new();
        bank.push("b", "box", generate_shape(ShapeKind::Box, 77)).unwrap();
        let spec = SceneSpec::new(0.7 + seed as f64, [2.0, -1.0, 0.5], 1.1, 400, seed)
            .unwrap()
            .with_clutter(clutter);
        augment_scene(&part, &shape.aabb(), &spec, &bank).unwrap()
    }

    #[test]
    fn zero_amplitude_gives_true_box() {
        let s = scene(1, 0);
        let rois = propose_rois(&s, 5, 3, 0.0).unwrap();
        assert_eq!(rois[0].center, s.object_box.center);
        assert_eq!(rois[0].half_extents, s.object_box.half_extents);
        assert_eq!(rois[0].yaw, s.object_box.yaw);
        assert_eq!(rois[0].confidence, 1.0);
    }

    #[test]
    fn confidences_strictly_descending() {
        let s = scene(2, 2);
        for seed in 0..50 {
            for amp in [0.0, 0.5, 1.0, 2.0] {
                let rois = propose_rois(&s, 5, seed, amp).unwrap();
                assert_eq!(rois.len(), 5);
                for w in rois.windows(2) {
                    assert!(w[0].confidence > w[1].confidence);
                }
                assert!(rois.iter().all(|r| (0.0..=1.0).contains(&r.confidence)));
            }
        }
    }

    #[test]
    fn first_box_offset_bounded() {
        let s = scene(3, 1);
        let t = s.object_box;
        let mut worst = 0.0f64;
        for seed in 0..1000 {
            let r = propose_rois(&s, 5, seed, 1.0).unwrap()[0];
            let l = t.to_local(r.center);
            for k in 0..3 {
                let frac = l[k].abs() / (2.0 * t.half_extents[k]);
                worst = worst.max(frac);
            }
            // center stays inside the true box, so the two boxes intersect
            assert!(t.contains(r.center));
        }
        assert!(worst <= CENTER_JITTER + 1e-9, "{worst}");
        assert!(worst > 0.1);
    }

    #[test]
    fn crop_matches_brute_force_and_is_local() {
        let s = scene(4, 2);
        let roi = propose_rois(&s, 1, 0, 0.0).unwrap()[0];
        let (crop, idx) = crop_roi(&s.cloud, &roi).unwrap();
        let expected: Vec<usize> = (0..s.cloud.len())
            .filter(|&i| roi.contains(s.cloud.points()[i].map(|v| v as f64)))
            .collect();
        assert_eq!(idx, expected);
        for p in crop.points() {
            for k in 0..3 {
                assert!((p[k] as f64).abs() <= roi.half_extents[k] + 1e-5);
            }
        }
    }

    #[test]
    fn empty_box_is_none() {
        let s = scene(5, 0);
        let far = RoiBox::new([1e3, 1e3, 1e3], [0.1; 3], 0.0, 0.5).unwrap();
        assert!(crop_roi(&s.cloud, &far).is_none());
        assert!(RoiBox::new([0.0; 3], [0.0, 1.0, 1.0], 0.0, 0.5).is_err());
    }
}
