//! Turning a clean partial view into a cluttered, noisy scene.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::render::render_partial;
use super::roi::RoiBox;
use super::shapes::unit_vector;
use crate::error::{Error, Result};
use crate::geometry::{random_subsample, Aabb, Frame, Point, PointCloud, RigidTransform};
use crate::metrics::ShapeBank;
use crate::seed;

pub const GROUND_GRID: usize = 20;
pub const MIN_TARGET_POINTS: usize = 128;
pub const MAX_TARGET_POINTS: usize = 2048;

const SALT_SUBSAMPLE: u64 = 1;
const SALT_GROUND: u64 = 2;
const SALT_CLUTTER: u64 = 3;
const SALT_NOISE: u64 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundSpec {
    /// Offset of the plane above the object's lowest point.
    pub height_offset: f64,
    /// Half side length of the square patch, centered under the object.
    pub half_extent: f64,
}

/// Parameters of one augmented scene.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneSpec {
    pose: RigidTransform,
    pub view: [f64; 3],
    pub clutter: usize,
    pub ground: Option<GroundSpec>,
    pub noise_sigma: f64,
    target_points: usize,
    pub seed: u64,
}

impl SceneSpec {
    pub fn new(
        yaw: f64,
        translation: [f64; 3],
        scale: f64,
        target_points: usize,
        seed: u64,
    ) -> Result<Self> {
        if !(0.8..=1.2).contains(&scale) {
            return Err(Error::InvalidTransform(format!("scale {scale} outside [0.8, 1.2]")));
        }
        if !(MIN_TARGET_POINTS..=MAX_TARGET_POINTS).contains(&target_points) {
            return Err(Error::Config(format!(
                "target point count {target_points} outside [{MIN_TARGET_POINTS}, {MAX_TARGET_POINTS}]"
            )));
        }
        Ok(SceneSpec {
            pose: RigidTransform::from_yaw(yaw.rem_euclid(2.0 * PI), translation, scale)?,
            view: [1.0, 0.0, 0.0],
            clutter: 0,
            ground: None,
            noise_sigma: 0.0,
            target_points,
            seed,
        })
    }

    pub fn pose(&self) -> &RigidTransform {
        &self.pose
    }

    pub fn target_points(&self) -> usize {
        self.target_points
    }

    pub fn with_ground(mut self, ground: GroundSpec) -> Self {
        self.ground = Some(ground);
        self
    }

    pub fn with_clutter(mut self, n: usize) -> Self {
        self.clutter = n;
        self
    }

    pub fn with_noise(mut self, sigma: f64) -> Self {
        self.noise_sigma = sigma.max(0.0);
        self
    }

    pub fn with_view(mut self, view: [f64; 3]) -> Self {
        self.view = view;
        self
    }
}

/// Where a scene point came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PointSource {
    Object,
    Ground,
    Clutter(u16),
}

/// A composed scene with per-point provenance.
#[derive(Clone, Debug)]
pub struct Scene {
    pub cloud: PointCloud,
    pub sources: Vec<PointSource>,
    pub pose: RigidTransform,
    /// Amodal box of the full object (from the complete shape's extent).
    pub object_box: RoiBox,
    /// Ground-level centers of the clutter objects.
    pub clutter_centers: Vec<[f64; 3]>,
    pub ground_points: usize,
}

/// Applies, in order: subsampling to the target count, the yaw/translation
/// pose, the scale, then scene composition (ground patch and clutter) and
/// Gaussian noise. `shape_extent` is the model-frame box of the complete
/// object used for the amodal object box.
pub fn augment_scene(
    partial: &PointCloud,
    shape_extent: &Aabb,
    spec: &SceneSpec,
    clutter_bank: &ShapeBank,
) -> Result<Scene> {
    let object = random_subsample(
        partial,
        spec.target_points,
        seed::derive(spec.seed, SALT_SUBSAMPLE, 0),
    )?;
    let pose = spec.pose.clone();
    let mut points: Vec<Point> = object.points().iter().map(|p| pose.apply(p)).collect();
    let mut sources = vec![PointSource::Object; points.len()];

    let model_center = shape_extent.center();
    let half = shape_extent.half_extents();
    let object_box = RoiBox {
        center: pose.apply_f64(model_center),
        half_extents: half.map(|h| h * pose.scale()),
        yaw: pose.yaw(),
        confidence: 1.0,
    };
    let base_z = object_box.center[2] - object_box.half_extents[2];
    let footprint = object_box.half_extents[0].hypot(object_box.half_extents[1]);

    let mut ground_points = 0;
    if let Some(g) = spec.ground {
        let mut rng = seed::stream(spec.seed, SALT_GROUND, 0);
        let z = base_z + g.height_offset;
        let step = 2.0 * g.half_extent / GROUND_GRID as f64;
        for i in 0..GROUND_GRID {
            for j in 0..GROUND_GRID {
                let x = object_box.center[0] - g.half_extent + (i as f64 + rng.gen_range(0.0..1.0)) * step;
                let y = object_box.center[1] - g.half_extent + (j as f64 + rng.gen_range(0.0..1.0)) * step;
                points.push([x as f32, y as f32, z as f32]);
                sources.push(PointSource::Ground);
            }
        }
        ground_points = GROUND_GRID * GROUND_GRID;
    }

    let mut clutter_centers = Vec::new();
    if spec.clutter > 0 && !clutter_bank.is_empty() {
        let mut rng = seed::stream(spec.seed, SALT_CLUTTER, 0);
        for c in 0..spec.clutter {
            let entry = &clutter_bank.entries()[rng.gen_range(0..clutter_bank.len())];
            let mut view = unit_vector(&mut rng);
            view[2] = view[2].abs();
            let part = render_partial(&entry.cloud, view, rng.gen())?;
            let n = part.len().min(rng.gen_range(64..=512));
            let part = random_subsample(&part, n, rng.gen())?;
            let scale = rng.gen_range(0.8..1.2) * pose.scale();
            let yaw = rng.gen_range(0.0..2.0 * PI);
            let bb = part.aabb();
            let radius = (bb.half_extents()[0].hypot(bb.half_extents()[1])) * scale;
            // outside the object's footprint, possibly overlapping its box margin
            let dist = footprint + radius * rng.gen_range(0.5..1.5);
            let phi = rng.gen_range(0.0..2.0 * PI);
            let cx = object_box.center[0] + dist * phi.cos();
            let cy = object_box.center[1] + dist * phi.sin();
            let place = RigidTransform::from_yaw(yaw, [0.0; 3], scale)?;
            let local_min_z = part
                .points()
                .iter()
                .map(|p| place.apply_f64(p.map(|v| v as f64))[2])
                .fold(f64::INFINITY, f64::min);
            let shift = RigidTransform::new(
                nalgebra::Matrix3::identity(),
                [cx, cy, base_z - local_min_z],
                1.0,
            )?
            .compose(&place);
            for p in part.points() {
                points.push(shift.apply(p));
                sources.push(PointSource::Clutter(c as u16));
            }
            clutter_centers.push([cx, cy, base_z]);
        }
    }

    if spec.noise_sigma > 0.0 {
        let mut rng = seed::stream(spec.seed, SALT_NOISE, 0);
        let normal = Normal::new(0.0, spec.noise_sigma).unwrap();
        for p in &mut points {
            for c in p.iter_mut() {
                *c = (*c as f64 + normal.sample(&mut rng)) as f32;
            }
        }
    }

    Ok(Scene {
        cloud: PointCloud::with_frame(points, Frame::Scene)?,
        sources,
        pose,
        object_box,
        clutter_centers,
        ground_points,
    })
}

/// The composed scene and the object's true pose.
pub fn augment(
    partial: &PointCloud,
    spec: &SceneSpec,
    clutter_bank: &ShapeBank,
) -> Result<(PointCloud, RigidTransform)> {
    let scene = augment_scene(partial, &partial.aabb(), spec, clutter_bank)?;
    Ok((scene.cloud, scene.pose))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthesis::shapes::{generate_shape, ShapeKind};

    fn partial() -> PointCloud {
        let shape = generate_shape(ShapeKind::CarComposite, 3);
        render_partial(&shape, [0.5, -0.8, 0.3], 1).unwrap()
    }

    fn extent(c: &PointCloud) -> [f32; 3] {
        let b = c.aabb();
        std::array::from_fn(|k| b.max[k] - b.min[k])
    }

    #[test]
    fn disabled_enhancements_are_identity() {
        let p = partial();
        let spec = SceneSpec::new(0.0, [0.0; 3], 1.0, p.len(), 9).unwrap();
        let (out, pose) = augment(&p, &spec, &ShapeBank::new()).unwrap();
        assert_eq!(out.points(), p.points());
        assert_eq!(pose, RigidTransform::identity());
    }

    #[test]
    fn pure_scaling() {
        let p = partial();
        let spec = SceneSpec::new(0.0, [0.0; 3], 1.2, p.len(), 9).unwrap();
        let (out, _) = augment(&p, &spec, &ShapeBank::new()).unwrap();
        let (a, b) = (extent(&p), extent(&out));
        for k in 0..3 {
            assert!((b[k] as f64 - 1.2 * a[k] as f64).abs() < 1e-6, "{a:?} {b:?}");
        }
    }

    #[test]
    fn ground_adds_its_points() {
        let p = partial();
        let spec = SceneSpec::new(1.0, [3.0, -2.0, 0.0], 0.9, 300, 4)
            .unwrap()
            .with_ground(GroundSpec {
                height_offset: 0.0,
                half_extent: 2.0,
            });
        let scene = augment_scene(&p, &p.aabb(), &spec, &ShapeBank::new()).unwrap();
        assert_eq!(scene.ground_points, GROUND_GRID * GROUND_GRID);
        assert!(scene.cloud.len() >= 300 + scene.ground_points);
        let ground_z: Vec<f32> = scene
            .cloud
            .points()
            .iter()
            .zip(&scene.sources)
            .filter(|(_, s)| **s == PointSource::Ground)
            .map(|(p, _)| p[2])
            .collect();
        let base = scene.object_box.center[2] - scene.object_box.half_extents[2];
        assert!(ground_z.iter().all(|&z| (z as f64 - base).abs() < 1e-5));
    }

    #[test]
    fn clutter_is_outside_object_footprint() {
        let p = partial();
        let mut bank = ShapeBank::new();
        for s in 0..3 {
            bank.push(format!("b{s}"), "box", generate_shape(ShapeKind::Box, 100 + s)).unwrap();
        }
        let spec = SceneSpec::new(0.3, [0.0; 3], 1.0, 500, 8)
            .unwrap()
            .with_clutter(2)
            .with_noise(0.01);
        let scene = augment_scene(&p, &p.aabb(), &spec, &bank).unwrap();
        assert_eq!(scene.clutter_centers.len(), 2);
        let fp = scene.object_box.half_extents[0].hypot(scene.object_box.half_extents[1]);
        for c in &scene.clutter_centers {
            let d = (c[0] - scene.object_box.center[0]).hypot(c[1] - scene.object_box.center[1]);
            assert!(d > fp);
        }
        assert_eq!(scene.sources.len(), scene.cloud.len());
    }

    #[test]
    fn spec_validation() {
        assert!(SceneSpec::new(0.0, [0.0; 3], 1.3, 500, 0).is_err());
        assert!(SceneSpec::new(0.0, [0.0; 3], 1.0, 100, 0).is_err());
        assert!(SceneSpec::new(0.0, [0.0; 3], 1.0, 4096, 0).is_err());
    }
}
