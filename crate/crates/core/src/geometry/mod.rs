//! Point-cloud value types and the primitives every other module builds on:
//! similarity transforms, normalization, cropping and sampling.
//!
//! Coordinates are stored as `f32`; anything that accumulates (centroids,
//! distances, transforms) is evaluated in `f64`.

mod io;
mod sampling;
mod transform;

pub use io::{read_cloud, read_pcq, read_xyz, write_cloud, write_pcq, write_xyz, PCQ_MAGIC};
pub use sampling::{farthest_point_indices, farthest_point_sample, random_subsample};
pub use transform::RigidTransform;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f32; 3];

/// Coordinate frame a cloud lives in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    #[default]
    Model,
    Scene,
}

/// A non-empty ordered set of finite 3-D points.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    points: Vec<Point>,
    pub id: Option<String>,
    pub frame: Frame,
}

impl PointCloud {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        Self::with_frame(points, Frame::Model)
    }

    pub fn with_frame(points: Vec<Point>, frame: Frame) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyOperand);
        }
        if let Some(i) = points
            .iter()
            .position(|p| !p.iter().all(|c| c.is_finite()))
        {
            return Err(Error::NonFinite(i));
        }
        Ok(PointCloud {
            points,
            id: None,
            frame,
        })
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = Some(id.into());
        self
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Point> {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Always false; kept for clippy's `len_without_is_empty`.
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// A new cloud with the same metadata and different points.
    pub(crate) fn derive(&self, points: Vec<Point>) -> Result<Self> {
        let mut out = PointCloud::with_frame(points, self.frame)?;
        out.id = self.id.clone();
        Ok(out)
    }

    pub fn centroid(&self) -> [f64; 3] {
        let mut c = [0.0f64; 3];
        for p in &self.points {
            for k in 0..3 {
                c[k] += p[k] as f64;
            }
        }
        let n = self.points.len() as f64;
        c.map(|v| v / n)
    }

    pub fn aabb(&self) -> Aabb {
        let mut min = [f32::INFINITY; 3];
        let mut max = [f32::NEG_INFINITY; 3];
        for p in &self.points {
            for k in 0..3 {
                min[k] = min[k].min(p[k]);
                max[k] = max[k].max(p[k]);
            }
        }
        Aabb { min, max }
    }

    /// Points sorted lexicographically with exact duplicates removed.
    ///
    /// The result depends only on the point multiset, not on input order.
    pub fn canonical_distinct(&self) -> Vec<Point> {
        let mut pts = self.points.clone();
        pts.sort_by(|a, b| {
            a[0].total_cmp(&b[0])
                .then(a[1].total_cmp(&b[1]))
                .then(a[2].total_cmp(&b[2]))
        });
        pts.dedup_by(|a, b| a.map(f32::to_bits) == b.map(f32::to_bits));
        pts
    }

    /// Order-independent 64-bit digest of the point multiset.
    pub fn content_hash(&self) -> u64 {
        let mut pts = self.points.clone();
        pts.sort_by(|a, b| {
            a[0].total_cmp(&b[0])
                .then(a[1].total_cmp(&b[1]))
                .then(a[2].total_cmp(&b[2]))
        });
        // FNV-1a over the sorted bit patterns.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for p in &pts {
            for c in p {
                for b in c.to_bits().to_le_bytes() {
                    h ^= b as u64;
                    h = h.wrapping_mul(0x0000_0100_0000_01b3);
                }
            }
        }
        h
    }
}

/// Axis-aligned box, `min <= max` componentwise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Point,
    pub max: Point,
}

impl Aabb {
    pub fn new(min: Point, max: Point) -> Result<Self> {
        if (0..3).any(|k| !(min[k] <= max[k])) {
            return Err(Error::InvalidBox(format!("min {min:?} exceeds max {max:?}")));
        }
        Ok(Aabb { min, max })
    }

    pub fn contains(&self, p: &Point) -> bool {
        (0..3).all(|k| self.min[k] <= p[k] && p[k] <= self.max[k])
    }

    pub fn center(&self) -> [f64; 3] {
        std::array::from_fn(|k| 0.5 * (self.min[k] as f64 + self.max[k] as f64))
    }

    pub fn half_extents(&self) -> [f64; 3] {
        std::array::from_fn(|k| 0.5 * (self.max[k] as f64 - self.min[k] as f64))
    }

    pub fn intersects(&self, other: &Aabb) -> bool {
        (0..3).all(|k| self.min[k] <= other.max[k] && other.min[k] <= self.max[k])
    }
}

/// Center on the centroid and scale so the farthest point has unit norm.
///
/// The returned transform maps the normalized cloud back onto the input.
pub fn normalize(cloud: &PointCloud) -> Result<(PointCloud, RigidTransform)> {
    let c = cloud.centroid();
    let radius = cloud
        .points()
        .iter()
        .map(|p| {
            let d: [f64; 3] = std::array::from_fn(|k| p[k] as f64 - c[k]);
            (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
        })
        .fold(0.0f64, f64::max);
    if radius <= f64::EPSILON * c.iter().fold(1.0f64, |m, v| m.max(v.abs())) {
        return Err(Error::ZeroExtent);
    }
    let pts = cloud
        .points()
        .iter()
        .map(|p| std::array::from_fn(|k| ((p[k] as f64 - c[k]) / radius) as f32))
        .collect();
    let back = RigidTransform::new(nalgebra::Matrix3::identity(), c, radius)?;
    Ok((cloud.derive(pts)?, back))
}

/// `normalize`, except that a zero-extent cloud is only centered.
pub fn normalize_or_center(cloud: &PointCloud) -> PointCloud {
    match normalize(cloud) {
        Ok((n, _)) => n,
        Err(_) => {
            let pts = vec![[0.0f32; 3]; cloud.len()];
            cloud.derive(pts).expect("non-empty")
        }
    }
}

/// Each point `p` becomes `scale * R * p + translation`.
pub fn apply_transform(cloud: &PointCloud, t: &RigidTransform) -> PointCloud {
    let pts = cloud.points().iter().map(|p| t.apply(p)).collect();
    cloud.derive(pts).expect("transform of a valid cloud stays finite")
}

/// Points inside `bbox` (inclusive), in input order. `None` when nothing falls inside.
pub fn crop_aabb(cloud: &PointCloud, bbox: &Aabb) -> Option<PointCloud> {
    let pts: Vec<Point> = cloud
        .points()
        .iter()
        .copied()
        .filter(|p| bbox.contains(p))
        .collect();
    if pts.is_empty() {
        None
    } else {
        cloud.derive(pts).ok()
    }
}

#[inline]
pub(crate) fn sq_dist(a: &Point, b: &Point) -> f64 {
    let dx = a[0] as f64 - b[0] as f64;
    let dy = a[1] as f64 - b[1] as f64;
    let dz = a[2] as f64 - b[2] as f64;
    dx * dx + dy * dy + dz * dz
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cloud(n: usize, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PointCloud::new(
            (0..n)
                .map(|_| std::array::from_fn(|_| rng.gen_range(-3.0f32..3.0)))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn rejects_empty_and_non_finite() {
        assert!(matches!(PointCloud::new(vec![]), Err(Error::EmptyOperand)));
        assert!(matches!(
            PointCloud::new(vec![[0.0, 0.0, 0.0], [f32::NAN, 0.0, 0.0]]),
            Err(Error::NonFinite(1))
        ));
    }

    #[test]
    fn normalize_degenerate_cloud() {
        let c = PointCloud::new(vec![[1.0, 1.0, 1.0]; 4]).unwrap();
        assert!(matches!(normalize(&c), Err(Error::ZeroExtent)));
    }

    #[test]
    fn normalize_two_points() {
        let c = PointCloud::new(vec![[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]]).unwrap();
        let (n, t) = normalize(&c).unwrap();
        assert_eq!(n.points(), &[[-1.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
        assert_eq!(t.rotation(), &nalgebra::Matrix3::identity());
        assert_eq!(t.translation(), &nalgebra::Vector3::new(1.0, 0.0, 0.0));
        assert_eq!(t.scale(), 1.0);
    }

    #[test]
    fn normalize_round_trip() {
        let c = random_cloud(100, 7);
        let (n, t) = normalize(&c).unwrap();
        let max_norm = n
            .points()
            .iter()
            .map(|p| sq_dist(p, &[0.0; 3]).sqrt())
            .fold(0.0, f64::max);
        assert!((max_norm - 1.0).abs() < 1e-6);
        let back = apply_transform(&n, &t);
        for (a, b) in back.points().iter().zip(c.points()) {
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() < 1e-6 * 3.0f32.max(b[k].abs()));
            }
        }
    }

    #[test]
    fn crop_superset_and_point_box() {
        let c = random_cloud(50, 3);
        let all = Aabb::new([-3.0; 3], [3.0; 3]).unwrap();
        assert_eq!(crop_aabb(&c, &all).unwrap(), c);
        let p = c.points()[17];
        let single = crop_aabb(&c, &Aabb::new(p, p).unwrap()).unwrap();
        assert_eq!(single.points(), &[p]);
        let far = Aabb::new([10.0; 3], [11.0; 3]).unwrap();
        assert!(crop_aabb(&c, &far).is_none());
    }

    #[test]
    fn invalid_box() {
        assert!(Aabb::new([0.0, 1.0, 0.0], [1.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn canonical_distinct_ignores_order_and_duplicates() {
        let a = PointCloud::new(vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 0.0, 0.0]]).unwrap();
        let b = PointCloud::new(vec![[0.0, 1.0, 0.0], [1.0, 0.0, 0.0]]).unwrap();
        assert_eq!(a.canonical_distinct(), b.canonical_distinct());
        assert_ne!(a.content_hash(), b.content_hash());
        let a2 = PointCloud::new(vec![[1.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]).unwrap();
        assert_eq!(a.content_hash(), a2.content_hash());
    }
}
