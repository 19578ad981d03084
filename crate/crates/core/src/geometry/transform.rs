use nalgebra::{Matrix3, Rotation3, Vector3};

use super::Point;
use crate::error::{Error, Result};

const ORTHONORMAL_TOL: f64 = 1e-6;

/// Similarity transform `p ↦ scale · R · p + translation`.
#[derive(Clone, Debug, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
    scale: f64,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn new(
        rotation: Matrix3<f64>,
        translation: impl Into<[f64; 3]>,
        scale: f64,
    ) -> Result<Self> {
        let t: [f64; 3] = translation.into();
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidTransform(format!("scale {scale} must be positive")));
        }
        let err = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        if !(err <= ORTHONORMAL_TOL) {
            return Err(Error::InvalidTransform(format!(
                "rotation is not orthonormal (max |RᵀR - I| = {err:e})"
            )));
        }
        if !t.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidTransform("non-finite translation".into()));
        }
        Ok(RigidTransform {
            rotation,
            translation: Vector3::from(t),
            scale,
        })
    }

    pub fn identity() -> Self {
        RigidTransform {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
            scale: 1.0,
        }
    }

    /// Rotation about +z (the ground normal), then scale, then translation.
    pub fn from_yaw(yaw: f64, translation: [f64; 3], scale: f64) -> Result<Self> {
        let r = Rotation3::from_axis_angle(&Vector3::z_axis(), yaw);
        Self::new(*r.matrix(), translation, scale)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Heading of the rotated +x axis in the ground plane.
    pub fn yaw(&self) -> f64 {
        self.rotation[(1, 0)].atan2(self.rotation[(0, 0)])
    }

    pub fn apply_f64(&self, p: [f64; 3]) -> [f64; 3] {
        let v = self.rotation * Vector3::from(p) * self.scale + self.translation;
        [v.x, v.y, v.z]
    }

    pub fn apply(&self, p: &Point) -> Point {
        self.apply_f64(p.map(|c| c as f64)).map(|c| c as f32)
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation * self.scale + self.translation,
            scale: self.scale * other.scale,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        let s = 1.0 / self.scale;
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation) * s,
            scale: s,
        }
    }
}
