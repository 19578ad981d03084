//! Procedural complete shapes.
//!
//! Object frame: `x` lateral, `y` forward, `z` up. Every shape is symmetric
//! about the `x = 0` plane.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{normalize, Point, PointCloud};
use crate::seed;
use crate::COMPLETE_POINTS;

const SALT_SHAPE: u64 = 0x5348_4150;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Box,
    Ellipsoid,
    CarComposite,
    Cylinder,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 4] = [
        ShapeKind::Box,
        ShapeKind::Ellipsoid,
        ShapeKind::CarComposite,
        ShapeKind::Cylinder,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ShapeKind::Box => "box",
            ShapeKind::Ellipsoid => "ellipsoid",
            ShapeKind::CarComposite => "car_composite",
            ShapeKind::Cylinder => "cylinder",
        }
    }
}

impl fmt::Display for ShapeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for ShapeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ShapeKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown shape kind `{s}`")))
    }
}

/// Dimensions of one shape instance, in raw (pre-normalization) units.
#[derive(Clone, Debug, PartialEq)]
pub enum ShapeParams {
    Box {
        half: [f64; 3],
    },
    Ellipsoid {
        axes: [f64; 3],
    },
    Cylinder {
        radius: f64,
        half_height: f64,
    },
    Car {
        half_length: f64,
        half_width: f64,
        body_bottom: f64,
        body_height: f64,
        cabin_radius: f64,
        cabin_half_length: f64,
        cabin_offset: f64,
        wheel_radius: f64,
        wheel_offset: f64,
    },
}

impl ShapeParams {
    pub fn random(kind: ShapeKind, rng: &mut impl Rng) -> Self {
        match kind {
            ShapeKind::Box => ShapeParams::Box {
                half: [
                    rng.gen_range(0.3..1.0),
                    rng.gen_range(0.3..1.0),
                    rng.gen_range(0.2..0.8),
                ],
            },
            ShapeKind::Ellipsoid => ShapeParams::Ellipsoid {
                axes: [
                    rng.gen_range(0.3..1.0),
                    rng.gen_range(0.3..1.0),
                    rng.gen_range(0.3..1.0),
                ],
            },
            ShapeKind::Cylinder => ShapeParams::Cylinder {
                radius: rng.gen_range(0.2..0.6),
                half_height: rng.gen_range(0.3..1.0),
            },
            ShapeKind::CarComposite => {
                let half_length = rng.gen_range(1.8..2.4);
                let half_width = rng.gen_range(0.8..1.0);
                let wheel_radius = rng.gen_range(0.3..0.4);
                ShapeParams::Car {
                    half_length,
                    half_width,
                    body_bottom: wheel_radius * rng.gen_range(0.5..0.8),
                    body_height: rng.gen_range(0.5..0.8),
                    cabin_radius: half_width * rng.gen_range(0.6..0.85),
                    cabin_half_length: half_length * rng.gen_range(0.35..0.55),
                    cabin_offset: half_length * rng.gen_range(-0.15..0.05),
                    wheel_radius,
                    wheel_offset: half_length * rng.gen_range(0.55..0.7),
                }
            }
        }
    }

    pub fn kind(&self) -> ShapeKind {
        match self {
            ShapeParams::Box { .. } => ShapeKind::Box,
            ShapeParams::Ellipsoid { .. } => ShapeKind::Ellipsoid,
            ShapeParams::Cylinder { .. } => ShapeKind::Cylinder,
            ShapeParams::Car { .. } => ShapeKind::CarComposite,
        }
    }

    fn patches(&self) -> Vec<Patch> {
        match *self {
            ShapeParams::Box { half } => box_patches([0.0; 3], half),
            ShapeParams::Ellipsoid { axes } => vec![Patch::Ellipsoid { axes }],
            ShapeParams::Cylinder {
                radius,
                half_height,
            } => vec![
                Patch::CylinderSide {
                    center: [0.0; 3],
                    axis: 2,
                    radius,
                    half_height,
                    arc: (0.0, 2.0 * PI),
                },
                Patch::Disk {
                    center: [0.0, 0.0, half_height],
                    normal_axis: 2,
                    radius,
                    half: false,
                },
                Patch::Disk {
                    center: [0.0, 0.0, -half_height],
                    normal_axis: 2,
                    radius,
                    half: false,
                },
            ],
            ShapeParams::Car {
                half_length,
                half_width,
                body_bottom,
                body_height,
                cabin_radius,
                cabin_half_length,
                cabin_offset,
                wheel_radius,
                wheel_offset,
            } => {
                let body_top = body_bottom + body_height;
                let mut p = box_patches(
                    [0.0, 0.0, body_bottom + 0.5 * body_height],
                    [half_width, half_length, 0.5 * body_height],
                );
                // half-cylinder cabin lying along y on the roof
                p.push(Patch::CylinderSide {
                    center: [0.0, cabin_offset, body_top],
                    axis: 1,
                    radius: cabin_radius,
                    half_height: cabin_half_length,
                    arc: (0.0, PI),
                });
                for s in [-1.0, 1.0] {
                    p.push(Patch::Disk {
                        center: [0.0, cabin_offset + s * cabin_half_length, body_top],
                        normal_axis: 1,
                        radius: cabin_radius,
                        half: true,
                    });
                }
                for sx in [-1.0, 1.0] {
                    for sy in [-1.0, 1.0] {
                        p.push(Patch::Disk {
                            center: [sx * half_width, sy * wheel_offset, wheel_radius],
                            normal_axis: 0,
                            radius: wheel_radius,
                            half: false,
                        });
                    }
                }
                p
            }
        }
    }

    /// `n` points distributed uniformly by area over the surface.
    pub fn surface_points(&self, n: usize, rng: &mut impl Rng) -> Vec<Point> {
        let patches = self.patches();
        let areas: Vec<f64> = patches.iter().map(Patch::area).collect();
        let total: f64 = areas.iter().sum();
        (0..n)
            .map(|_| {
                let mut t = rng.gen_range(0.0..total);
                let mut i = 0;
                while i + 1 < patches.len() && t >= areas[i] {
                    t -= areas[i];
                    i += 1;
                }
                patches[i].sample(rng).map(|c| c as f32)
            })
            .collect()
    }
}

fn box_patches(c: [f64; 3], h: [f64; 3]) -> Vec<Patch> {
    let mut out = Vec::with_capacity(6);
    for axis in 0..3 {
        for s in [-1.0, 1.0] {
            let mut center = c;
            center[axis] += s * h[axis];
            let (a, b) = ((axis + 1) % 3, (axis + 2) % 3);
            out.push(Patch::Rect {
                center,
                axes: (a, b),
                half: (h[a], h[b]),
            });
        }
    }
    out
}

#[derive(Clone, Debug)]
enum Patch {
    Rect {
        center: [f64; 3],
        axes: (usize, usize),
        half: (f64, f64),
    },
    Disk {
        center: [f64; 3],
        normal_axis: usize,
        radius: f64,
        /// keep only the part above the center (`+z`)
        half: bool,
    },
    CylinderSide {
        center: [f64; 3],
        axis: usize,
        radius: f64,
        half_height: f64,
        arc: (f64, f64),
    },
    Ellipsoid {
        axes: [f64; 3],
    },
}

impl Patch {
    fn area(&self) -> f64 {
        match *self {
            Patch::Rect { half, .. } => 4.0 * half.0 * half.1,
            Patch::Disk { radius, half, .. } => PI * radius * radius * if half { 0.5 } else { 1.0 },
            Patch::CylinderSide {
                radius,
                half_height,
                arc,
                ..
            } => radius * (arc.1 - arc.0) * 2.0 * half_height,
            Patch::Ellipsoid { axes: [a, b, c] } => {
                // Knud Thomsen's approximation; only relative weights matter
                let p = 1.6075;
                let m = ((a * b).powf(p) + (a * c).powf(p) + (b * c).powf(p)) / 3.0;
                4.0 * PI * m.powf(1.0 / p)
            }
        }
    }

    fn sample(&self, rng: &mut impl Rng) -> [f64; 3] {
        match *self {
            Patch::Rect { center, axes, half } => {
                let mut p = center;
                p[axes.0] += rng.gen_range(-half.0..=half.0);
                p[axes.1] += rng.gen_range(-half.1..=half.1);
                p
            }
            Patch::Disk {
                center,
                normal_axis,
                radius,
                half,
            } => {
                let r = radius * rng.gen::<f64>().sqrt();
                let t = if half {
                    rng.gen_range(0.0..PI)
                } else {
                    rng.gen_range(0.0..2.0 * PI)
                };
                let (u, v) = in_plane_axes(normal_axis);
                let mut p = center;
                p[u] += r * t.cos();
                p[v] += r * t.sin();
                p
            }
            Patch::CylinderSide {
                center,
                axis,
                radius,
                half_height,
                arc,
            } => {
                let t = rng.gen_range(arc.0..arc.1);
                let (u, v) = in_plane_axes(axis);
                let mut p = center;
                p[axis] += rng.gen_range(-half_height..=half_height);
                p[u] += radius * t.cos();
                p[v] += radius * t.sin();
                p
            }
            Patch::Ellipsoid { axes: [a, b, c] } => {
                // direction uniform on the sphere, accepted in proportion to
                // the local area stretch of the map onto the ellipsoid
                let max_stretch = (a * b).max(a * c).max(b * c);
                loop {
                    let d = unit_vector(rng);
                    let stretch =
                        ((b * c * d[0]).powi(2) + (a * c * d[1]).powi(2) + (a * b * d[2]).powi(2)).sqrt();
                    if rng.gen::<f64>() * max_stretch <= stretch {
                        return [a * d[0], b * d[1], c * d[2]];
                    }
                }
            }
        }
    }
}

/// The two remaining axes for a plane normal to `axis`; for a horizontal
/// normal the second one is `z`, so half-disks keep their upper half.
fn in_plane_axes(axis: usize) -> (usize, usize) {
    match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    }
}

pub(crate) fn unit_vector(rng: &mut impl Rng) -> [f64; 3] {
    loop {
        let v: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let n2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
        if n2 > 1e-6 && n2 <= 1.0 {
            let n = n2.sqrt();
            return v.map(|c| c / n);
        }
    }
}

/// A seeded shape: its parameters and the PRNG that samples its surface.
pub fn shape_instance(kind: ShapeKind, seed: u64) -> (ShapeParams, ChaCha8Rng) {
    let mut rng = seed::stream(seed, SALT_SHAPE, kind as u64);
    let params = ShapeParams::random(kind, &mut rng);
    (params, rng)
}

/// `COMPLETE_POINTS` surface points of a seeded shape instance, normalized.
pub fn generate_shape(kind: ShapeKind, seed: u64) -> PointCloud {
    let (params, mut rng) = shape_instance(kind, seed);
    let raw = PointCloud::new(params.surface_points(COMPLETE_POINTS, &mut rng))
        .expect("surface samples are finite");
    let (cloud, _) = normalize(&raw).expect("shapes have positive extent");
    cloud.with_id(format!("{kind}-{seed}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_points_lie_on_faces() {
        for seed in 0..5 {
            let (params, mut rng) = shape_instance(ShapeKind::Box, seed);
            let ShapeParams::Box { half } = params else { unreachable!() };
            for p in params.surface_points(2048, &mut rng) {
                let m = (0..3)
                    .map(|k| (p[k] as f64).abs() / half[k])
                    .fold(0.0, f64::max);
                assert!((m - 1.0).abs() < 1e-6, "{p:?} {half:?}");
            }
        }
    }

    #[test]
    fn unit_cube_surface() {
        let params = ShapeParams::Box { half: [1.0; 3] };
        let mut rng = seed::stream(3, 0, 0);
        for p in params.surface_points(2048, &mut rng) {
            let m = p.iter().map(|c| c.abs()).fold(0.0f32, f32::max);
            assert!((m - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn ellipsoid_residual() {
        for seed in 0..5 {
            let (params, mut rng) = shape_instance(ShapeKind::Ellipsoid, seed);
            let ShapeParams::Ellipsoid { axes: [a, b, c] } = params else { unreachable!() };
            for p in params.surface_points(2048, &mut rng) {
                let r = (p[0] as f64 / a).powi(2) + (p[1] as f64 / b).powi(2) + (p[2] as f64 / c).powi(2);
                assert!((r - 1.0).abs() < 1e-4, "{r}");
            }
        }
    }

    #[test]
    fn cylinder_points_on_side_or_caps() {
        let (params, mut rng) = shape_instance(ShapeKind::Cylinder, 1);
        let ShapeParams::Cylinder { radius, half_height } = params else { unreachable!() };
        for p in params.surface_points(2048, &mut rng) {
            let rho = ((p[0] as f64).powi(2) + (p[1] as f64).powi(2)).sqrt();
            let on_side = (rho - radius).abs() < 1e-5 && (p[2] as f64).abs() <= half_height + 1e-6;
            let on_cap = ((p[2] as f64).abs() - half_height).abs() < 1e-6 && rho <= radius + 1e-6;
            assert!(on_side || on_cap);
        }
    }

    #[test]
    fn generated_shapes_are_deterministic_and_normalized() {
        for kind in ShapeKind::ALL {
            let a = generate_shape(kind, 42);
            let b = generate_shape(kind, 42);
            assert_eq!(a, b);
            assert_ne!(a, generate_shape(kind, 43));
            assert_eq!(a.len(), COMPLETE_POINTS);
            let c = a.centroid();
            assert!(c.iter().all(|v| v.abs() < 1e-6));
            let r = a
                .points()
                .iter()
                .map(|p| p.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt())
                .fold(0.0, f64::max);
            assert!((r - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn car_is_mirror_symmetric_in_distribution() {
        let car = generate_shape(ShapeKind::CarComposite, 7);
        let left = car.points().iter().filter(|p| p[0] < 0.0).count() as f64;
        let frac = left / car.len() as f64;
        assert!((frac - 0.5).abs() < 0.05, "{frac}");
    }

    #[test]
    fn kind_names_round_trip() {
        for k in ShapeKind::ALL {
            assert_eq!(k.name().parse::<ShapeKind>().unwrap(), k);
        }
    }
}
