//! Single-viewpoint (2.5D) visibility culling on a depth grid.

use std::f64::consts::PI;

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::seed;

pub const GRID_SIZE: usize = 64;
/// Depth tolerance in normalized units.
pub const DEPTH_TOLERANCE: f64 = 0.02;
/// A point casts a cone of occlusion whose depth grows with lateral distance
/// at this rate (tan 80°), so surfaces inclined up to ~80° stay self-visible.
pub const OCCLUSION_SLOPE: f64 = 5.671_281_819_617_709;
/// Lateral reach of a point's occlusion cone, in mean point spacings
/// (`GRID_SIZE / sqrt(n)` cells), capped at `MAX_REACH_CELLS`.
pub const REACH_SPACINGS: f64 = 4.0;
pub const MAX_REACH_CELLS: usize = 8;

const SALT_RENDER: u64 = 0x5245_4e44;

/// Orthographic camera looking along `-view`.
#[derive(Clone, Debug)]
pub struct DepthCamera {
    u: [f64; 3],
    w: [f64; 3],
    v: [f64; 3],
}

impl DepthCamera {
    /// `view` points from the object toward the camera; `seed` picks the
    /// in-plane orientation of the grid.
    pub fn new(view: [f64; 3], seed: u64) -> Result<Self> {
        let n = (view[0] * view[0] + view[1] * view[1] + view[2] * view[2]).sqrt();
        if !(n > 1e-9) || !n.is_finite() {
            return Err(Error::DegenerateView);
        }
        let v = view.map(|c| c / n);
        // least-aligned axis gives a stable perpendicular
        let k = (0..3)
            .min_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()))
            .unwrap();
        let mut e = [0.0; 3];
        e[k] = 1.0;
        let u0 = normalized(cross(v, e));
        let w0 = cross(v, u0);
        let theta = seed::stream(seed, SALT_RENDER, 0).gen_range(0.0..2.0 * PI);
        let (s, c) = theta.sin_cos();
        let u = std::array::from_fn(|i| c * u0[i] + s * w0[i]);
        let w = std::array::from_fn(|i| -s * u0[i] + c * w0[i]);
        Ok(DepthCamera { u, w, v })
    }

    /// In-plane coordinates and depth (smaller is closer).
    pub fn project(&self, p: &[f32; 3]) -> (f64, f64, f64) {
        let p = p.map(|c| c as f64);
        (dot(p, self.u), dot(p, self.w), -dot(p, self.v))
    }
}

/// Points bucketed on a `GRID_SIZE`² grid over their projected bounding square.
#[derive(Clone, Debug)]
pub struct DepthGrid {
    origin: (f64, f64),
    cell: f64,
    /// Indices of the points in each cell, row-major.
    cells: Vec<Vec<usize>>,
    /// Nearest depth in each cell.
    nearest: Vec<f64>,
}

impl DepthGrid {
    pub fn build(proj: &[(f64, f64, f64)]) -> Self {
        let (mut amin, mut amax, mut bmin, mut bmax) =
            (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(a, b, _) in proj {
            amin = amin.min(a);
            amax = amax.max(a);
            bmin = bmin.min(b);
            bmax = bmax.max(b);
        }
        let span = (amax - amin).max(bmax - bmin);
        let cell = if span > 0.0 { span / GRID_SIZE as f64 } else { 1.0 };
        let mut grid = DepthGrid {
            origin: (amin, bmin),
            cell,
            cells: vec![Vec::new(); GRID_SIZE * GRID_SIZE],
            nearest: vec![f64::INFINITY; GRID_SIZE * GRID_SIZE],
        };
        for (k, &(a, b, d)) in proj.iter().enumerate() {
            let (i, j) = grid.cell_of(a, b);
            grid.cells[i * GRID_SIZE + j].push(k);
            let slot = &mut grid.nearest[i * GRID_SIZE + j];
            *slot = slot.min(d);
        }
        grid
    }

    pub fn cell_of(&self, a: f64, b: f64) -> (usize, usize) {
        let f = |x: f64| ((x / self.cell).floor().max(0.0) as usize).min(GRID_SIZE - 1);
        (f(a - self.origin.0), f(b - self.origin.1))
    }

    /// Nearest depth of any point in `cell`.
    pub fn depth_at(&self, cell: (usize, usize)) -> f64 {
        self.nearest[cell.0 * GRID_SIZE + cell.1]
    }

    pub fn cell_size(&self) -> f64 {
        self.cell
    }

    /// Point indices in the cells within `r` of `cell` (Chebyshev distance).
    fn around(&self, cell: (usize, usize), r: usize) -> impl Iterator<Item = usize> + '_ {
        let rows = cell.0.saturating_sub(r)..(cell.0 + r + 1).min(GRID_SIZE);
        rows.flat_map(move |i| {
            let cols = cell.1.saturating_sub(r)..(cell.1 + r + 1).min(GRID_SIZE);
            cols.flat_map(move |j| self.cells[i * GRID_SIZE + j].iter().copied())
        })
    }
}

/// Occlusion reach in grid cells for a cloud of `n` points.
pub fn reach_cells(n: usize) -> usize {
    let spacing = GRID_SIZE as f64 / (n.max(1) as f64).sqrt();
    ((REACH_SPACINGS * spacing).ceil() as usize).clamp(1, MAX_REACH_CELLS)
}

/// Whether a point at depth `dp` is hidden by one at depth `dq` that is
/// `lateral` away across the view.
pub fn occludes(dq: f64, lateral: f64, dp: f64) -> bool {
    dq + OCCLUSION_SLOPE * lateral + DEPTH_TOLERANCE < dp
}

/// Visible subset of `shape` seen from direction `view`.
///
/// Points are projected onto a `GRID_SIZE`² grid perpendicular to the view.
/// A point is kept unless another point within the occlusion reach lies in
/// front of it by more than the cone slope allows plus `DEPTH_TOLERANCE`;
/// for points sharing a cell this is the nearest-depth-plus-tolerance rule
/// up to the in-cell slope. Output preserves input order.
pub fn render_partial(shape: &PointCloud, view: [f64; 3], seed: u64) -> Result<PointCloud> {
    let cam = DepthCamera::new(view, seed)?;
    let proj: Vec<(f64, f64, f64)> = shape.points().iter().map(|p| cam.project(p)).collect();
    let grid = DepthGrid::build(&proj);
    let r = reach_cells(proj.len());
    let reach = r as f64 * grid.cell;
    let kept = shape
        .points()
        .iter()
        .zip(&proj)
        .filter(|(_, &(a, b, d))| {
            !grid.around(grid.cell_of(a, b), r).any(|k| {
                let (qa, qb, qd) = proj[k];
                let lateral = (qa - a).hypot(qb - b);
                lateral <= reach && occludes(qd, lateral, d)
            })
        })
        .map(|(p, _)| *p)
        .collect();
    shape.derive(kept)
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn normalized(a: [f64; 3]) -> [f64; 3] {
    let n = dot(a, a).sqrt();
    a.map(|c| c / n)
}
