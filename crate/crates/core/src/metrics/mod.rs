//! Set-to-set distances: Chamfer distance (k-d tree and brute-force paths)
//! and Minimal Matching Distance against a [`ShapeBank`].
//!
//! Chamfer distance here is the squared, per-side averaged form:
//! `CD(A, B) = mean_a min_b |a-b|^2 + mean_b min_a |b-a|^2`.

mod bank;
mod kdtree;

pub use bank::{BankEntry, BankRecord, ShapeBank};
pub use kdtree::{KdIndex, DEFAULT_LEAF_SIZE};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{sq_dist, Point, PointCloud};

/// Mean over `a` of the squared distance to the nearest point indexed by `b`.
pub fn one_sided_indexed(a: &[Point], b: &KdIndex) -> f64 {
    let sum: f64 = a
        .iter()
        .map(|p| b.nearest(p).map_or(f64::INFINITY, |(_, d)| d))
        .sum();
    sum / a.len() as f64
}

pub fn chamfer_one_sided(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    Ok(one_sided_indexed(a.points(), &KdIndex::new(b)))
}

pub fn chamfer(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    Ok(chamfer_indexed(a.points(), &KdIndex::new(a), b.points(), &KdIndex::new(b)))
}

/// Chamfer distance from prebuilt indexes.
pub fn chamfer_indexed(a: &[Point], a_index: &KdIndex, b: &[Point], b_index: &KdIndex) -> f64 {
    one_sided_indexed(a, b_index) + one_sided_indexed(b, a_index)
}

fn one_sided_brute(a: &[Point], b: &[Point]) -> f64 {
    let sum: f64 = a
        .iter()
        .map(|p| b.iter().map(|q| sq_dist(p, q)).fold(f64::INFINITY, f64::min))
        .sum();
    sum / a.len() as f64
}

/// O(|A|·|B|) reference path; same value as [`chamfer`].
pub fn chamfer_brute_force(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    Ok(one_sided_brute(a.points(), b.points()) + one_sided_brute(b.points(), a.points()))
}

/// Chamfer distance for many pairs, evaluated in parallel.
pub fn chamfer_many(pairs: &[(&PointCloud, &PointCloud)]) -> Vec<f64> {
    pairs
        .par_iter()
        .map(|(a, b)| chamfer(a, b).expect("clouds are non-empty"))
        .collect()
}

/// Minimal Matching Distance: the smallest Chamfer distance from `completed`
/// to a bank entry of `category`, with the matching entry's id.
pub fn mmd(completed: &PointCloud, bank: &ShapeBank, category: &str) -> Result<(f64, String)> {
    let candidates: Vec<&BankEntry> = bank.category(category).collect();
    if candidates.is_empty() {
        return Err(Error::EmptyCategory(category.to_string()));
    }
    let q_index = KdIndex::new(completed);
    let q = completed.points();
    let dists: Vec<f64> = candidates
        .par_iter()
        .map(|e| chamfer_indexed(q, &q_index, e.cloud.points(), &e.index))
        .collect();
    let mut best = 0usize;
    for (i, &d) in dists.iter().enumerate() {
        if d < dists[best] {
            best = i;
        }
    }
    Ok((dists[best], candidates[best].id.clone()))
}
