use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{sq_dist, Point, PointCloud};
use crate::error::{Error, Result};

/// Greedy farthest-point selection, returning input indices.
///
/// The first index comes from a PRNG seeded with `seed`; each next index
/// maximizes the distance to the chosen set, ties going to the lowest index.
/// Once every distinct point has been taken the chosen sequence repeats.
pub fn farthest_point_indices(points: &[Point], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::EmptyRequest);
    }
    if points.is_empty() {
        return Err(Error::EmptyOperand);
    }
    let n = points.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = rng.gen_range(0..n);

    let mut chosen = Vec::with_capacity(k.min(n));
    let mut min_d = vec![f64::INFINITY; n];
    let mut next = first;
    loop {
        chosen.push(next);
        if chosen.len() == k {
            return Ok(chosen);
        }
        let c = points[next];
        let mut best = 0usize;
        let mut best_d = -1.0f64;
        for (i, p) in points.iter().enumerate() {
            let d = sq_dist(p, &c);
            if d < min_d[i] {
                min_d[i] = d;
            }
            if min_d[i] > best_d {
                best_d = min_d[i];
                best = i;
            }
        }
        if best_d <= 0.0 {
            break;
        }
        next = best;
    }
    let distinct = chosen.len();
    Ok((0..k).map(|i| chosen[i % distinct]).collect())
}

pub fn farthest_point_sample(cloud: &PointCloud, k: usize, seed: u64) -> Result<PointCloud> {
    let idx = farthest_point_indices(cloud.points(), k, seed)?;
    cloud.derive(idx.into_iter().map(|i| cloud.points()[i]).collect())
}

/// Uniform subset of size `k` (with replacement only when `k` exceeds the cloud).
///
/// `k == len` returns the cloud unchanged.
pub fn random_subsample(cloud: &PointCloud, k: usize, seed: u64) -> Result<PointCloud> {
    if k == 0 {
        return Err(Error::EmptyRequest);
    }
    let n = cloud.len();
    if k == n {
        return Ok(cloud.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts = cloud.points();
    let out: Vec<Point> = if k < n {
        index::sample(&mut rng, n, k).into_iter().map(|i| pts[i]).collect()
    } else {
        (0..k).map(|_| pts[rng.gen_range(0..n)]).collect()
    };
    cloud.derive(out)
}
