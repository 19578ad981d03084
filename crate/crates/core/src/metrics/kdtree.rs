use crate::geometry::{sq_dist, Point, PointCloud};

pub const DEFAULT_LEAF_SIZE: usize = 16;

#[derive(Clone, Debug)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        dim: usize,
        value: f32,
        left: usize,
        right: usize,
    },
}

/// Balanced k-d tree over a fixed point set.
///
/// Nearest-neighbour queries return exactly what a linear scan would:
/// the minimum squared distance, and among equidistant points the one
/// with the lowest input index.
#[derive(Clone, Debug)]
pub struct KdIndex {
    points: Vec<Point>,
    order: Vec<usize>,
    nodes: Vec<Node>,
    leaf_size: usize,
}

impl KdIndex {
    pub fn new(cloud: &PointCloud) -> Self {
        Self::from_points(cloud.points(), DEFAULT_LEAF_SIZE)
    }

    pub fn from_points(points: &[Point], leaf_size: usize) -> Self {
        let leaf_size = leaf_size.max(1);
        let mut idx = KdIndex {
            points: points.to_vec(),
            order: (0..points.len()).collect(),
            nodes: Vec::with_capacity(2 * points.len() / leaf_size + 1),
            leaf_size,
        };
        if !points.is_empty() {
            idx.build(0, points.len());
        }
        idx
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn leaf_size(&self) -> usize {
        self.leaf_size
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= self.leaf_size {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        // split on the widest axis at the median
        let mut lo = [f32::INFINITY; 3];
        let mut hi = [f32::NEG_INFINITY; 3];
        for &i in &self.order[start..end] {
            let p = self.points[i];
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let dim = (0..3)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
            .unwrap();
        let mid = start + (end - start) / 2;
        let pts = &self.points;
        self.order[start..end]
            .select_nth_unstable_by(mid - start, |&a, &b| pts[a][dim].total_cmp(&pts[b][dim]));
        let value = self.points[self.order[mid]][dim];

        self.nodes.push(Node::Leaf { start, end }); // placeholder
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id] = Node::Split {
            dim,
            value,
            left,
            right,
        };
        id
    }

    /// Index and squared distance of the nearest point to `q`.
    pub fn nearest(&self, q: &Point) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(0, q, &mut best);
        Some(best)
    }

    fn search(&self, node: usize, q: &Point, best: &mut (usize, f64)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let d = sq_dist(q, &self.points[i]);
                    if d < best.1 || (d == best.1 && i < best.0) {
                        *best = (i, d);
                    }
                }
            }
            Node::Split {
                dim,
                value,
                left,
                right,
            } => {
                let diff = q[dim] as f64 - value as f64;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, best);
                // `<=` keeps equidistant candidates on the far side reachable
                if diff * diff <= best.1 {
                    self.search(far, q, best);
                }
            }
        }
    }
}
