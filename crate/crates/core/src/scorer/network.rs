//! The scoring network: a shared per-point encoder evaluated on three
//! resolutions of the input, a fusion layer and a small regression head.
//!
//! Forward and backward are written by hand. Max-pooling records its argmax
//! rows, so the backward pass only touches points that won at least one
//! channel.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis, LinalgScalar, ScalarOperand, Zip};
use num_traits::{Float, NumCast};
use std::ops::{AddAssign, SubAssign};
use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{farthest_point_indices, Point, PointCloud};
use crate::seed;

/// `(in, out)` of every layer, in storage order.
pub const LAYER_DIMS: [(usize, usize); 8] = [
    (3, 64),
    (64, 128),
    (128, 256),
    (512, 512),
    (512, 1024),
    (3 * SHAPE_CODE, SHAPE_CODE),
    (SHAPE_CODE, 64),
    (64, 1),
];

pub const A1: usize = 0;
pub const A2: usize = 1;
pub const A3: usize = 2;
pub const B1: usize = 3;
pub const B2: usize = 4;
pub const C: usize = 5;
pub const D1: usize = 6;
pub const D2: usize = 7;

pub const POINT_FEATURE: usize = 256;
pub const GLOBAL_FEATURE: usize = 1024;
pub const SHAPE_CODE: usize = POINT_FEATURE + GLOBAL_FEATURE;
/// Subsample sizes of the second and third resolution (the first is the full input).
pub const RESOLUTIONS: [usize; 2] = [512, 256];
/// Logits are clipped to this magnitude so the score stays strictly inside (0, 1).
pub const LOGIT_CLIP: f64 = 30.0;

const BLOCK_ROWS: usize = 256;
const SALT_INIT: u64 = 0x494e_4954;

pub trait Real:
    LinalgScalar + Float + ScalarOperand + AddAssign + SubAssign + Send + Sync + std::fmt::Debug + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

fn cast<F: Real>(v: f64) -> F {
    <F as NumCast>::from(v).expect("finite cast")
}

fn relu<F: Real>(v: F) -> F {
    if v > F::zero() {
        v
    } else {
        F::zero()
    }
}

fn sigmoid_clipped(z: f64) -> (f64, f64) {
    let zc = z.clamp(-LOGIT_CLIP, LOGIT_CLIP);
    let s = 1.0 / (1.0 + (-zc).exp());
    let ds = if z.abs() > LOGIT_CLIP { 0.0 } else { s * (1.0 - s) };
    (s, ds)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Linear<F> {
    /// `in × out`, row-major.
    pub w: Array2<F>,
    pub b: Array1<F>,
}

impl<F: Real> Linear<F> {
    pub fn zeros(inp: usize, out: usize) -> Self {
        Linear {
            w: Array2::zeros((inp, out)),
            b: Array1::zeros(out),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.w.dim()
    }

    fn forward(&self, x: ArrayView2<F>, activate: bool) -> Array2<F> {
        let mut z = x.dot(&self.w);
        z += &self.b;
        if activate {
            z.mapv_inplace(relu);
        }
        z
    }
}

/// Parameters of the whole network (also used for gradients and optimizer moments).
#[derive(Clone, Debug, PartialEq)]
pub struct Network<F> {
    layers: Vec<Linear<F>>,
}

impl<F: Real> Network<F> {
    pub fn zeros() -> Self {
        Network {
            layers: LAYER_DIMS.iter().map(|&(i, o)| Linear::zeros(i, o)).collect(),
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(seed: u64) -> Self {
        let mut net = Self::zeros();
        for (l, layer) in net.layers.iter_mut().enumerate() {
            let (i, o) = layer.dims();
            let limit = (6.0 / (i + o) as f64).sqrt();
            let mut rng = seed::stream(seed, SALT_INIT, l as u64);
            layer.w.mapv_inplace(|_| cast(rng.gen_range(-limit..limit)));
        }
        net
    }

    pub fn from_layers(layers: Vec<Linear<F>>) -> Result<Self> {
        if layers.len() != LAYER_DIMS.len() {
            return Err(Error::DimMismatch {
                layer: layers.len(),
                expected: (LAYER_DIMS.len(), 0),
                found: (layers.len(), 0),
            });
        }
        for (l, (layer, &want)) in layers.iter().zip(&LAYER_DIMS).enumerate() {
            let found = layer.dims();
            if found != want || layer.b.len() != want.1 {
                return Err(Error::DimMismatch {
                    layer: l,
                    expected: want,
                    found,
                });
            }
        }
        Ok(Network { layers })
    }

    pub fn layers(&self) -> &[Linear<F>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Linear<F>] {
        &mut self.layers
    }

    pub fn cast<G: Real>(&self) -> Network<G> {
        let conv = |v: &F| -> G { <G as NumCast>::from(*v).expect("finite cast") };
        Network {
            layers: self
                .layers
                .iter()
                .map(|l| Linear {
                    w: l.w.map(conv),
                    b: l.b.map(conv),
                })
                .collect(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().chain(l.b.iter()).all(|v| v.is_finite()))
    }

    /// Every parameter tensor: `(layer, is_bias, values)`.
    pub fn tensors(&self) -> impl Iterator<Item = (usize, bool, &[F])> {
        self.layers.iter().enumerate().flat_map(|(l, layer)| {
            [
                (l, false, layer.w.as_slice().expect("standard layout")),
                (l, true, layer.b.as_slice().expect("standard layout")),
            ]
        })
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = (usize, bool, &mut [F])> {
        self.layers.iter_mut().enumerate().flat_map(|(l, layer)| {
            [
                (l, false, layer.w.as_slice_mut().expect("standard layout")),
                (l, true, layer.b.as_slice_mut().expect("standard layout")),
            ]
        })
    }

    /// Entry `k` (row-major) of a layer's weights or bias.
    pub fn param(&self, layer: usize, bias: bool, k: usize) -> F {
        let l = &self.layers[layer];
        if bias {
            l.b[k]
        } else {
            l.w.as_slice().expect("standard layout")[k]
        }
    }

    pub fn param_mut(&mut self, layer: usize, bias: bool, k: usize) -> &mut F {
        let l = &mut self.layers[layer];
        if bias {
            &mut l.b[k]
        } else {
            &mut l.w.as_slice_mut().expect("standard layout")[k]
        }
    }

    pub fn add_assign(&mut self, other: &Network<F>) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.w += &b.w;
            a.b += &b.b;
        }
    }
}

/// Input prepared for the network: canonical, normalized points and the
/// row subsets of each resolution.
#[derive(Clone, Debug)]
pub struct Prepared {
    points: Vec<Point>,
    subsets: [Vec<usize>; 3],
    /// Resolution `r` is identical to an earlier one.
    same_as: [Option<usize>; 3],
}

impl Prepared {
    /// Points are sorted and deduplicated (so nothing downstream depends on
    /// input order) and subsampled by farthest-point sampling seeded from
    /// their content hash.
    ///
    /// The cloud is expected in the box-normalized frame crops are stored in
    /// (see [`crate::synthesis::to_model_frame`]) and is not re-normalized:
    /// centering a crop on its own centroid would hide how far the box was
    /// off, which is much of what separates good crops from bad ones.
    pub fn new(cloud: &PointCloud) -> Self {
        let distinct = PointCloud::new(cloud.canonical_distinct()).expect("non-empty, finite");
        let seed = distinct.content_hash();
        let points = distinct.into_points();
        let full: Vec<usize> = (0..points.len()).collect();
        let sub = |k: usize| {
            let mut idx = farthest_point_indices(&points, k, seed).expect("non-empty");
            idx.sort_unstable();
            idx.dedup();
            idx
        };
        let subsets = [full, sub(RESOLUTIONS[0]), sub(RESOLUTIONS[1])];
        let mut same_as = [None; 3];
        for r in 1..3 {
            same_as[r] = (0..r).find(|&q| same_as[q].is_none() && subsets[q] == subsets[r]);
        }
        Prepared {
            points,
            subsets,
            same_as,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn subset(&self, r: usize) -> &[usize] {
        &self.subsets[r]
    }

    fn matrix<F: Real>(&self) -> Array2<F> {
        Array2::from_shape_fn((self.points.len(), 3), |(i, k)| cast(self.points[i][k] as f64))
    }
}

/// Per-point activations of the shared encoder.
#[derive(Clone, Debug)]
struct PointStage<F> {
    x: Array2<F>,
    h1: Array2<F>,
    h2: Array2<F>,
    f0: Array2<F>,
}

#[derive(Clone, Debug)]
struct ResolutionCache<F> {
    g0: Array1<F>,
    /// Winning full-row index of each point-feature channel.
    a0: Vec<usize>,
    /// Max pre-activation of each global channel.
    m1: Vec<F>,
    /// Slot in `arg_rows` of each global channel's winner.
    a1: Vec<usize>,
    /// Distinct winning full-row indices, ascending.
    arg_rows: Vec<usize>,
    /// Pre-activation of the first global layer on `arg_rows`.
    z1: Array2<F>,
}

/// Everything the backward pass needs for one cloud.
#[derive(Clone, Debug)]
pub struct EncoderCache<F> {
    stage: PointStage<F>,
    res: Vec<Option<ResolutionCache<F>>>,
    same_as: [Option<usize>; 3],
    pub feature: Array1<F>,
}

#[derive(Clone, Debug)]
pub struct HeadCache<F> {
    features: Array2<F>,
    s: Array2<F>,
    d: Array2<F>,
    /// Raw logits.
    pub z: Vec<f64>,
    /// Squashed scores.
    pub scores: Vec<f64>,
    slopes: Vec<f64>,
}

/// Forward state of a single cloud.
#[derive(Clone, Debug)]
pub struct ForwardCache<F> {
    pub encoder: EncoderCache<F>,
    pub head: HeadCache<F>,
}

impl<F: Real> Network<F> {
    fn point_stage(&self, x: Array2<F>) -> PointStage<F> {
        let h1 = self.layers[A1].forward(x.view(), true);
        let h2 = self.layers[A2].forward(h1.view(), true);
        let f0 = self.layers[A3].forward(h2.view(), true);
        PointStage { x, h1, h2, f0 }
    }

    fn point_projection(&self, f0: ArrayView2<F>) -> Array2<F> {
        f0.dot(&self.layers[B1].w.slice(s![POINT_FEATURE.., ..]))
    }

    /// One resolution: returns the 1280-d feature `[g0, g1]`.
    fn encode_resolution(
        &self,
        f0: ArrayView2<F>,
        u: ArrayView2<F>,
        rows: &[usize],
        keep: bool,
    ) -> (Array1<F>, Option<ResolutionCache<F>>) {
        let mut g0 = Array1::from_elem(POINT_FEATURE, F::neg_infinity());
        let mut a0 = vec![0usize; POINT_FEATURE];
        for &r in rows {
            let row = f0.row(r);
            for (c, &v) in row.iter().enumerate() {
                if v > g0[c] {
                    g0[c] = v;
                    a0[c] = r;
                }
            }
        }
        let mut c = g0.dot(&self.layers[B1].w.slice(s![..POINT_FEATURE, ..]));
        c += &self.layers[B1].b;

        let w2 = &self.layers[B2].w;
        let mut m1 = vec![F::neg_infinity(); GLOBAL_FEATURE];
        let mut pos = vec![0usize; GLOBAL_FEATURE];
        let mut h = Array2::zeros((BLOCK_ROWS.min(rows.len()), B1_OUT));
        for (block, chunk) in rows.chunks(BLOCK_ROWS).enumerate() {
            if chunk.len() != h.nrows() {
                h = Array2::zeros((chunk.len(), B1_OUT));
            }
            for (k, &r) in chunk.iter().enumerate() {
                Zip::from(h.row_mut(k))
                    .and(u.row(r))
                    .and(&c)
                    .for_each(|h, &u, &c| *h = relu(u + c));
            }
            let z = h.dot(w2);
            let z = z.as_slice().expect("standard layout");
            for (k, zr) in z.chunks_exact(GLOBAL_FEATURE).enumerate() {
                for (j, &v) in zr.iter().enumerate() {
                    if v > m1[j] {
                        m1[j] = v;
                        pos[j] = block * BLOCK_ROWS + k;
                    }
                }
            }
        }
        for (m, &b) in m1.iter_mut().zip(&self.layers[B2].b) {
            *m = *m + b;
        }

        let mut feature = Array1::zeros(SHAPE_CODE);
        feature.slice_mut(s![..POINT_FEATURE]).assign(&g0);
        for (j, &m) in m1.iter().enumerate() {
            feature[POINT_FEATURE + j] = relu(m);
        }
        if !keep {
            return (feature, None);
        }

        let mut arg_rows: Vec<usize> = pos.iter().map(|&p| rows[p]).collect();
        arg_rows.sort_unstable();
        arg_rows.dedup();
        let a1 = pos
            .iter()
            .map(|&p| arg_rows.binary_search(&rows[p]).expect("present"))
            .collect();
        let mut z1 = Array2::zeros((arg_rows.len(), B1_OUT));
        for (k, &r) in arg_rows.iter().enumerate() {
            Zip::from(z1.row_mut(k))
                .and(u.row(r))
                .and(&c)
                .for_each(|z, &u, &c| *z = u + c);
        }
        (
            feature,
            Some(ResolutionCache {
                g0,
                a0,
                m1,
                a1,
                arg_rows,
                z1,
            }),
        )
    }

    fn encode_rows(
        &self,
        prepared: &Prepared,
        f0: ArrayView2<F>,
        u: ArrayView2<F>,
        keep: bool,
    ) -> (Array1<F>, Vec<Option<ResolutionCache<F>>>) {
        let mut feature = Array1::zeros(3 * SHAPE_CODE);
        let mut caches = Vec::with_capacity(3);
        for r in 0..3 {
            let span = s![r * SHAPE_CODE..(r + 1) * SHAPE_CODE];
            if let Some(q) = prepared.same_as[r] {
                let prev = feature.slice(s![q * SHAPE_CODE..(q + 1) * SHAPE_CODE]).to_owned();
                feature.slice_mut(span).assign(&prev);
                caches.push(None);
                continue;
            }
            let (f, cache) = self.encode_resolution(f0, u, &prepared.subsets[r], keep);
            feature.slice_mut(span).assign(&f);
            caches.push(cache);
        }
        (feature, caches)
    }

    /// Encoder forward for one cloud, keeping what backward needs.
    pub fn encode(&self, prepared: &Prepared) -> EncoderCache<F> {
        let stage = self.point_stage(prepared.matrix());
        let u = self.point_projection(stage.f0.view());
        let (feature, res) = self.encode_rows(prepared, stage.f0.view(), u.view(), true);
        EncoderCache {
            stage,
            res,
            same_as: prepared.same_as,
            feature,
        }
    }

    /// Shape codes of several clouds; the per-point layers run once on the
    /// stacked points of all clouds.
    pub fn encode_batch(&self, batch: &[&Prepared]) -> Array2<F> {
        let total: usize = batch.iter().map(|p| p.len()).sum();
        let mut x = Array2::zeros((total, 3));
        let mut offset = 0;
        for p in batch {
            x.slice_mut(s![offset..offset + p.len(), ..]).assign(&p.matrix::<F>());
            offset += p.len();
        }
        let stage = self.point_stage(x);
        let u = self.point_projection(stage.f0.view());
        let mut features = Array2::zeros((batch.len(), 3 * SHAPE_CODE));
        let mut offset = 0;
        for (i, p) in batch.iter().enumerate() {
            let rows = s![offset..offset + p.len(), ..];
            let (f, _) = self.encode_rows(p, stage.f0.slice(rows), u.slice(rows), false);
            features.row_mut(i).assign(&f);
            offset += p.len();
        }
        features
    }

    /// Fusion layer and head on a batch of shape codes.
    pub fn head(&self, features: Array2<F>) -> HeadCache<F> {
        let s = self.layers[C].forward(features.view(), true);
        let d = self.layers[D1].forward(s.view(), true);
        let out = self.layers[D2].forward(d.view(), false);
        let z: Vec<f64> = out.column(0).iter().map(|v| v.to_f64().expect("finite")).collect();
        let (scores, slopes) = z.iter().map(|&v| sigmoid_clipped(v)).unzip();
        HeadCache {
            features,
            s,
            d,
            z,
            scores,
            slopes,
        }
    }

    /// Score and cached activations of one cloud.
    pub fn forward(&self, prepared: &Prepared) -> ForwardCache<F> {
        let encoder = self.encode(prepared);
        let head = self.head(encoder.feature.clone().insert_axis(Axis(0)));
        ForwardCache { encoder, head }
    }

    pub fn score(&self, prepared: &Prepared) -> f64 {
        self.head(self.encode_batch(&[prepared]).to_owned()).scores[0]
    }

    pub fn score_batch(&self, batch: &[&Prepared]) -> Vec<f64> {
        if batch.is_empty() {
            return Vec::new();
        }
        self.head(self.encode_batch(batch)).scores
    }

    /// Backward through the head given `dL/dz` per batch row; accumulates
    /// into `grad` and returns `dL/dfeature` (batch × 3840).
    pub fn head_backward(&self, cache: &HeadCache<F>, dz: &[f64], grad: &mut Network<F>) -> Array2<F> {
        let one = F::one();
        let dz = Array2::from_shape_fn((dz.len(), 1), |(i, _)| cast::<F>(dz[i]));
        let g = &mut grad.layers;
        general_mat_mul(one, &cache.d.t(), &dz, one, &mut g[D2].w);
        g[D2].b += &dz.sum_axis(Axis(0));

        let mut dd = dz.dot(&self.layers[D2].w.t());
        Zip::from(&mut dd).and(&cache.d).for_each(|g, &a| {
            if a <= F::zero() {
                *g = F::zero()
            }
        });
        general_mat_mul(one, &cache.s.t(), &dd, one, &mut g[D1].w);
        g[D1].b += &dd.sum_axis(Axis(0));

        let mut ds = dd.dot(&self.layers[D1].w.t());
        Zip::from(&mut ds).and(&cache.s).for_each(|g, &a| {
            if a <= F::zero() {
                *g = F::zero()
            }
        });
        general_mat_mul(one, &cache.features.t(), &ds, one, &mut g[C].w);
        g[C].b += &ds.sum_axis(Axis(0));
        ds.dot(&self.layers[C].w.t())
    }

    /// Backward through the encoder of one cloud given `dL/dfeature`.
    pub fn encoder_backward(&self, cache: &EncoderCache<F>, dfeature: ArrayView1<F>, grad: &mut Network<F>) {
        let one = F::one();
        let zero = F::zero();
        let n = cache.stage.x.nrows();
        // identical resolutions share one cache; fold their gradients together
        let mut dres: Vec<Array1<F>> = (0..3)
            .map(|r| dfeature.slice(s![r * SHAPE_CODE..(r + 1) * SHAPE_CODE]).to_owned())
            .collect();
        for r in (0..3).rev() {
            if let Some(q) = cache.same_as[r] {
                let add = dres[r].clone();
                dres[q] += &add;
            }
        }

        let mut df0 = Array2::<F>::zeros((n, POINT_FEATURE));
        let mut du = Array2::<F>::zeros((n, B1_OUT));
        let mut touched = vec![false; n];
        let w1_top = self.layers[B1].w.slice(s![..POINT_FEATURE, ..]);
        let w2 = &self.layers[B2].w;

        for (r, rc) in cache.res.iter().enumerate() {
            let Some(rc) = rc else { continue };
            let dg1 = dres[r].slice(s![POINT_FEATURE..]);
            let mut dz1 = Array2::<F>::zeros(rc.z1.dim());
            for j in 0..GLOBAL_FEATURE {
                let dm = dg1[j];
                if rc.m1[j] <= zero || dm == zero {
                    continue;
                }
                let slot = rc.a1[j];
                let h = rc.z1.row(slot).mapv(relu);
                grad.layers[B2].w.column_mut(j).scaled_add(dm, &h);
                grad.layers[B2].b[j] = grad.layers[B2].b[j] + dm;
                dz1.row_mut(slot).scaled_add(dm, &w2.column(j));
            }
            Zip::from(&mut dz1).and(&rc.z1).for_each(|g, &z| {
                if z <= zero {
                    *g = zero
                }
            });
            let dc = dz1.sum_axis(Axis(0));
            for (slot, &row) in rc.arg_rows.iter().enumerate() {
                let mut target = du.row_mut(row);
                target += &dz1.row(slot);
                touched[row] = true;
            }
            {
                let outer_g = rc.g0.view().insert_axis(Axis(1));
                let outer_c = dc.view().insert_axis(Axis(0));
                let mut top = grad.layers[B1].w.slice_mut(s![..POINT_FEATURE, ..]);
                general_mat_mul(one, &outer_g, &outer_c, one, &mut top);
            }
            grad.layers[B1].b += &dc;
            let mut dg0 = dres[r].slice(s![..POINT_FEATURE]).to_owned();
            dg0 += &w1_top.dot(&dc);
            for (ch, &row) in rc.a0.iter().enumerate() {
                df0[[row, ch]] = df0[[row, ch]] + dg0[ch];
                touched[row] = true;
            }
        }

        let rows: Vec<usize> = (0..n).filter(|&i| touched[i]).collect();
        if rows.is_empty() {
            return;
        }
        let st = &cache.stage;
        let f0 = st.f0.select(Axis(0), &rows);
        let du_t = du.select(Axis(0), &rows);
        {
            let mut bottom = grad.layers[B1].w.slice_mut(s![POINT_FEATURE.., ..]);
            general_mat_mul(one, &f0.t(), &du_t, one, &mut bottom);
        }
        let mut dz = df0.select(Axis(0), &rows);
        general_mat_mul(
            one,
            &du_t,
            &self.layers[B1].w.slice(s![POINT_FEATURE.., ..]).t(),
            one,
            &mut dz,
        );

        let inputs = [st.x.select(Axis(0), &rows), st.h1.select(Axis(0), &rows), st.h2.select(Axis(0), &rows)];
        let mut out = f0;
        for l in [A3, A2, A1] {
            Zip::from(&mut dz).and(&out).for_each(|g, &a| {
                if a <= zero {
                    *g = zero
                }
            });
            let input = &inputs[l];
            general_mat_mul(one, &input.t(), &dz, one, &mut grad.layers[l].w);
            grad.layers[l].b += &dz.sum_axis(Axis(0));
            if l == A1 {
                break;
            }
            dz = dz.dot(&self.layers[l].w.t());
            out = input.clone();
        }
    }

    /// Gradient of `sum_i weight_i · huber(score_i − target_i)` for cached clouds.
    pub fn backward_batch(
        &self,
        encoders: &[EncoderCache<F>],
        head: &HeadCache<F>,
        targets: &[f64],
        weights: &[f64],
        delta: f64,
        grad: &mut Network<F>,
    ) {
        let dz: Vec<f64> = (0..targets.len())
            .map(|i| {
                let r = head.scores[i] - targets[i];
                weights[i] * super::huber_grad(r, delta) * head.slopes[i]
            })
            .collect();
        let dfeat = self.head_backward(head, &dz, grad);
        for (i, enc) in encoders.iter().enumerate() {
            self.encoder_backward(enc, dfeat.row(i), grad);
        }
    }

    /// Gradient of the single-sample loss `huber(score − target)`.
    pub fn backward(&self, cache: &ForwardCache<F>, target: f64, delta: f64) -> Network<F> {
        let mut grad = Network::zeros();
        self.backward_batch(
            std::slice::from_ref(&cache.encoder),
            &cache.head,
            &[target],
            &[1.0],
            delta,
            &mut grad,
        );
        grad
    }
}

const B1_OUT: usize = LAYER_DIMS[B1].1;
