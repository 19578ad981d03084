use std::collections::HashMap;
use std::sync::{Arc, OnceLock};

use pcq::geometry::{apply_transform, crop_aabb, farthest_point_sample, normalize};
use pcq::metrics::{chamfer, mmd};
use pcq::oracle::{build_oracle, OracleKind};
use pcq::synthesis::{
    augment_scene, generate_shape, label_group, propose_rois, render_partial, synthetic_bank, SceneSpec, ShapeKind,
};
use pcq::{Aabb, Point, PointCloud, RigidTransform, ShapeBank, COMPLETE_POINTS};
use proptest::prelude::*;

fn arb_points(max: usize) -> impl Strategy<Value = Vec<Point>> {
    prop::collection::vec(prop::array::uniform3(-5.0f32..5.0), 1..max)
}

fn arb_cloud(max: usize) -> impl Strategy<Value = PointCloud> {
    arb_points(max).prop_map(|p| PointCloud::new(p).unwrap())
}

fn arb_kind() -> impl Strategy<Value = ShapeKind> {
    prop::sample::select(ShapeKind::ALL.to_vec())
}

fn arb_view() -> impl Strategy<Value = [f64; 3]> {
    (0.0..std::f64::consts::TAU, -1.2f64..1.2).prop_map(|(az, el)| [az.cos() * el.cos(), az.sin() * el.cos(), el.sin()])
}

fn multiset(points: &[Point]) -> HashMap<[u32; 3], usize> {
    let mut m = HashMap::new();
    for p in points {
        *m.entry(p.map(f32::to_bits)).or_default() += 1;
    }
    m
}

fn is_sub_multiset(a: &[Point], b: &[Point]) -> bool {
    let have = multiset(b);
    multiset(a).iter().all(|(k, n)| have.get(k).is_some_and(|m| m >= n))
}

fn covering_radius(cloud: &PointCloud, chosen: &PointCloud) -> f64 {
    cloud
        .points()
        .iter()
        .map(|p| {
            chosen
                .points()
                .iter()
                .map(|q| (0..3).map(|k| (p[k] as f64 - q[k] as f64).powi(2)).sum::<f64>())
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

fn bank() -> Arc<ShapeBank> {
    static B: OnceLock<Arc<ShapeBank>> = OnceLock::new();
    B.get_or_init(|| Arc::new(synthetic_bank(&ShapeKind::ALL, 3, 17).unwrap())).clone()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normalize_round_trips(c in arb_cloud(200)) {
        prop_assume!(c.points().iter().any(|p| p != &c.points()[0]));
        let (n, t) = normalize(&c).unwrap();
        let back = apply_transform(&n, &t);
        for (p, q) in back.points().iter().zip(c.points()) {
            for k in 0..3 {
                prop_assert!((p[k] - q[k]).abs() <= 1e-6 * (1.0 + q[k].abs()), "{p:?} vs {q:?}");
            }
        }
        let max_norm = n.points().iter().map(|p| p.iter().map(|v| (*v as f64).powi(2)).sum::<f64>().sqrt()).fold(0.0, f64::max);
        prop_assert!((max_norm - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn fps_deterministic_and_radius_nonincreasing(c in arb_cloud(120), seed in any::<u64>()) {
        let a = farthest_point_sample(&c, 8, seed).unwrap();
        prop_assert_eq!(&a, &farthest_point_sample(&c, 8, seed).unwrap());
        let input = multiset(c.points());
        prop_assert!(a.points().iter().all(|p| input.contains_key(&p.map(f32::to_bits))));
        let mut last = f64::INFINITY;
        for k in 1..=10 {
            let r = covering_radius(&c, &farthest_point_sample(&c, k, seed).unwrap());
            prop_assert!(r <= last, "k={} radius {} after {}", k, r, last);
            last = r;
        }
    }

    #[test]
    fn crop_is_an_ordered_filter(c in arb_cloud(300), lo in prop::array::uniform3(-5.0f32..5.0), ext in prop::array::uniform3(0.0f32..6.0)) {
        let hi = [lo[0] + ext[0], lo[1] + ext[1], lo[2] + ext[2]];
        let bbox = Aabb::new(lo, hi).unwrap();
        let expected: Vec<Point> = c.points().iter().copied().filter(|p| (0..3).all(|k| lo[k] <= p[k] && p[k] <= hi[k])).collect();
        match crop_aabb(&c, &bbox) {
            Some(out) => {
                prop_assert_eq!(out.points(), &expected[..]);
                prop_assert!(is_sub_multiset(out.points(), c.points()));
            }
            None => prop_assert!(expected.is_empty()),
        }
    }

    #[test]
    fn chamfer_symmetric_and_zero_only_on_equal_sets(a in arb_cloud(150), b in arb_cloud(150)) {
        let ab = chamfer(&a, &b).unwrap();
        prop_assert_eq!(ab.to_bits(), chamfer(&b, &a).unwrap().to_bits());
        prop_assert!(ab >= 0.0);
        let sa: std::collections::HashSet<_> = a.points().iter().map(|p| p.map(f32::to_bits)).collect();
        let sb: std::collections::HashSet<_> = b.points().iter().map(|p| p.map(f32::to_bits)).collect();
        prop_assert_eq!(ab == 0.0, sa == sb);
        prop_assert_eq!(chamfer(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn chamfer_invariant_under_shared_rigid_motion(a in arb_cloud(150), b in arb_cloud(150), yaw in 0.0f64..6.3, t in prop::array::uniform3(-3.0f64..3.0)) {
        let m = RigidTransform::from_yaw(yaw, t, 1.0).unwrap();
        let before = chamfer(&a, &b).unwrap();
        let after = chamfer(&apply_transform(&a, &m), &apply_transform(&b, &m)).unwrap();
        prop_assert!((before - after).abs() <= 1e-6 * (1.0 + before), "{} vs {}", before, after);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn mmd_bounded_by_every_entry(kind in arb_kind(), seed in 0u64..10_000) {
        let q = generate_shape(kind, seed);
        let b = bank();
        let (d, id) = mmd(&q, &b, kind.name()).unwrap();
        for e in b.category(kind.name()) {
            prop_assert!(d <= chamfer(&q, &e.cloud).unwrap());
        }
        prop_assert!(b.get(&id).is_some_and(|e| e.category == kind.name()));
    }

    #[test]
    fn render_is_sub_multiset_of_shape(kind in arb_kind(), seed in 0u64..10_000, view in arb_view()) {
        let shape = generate_shape(kind, seed);
        let part = render_partial(&shape, view, seed).unwrap();
        prop_assert!(!part.is_empty());
        prop_assert!(is_sub_multiset(part.points(), shape.points()));
    }

    #[test]
    fn first_roi_meets_the_object(
        kind in arb_kind(),
        seed in 0u64..10_000,
        yaw in 0.0f64..6.3,
        t in prop::array::uniform3(-10.0f64..10.0),
        scale in 0.8f64..1.2,
        clutter in 0usize..3,
        amplitude in 0.0f64..1.0,
    ) {
        let shape = generate_shape(kind, seed);
        let part = render_partial(&shape, [0.5, 0.6, 0.4], seed).unwrap();
        let spec = SceneSpec::new(yaw, t, scale, 400, seed).unwrap().with_clutter(clutter);
        let scene = augment_scene(&part, &shape.aabb(), &spec, &bank()).unwrap();
        let roi = propose_rois(&scene, 5, seed, amplitude).unwrap()[0];
        // the proposal's center lies inside the true box, so the boxes intersect
        prop_assert!(scene.object_box.contains(roi.center), "{:?} vs {:?}", roi, scene.object_box);
    }

    #[test]
    fn oracles_emit_complete_clouds_deterministically(c in arb_cloud(3000), kind in prop::sample::select(vec![OracleKind::Retrieval, OracleKind::Mirror, OracleKind::Passthrough])) {
        let oracle = build_oracle(kind, bank()).unwrap();
        let out = oracle.complete(&c).unwrap();
        prop_assert_eq!(out.len(), COMPLETE_POINTS);
        prop_assert_eq!(out, oracle.complete(&c).unwrap());
    }

    #[test]
    fn clean_view_labels_one(kind in arb_kind(), seed in 0u64..10_000, view in arb_view()) {
        let g = generate_shape(kind, seed);
        let p = render_partial(&g, view, seed).unwrap();
        let oracle = build_oracle(OracleKind::Retrieval, bank()).unwrap();
        let l = label_group(&p, &p, &g, oracle.as_ref()).unwrap();
        prop_assert_eq!(l.s_g, 1.0);
    }
}
