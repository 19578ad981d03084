//! Point clouds, normalization, transforms, sampling and the PCQ1 file format.
//!
//!     cargo run --release --example geometry_basics

use pcq::geometry::{
    apply_transform, farthest_point_sample, normalize, random_subsample, read_cloud, write_cloud,
};
use pcq::synthesis::{generate_shape, ShapeKind};
use pcq::RigidTransform;

fn main() -> pcq::Result<()> {
    let car = generate_shape(ShapeKind::CarComposite, 7);
    let b = car.aabb();
    println!("car: {} points, box {:?} .. {:?}", car.len(), b.min, b.max);

    // move it somewhere, then bring it back to the unit frame
    let pose = RigidTransform::from_yaw(0.6, [3.0, -1.0, 0.5], 1.7)?;
    let moved = apply_transform(&car, &pose);
    let (unit, back) = normalize(&moved)?;
    let radius = unit
        .points()
        .iter()
        .map(|p| (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt())
        .fold(0.0f32, f32::max);
    println!("normalized: centroid {:?}, max norm {radius:.6}", unit.centroid());
    let restored = apply_transform(&unit, &back);
    let err = restored
        .points()
        .iter()
        .zip(moved.points())
        .map(|(a, b)| (0..3).map(|k| (a[k] - b[k]).abs()).fold(0.0f32, f32::max))
        .fold(0.0f32, f32::max);
    println!("inverse transform reproduces the input within {err:.2e}");

    let fps = farthest_point_sample(&car, 256, 1)?;
    let rnd = random_subsample(&car, 256, 1)?;
    println!("farthest-point sample: {} points; random subsample: {} points", fps.len(), rnd.len());

    let dir = std::env::temp_dir().join("pcq-geometry-basics");
    std::fs::create_dir_all(&dir).expect("temp dir");
    let path = dir.join("car.pcq");
    write_cloud(&path, &car)?;
    let again = read_cloud(&path)?;
    let bits = |c: &pcq::PointCloud| -> Vec<[u32; 3]> { c.points().iter().map(|p| p.map(f32::to_bits)).collect() };
    println!("PCQ1 round trip bit-exact: {}", bits(&again) == bits(&car));
    Ok(())
}
