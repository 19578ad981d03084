//! Chamfer distance (k-d tree vs brute force) and Minimal Matching Distance.
//!
//!     cargo run --release --example chamfer_and_mmd

use std::time::Instant;

use pcq::metrics::chamfer_brute_force;
use pcq::synthesis::{generate_shape, synthetic_bank, ShapeKind};
use pcq::{chamfer, chamfer_one_sided, mmd};

fn main() -> pcq::Result<()> {
    let a = generate_shape(ShapeKind::Ellipsoid, 1);
    let b = generate_shape(ShapeKind::Ellipsoid, 2);
    let c = generate_shape(ShapeKind::Box, 1);

    let t = Instant::now();
    let fast = chamfer(&a, &b)?;
    let t_fast = t.elapsed();
    let t = Instant::now();
    let slow = chamfer_brute_force(&a, &b)?;
    let t_slow = t.elapsed();
    println!("CD(ellipsoid, ellipsoid) = {fast:.6e}  (k-d {t_fast:?}, brute force {t_slow:?}, |diff| {:.1e})", (fast - slow).abs());
    println!("CD(ellipsoid, box)       = {:.6e}", chamfer(&a, &c)?);
    println!("one-sided a->b {:.6e}, b->a {:.6e}", chamfer_one_sided(&a, &b)?, chamfer_one_sided(&b, &a)?);

    let bank = synthetic_bank(&ShapeKind::ALL, 6, 3)?;
    println!("\nbank: {} entries in {:?}", bank.len(), bank.categories());
    for kind in ShapeKind::ALL {
        let probe = generate_shape(kind, 99);
        let (d, id) = mmd(&probe, &bank, kind.name())?;
        println!("MMD of a fresh {kind:<13} = {:>9.1} x1e-6 (nearest {id})", d * 1e6);
    }
    Ok(())
}
