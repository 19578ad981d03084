//! The three completion oracles on a clean view, a shifted crop and ground
//! contamination, with the labels each would assign.
//!
//!     cargo run --release --example completion_oracles

use std::sync::Arc;

use pcq::oracle::{CompletionOracle, MirrorOracle, PassthroughOracle, RetrievalOracle};
use pcq::synthesis::{label_group, render_partial, synthetic_bank, generate_shape, ShapeKind};
use pcq::{chamfer, PointCloud};

fn main() -> pcq::Result<()> {
    let bank = Arc::new(synthetic_bank(&ShapeKind::ALL, 8, 11)?);
    let oracles: Vec<(&str, Box<dyn CompletionOracle>)> = vec![
        ("retrieval", Box::new(RetrievalOracle::new(bank)?)),
        ("mirror", Box::new(MirrorOracle)),
        ("passthrough", Box::new(PassthroughOracle)),
    ];

    let truth = generate_shape(ShapeKind::CarComposite, 2024);
    let view = render_partial(&truth, [0.6, -0.7, 0.35], 5)?;
    let shifted = PointCloud::new(view.points().iter().map(|p| [p[0] + 0.35, p[1], p[2]]).collect())?;
    let zmin = truth.points().iter().map(|p| p[2]).fold(f32::MAX, f32::min);
    let mut grounded = view.points().to_vec();
    grounded.extend((0..400).map(|i| [(i % 20) as f32 * 0.1 - 1.0, (i / 20) as f32 * 0.1 - 1.0, zmin]));
    let grounded = PointCloud::new(grounded)?;
    println!("clean view: {} of {} points visible\n", view.len(), truth.len());

    println!("{:<12} {:>12} {:>12} {:>12} {:>9} {:>9}", "oracle", "CD clean", "CD shifted", "CD ground", "s_g shift", "s_g grnd");
    for (name, f) in &oracles {
        let cd = |c: &PointCloud| -> pcq::Result<f64> { chamfer(&f.complete(c)?, &truth) };
        println!(
            "{name:<12} {:>12.3e} {:>12.3e} {:>12.3e} {:>9.3} {:>9.3}",
            cd(&view)?,
            cd(&shifted)?,
            cd(&grounded)?,
            label_group(&view, &shifted, &truth, f.as_ref())?.s_g,
            label_group(&view, &grounded, &truth, f.as_ref())?.s_g,
        );
    }
    Ok(())
}
