//! Decodes a sphere distance field coarse-to-fine and compares against dense
//! evaluation.
//!
//!     cargo run --release --example hierarchical_decode -- [coarse] [target]

use std::time::Instant;

use s13d::field::{dense_decode, hierarchical_decode, marching_cubes, DEFAULT_TRUNCATION};
use s13d::geom::Vec3;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let coarse = args.first().copied().unwrap_or(32);
    let target = args.get(1).copied().unwrap_or(256);
    let sphere = |p: Vec3| p.norm() - 0.5;

    let t = Instant::now();
    let dense = dense_decode(&sphere, target)?;
    let dense_s = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let (hier, stats) = hierarchical_decode(&sphere, coarse, target, DEFAULT_TRUNCATION)?;
    let hier_s = t.elapsed().as_secs_f64();

    let a = marching_cubes(&dense, 0.0)?;
    let b = marching_cubes(&hier, 0.0)?;
    println!("dense {target}^3: {dense_s:.3}s");
    println!(
        "hierarchical {coarse}->{target}: {hier_s:.3}s, evaluated {} cells ({:.2}%), per level {:?}",
        stats.evaluated,
        100.0 * stats.fraction(),
        stats.per_level
    );
    println!("speedup {:.2}x, identical surface: {}", dense_s / hier_s, a.vertices == b.vertices && a.faces == b.faces);
    Ok(())
}
