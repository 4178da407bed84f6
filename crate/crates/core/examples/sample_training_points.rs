//! Draws the surface point set (uniform plus sharp-edge samples), the SDF
//! supervision sets and an FPS subset from a box.
//!
//!     cargo run --release --example sample_training_points -- [seed]

use s13d::field::{Bvh, WindingApprox};
use s13d::geom::Vec3;
use s13d::primitives;
use s13d::sampling::{build_vae_point_set, fps, sdf_supervision_samples, winding_sign, Provenance, SdfParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(0);
    let mesh = primitives::box_mesh(Vec3::new(-0.8, -0.5, -0.3), Vec3::new(0.8, 0.5, 0.3));

    let set = build_vae_point_set(&mesh, 20_000, 4096, 30.0, seed)?;
    println!(
        "surface: {} uniform + {} salient (shortfall {})",
        set.count(Provenance::Uniform),
        set.count(Provenance::Salient),
        set.salient_shortfall
    );

    let bvh = Bvh::build(&mesh);
    let inside = winding_sign(&mesh, &bvh, WindingApprox::default());
    let params = SdfParams { n_volume: 20_000, n_near: 20_000, n_surface: 20_000, ..Default::default() };
    let sdf = sdf_supervision_samples(&mesh, &bvh, &inside, &params, seed)?;
    let inside_frac = sdf.volume.sdf.iter().filter(|s| **s < 0.0).count() as f64 / sdf.volume.len() as f64;
    let max_near = sdf.near_surface.sdf.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    println!("volume: {} points, {:.3} inside (box fills {:.3})", sdf.volume.len(), inside_frac, 1.6 * 1.0 * 0.6 / 8.0);
    println!("near surface: {} points, max |sdf| {max_near:.5} (band {})", sdf.near_surface.len(), sdf.band);

    let subset = fps(&set.positions, 512, 0)?;
    println!("fps: kept {} of {} points", subset.len(), set.len());
    Ok(())
}
