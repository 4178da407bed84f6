//! Renders the six canonical views of a textured synthetic asset and writes
//! color, normal, position and depth maps.
//!
//!     cargo run --release --example render_views -- [out_dir] [resolution]

use s13d::mesh::{load_mesh, normalize_to_unit_cube};
use s13d::raster::load_png_rgba;
use s13d::render::{render_canonical_views, save_view_set};
use s13d::synth::write_synthetic_corpus;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let tmp = tempfile::tempdir()?;
    let out = args.first().map(Into::into).unwrap_or_else(|| tmp.path().join("views"));
    let resolution = args.get(1).and_then(|a| a.parse().ok()).unwrap_or(512);

    let (_, assets) = write_synthetic_corpus(tmp.path(), 3, 0)?;
    let asset = &assets[2];
    let loaded = load_mesh(&asset.mesh)?;
    let mesh = normalize_to_unit_cube(&loaded.mesh)?.mesh;
    let texture = load_png_rgba(&asset.texture)?;
    let views = render_canonical_views(&mesh, resolution, Some(&texture))?;
    for v in &views.views {
        println!("{:<6} coverage {:.3}", v.key, v.coverage());
    }
    let written = save_view_set(&views, &out, &asset.asset_id)?;
    println!("wrote {} files to {}", written.len(), out.display());
    Ok(())
}
