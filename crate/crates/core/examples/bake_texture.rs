//! Renders a textured asset, forgets its texture, and bakes a new one from
//! the views alone: unwrap, unproject, fuse, inpaint, export GLB and OBJ.
//!
//!     cargo run --release --example bake_texture -- [out_dir] [atlas_res]

use s13d::mesh::{load_mesh, normalize_to_unit_cube};
use s13d::raster::load_png_rgba;
use s13d::render::render_canonical_views;
use s13d::synth::write_synthetic_corpus;
use s13d::texbake::{bake_pipeline, export_glb, export_obj, uv_unwrap, BakeParams, BakeView};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let tmp = tempfile::tempdir()?;
    let out = args.first().map(Into::into).unwrap_or_else(|| tmp.path().join("baked"));
    let atlas_res = args.get(1).and_then(|a| a.parse().ok()).unwrap_or(1024);

    let (_, assets) = write_synthetic_corpus(tmp.path(), 1, 3)?;
    let loaded = load_mesh(&assets[0].mesh)?;
    let mesh = normalize_to_unit_cube(&loaded.mesh)?.mesh;
    let texture = load_png_rgba(&assets[0].texture)?;
    let views = render_canonical_views(&mesh, 512, Some(&texture))?;
    let views: Vec<BakeView> = views.views.iter().map(BakeView::from_buffer).collect();

    let atlas = uv_unwrap(&mesh, atlas_res, 4)?;
    println!("atlas: {} charts at {}²", atlas.chart_count(), atlas_res);
    let params = BakeParams { upsample_to: atlas_res, ..Default::default() };
    let baked = bake_pipeline(&mesh, &atlas, &views, &params)?;
    println!("{}", serde_json::to_string_pretty(&baked.stats)?);

    std::fs::create_dir_all(&out)?;
    export_glb(&baked.mesh, &baked.texture, &out.join("asset.glb"))?;
    export_obj(&baked.mesh, &baked.texture, &out.join("asset.obj"))?;
    println!("wrote {}", out.display());
    Ok(())
}
