use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::sync::FusionAccumulator;
use super::{inpaint_texture, unproject_views_to_texture, BakeView, TexbakeError, Texture, UvAtlas};
use crate::mesh::TriangleMesh;
use crate::render::render_depth;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BakeParams {
    /// Longer image side after upsampling; views already this large are used as is.
    pub upsample_to: usize,
    pub weight_exponent: f64,
}

impl Default for BakeParams {
    fn default() -> Self {
        BakeParams { upsample_to: 2048, weight_exponent: super::DEFAULT_WEIGHT_EXPONENT }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BakeStats {
    pub views: usize,
    pub view_resolution: (usize, usize),
    pub charts: usize,
    pub covered_texels: usize,
    pub fused_texels: usize,
    pub inpainted_texels: usize,
    pub inpaint_iterations: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct BakeOutcome {
    /// Input mesh with the atlas as face UVs.
    pub mesh: TriangleMesh,
    pub texture: Texture,
    pub stats: BakeStats,
}

/// Catmull-Rom upsample with coverage clamped into `[0, 1]` and a depth
/// buffer rendered at the new size.
fn upsampled(view: &BakeView, mesh: &TriangleMesh, target: usize) -> BakeView {
    let (w, h) = (view.camera.width, view.camera.height);
    let long = w.max(h);
    if long >= target {
        let mut v = view.clone();
        if v.depth.is_none() {
            v.depth = Some(render_depth(mesh, &v.camera));
        }
        return v;
    }
    let s = target as f64 / long as f64;
    let (nw, nh) = (((w as f64 * s).round() as usize).max(1), ((h as f64 * s).round() as usize).max(1));
    // Resample premultiplied color so background black does not darken the
    // silhouette, then divide coverage back out.
    let premul = view.rgba.map(|c| [c[0] * c[3], c[1] * c[3], c[2] * c[3], c[3]]);
    let mut rgba = premul.resize_catmull_rom(nw, nh);
    for p in &mut rgba.data {
        let a = p[3];
        for k in 0..3 {
            p[k] = if a > 1e-6 { (p[k] / a).clamp(0.0, 1.0) } else { 0.0 };
        }
        p[3] = a.clamp(0.0, 1.0);
    }
    let mut camera = view.camera;
    camera.width = nw;
    camera.height = nh;
    BakeView { key: view.key.clone(), camera, rgba, depth: Some(render_depth(mesh, &camera)) }
}

/// Upsample every view, unproject it into the atlas, fuse, and inpaint the
/// texels no view saw (including the gutters). Views are processed one at a
/// time so only one upsampled image is alive at once.
pub fn bake_pipeline(
    mesh: &TriangleMesh,
    atlas: &UvAtlas,
    views: &[BakeView],
    params: &BakeParams,
) -> Result<BakeOutcome, TexbakeError> {
    if views.is_empty() {
        return Err(TexbakeError::NoViews);
    }
    let start = Instant::now();
    let surface = atlas.rasterize(mesh);
    let mut fusion = FusionAccumulator::new(surface.width, surface.height);
    let mut view_resolution = (0, 0);
    for view in views {
        let up = upsampled(view, mesh, params.upsample_to);
        view_resolution = (up.camera.width, up.camera.height);
        let (partials, weights) = unproject_views_to_texture(&surface, std::slice::from_ref(&up), params.weight_exponent)?;
        fusion.add(&partials[0], &weights.per_view[0]);
        log::debug!("baked view {}", view.key);
    }
    let fused = fusion.finish();
    let fused_texels = fused.valid_count();
    let (texture, inpaint) = inpaint_texture(&fused)?;
    Ok(BakeOutcome {
        mesh: atlas.apply(mesh),
        texture,
        stats: BakeStats {
            views: views.len(),
            view_resolution,
            charts: atlas.chart_count(),
            covered_texels: surface.covered_count(),
            fused_texels,
            inpainted_texels: inpaint.filled,
            inpaint_iterations: inpaint.iterations,
            seconds: start.elapsed().as_secs_f64(),
        },
    })
}
