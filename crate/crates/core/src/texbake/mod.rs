//! UV atlas generation, image-space multi-view texture synchronization and
//! texture baking with GLB / OBJ export.

mod atlas;
mod bake;
mod export;
mod inpaint;
mod sync;

use thiserror::Error;

pub use atlas::{rasterize_surface, uv_unwrap, ChartRect, SurfaceMap, UvAtlas};
pub use bake::{bake_pipeline, BakeOutcome, BakeParams, BakeStats};
pub use export::{export_glb, export_obj, glb_bytes};
pub use inpaint::{inpaint_texture, InpaintStats};
pub use sync::{
    fuse_partial_textures, project_texture_to_views, synchronize_views, unproject_views_to_texture, BakeView,
    ProjectedImage, ViewWeights,
};

use crate::raster::{Image, RasterError};
use crate::render::RenderError;

/// Default exponent on the clamped cosine view weight.
pub const DEFAULT_WEIGHT_EXPONENT: f64 = 1.0;

#[derive(Debug, Error)]
pub enum TexbakeError {
    #[error("mesh has no faces")]
    EmptyMesh,
    #[error("{charts} charts do not fit a {resolution}² atlas; raise the resolution or lower the gutter")]
    PackingOverflow { resolution: usize, charts: usize },
    #[error("view '{0}' has no depth buffer")]
    MissingDepth(String),
    #[error("view '{key}' is {got:?}, expected {expected:?}")]
    SizeMismatch { key: String, got: (usize, usize), expected: (usize, usize) },
    #[error("texture has no valid texel to inpaint from")]
    AllInvalid,
    #[error("mesh has no UVs")]
    MissingUvs,
    #[error("no views given")]
    NoViews,
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("{path}: {message}")]
    Io { path: std::path::PathBuf, message: String },
}

/// RGBA texels with a validity mask. Invalid texels carry no meaning.
#[derive(Debug, Clone, PartialEq)]
pub struct Texture {
    pub rgba: Image<[f32; 4]>,
    pub valid: Vec<bool>,
}

impl Texture {
    pub fn new(width: usize, height: usize) -> Texture {
        Texture { rgba: Image::new(width, height, [0.0; 4]), valid: vec![false; width * height] }
    }

    /// Every texel valid.
    pub fn filled(img: Image<[f32; 4]>) -> Texture {
        let n = img.data.len();
        Texture { rgba: img, valid: vec![true; n] }
    }

    pub fn width(&self) -> usize {
        self.rgba.width
    }

    pub fn height(&self) -> usize {
        self.rgba.height
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    pub fn set(&mut self, i: usize, c: [f32; 4]) {
        self.rgba.data[i] = c;
        self.valid[i] = true;
    }

    /// The texel containing `(u, v)` if it is valid, else [`Texture::sample_valid`].
    pub fn sample_nearest_valid(&self, u: f64, v: f64) -> Option<[f32; 4]> {
        let (w, h) = (self.width(), self.height());
        let x = ((u * w as f64).floor().max(0.0) as usize).min(w - 1);
        let y = ((v * h as f64).floor().max(0.0) as usize).min(h - 1);
        let i = y * w + x;
        if self.valid[i] {
            Some(self.rgba.data[i])
        } else {
            self.sample_valid(u, v)
        }
    }

    /// Bilinear lookup that ignores invalid taps and renormalizes over the
    /// rest. `None` when no tap is valid.
    pub fn sample_valid(&self, u: f64, v: f64) -> Option<[f32; 4]> {
        let (w, h) = (self.width(), self.height());
        let fx = (u * w as f64 - 0.5).clamp(0.0, (w - 1) as f64);
        let fy = (v * h as f64 - 0.5).clamp(0.0, (h - 1) as f64);
        let (x0, y0) = (fx.floor() as usize, fy.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
        let (tx, ty) = (fx - x0 as f64, fy - y0 as f64);
        let taps = [
            (x0, y0, (1.0 - tx) * (1.0 - ty)),
            (x1, y0, tx * (1.0 - ty)),
            (x0, y1, (1.0 - tx) * ty),
            (x1, y1, tx * ty),
        ];
        let mut acc = [0.0f64; 4];
        let mut wsum = 0.0;
        for (x, y, wt) in taps {
            let i = y * w + x;
            if wt > 0.0 && self.valid[i] {
                let c = self.rgba.data[i];
                for k in 0..4 {
                    acc[k] += wt * c[k] as f64;
                }
                wsum += wt;
            }
        }
        (wsum > 0.0).then(|| acc.map(|a| (a / wsum) as f32))
    }
}
