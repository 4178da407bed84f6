use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Camera, RenderError, ViewSet};
use crate::raster::{self, Image};

/// Per-directory index of the views and their cameras.
pub const CAMERAS_FILE: &str = "cameras.json";

#[derive(Debug, Serialize, Deserialize)]
struct CameraIndex {
    asset: String,
    views: Vec<CameraEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CameraEntry {
    key: String,
    camera: Camera,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> RenderError {
    RenderError::Io { path: path.to_path_buf(), message: e.to_string() }
}

fn channel_path(dir: &Path, asset: &str, key: &str, channel: &str, ext: &str) -> PathBuf {
    dir.join(format!("{asset}_{key}_{channel}.{ext}"))
}

/// Writes every view as `{asset}_{key}_{channel}.{png|pfm}` plus the camera index.
/// Albedo and alpha go to 8-bit PNG; depth, normal and CCM to float PFM.
pub fn save_view_set(views: &ViewSet, dir: &Path, asset: &str) -> Result<Vec<PathBuf>, RenderError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut written = Vec::new();
    for v in &views.views {
        let k = v.key.as_str();
        let p = channel_path(dir, asset, k, "albedo", "png");
        raster::save_png_rgb(&v.albedo, &p)?;
        written.push(p);
        let p = channel_path(dir, asset, k, "alpha", "png");
        raster::save_png_gray(&v.alpha, &p)?;
        written.push(p);
        let p = channel_path(dir, asset, k, "depth", "pfm");
        raster::save_pfm(&v.depth.map(|d| [d]), &p)?;
        written.push(p);
        let p = channel_path(dir, asset, k, "normal", "pfm");
        raster::save_pfm(&v.normal_cam, &p)?;
        written.push(p);
        let p = channel_path(dir, asset, k, "ccm", "pfm");
        raster::save_pfm(&v.position_world, &p)?;
        written.push(p);
    }
    let index = CameraIndex {
        asset: asset.to_string(),
        views: views.views.iter().map(|v| CameraEntry { key: v.key.clone(), camera: v.camera }).collect(),
    };
    let p = dir.join(CAMERAS_FILE);
    let text = serde_json::to_string_pretty(&index).map_err(|e| io_err(&p, e))?;
    fs::write(&p, text).map_err(|e| io_err(&p, e))?;
    written.push(p);
    Ok(written)
}

/// A color image with the camera it was taken from.
#[derive(Debug, Clone)]
pub struct ViewImage {
    pub key: String,
    pub camera: Camera,
    /// RGB plus coverage in the alpha channel.
    pub rgba: Image<[f32; 4]>,
}

/// Reads the camera index and each view's albedo/alpha PNGs from a directory
/// produced by [`save_view_set`] (or prepared by hand in the same layout).
pub fn load_view_images(dir: &Path) -> Result<Vec<ViewImage>, RenderError> {
    let p = dir.join(CAMERAS_FILE);
    let text = fs::read_to_string(&p).map_err(|e| io_err(&p, e))?;
    let index: CameraIndex = serde_json::from_str(&text).map_err(|e| io_err(&p, e))?;
    let mut out = Vec::with_capacity(index.views.len());
    for entry in index.views {
        let color = raster::load_png_rgba(&channel_path(dir, &index.asset, &entry.key, "albedo", "png"))?;
        let alpha_path = channel_path(dir, &index.asset, &entry.key, "alpha", "png");
        let mut rgba = color;
        if alpha_path.exists() {
            let alpha = raster::load_png_rgba(&alpha_path)?;
            if (alpha.width, alpha.height) != (rgba.width, rgba.height) {
                return Err(io_err(&alpha_path, "alpha size differs from albedo"));
            }
            for (c, a) in rgba.data.iter_mut().zip(&alpha.data) {
                c[3] = a[0];
            }
        }
        if (rgba.width, rgba.height) != (entry.camera.width, entry.camera.height) {
            return Err(io_err(dir, format!("view '{}' image size differs from its camera", entry.key)));
        }
        out.push(ViewImage { key: entry.key, camera: entry.camera, rgba });
    }
    Ok(out)
}
