//! Small synthetic corpora of textured assets: OBJ + MTL + PNG per asset and a
//! JSONL manifest. Used by the examples, the CLI tests and desk-scale runs.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::filters::ManifestEntry;
use crate::geom::Vec3;
use crate::mesh::{save_obj, MeshError, TriangleMesh};
use crate::primitives;
use crate::raster::{save_png_rgba, RasterError};
use crate::texbake::{inpaint_texture, uv_unwrap, TexbakeError, Texture};

/// Texture side of generated assets.
pub const SYNTH_TEXTURE_RES: usize = 256;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Texbake(#[from] TexbakeError),
    #[error(transparent)]
    Raster(#[from] RasterError),
}

/// What a generated asset is meant to exercise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthKind {
    Sphere,
    Cube,
    Slab,
    Capsule,
    /// A single quad; the single-surface filter should reject it.
    FlatQuad,
    /// A thin rod seen end-on from the front; too small.
    Needle,
    /// Sphere with every face flipped.
    InvertedSphere,
    /// A clean sphere whose name marks it as scan data.
    ScanNamed,
}

impl SynthKind {
    /// Whether every filter is expected to pass.
    pub fn is_clean(self) -> bool {
        matches!(self, SynthKind::Sphere | SynthKind::Cube | SynthKind::Slab | SynthKind::Capsule)
    }
}

const CYCLE: [SynthKind; 10] = [
    SynthKind::Sphere,
    SynthKind::Cube,
    SynthKind::Slab,
    SynthKind::FlatQuad,
    SynthKind::Capsule,
    SynthKind::Needle,
    SynthKind::Sphere,
    SynthKind::InvertedSphere,
    SynthKind::Cube,
    SynthKind::ScanNamed,
];

#[derive(Debug, Clone, Serialize)]
pub struct SynthAsset {
    pub asset_id: String,
    pub kind: SynthKind,
    pub mesh: PathBuf,
    pub texture: PathBuf,
}

fn capsule() -> TriangleMesh {
    let sphere = primitives::smooth_icosphere(0.5, 3);
    sphere.transformed(|p| {
        let stretch = if p.y > 0.0 { 0.4 } else { -0.4 };
        Vec3::new(p.x, p.y + stretch, p.z)
    })
}

fn geometry(kind: SynthKind, rng: &mut ChaCha8Rng) -> TriangleMesh {
    match kind {
        SynthKind::Sphere | SynthKind::ScanNamed => primitives::icosphere(0.5 + rng.gen::<f64>() * 0.3, 3),
        SynthKind::Cube => primitives::cube(0.4 + rng.gen::<f64>() * 0.2),
        SynthKind::Slab => {
            let h = Vec3::new(0.6, 0.35 + rng.gen::<f64>() * 0.15, 0.25);
            primitives::box_mesh(-h, h)
        }
        SynthKind::Capsule => capsule(),
        SynthKind::FlatQuad => primitives::quad_plane(0.5),
        // Long along the view axis so the front view sees only its end.
        SynthKind::Needle => primitives::box_mesh(Vec3::new(-0.04, -0.04, -1.0), Vec3::new(0.04, 0.04, 1.0)),
        SynthKind::InvertedSphere => primitives::flip_faces(&primitives::icosphere(0.6, 3), |_| true),
    }
}

fn hsv(h: f64, s: f64, v: f64) -> [f32; 4] {
    let h6 = h.rem_euclid(1.0) * 6.0;
    let c = v * s;
    let x = c * (1.0 - (h6 % 2.0 - 1.0).abs());
    let (r, g, b) = match h6 as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [(r + m) as f32, (g + m) as f32, (b + m) as f32, 1.0]
}

/// Colors the atlas from surface position, so the texture is continuous
/// across chart seams, then inpaints the gutters.
fn paint(mesh: &TriangleMesh, rng: &mut ChaCha8Rng) -> Result<(TriangleMesh, Texture), SynthError> {
    let atlas = uv_unwrap(mesh, SYNTH_TEXTURE_RES, 2)?;
    let surface = atlas.rasterize(mesh);
    let hue0 = rng.gen::<f64>();
    let freq = 4.0 + rng.gen::<f64>() * 6.0;
    let mut tex = Texture::new(SYNTH_TEXTURE_RES, SYNTH_TEXTURE_RES);
    for i in 0..surface.position.len() {
        if !surface.covered(i) {
            continue;
        }
        let p = surface.position[i];
        let hue = hue0 + 0.35 * (p.x + 0.5 * p.y - 0.3 * p.z);
        let value = 0.6 + 0.25 * (freq * p.y).sin() * (freq * p.x).cos();
        tex.set(i, hsv(hue, 0.7, value));
    }
    let (tex, _) = inpaint_texture(&tex)?;
    Ok((atlas.apply(mesh), tex))
}

fn write_asset(dir: &Path, id: &str, mesh: &TriangleMesh, tex: &Texture) -> Result<(PathBuf, PathBuf), SynthError> {
    let obj = dir.join(format!("{id}.obj"));
    let mtl = dir.join(format!("{id}.mtl"));
    let png = dir.join(format!("{id}.png"));
    save_png_rgba(&tex.rgba, &png)?;
    fs::write(&mtl, format!("newmtl material0\nKd 1 1 1\nmap_Kd {id}.png\n"))
        .map_err(|e| SynthError::Io { path: mtl.clone(), message: e.to_string() })?;
    save_obj(mesh, &obj, Some(&format!("{id}.mtl")))?;
    Ok((obj, png))
}

/// Writes `count` assets into `dir` (cycling through the kinds, four of every
/// ten being filter bait) plus `manifest.jsonl`. Same seed, same bytes.
pub fn write_synthetic_corpus(dir: &Path, count: usize, seed: u64) -> Result<(PathBuf, Vec<SynthAsset>), SynthError> {
    fs::create_dir_all(dir).map_err(|e| SynthError::Io { path: dir.to_path_buf(), message: e.to_string() })?;
    let mut assets = Vec::with_capacity(count);
    let mut lines = String::new();
    for i in 0..count {
        let kind = CYCLE[i % CYCLE.len()];
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1000).wrapping_add(i as u64));
        let id = match kind {
            SynthKind::ScanNamed => format!("a{i:03}_lidar_scan"),
            _ => format!("a{i:03}"),
        };
        let (mesh, tex) = paint(&geometry(kind, &mut rng), &mut rng)?;
        let (obj, png) = write_asset(dir, &id, &mesh, &tex)?;
        let entry = ManifestEntry { asset_id: id.clone(), mesh: format!("{id}.obj").into(), texture: None };
        lines.push_str(&serde_json::to_string(&entry).expect("manifest entries serialize"));
        lines.push('\n');
        assets.push(SynthAsset { asset_id: id, kind, mesh: obj, texture: png });
    }
    let manifest = dir.join("manifest.jsonl");
    fs::write(&manifest, lines).map_err(|e| SynthError::Io { path: manifest.clone(), message: e.to_string() })?;
    Ok((manifest, assets))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::{curate_corpus, FilterConfig, FilterKind};

    #[test]
    fn corpus_is_deterministic_and_loads() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let (_, assets) = write_synthetic_corpus(a.path(), 3, 7).unwrap();
        write_synthetic_corpus(b.path(), 3, 7).unwrap();
        for s in &assets {
            let name = s.mesh.file_name().unwrap();
            assert_eq!(fs::read(&s.mesh).unwrap(), fs::read(b.path().join(name)).unwrap());
            let loaded = crate::mesh::load_mesh(&s.mesh).unwrap();
            assert!(loaded.mesh.face_uvs.is_some());
            assert_eq!(loaded.texture_path.as_deref(), Some(s.texture.as_path()));
        }
    }

    #[test]
    fn bait_assets_fail_their_filter() {
        let dir = tempfile::tempdir().unwrap();
        let (manifest, assets) = write_synthetic_corpus(dir.path(), 10, 1).unwrap();
        let reports = curate_corpus(&manifest, &FilterConfig::default()).unwrap();
        for (s, r) in assets.iter().zip(&reports) {
            assert_eq!(s.asset_id, r.asset_id);
            let failed: Vec<FilterKind> = r.verdicts.iter().filter(|v| !v.passed).map(|v| v.filter).collect();
            let expected = match s.kind {
                SynthKind::FlatQuad => Some(FilterKind::SingleSurface),
                SynthKind::Needle => Some(FilterKind::SmallObject),
                SynthKind::InvertedSphere => Some(FilterKind::WrongNormal),
                SynthKind::ScanNamed => Some(FilterKind::Metadata),
                _ => None,
            };
            match expected {
                None => assert!(failed.is_empty(), "{} failed {failed:?}", s.asset_id),
                Some(k) => assert!(failed.contains(&k), "{} failed {failed:?}", s.asset_id),
            }
        }
        assert_eq!(reports.iter().filter(|r| r.passed_filters()).count(), 6);
        assert_eq!(reports.iter().filter(|r| r.kept).count(), 5);
    }
}
