//! Volumetric fields over the normalized cube `[-1, 1]³`: winding numbers,
//! depth-test visibility, occupancy, truncated signed distances, marching
//! cubes, hierarchical decoding and the watertight converter.
//!
//! Sign convention: signed distances are negative inside.
//!
//! Grid file layout (little-endian): 8-byte magic `S13DGRID`, `u32` N,
//! `u32` kind, then N³ `f32` values with x varying fastest.

mod bvh;
mod convert;
mod hierarchical;
mod marching_cubes;
mod visibility;
mod winding;

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bvh::{Bvh, BvhNode, Closest};
pub use convert::{
    spurious_components, watertight_convert, ConvertMode, ConvertOutcome, ConvertParams, ConvertStats,
};
pub use hierarchical::{dense_decode, hierarchical_decode, DecodeStats, FieldEval};
pub use marching_cubes::marching_cubes;
pub use visibility::{visibility_grid, VisibilityDirections};
pub use winding::{winding_at, winding_grid, winding_number, winding_screened, WindingApprox};

use crate::geom::Vec3;
use crate::mesh::WatertightReport;
use crate::render::RenderError;

/// Truncation distance for TSDF values.
pub const DEFAULT_TRUNCATION: f64 = 2.0 / 256.0;
pub const DEFAULT_WN_THRESHOLD: f64 = 0.75;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("grid resolutions differ: {0} vs {1}")]
    ResolutionMismatch(usize, usize),
    #[error("grid resolution {0} is outside [{1}, {2}]")]
    ResolutionOutOfRange(usize, usize, usize),
    #[error("field has no sign change at iso value {0}; nothing to extract")]
    EmptySurface(f64),
    #[error("converted mesh is not watertight: {0:?}")]
    ConversionFailed(WatertightReport),
    #[error("target resolution {target} is not coarse resolution {coarse} times a power of two")]
    NotPowerOfTwoRatio { coarse: usize, target: usize },
    #[error("mesh is not normalized: bounding box reaches {0:.4} (limit 1.001)")]
    UnnormalizedMesh(f64),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error(transparent)]
    Render(#[from] RenderError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    Winding = 0,
    UnsignedDistance = 1,
    SignedDistance = 2,
    Occupancy = 3,
    Visibility = 4,
}

impl GridKind {
    fn from_u32(v: u32) -> Option<GridKind> {
        Some(match v {
            0 => GridKind::Winding,
            1 => GridKind::UnsignedDistance,
            2 => GridKind::SignedDistance,
            3 => GridKind::Occupancy,
            4 => GridKind::Visibility,
            _ => return None,
        })
    }
}

/// N³ values sampled at cell centers; cell `i` on each axis sits at
/// `-1 + (2i + 1) / N`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarGrid {
    pub n: usize,
    pub kind: GridKind,
    pub values: Vec<f64>,
}

const MAGIC: &[u8; 8] = b"S13DGRID";

impl ScalarGrid {
    pub fn new(n: usize, kind: GridKind, fill: f64) -> Self {
        ScalarGrid { n, kind, values: alloc_values(n * n * n, fill) }
    }

    /// Evaluates `f` at every cell center, in parallel over z-slices.
    pub fn from_fn(n: usize, kind: GridKind, f: impl Fn(Vec3) -> f64 + Sync) -> Self {
        let mut values = alloc_values(n * n * n, 0.0);
        values.par_chunks_mut(n * n).enumerate().for_each(|(k, slice)| {
            let z = cell_center(n, k);
            for j in 0..n {
                let y = cell_center(n, j);
                for i in 0..n {
                    slice[j * n + i] = f(Vec3::new(cell_center(n, i), y, z));
                }
            }
        });
        ScalarGrid { n, kind, values }
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.n * (j + self.n * k)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.index(i, j, k)]
    }

    pub fn position(&self, i: usize, j: usize, k: usize) -> Vec3 {
        Vec3::new(cell_center(self.n, i), cell_center(self.n, j), cell_center(self.n, k))
    }

    /// Trilinear interpolation between cell centers, clamped at the border.
    pub fn sample_trilinear(&self, p: &Vec3) -> f64 {
        let n = self.n;
        let axis = |x: f64| {
            let f = ((x + 1.0) * n as f64 * 0.5 - 0.5).clamp(0.0, (n - 1) as f64);
            let i = (f.floor() as usize).min(n.saturating_sub(2));
            (i, f - i as f64)
        };
        let ((i, tx), (j, ty), (k, tz)) = (axis(p.x), axis(p.y), axis(p.z));
        let mut acc = 0.0;
        for (dk, wz) in [(0, 1.0 - tz), (1, tz)] {
            for (dj, wy) in [(0, 1.0 - ty), (1, ty)] {
                for (di, wx) in [(0, 1.0 - tx), (1, tx)] {
                    let w = wx * wy * wz;
                    if w != 0.0 {
                        acc += w * self.get(i + di, j + dj, k + dk);
                    }
                }
            }
        }
        acc
    }

    /// Cell width `2 / N`.
    pub fn voxel(&self) -> f64 {
        2.0 / self.n as f64
    }

    pub fn count(&self, pred: impl Fn(f64) -> bool) -> usize {
        self.values.iter().filter(|v| pred(**v)).count()
    }

    pub fn save(&self, path: &Path) -> Result<(), FieldError> {
        let mut out = Vec::with_capacity(16 + self.values.len() * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.n as u32).to_le_bytes());
        out.extend_from_slice(&(self.kind as u32).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        fs::write(path, out).map_err(|e| FieldError::Io { path: path.to_path_buf(), message: e.to_string() })
    }

    pub fn load(path: &Path) -> Result<ScalarGrid, FieldError> {
        let bad = |message: &str| FieldError::Io { path: path.to_path_buf(), message: message.to_string() };
        let bytes = fs::read(path).map_err(|e| bad(&e.to_string()))?;
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("not a grid file"));
        }
        let n = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let kind = GridKind::from_u32(u32::from_le_bytes(bytes[12..16].try_into().unwrap()))
            .ok_or_else(|| bad("unknown grid kind"))?;
        if bytes.len() != 16 + n * n * n * 4 {
            return Err(bad("size does not match header"));
        }
        let values = bytes[16..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        Ok(ScalarGrid { n, kind, values })
    }
}

/// Allocates a filled value buffer. Large grids (a 256³ grid is 128 MiB) ask
/// the kernel for transparent huge pages first, which roughly halves the
/// page-fault cost of the initial fill.
fn alloc_values(len: usize, fill: f64) -> Vec<f64> {
    let mut values: Vec<f64> = Vec::with_capacity(len);
    #[cfg(target_os = "linux")]
    {
        const HUGE: usize = 1 << 21;
        let base = values.as_mut_ptr() as usize;
        let start = (base + HUGE - 1) & !(HUGE - 1);
        let end = (base + len * std::mem::size_of::<f64>()) & !(HUGE - 1);
        if end > start {
            // SAFETY: the range lies inside this vector's allocation; the advice
            // changes only how pages are backed, never their contents.
            unsafe {
                libc::madvise(start as *mut libc::c_void, end - start, libc::MADV_HUGEPAGE);
            }
        }
    }
    values.resize(len, fill);
    values
}

#[inline]
pub fn cell_center(n: usize, i: usize) -> f64 {
    -1.0 + (2 * i + 1) as f64 / n as f64
}

/// `occupied = !visible && winding > threshold`.
pub fn occupancy_grid(
    winding: &ScalarGrid,
    visibility: &ScalarGrid,
    wn_threshold: f64,
) -> Result<ScalarGrid, FieldError> {
    if winding.n != visibility.n {
        return Err(FieldError::ResolutionMismatch(winding.n, visibility.n));
    }
    let values = winding
        .values
        .iter()
        .zip(&visibility.values)
        .map(|(&w, &v)| if v == 0.0 && w > wn_threshold { 1.0 } else { 0.0 })
        .collect();
    Ok(ScalarGrid { n: winding.n, kind: GridKind::Occupancy, values })
}

/// Truncated signed distance: BVH distance, negative when `occupied`,
/// clamped to `±trunc`.
pub fn tsdf_at(bvh: &Bvh, point: &Vec3, occupied: bool, trunc: f64) -> f64 {
    let d = bvh.distance(point, trunc);
    let s = if occupied { -d } else { d };
    s.clamp(-trunc, trunc)
}

pub const MIN_RESOLUTION: usize = 16;
pub const MAX_RESOLUTION: usize = 512;

/// Checks the resolution range used by grid builders.
pub(crate) fn check_resolution(n: usize) -> Result<(), FieldError> {
    if (MIN_RESOLUTION..=MAX_RESOLUTION).contains(&n) {
        Ok(())
    } else {
        Err(FieldError::ResolutionOutOfRange(n, MIN_RESOLUTION, MAX_RESOLUTION))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primitives;

    #[test]
    fn trilinear_reproduces_affine_fields() {
        let g = ScalarGrid::from_fn(16, GridKind::SignedDistance, |p| 0.3 * p.x - 0.2 * p.y + 0.7 * p.z + 0.1);
        for p in [Vec3::new(0.11, -0.52, 0.33), Vec3::new(-0.9, 0.9, 0.0), Vec3::new(0.0625, 0.0625, 0.0625)] {
            let want = 0.3 * p.x - 0.2 * p.y + 0.7 * p.z + 0.1;
            assert!((g.sample_trilinear(&p) - want).abs() < 1e-12);
        }
        assert_eq!(g.sample_trilinear(&g.position(3, 4, 5)), g.get(3, 4, 5));
    }

    #[test]
    fn cell_centers() {
        assert_eq!(cell_center(4, 0), -0.75);
        assert_eq!(cell_center(4, 3), 0.75);
        let g = ScalarGrid::from_fn(4, GridKind::SignedDistance, |p| p.x + 10.0 * p.y + 100.0 * p.z);
        assert_eq!(g.get(1, 0, 0), -0.25 - 7.5 - 75.0);
    }

    #[test]
    fn grid_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.grid");
        let g = ScalarGrid::from_fn(8, GridKind::Winding, |p| p.norm());
        g.save(&p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(bytes.len(), 16 + 512 * 4);
        assert_eq!(&bytes[..8], b"S13DGRID");
        let back = ScalarGrid::load(&p).unwrap();
        assert_eq!(back.kind, GridKind::Winding);
        for (a, b) in back.values.iter().zip(&g.values) {
            assert_eq!(*a, *b as f32 as f64);
        }
    }

    #[test]
    fn tsdf_examples() {
        let m = primitives::icosphere(0.5, 4);
        let bvh = Bvh::build(&m);
        let t = DEFAULT_TRUNCATION;
        assert_eq!(tsdf_at(&bvh, &Vec3::zeros(), true, t), -t);
        // A vertex lies exactly on the surface.
        assert!(tsdf_at(&bvh, &m.vertices[0], false, t).abs() < 1e-7);
        // Off a vertex along its radial direction the nearest point is that vertex.
        let v = m.vertices[0];
        let p = v * ((0.5 + 1.0 / 256.0) / 0.5);
        assert!((tsdf_at(&bvh, &p, false, t) - 1.0 / 256.0).abs() < 1e-6);
    }

    #[test]
    fn occupancy_is_conjunction() {
        let w = ScalarGrid { n: 1, kind: GridKind::Winding, values: vec![0.9] };
        let vis = ScalarGrid { n: 1, kind: GridKind::Visibility, values: vec![1.0] };
        assert_eq!(occupancy_grid(&w, &vis, 0.75).unwrap().values, vec![0.0]);
        let hid = ScalarGrid { n: 1, kind: GridKind::Visibility, values: vec![0.0] };
        assert_eq!(occupancy_grid(&w, &hid, 0.75).unwrap().values, vec![1.0]);
        let w2 = ScalarGrid::new(2, GridKind::Winding, 1.0);
        assert!(matches!(occupancy_grid(&w2, &hid, 0.75), Err(FieldError::ResolutionMismatch(2, 1))));
    }
}
