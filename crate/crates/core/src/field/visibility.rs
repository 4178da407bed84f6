use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{cell_center, check_resolution, FieldError, GridKind, ScalarGrid};
use crate::geom::Vec3;
use crate::mesh::TriangleMesh;
use crate::raster::Image;
use crate::render::{canonical_camera, render_depth, Camera, Projection, ViewKey};

/// Camera sets for the depth test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VisibilityDirections {
    /// The six axis-aligned orthographic views.
    #[default]
    Canonical,
    /// The six axis views plus eight orthographic views from the cube corners.
    CanonicalPlusCorners,
}

/// Depth slack, in voxels, below which a cell still counts as in front of the
/// rendered surface.
pub const DEPTH_SLACK_VOXELS: f64 = 0.25;

fn cameras(n: usize, dirs: VisibilityDirections) -> Result<Vec<Camera>, FieldError> {
    let res = 2 * n;
    let mut cams: Vec<Camera> = ViewKey::ALL
        .iter()
        .map(|&k| canonical_camera(k, res))
        .collect::<Result<_, _>>()?;
    if dirs == VisibilityDirections::CanonicalPlusCorners {
        let side = (res as f64 * 3f64.sqrt()).ceil() as usize;
        for bits in 0..8u32 {
            let d = Vec3::new(
                if bits & 1 == 0 { -1.0 } else { 1.0 },
                if bits & 2 == 0 { -1.0 } else { 1.0 },
                if bits & 4 == 0 { -1.0 } else { 1.0 },
            )
            .normalize();
            let up = if d.y.abs() > 0.9 { Vec3::z() } else { Vec3::y() };
            cams.push(Camera::new(
                Projection::Orthographic { half_extent: 3f64.sqrt() },
                d * 3.0,
                -d,
                up,
                side,
                side,
            )?);
        }
    }
    Ok(cams)
}

/// Smallest depth among the 2×2 pixels around a continuous image position;
/// `+∞` when none of them is covered or inside the image.
fn block_min_depth(depth: &Image<f32>, px: f64, py: f64) -> f64 {
    let x0 = (px - 0.5).floor() as i64;
    let y0 = (py - 0.5).floor() as i64;
    let mut best = f64::INFINITY;
    for y in y0..=y0 + 1 {
        for x in x0..=x0 + 1 {
            if x >= 0 && y >= 0 && (x as usize) < depth.width && (y as usize) < depth.height {
                best = best.min(depth.get(x as usize, y as usize) as f64);
            }
        }
    }
    best
}

/// Marks each cell visible (1) when some view sees its center no deeper than
/// the rendered surface plus a quarter voxel, otherwise 0.
///
/// Depth maps are rendered at twice the grid resolution; canonical cell
/// centers then project onto pixel corners and the test uses the nearest of
/// the four surrounding pixels.
pub fn visibility_grid(mesh: &TriangleMesh, n: usize, dirs: VisibilityDirections) -> Result<ScalarGrid, FieldError> {
    check_resolution(n)?;
    let cams = cameras(n, dirs)?;
    let depths: Vec<Image<f32>> = cams.par_iter().map(|c| render_depth(mesh, c)).collect();
    let eps = DEPTH_SLACK_VOXELS * 2.0 / n as f64;
    let mut values = vec![0.0; n * n * n];
    values.par_chunks_mut(n * n).enumerate().for_each(|(k, slice)| {
        let z = cell_center(n, k);
        for j in 0..n {
            let y = cell_center(n, j);
            for i in 0..n {
                let p = Vec3::new(cell_center(n, i), y, z);
                let visible = cams.iter().zip(&depths).any(|(cam, depth)| {
                    let Some(q) = cam.project(&p) else { return false };
                    q.depth <= block_min_depth(depth, q.px, q.py) + eps
                });
                slice[j * n + i] = if visible { 1.0 } else { 0.0 };
            }
        }
    });
    Ok(ScalarGrid { n, kind: GridKind::Visibility, values })
}
