use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bvh::{yz_crossing, YzCrossing, CROSSING_EPS};
use super::{check_resolution, Bvh, FieldError, GridKind, ScalarGrid};
use crate::geom::{solid_angle, Vec3};
use crate::mesh::TriangleMesh;

/// Offset applied to queries that land exactly on a triangle.
pub const ON_SURFACE_NUDGE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum WindingApprox {
    Exact,
    ClusterDipole { tolerance: f64 },
}

impl Default for WindingApprox {
    fn default() -> Self {
        WindingApprox::ClusterDipole { tolerance: 0.01 }
    }
}

/// Generalized winding number of `mesh` at `p` by exact solid-angle summation.
pub fn winding_number(mesh: &TriangleMesh, p: &Vec3) -> f64 {
    let mut q = *p;
    for axis in 0..3 {
        let mut sum = 0.0;
        let mut on_surface = false;
        for f in 0..mesh.face_count() {
            let [a, b, c] = mesh.triangle(f);
            match solid_angle(&q, &a, &b, &c) {
                Some(w) => sum += w,
                None => {
                    on_surface = true;
                    break;
                }
            }
        }
        if !on_surface {
            return sum / (4.0 * std::f64::consts::PI);
        }
        q[axis] += ON_SURFACE_NUDGE;
    }
    // Three nudges all on the surface cannot happen for non-degenerate input;
    // fall back to a coarser offset.
    winding_number(mesh, &(p + Vec3::repeat(1e-6)))
}

/// Winding number through the BVH, nudging on-surface queries.
pub fn winding_at(bvh: &Bvh, p: &Vec3, approx: WindingApprox) -> f64 {
    let mut q = *p;
    for step in 0..6 {
        let w = match approx {
            WindingApprox::Exact => bvh.winding_exact(&q),
            WindingApprox::ClusterDipole { tolerance } => bvh.winding_dipole(&q, tolerance),
        };
        if let Some(w) = w {
            return w;
        }
        q[step % 3] += ON_SURFACE_NUDGE * (1 + step / 3) as f64;
    }
    0.5
}

/// Winding numbers at all N³ cell centers.
pub fn winding_grid(mesh: &TriangleMesh, n: usize, approx: WindingApprox) -> Result<ScalarGrid, FieldError> {
    check_resolution(n)?;
    let bvh = Bvh::build(mesh);
    Ok(ScalarGrid::from_fn(n, GridKind::Winding, |p| winding_at(&bvh, &p, approx)))
}

/// Winding numbers at a subset of cells (flat indices); other cells get `fill`.
#[cfg(test)]
fn winding_at_cells(
    bvh: &Bvh,
    n: usize,
    cells: &[usize],
    approx: WindingApprox,
    fill: f64,
) -> ScalarGrid {
    let vals: Vec<f64> = cells
        .par_iter()
        .map(|&c| {
            let (i, j, k) = (c % n, (c / n) % n, c / (n * n));
            let p = Vec3::new(super::cell_center(n, i), super::cell_center(n, j), super::cell_center(n, k));
            winding_at(bvh, &p, approx)
        })
        .collect();
    let mut g = ScalarGrid::new(n, GridKind::Winding, fill);
    for (&c, v) in cells.iter().zip(vals) {
        g.values[c] = v;
    }
    g
}

/// Winding numbers of a closed, consistently oriented mesh at every cell, by
/// counting signed crossings of a +x ray per grid row: a face whose normal
/// has positive x leaves the enclosed region, so crossing it ahead of the
/// cell adds one. This equals the generalized winding number on closed input.
///
/// Returns the grid and the cells the count cannot decide: every cell of a
/// row whose ray grazes an edge or lies in a face plane, and cells sitting on
/// a crossing.
pub(crate) fn crossing_winding(mesh: &TriangleMesh, n: usize) -> (ScalarGrid, Vec<usize>) {
    let center = |i: usize| super::cell_center(n, i);
    // Row (j, k) ray: y = center(j), z = center(k).
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n * n];
    let row_range = |lo: f64, hi: f64| {
        let a = (((lo + 1.0) * n as f64 / 2.0 - 0.5).ceil().max(0.0)) as usize;
        let b = (((hi + 1.0) * n as f64 / 2.0 - 0.5).floor().min(n as f64 - 1.0)) as isize;
        (a, b)
    };
    for f in 0..mesh.face_count() {
        let [a, b, c] = mesh.triangle(f);
        let (j0, j1) = row_range(a.y.min(b.y).min(c.y), a.y.max(b.y).max(c.y));
        let (k0, k1) = row_range(a.z.min(b.z).min(c.z), a.z.max(b.z).max(c.z));
        for k in k0 as isize..=k1 {
            for j in j0 as isize..=j1 {
                rows[k as usize * n + j as usize].push(f);
            }
        }
    }
    let per_row: Vec<(Vec<f64>, Vec<usize>)> = rows
        .par_iter()
        .enumerate()
        .map(|(row, faces)| {
            let (y, z) = (center(row % n), center(row / n));
            let mut crossings: Vec<(f64, f64)> = Vec::new();
            let mut degenerate = false;
            for &f in faces {
                match yz_crossing(&mesh.triangle(f), y, z) {
                    YzCrossing::Miss => {}
                    YzCrossing::Degenerate => {
                        degenerate = true;
                        break;
                    }
                    YzCrossing::Hit { x, sign } => crossings.push((x, sign)),
                }
            }
            let all: Vec<usize> = (0..n).collect();
            if degenerate {
                return (vec![0.0; n], all);
            }
            crossings.sort_by(|p, q| p.0.total_cmp(&q.0));
            let mut values = vec![0.0; n];
            let mut unresolved = Vec::new();
            // Sweep from +x down, accumulating crossings ahead of each cell.
            let mut acc = 0.0;
            let mut next = crossings.len();
            for i in (0..n).rev() {
                let x = center(i);
                while next > 0 && crossings[next - 1].0 > x {
                    next -= 1;
                    acc += crossings[next].1;
                }
                values[i] = acc;
                let near = |t: usize| crossings.get(t).is_some_and(|cr| (cr.0 - x).abs() <= CROSSING_EPS);
                if near(next) || (next > 0 && near(next - 1)) {
                    unresolved.push(i);
                }
            }
            (values, unresolved)
        })
        .collect();
    let mut grid = ScalarGrid::new(n, GridKind::Winding, 0.0);
    let mut unresolved = Vec::new();
    for (row, (values, cells)) in per_row.into_iter().enumerate() {
        let base = row * n;
        grid.values[base..base + n].copy_from_slice(&values);
        unresolved.extend(cells.into_iter().map(|i| base + i));
    }
    unresolved.sort_unstable();
    (grid, unresolved)
}

/// Error budget of the first, coarse pass in [`threshold_at_cells`]. Interior
/// cells sit about 0.25 above the usual threshold, so most are decided there.
const SCREEN_TOLERANCE: f64 = 0.2;

/// A winding value at `p` that is on the correct side of `threshold`: the
/// cheap bounded dipole estimate when its bound decides the comparison,
/// otherwise a full evaluation with `approx`.
pub fn winding_screened(bvh: &Bvh, p: &Vec3, approx: WindingApprox, threshold: f64) -> f64 {
    match bvh.winding_with_bound(p, SCREEN_TOLERANCE) {
        Some((w, err)) if (w - threshold).abs() > err => w,
        _ => winding_at(bvh, p, approx),
    }
}

/// Like [`winding_at_cells`], but only the comparison with `threshold` has to
/// be right. Each cell first gets a cheap dipole estimate with its rigorous
/// error bound; when the bound straddles the threshold the cell is evaluated
/// again with `approx`. The stored value is whichever estimate decided.
pub(crate) fn threshold_at_cells(
    bvh: &Bvh,
    n: usize,
    cells: &[usize],
    approx: WindingApprox,
    threshold: f64,
    fill: f64,
) -> ScalarGrid {
    let vals: Vec<f64> = cells
        .par_iter()
        .map(|&c| {
            let (i, j, k) = (c % n, (c / n) % n, c / (n * n));
            let p = Vec3::new(super::cell_center(n, i), super::cell_center(n, j), super::cell_center(n, k));
            winding_screened(bvh, &p, approx, threshold)
        })
        .collect();
    let mut g = ScalarGrid::new(n, GridKind::Winding, fill);
    for (&c, v) in cells.iter().zip(vals) {
        g.values[c] = v;
    }
    g
}
