//! Coarse-to-fine evaluation of a 1-Lipschitz signed field.
//!
//! Level `L` cells are refined only when `|v| ≤ halfdiag(L) + voxel(target)`.
//! By the Lipschitz bound every fine cell adjacent to a sign change lies under
//! a chain of refined ancestors, so marching cubes sees exactly the values a
//! dense evaluation would produce on every edge it interpolates.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::{cell_center, check_resolution, FieldError, GridKind, ScalarGrid};
use crate::geom::Vec3;

/// Point evaluator; must be 1-Lipschitz for the skipping to be exact.
pub type FieldEval<'a> = &'a (dyn Fn(Vec3) -> f64 + Sync);

#[derive(Debug, Clone, Default, Serialize)]
pub struct DecodeStats {
    /// Evaluations per level, coarse first.
    pub per_level: Vec<usize>,
    pub evaluated: usize,
    /// `target_n³`.
    pub total_cells: usize,
    pub seconds: f64,
}

impl DecodeStats {
    pub fn fraction(&self) -> f64 {
        self.evaluated as f64 / self.total_cells as f64
    }
}

/// Evaluates `eval` at every cell center of an N³ grid.
pub fn dense_decode(eval: FieldEval, n: usize) -> Result<ScalarGrid, FieldError> {
    check_resolution(n)?;
    Ok(ScalarGrid::from_fn(n, GridKind::SignedDistance, eval))
}

/// Decodes a `target_n³` signed grid, evaluating the coarse grid fully and
/// finer levels only in a band around the zero set. Skipped cells get
/// `±trunc` with the sign of their deepest evaluated ancestor.
pub fn hierarchical_decode(
    eval: FieldEval,
    coarse_n: usize,
    target_n: usize,
    trunc: f64,
) -> Result<(ScalarGrid, DecodeStats), FieldError> {
    check_resolution(target_n)?;
    if coarse_n == 0 || target_n < coarse_n || target_n % coarse_n != 0 || !(target_n / coarse_n).is_power_of_two() {
        return Err(FieldError::NotPowerOfTwoRatio { coarse: coarse_n, target: target_n });
    }
    let start = Instant::now();
    let t = target_n;
    let margin = 2.0 / t as f64;
    let mut out = ScalarGrid::new(t, GridKind::SignedDistance, trunc);
    let mut stats = DecodeStats { total_cells: t * t * t, ..Default::default() };

    let mut level_n = coarse_n;
    let mut active: Vec<[u32; 3]> = Vec::with_capacity(coarse_n * coarse_n * coarse_n);
    for k in 0..coarse_n as u32 {
        for j in 0..coarse_n as u32 {
            for i in 0..coarse_n as u32 {
                active.push([i, j, k]);
            }
        }
    }
    loop {
        let n = level_n;
        let values: Vec<f64> = active
            .par_iter()
            .map(|c| eval(Vec3::new(cell_center(n, c[0] as usize), cell_center(n, c[1] as usize), cell_center(n, c[2] as usize))))
            .collect();
        stats.per_level.push(values.len());
        stats.evaluated += values.len();
        if n == t {
            for (c, v) in active.iter().zip(values) {
                let idx = out.index(c[0] as usize, c[1] as usize, c[2] as usize);
                out.values[idx] = v;
            }
            break;
        }
        let half_diag = 3f64.sqrt() / n as f64;
        let scale = t / n;
        let mut next = Vec::new();
        for (c, v) in active.iter().zip(values) {
            if v.abs() <= half_diag + margin {
                for o in 0..8u32 {
                    next.push([2 * c[0] + (o & 1), 2 * c[1] + ((o >> 1) & 1), 2 * c[2] + ((o >> 2) & 1)]);
                }
            } else if v < 0.0 {
                fill_block(&mut out, *c, scale, -trunc);
            }
        }
        active = next;
        level_n *= 2;
    }

    // Negative cells on the grid border meet the positive padding in marching
    // cubes, so their exact values are needed as well.
    let border: Vec<usize> = border_cells(t).filter(|&idx| out.values[idx] == -trunc).collect();
    let vals: Vec<f64> = border
        .par_iter()
        .map(|&idx| eval(out.position(idx % t, (idx / t) % t, idx / (t * t))))
        .collect();
    stats.evaluated += vals.len();
    for (idx, v) in border.into_iter().zip(vals) {
        out.values[idx] = v;
    }
    stats.seconds = start.elapsed().as_secs_f64();
    Ok((out, stats))
}

fn border_cells(n: usize) -> impl Iterator<Item = usize> {
    (0..n * n).flat_map(move |row| {
        let (j, k) = (row % n, row / n);
        let full = j == 0 || k == 0 || j == n - 1 || k == n - 1;
        let (first, step) = if full { (0, 1) } else { (0, n - 1) };
        (first..n).step_by(step).map(move |i| i + n * row)
    })
}

fn fill_block(out: &mut ScalarGrid, c: [u32; 3], scale: usize, v: f64) {
    let n = out.n;
    let (x0, y0, z0) = (c[0] as usize * scale, c[1] as usize * scale, c[2] as usize * scale);
    for z in z0..z0 + scale {
        for y in y0..y0 + scale {
            let row = x0 + n * (y + n * z);
            out.values[row..row + scale].fill(v);
        }
    }
}
