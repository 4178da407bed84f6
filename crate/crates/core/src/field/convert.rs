use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::winding::{crossing_winding, threshold_at_cells};
use super::{
    check_resolution, marching_cubes, occupancy_grid, visibility_grid, Bvh, FieldError, GridKind, ScalarGrid,
    VisibilityDirections, WindingApprox, DEFAULT_WN_THRESHOLD,
};
use crate::mesh::{connected_components, is_watertight, TriangleMesh};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvertMode {
    /// Occupied = invisible AND winding above threshold.
    #[default]
    Conjunction,
    /// Occupied = invisible; the baseline without the winding test.
    VisibilityOnly,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvertParams {
    pub resolution: usize,
    pub wn_threshold: f64,
    pub winding: WindingApprox,
    pub mode: ConvertMode,
    pub directions: VisibilityDirections,
    /// Distances are capped at this many voxels; only cells near the
    /// surface need the true magnitude.
    pub distance_cap_voxels: f64,
    /// When nothing is occupied (open sheets, tubes seen end-on), extract the
    /// one-voxel offset shell of the unsigned distance instead of failing.
    pub shell_fallback: bool,
}

impl Default for ConvertParams {
    fn default() -> Self {
        ConvertParams {
            resolution: 256,
            wn_threshold: DEFAULT_WN_THRESHOLD,
            winding: WindingApprox::default(),
            mode: ConvertMode::Conjunction,
            directions: VisibilityDirections::Canonical,
            distance_cap_voxels: 4.0,
            shell_fallback: true,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ConvertStats {
    pub resolution: usize,
    pub visible_cells: usize,
    /// Input was closed, so winding came from crossing counts.
    pub closed_input: bool,
    /// Cells that needed the generalized winding number.
    pub winding_evaluations: usize,
    pub occupied_cells: usize,
    pub iso: f64,
    pub shell_fallback: bool,
    pub faces: usize,
    pub components: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct ConvertOutcome {
    pub mesh: TriangleMesh,
    /// Signed field the surface was extracted from (negative inside).
    pub field: ScalarGrid,
    pub stats: ConvertStats,
}

/// Converts an arbitrary normalized triangle soup into a closed surface.
///
/// Visibility runs first and the winding number is evaluated only at hidden
/// cells, since visible cells are unoccupied whatever their winding. The signed
/// field takes its sign from occupancy and its magnitude from the BVH distance.
pub fn watertight_convert(mesh: &TriangleMesh, params: &ConvertParams) -> Result<ConvertOutcome, FieldError> {
    let start = Instant::now();
    let n = params.resolution;
    check_resolution(n)?;
    let bb = mesh.aabb();
    let reach = bb.min.abs().sup(&bb.max.abs()).max();
    if !bb.is_empty() && reach > 1.001 {
        return Err(FieldError::UnnormalizedMesh(reach));
    }
    let bvh = Bvh::build(mesh);
    let visibility = visibility_grid(mesh, n, params.directions)?;
    let hidden: Vec<usize> = (0..visibility.values.len()).filter(|&c| visibility.values[c] == 0.0).collect();
    let closed = is_watertight(mesh).watertight;
    let (winding, evaluations) = match params.mode {
        // On closed input the crossing count is the winding number; only the
        // cells it cannot decide need the generalized evaluation.
        ConvertMode::Conjunction if closed => {
            let (mut grid, unresolved) = crossing_winding(mesh, n);
            let redo: Vec<usize> = unresolved.into_iter().filter(|&c| visibility.values[c] == 0.0).collect();
            let fixed = threshold_at_cells(&bvh, n, &redo, params.winding, params.wn_threshold, 0.0);
            for &c in &redo {
                grid.values[c] = fixed.values[c];
            }
            (grid, redo.len())
        }
        ConvertMode::Conjunction => {
            (threshold_at_cells(&bvh, n, &hidden, params.winding, params.wn_threshold, 0.0), hidden.len())
        }
        ConvertMode::VisibilityOnly => (ScalarGrid::new(n, GridKind::Winding, f64::INFINITY), 0),
    };
    let occupancy = occupancy_grid(&winding, &visibility, params.wn_threshold)?;
    let occupied = occupancy.count(|v| v == 1.0);

    let voxel = 2.0 / n as f64;
    let cap = params.distance_cap_voxels * voxel;
    let shell = occupied == 0 && params.shell_fallback;
    let iso = if shell { voxel } else { 0.0 };
    let field_values: Vec<f64> = (0..occupancy.values.len())
        .into_par_iter()
        .map(|c| {
            let p = occupancy.position(c % n, (c / n) % n, c / (n * n));
            let d = bvh.distance(&p, cap).max(1e-9);
            if !shell && occupancy.values[c] == 1.0 {
                -d
            } else {
                d
            }
        })
        .collect();
    let field = ScalarGrid { n, kind: GridKind::SignedDistance, values: field_values };
    let out = marching_cubes(&field, iso)?;
    let report = is_watertight(&out);
    if !report.watertight {
        return Err(FieldError::ConversionFailed(report));
    }
    let (_, components) = connected_components(&out);
    let stats = ConvertStats {
        resolution: n,
        visible_cells: visibility.values.len() - hidden.len(),
        closed_input: closed,
        winding_evaluations: evaluations,
        occupied_cells: occupied,
        iso,
        shell_fallback: shell,
        faces: out.face_count(),
        components,
        seconds: start.elapsed().as_secs_f64(),
    };
    log::debug!("converted at N={n}: {stats:?}");
    Ok(ConvertOutcome { mesh: out, field, stats })
}

/// Counts output components holding at least one face whose centroid lies
/// farther than `threshold` from the input surface: material the input never
/// had, such as floaters in a visibility-only conversion.
pub fn spurious_components(output: &TriangleMesh, input: &Bvh, threshold: f64) -> usize {
    let (labels, count) = connected_components(output);
    let mut spurious = vec![false; count];
    for f in 0..output.face_count() {
        let l = labels[f] as usize;
        if spurious[l] {
            continue;
        }
        let [a, b, c] = output.triangle(f);
        let centroid = (a + b + c) / 3.0;
        if input.distance(&centroid, threshold * 2.0) > threshold {
            spurious[l] = true;
        }
    }
    spurious.iter().filter(|s| **s).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primitives;

    fn params(n: usize, mode: ConvertMode) -> ConvertParams {
        ConvertParams { resolution: n, mode, ..Default::default() }
    }

    #[test]
    fn sphere_converts_close_to_input() {
        let m = primitives::icosphere(0.5, 3);
        let out = watertight_convert(&m, &params(64, ConvertMode::Conjunction)).unwrap();
        assert!(!out.stats.shell_fallback);
        assert_eq!(out.stats.components, 1);
        let bvh = Bvh::build(&m);
        let worst = out.mesh.vertices.iter().map(|v| bvh.distance(v, 1.0)).fold(0.0, f64::max);
        assert!(worst <= 2.0 * 2.0 / 64.0, "{worst}");
        assert_eq!(spurious_components(&out.mesh, &bvh, 4.0 / 64.0), 0);
    }

    #[test]
    fn open_cylinder_uses_shell() {
        let m = primitives::open_cylinder(0.5, 1.2, 48);
        let out = watertight_convert(&m, &params(64, ConvertMode::Conjunction)).unwrap();
        assert!(out.stats.shell_fallback);
        assert!(is_watertight(&out.mesh).watertight);
        let without = ConvertParams { shell_fallback: false, ..params(64, ConvertMode::Conjunction) };
        assert!(matches!(watertight_convert(&m, &without), Err(FieldError::EmptySurface(_))));
    }

    #[test]
    fn windowed_room_floaters_removed_by_conjunction() {
        let m = primitives::windowed_room(0.7, 0.5, 0.15);
        let bvh = Bvh::build(&m);
        let thr = 2.0 * 2.0 / 64.0;
        let conj = watertight_convert(&m, &params(64, ConvertMode::Conjunction)).unwrap();
        let base = watertight_convert(&m, &params(64, ConvertMode::VisibilityOnly)).unwrap();
        assert_eq!(spurious_components(&conj.mesh, &bvh, thr), 0);
        assert!(spurious_components(&base.mesh, &bvh, thr) > 0);
        assert!(base.stats.occupied_cells > conj.stats.occupied_cells);
    }

    #[test]
    fn rejects_unnormalized() {
        let m = primitives::cube(2.0);
        assert!(matches!(
            watertight_convert(&m, &params(16, ConvertMode::Conjunction)),
            Err(FieldError::UnnormalizedMesh(_))
        ));
    }
}
