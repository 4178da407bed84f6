//! Marching cubes over the lattice of cell centers.
//!
//! The 256-case table is generated rather than transcribed: on every cube
//! face each run of inside corners is cut off by its own segment (so face
//! ambiguities resolve identically from both neighboring cubes), segments are
//! chained into loops and each loop is fan-triangulated. The lattice is padded
//! with one layer of outside values, so the result is always closed.

use std::collections::HashMap;
use std::sync::OnceLock;

use super::{FieldError, ScalarGrid};
use crate::geom::Vec3;
use crate::mesh::TriangleMesh;

/// Interpolation parameters are kept this far from edge endpoints so that no
/// two output vertices coincide.
const T_MARGIN: f64 = 1e-3;

/// Corner `c` sits at offset `(c & 1, (c >> 1) & 1, (c >> 2) & 1)`.
fn corner_offset(c: usize) -> [usize; 3] {
    [c & 1, (c >> 1) & 1, (c >> 2) & 1]
}

/// The 12 cube edges as (lower corner, upper corner, axis).
fn edges() -> [(usize, usize, usize); 12] {
    let mut out = [(0, 0, 0); 12];
    let mut e = 0;
    for axis in 0..3 {
        for c in 0..8 {
            if c & (1 << axis) == 0 {
                out[e] = (c, c | (1 << axis), axis);
                e += 1;
            }
        }
    }
    out
}

fn edge_between(a: usize, b: usize) -> usize {
    let (lo, hi) = (a.min(b), a.max(b));
    edges().iter().position(|&(c0, c1, _)| c0 == lo && c1 == hi).expect("corners share an edge")
}

/// Each face's corners in counter-clockwise order seen from outside the cube.
fn faces() -> Vec<[usize; 4]> {
    let mut out = Vec::new();
    for axis in 0..3 {
        for side in 0..2 {
            let mut cs: Vec<usize> = (0..8).filter(|&c| corner_offset(c)[axis] == side).collect();
            let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
            let angle = |c: usize| {
                let o = corner_offset(c);
                (o[v] as f64 - 0.5).atan2(o[u] as f64 - 0.5)
            };
            cs.sort_by(|a, b| angle(*a).total_cmp(&angle(*b)));
            // Sorted by angle around +axis (u, v, axis is right-handed); flip for the low side.
            if side == 0 {
                cs.reverse();
            }
            out.push([cs[0], cs[1], cs[2], cs[3]]);
        }
    }
    out
}

/// Triangles (as edge triples) for each of the 256 inside/outside patterns.
fn table() -> &'static Vec<Vec<[u8; 3]>> {
    static TABLE: OnceLock<Vec<Vec<[u8; 3]>>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let faces = faces();
        (0..256usize)
            .map(|config| {
                let inside = |c: usize| config & (1 << c) != 0;
                let mut next = [usize::MAX; 12];
                for f in &faces {
                    // Crossings along the cycle, tagged entering (outside → inside).
                    let mut crossings = Vec::new();
                    for k in 0..4 {
                        let (a, b) = (f[k], f[(k + 1) % 4]);
                        if inside(a) != inside(b) {
                            crossings.push((edge_between(a, b), inside(b)));
                        }
                    }
                    for (idx, &(e, entering)) in crossings.iter().enumerate() {
                        if entering {
                            let exit = crossings[(idx + 1) % crossings.len()];
                            debug_assert!(!exit.1);
                            next[e] = exit.0;
                        }
                    }
                }
                let mut tris = Vec::new();
                let mut used = [false; 12];
                for start in 0..12 {
                    if next[start] == usize::MAX || used[start] {
                        continue;
                    }
                    let mut ring = vec![start];
                    used[start] = true;
                    let mut e = next[start];
                    while e != start {
                        ring.push(e);
                        used[e] = true;
                        e = next[e];
                    }
                    for i in 1..ring.len() - 1 {
                        tris.push([ring[0] as u8, ring[i] as u8, ring[i + 1] as u8]);
                    }
                }
                tris
            })
            .collect()
    })
}

/// Extracts the `iso` level set as a closed triangle mesh whose faces point
/// toward larger values.
pub fn marching_cubes(grid: &ScalarGrid, iso: f64) -> Result<TriangleMesh, FieldError> {
    let n = grid.n as i64;
    let pad = iso + 2.0 / grid.n as f64;
    let value = |i: i64, j: i64, k: i64| -> f64 {
        if i < 0 || j < 0 || k < 0 || i >= n || j >= n || k >= n {
            pad
        } else {
            grid.values[(i + n * (j + n * k)) as usize]
        }
    };
    let pos = |i: i64| -1.0 + (2 * i + 1) as f64 / n as f64;
    let stride = (n + 2) as u64;
    let table = table();
    let edges = edges();
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut faces: Vec<[u32; 3]> = Vec::new();
    let mut cache: HashMap<u64, u32> = HashMap::new();
    let mut corner_vals = [0.0f64; 8];
    for k in -1..n {
        for j in -1..n {
            for i in -1..n {
                let mut config = 0usize;
                for (c, v) in corner_vals.iter_mut().enumerate() {
                    let o = corner_offset(c);
                    *v = value(i + o[0] as i64, j + o[1] as i64, k + o[2] as i64);
                    if *v < iso {
                        config |= 1 << c;
                    }
                }
                if config == 0 || config == 255 {
                    continue;
                }
                let mut edge_vertex = [u32::MAX; 12];
                for tri in &table[config] {
                    let mut ids = [0u32; 3];
                    for (slot, &e) in tri.iter().enumerate() {
                        let e = e as usize;
                        if edge_vertex[e] == u32::MAX {
                            let (c0, c1, axis) = edges[e];
                            let o = corner_offset(c0);
                            let (li, lj, lk) = (i + o[0] as i64, j + o[1] as i64, k + o[2] as i64);
                            let key = (((lk + 1) as u64 * stride + (lj + 1) as u64) * stride + (li + 1) as u64) * 3
                                + axis as u64;
                            edge_vertex[e] = *cache.entry(key).or_insert_with(|| {
                                let (v0, v1) = (corner_vals[c0], corner_vals[c1]);
                                let t = ((iso - v0) / (v1 - v0)).clamp(T_MARGIN, 1.0 - T_MARGIN);
                                let mut p = Vec3::new(pos(li), pos(lj), pos(lk));
                                p[axis] += t * 2.0 / n as f64;
                                vertices.push(p);
                                vertices.len() as u32 - 1
                            });
                        }
                        ids[slot] = edge_vertex[e];
                    }
                    faces.push(ids);
                }
            }
        }
    }
    if faces.is_empty() {
        return Err(FieldError::EmptySurface(iso));
    }
    Ok(TriangleMesh::new(vertices, faces).expect("indices come from the vertex list"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::GridKind;
    use crate::mesh::{is_watertight, EdgeMap};

    fn signed_volume(m: &TriangleMesh) -> f64 {
        (0..m.face_count())
            .map(|f| {
                let [a, b, c] = m.triangle(f);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    #[test]
    fn every_case_is_closed_and_outward() {
        // A single cube: 2×2×2 lattice with each pattern, padded on all sides.
        for config in 1..255usize {
            let mut g = ScalarGrid::new(2, GridKind::SignedDistance, 1.0);
            for c in 0..8 {
                if config & (1 << c) != 0 {
                    let o = corner_offset(c);
                    let idx = g.index(o[0], o[1], o[2]);
                    g.values[idx] = -1.0;
                }
            }
            let m = marching_cubes(&g, 0.0).unwrap();
            let r = is_watertight(&m);
            assert!(r.watertight, "config {config}: {r:?}");
            assert!(signed_volume(&m) > 0.0, "config {config}");
        }
    }

    #[test]
    fn sphere_radius_error() {
        let g = ScalarGrid::from_fn(64, GridKind::SignedDistance, |p| p.norm() - 0.5);
        let m = marching_cubes(&g, 0.0).unwrap();
        assert!(is_watertight(&m).watertight);
        let worst = m.vertices.iter().map(|v| (v.norm() - 0.5).abs()).fold(0.0, f64::max);
        assert!(worst <= 2.0 * 2.0 / 64.0, "{worst}");
        let euler = m.vertex_count() as i64 - EdgeMap::build(&m).len() as i64 + m.face_count() as i64;
        assert_eq!(euler, 2);
    }

    #[test]
    fn all_positive_is_empty() {
        let g = ScalarGrid::new(16, GridKind::SignedDistance, 0.3);
        assert!(matches!(marching_cubes(&g, 0.0), Err(FieldError::EmptySurface(_))));
    }

    #[test]
    fn single_interior_cell_is_a_sphere() {
        let mut g = ScalarGrid::new(16, GridKind::SignedDistance, 0.125);
        let idx = g.index(7, 8, 9);
        g.values[idx] = -0.125;
        let m = marching_cubes(&g, 0.0).unwrap();
        assert!(is_watertight(&m).watertight);
        let euler = m.vertex_count() as i64 - EdgeMap::build(&m).len() as i64 + m.face_count() as i64;
        assert_eq!(euler, 2);
    }

    #[test]
    fn border_touching_field_is_closed() {
        let g = ScalarGrid::from_fn(16, GridKind::SignedDistance, |p| p.x - 0.3);
        let m = marching_cubes(&g, 0.0).unwrap();
        assert!(is_watertight(&m).watertight);
    }
}
