use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{is_watertight, EdgeMap, MeshError, MeshResult, TriangleMesh};
use crate::geom::{Vec2, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RemeshParams {
    pub subdivision_rounds: u32,
    pub smooth_iterations: u32,
    pub smooth_lambda: f64,
}

impl Default for RemeshParams {
    fn default() -> Self {
        RemeshParams { subdivision_rounds: 1, smooth_iterations: 3, smooth_lambda: 0.5 }
    }
}

/// Midpoint 1→4 subdivision followed by uniform Laplacian smoothing.
///
/// Vertices on open or non-manifold edges stay put during smoothing.
pub fn subdivide_smooth(mesh: &TriangleMesh, params: &RemeshParams) -> MeshResult<TriangleMesh> {
    let lambda = params.smooth_lambda;
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(MeshError::InvalidLambda(lambda));
    }
    if !is_watertight(mesh).watertight {
        log::warn!("subdivide_smooth on a non-watertight mesh; boundary vertices are pinned");
    }
    let mut m = mesh.clone();
    for _ in 0..params.subdivision_rounds {
        m = subdivide_once(&m);
    }
    if params.smooth_iterations > 0 {
        smooth(&mut m, params.smooth_iterations, lambda);
        if m.vertex_normals.is_some() {
            m.vertex_normals = Some(area_weighted_normals(&m));
        }
    }
    Ok(m)
}

fn subdivide_once(mesh: &TriangleMesh) -> TriangleMesh {
    let mut vertices = mesh.vertices.clone();
    let mut normals = mesh.vertex_normals.clone();
    let mut midpoint: HashMap<(u32, u32), u32> = HashMap::with_capacity(mesh.faces.len() * 3 / 2);
    let mut mid = |a: u32, b: u32, vertices: &mut Vec<Vec3>, normals: &mut Option<Vec<Vec3>>| -> u32 {
        *midpoint.entry((a.min(b), a.max(b))).or_insert_with(|| {
            let (pa, pb) = (vertices[a as usize], vertices[b as usize]);
            vertices.push((pa + pb) * 0.5);
            if let Some(ns) = normals.as_mut() {
                let n = ns[a as usize] + ns[b as usize];
                let fallback = ns[a as usize];
                ns.push(n.try_normalize(1e-12).unwrap_or(fallback));
            }
            vertices.len() as u32 - 1
        })
    };
    let mut faces = Vec::with_capacity(mesh.faces.len() * 4);
    let mut uvs = mesh.face_uvs.as_ref().map(|u| Vec::with_capacity(u.len() * 4));
    for (fi, &[a, b, c]) in mesh.faces.iter().enumerate() {
        let ab = mid(a, b, &mut vertices, &mut normals);
        let bc = mid(b, c, &mut vertices, &mut normals);
        let ca = mid(c, a, &mut vertices, &mut normals);
        faces.extend_from_slice(&[[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
        if let Some(out) = uvs.as_mut() {
            let [ua, ub, uc] = mesh.face_uvs.as_ref().unwrap()[fi];
            let m = |p: Vec2, q: Vec2| (p + q) * 0.5;
            let (uab, ubc, uca) = (m(ua, ub), m(ub, uc), m(uc, ua));
            out.extend_from_slice(&[[ua, uab, uca], [uab, ub, ubc], [uca, ubc, uc], [uab, ubc, uca]]);
        }
    }
    TriangleMesh {
        vertices,
        faces,
        vertex_normals: normals,
        face_uvs: uvs,
        material: mesh.material.clone(),
    }
}

fn smooth(mesh: &mut TriangleMesh, iterations: u32, lambda: f64) {
    let edges = EdgeMap::build(mesh);
    let pinned = edges.boundary_vertices(mesh.vertices.len());
    let mut neighbors: Vec<Vec<u32>> = vec![Vec::new(); mesh.vertices.len()];
    for ((a, b), _) in edges.sorted() {
        neighbors[a as usize].push(b);
        neighbors[b as usize].push(a);
    }
    let mut next = mesh.vertices.clone();
    for _ in 0..iterations {
        for (i, v) in mesh.vertices.iter().enumerate() {
            if pinned[i] || neighbors[i].is_empty() {
                next[i] = *v;
                continue;
            }
            let mean = neighbors[i].iter().map(|&j| mesh.vertices[j as usize]).sum::<Vec3>()
                / neighbors[i].len() as f64;
            next[i] = v + (mean - v) * lambda;
        }
        std::mem::swap(&mut mesh.vertices, &mut next);
    }
}

pub(crate) fn area_weighted_normals(mesh: &TriangleMesh) -> Vec<Vec3> {
    let mut acc = vec![Vec3::zeros(); mesh.vertices.len()];
    for (fi, f) in mesh.faces.iter().enumerate() {
        let [a, b, c] = mesh.triangle(fi);
        let n = (b - a).cross(&(c - a));
        for &v in f {
            acc[v as usize] += n;
        }
    }
    acc.into_iter().map(|n| n.try_normalize(1e-300).unwrap_or_else(Vec3::z)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primitives;

    fn params(r: u32, it: u32, l: f64) -> RemeshParams {
        RemeshParams { subdivision_rounds: r, smooth_iterations: it, smooth_lambda: l }
    }

    #[test]
    fn tetrahedron_one_round() {
        let out = subdivide_smooth(&primitives::tetrahedron(), &params(1, 0, 0.5)).unwrap();
        assert_eq!(out.face_count(), 16);
        assert_eq!(out.vertex_count(), 10);
        assert!(is_watertight(&out).watertight);
    }

    #[test]
    fn cube_two_rounds() {
        let out = subdivide_smooth(&primitives::cube(0.5), &params(2, 0, 0.5)).unwrap();
        assert_eq!(out.face_count(), 192);
    }

    #[test]
    fn smoothing_shrinks_sphere() {
        let m = primitives::icosphere(1.0, 2);
        let out = subdivide_smooth(&m, &params(0, 5, 0.5)).unwrap();
        assert_eq!(out.vertex_count(), m.vertex_count());
        assert!(out.surface_area() < m.surface_area());
        assert!(is_watertight(&out).watertight);
    }

    #[test]
    fn lambda_validated() {
        let m = primitives::tetrahedron();
        for l in [0.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(subdivide_smooth(&m, &params(0, 1, l)), Err(MeshError::InvalidLambda(_))));
        }
        assert!(subdivide_smooth(&m, &params(0, 1, 1.0)).is_ok());
    }

    #[test]
    fn boundary_vertices_pinned_bitwise() {
        let m = primitives::open_cylinder(0.5, 1.0, 16);
        let out = subdivide_smooth(&m, &params(1, 4, 0.7)).unwrap();
        let sub = subdivide_once(&m);
        let pinned = EdgeMap::build(&sub).boundary_vertices(sub.vertex_count());
        assert!(pinned.iter().any(|p| *p));
        for (i, p) in pinned.iter().enumerate() {
            if *p {
                assert_eq!(out.vertices[i], sub.vertices[i]);
            }
        }
    }

    #[test]
    fn euler_characteristic_invariant() {
        let euler = |m: &TriangleMesh| {
            m.vertex_count() as i64 - EdgeMap::build(m).len() as i64 + m.face_count() as i64
        };
        for m in [primitives::cube(0.5), primitives::icosphere(0.7, 1), primitives::tetrahedron()] {
            let out = subdivide_smooth(&m, &params(2, 2, 0.5)).unwrap();
            assert_eq!(euler(&out), euler(&m));
        }
    }

    #[test]
    fn uvs_follow_subdivision() {
        let m = primitives::tetrahedron();
        let uvs = vec![[Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)]; 4];
        let m = m.with_face_uvs(uvs).unwrap();
        let out = subdivide_smooth(&m, &params(1, 0, 0.5)).unwrap();
        let u = out.face_uvs.unwrap();
        assert_eq!(u.len(), 16);
        assert_eq!(u[3], [Vec2::new(0.5, 0.0), Vec2::new(0.5, 0.5), Vec2::new(0.0, 0.5)]);
    }
}
