//! Indexed triangle meshes: ingestion, normalization, topology checks, hole
//! filling and the subdivide-and-smooth remesh.
//!
//! Faces are counter-clockwise when seen from outside; the geometric normal
//! `(b - a) × (c - a)` therefore points outward. Nothing in this module tries
//! to re-orient faces globally.

mod io;
mod remesh;
mod topology;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{triangle_area, triangle_normal, Aabb, Vec2, Vec3};

pub use io::{load_mesh, load_obj_str, load_ply_bytes, save_obj, write_obj, LoadedMesh};
pub(crate) use remesh::area_weighted_normals;
pub use remesh::{subdivide_smooth, RemeshParams};
pub use topology::{
    connected_components, fill_holes, is_watertight, EdgeMap, HoleFillOutcome, SkippedLoop,
    WatertightReport,
};

/// Faces with an area at or below this are considered degenerate.
pub const DEGENERATE_AREA_EPS: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("{path}: unsupported mesh format (expected .obj or .ply)")]
    UnsupportedFormat { path: PathBuf },
    #[error("{path}: parse error at {location}: {message}")]
    Parse {
        path: PathBuf,
        location: String,
        message: String,
    },
    #[error("{path}: I/O error: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("mesh has no faces")]
    EmptyMesh,
    #[error("face {face} references vertex {index} but the mesh has {count} vertices")]
    IndexOutOfRange { face: usize, index: u32, count: usize },
    #[error("all vertices coincide; the mesh has zero extent")]
    ZeroExtent,
    #[error("smoothing lambda {0} is outside (0, 1]")]
    InvalidLambda(f64),
    #[error("vertex normal {index} has length {length}")]
    NonUnitNormal { index: usize, length: f64 },
    #[error("per-face attribute count {got} does not match face count {expected}")]
    AttributeMismatch { expected: usize, got: usize },
}

pub type MeshResult<T> = Result<T, MeshError>;

/// Material-level facts the metadata filter looks at.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaterialInfo {
    pub has_alpha_channel: bool,
    pub asset_name: String,
    pub declared_mesh_type: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[u32; 3]>,
    pub vertex_normals: Option<Vec<Vec3>>,
    /// Per-corner texture coordinates, row 0 of the image at `v = 0`.
    pub face_uvs: Option<Vec<[Vec2; 3]>>,
    pub material: MaterialInfo,
}

impl TriangleMesh {
    /// Builds a mesh after checking that every index is in range.
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[u32; 3]>) -> MeshResult<Self> {
        let count = vertices.len();
        for (fi, f) in faces.iter().enumerate() {
            for &i in f {
                if i as usize >= count {
                    return Err(MeshError::IndexOutOfRange { face: fi, index: i, count });
                }
            }
        }
        Ok(TriangleMesh {
            vertices,
            faces,
            vertex_normals: None,
            face_uvs: None,
            material: MaterialInfo::default(),
        })
    }

    pub fn with_vertex_normals(mut self, normals: Vec<Vec3>) -> MeshResult<Self> {
        if normals.len() != self.vertices.len() {
            return Err(MeshError::AttributeMismatch {
                expected: self.vertices.len(),
                got: normals.len(),
            });
        }
        for (index, n) in normals.iter().enumerate() {
            let length = n.norm();
            if (length - 1.0).abs() > 1e-6 {
                return Err(MeshError::NonUnitNormal { index, length });
            }
        }
        self.vertex_normals = Some(normals);
        Ok(self)
    }

    pub fn with_face_uvs(mut self, uvs: Vec<[Vec2; 3]>) -> MeshResult<Self> {
        if uvs.len() != self.faces.len() {
            return Err(MeshError::AttributeMismatch {
                expected: self.faces.len(),
                got: uvs.len(),
            });
        }
        self.face_uvs = Some(uvs);
        Ok(self)
    }

    pub fn with_material(mut self, material: MaterialInfo) -> Self {
        self.material = material;
        self
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    #[inline]
    pub fn triangle(&self, face: usize) -> [Vec3; 3] {
        let [a, b, c] = self.faces[face];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    pub fn face_area(&self, face: usize) -> f64 {
        let [a, b, c] = self.triangle(face);
        triangle_area(&a, &b, &c)
    }

    /// Geometric (winding-derived) unit normal; zero for degenerate faces.
    pub fn face_normal(&self, face: usize) -> Vec3 {
        let [a, b, c] = self.triangle(face);
        triangle_normal(&a, &b, &c).unwrap_or_else(Vec3::zeros)
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    pub fn aabb(&self) -> Aabb {
        Aabb::from_points(self.vertices.iter())
    }

    /// Drops faces with repeated indices or (near-)zero area. Returns how many went.
    pub fn remove_degenerate_faces(&mut self) -> usize {
        let keep: Vec<bool> = (0..self.faces.len())
            .map(|fi| {
                let [a, b, c] = self.faces[fi];
                a != b && b != c && a != c && self.face_area(fi) > DEGENERATE_AREA_EPS
            })
            .collect();
        let dropped = keep.iter().filter(|k| !**k).count();
        if dropped > 0 {
            let mut it = keep.iter();
            self.faces.retain(|_| *it.next().unwrap());
            if let Some(uvs) = self.face_uvs.as_mut() {
                let mut it = keep.iter();
                uvs.retain(|_| *it.next().unwrap());
            }
        }
        dropped
    }

    /// Reverses the winding of every face (and negates vertex normals).
    pub fn flipped(&self) -> TriangleMesh {
        let mut out = self.clone();
        for f in &mut out.faces {
            f.swap(1, 2);
        }
        if let Some(uvs) = out.face_uvs.as_mut() {
            for uv in uvs {
                uv.swap(1, 2);
            }
        }
        if let Some(ns) = out.vertex_normals.as_mut() {
            for n in ns {
                *n = -*n;
            }
        }
        out
    }

    /// Concatenates another mesh, offsetting its indices. Attributes survive only
    /// when both sides carry them.
    pub fn append(&mut self, other: &TriangleMesh) {
        let base = self.vertices.len() as u32;
        self.vertices.extend_from_slice(&other.vertices);
        self.faces
            .extend(other.faces.iter().map(|f| [f[0] + base, f[1] + base, f[2] + base]));
        match (self.vertex_normals.as_mut(), other.vertex_normals.as_ref()) {
            (Some(a), Some(b)) => a.extend_from_slice(b),
            _ => self.vertex_normals = None,
        }
        match (self.face_uvs.as_mut(), other.face_uvs.as_ref()) {
            (Some(a), Some(b)) => a.extend_from_slice(b),
            _ => self.face_uvs = None,
        }
    }

    pub fn transformed(&self, f: impl Fn(&Vec3) -> Vec3) -> TriangleMesh {
        let mut out = self.clone();
        for v in &mut out.vertices {
            *v = f(v);
        }
        out
    }
}

/// Result of [`normalize_to_unit_cube`]: `normalized = (original + offset) * scale`.
#[derive(Debug, Clone)]
pub struct Normalized {
    pub mesh: TriangleMesh,
    pub scale: f64,
    pub offset: Vec3,
}

impl Normalized {
    pub fn to_original(&self, p: &Vec3) -> Vec3 {
        p / self.scale - self.offset
    }
}

/// Centers the bounding box at the origin and scales the longest axis to `[-1, 1]`.
pub fn normalize_to_unit_cube(mesh: &TriangleMesh) -> MeshResult<Normalized> {
    if mesh.vertices.is_empty() || mesh.faces.is_empty() {
        return Err(MeshError::EmptyMesh);
    }
    let bb = mesh.aabb();
    let longest = bb.extent().max();
    if !(longest > 0.0) || !longest.is_finite() {
        return Err(MeshError::ZeroExtent);
    }
    let offset = -bb.center();
    let scale = 2.0 / longest;
    let mut out = mesh.transformed(|v| (v + offset) * scale);
    // Pin the extreme vertices of the longest axis to exactly ±1.
    let axis = bb.extent().imax();
    for (v, o) in out.vertices.iter_mut().zip(&mesh.vertices) {
        if o[axis] == bb.max[axis] {
            v[axis] = 1.0;
        } else if o[axis] == bb.min[axis] {
            v[axis] = -1.0;
        }
    }
    Ok(Normalized { mesh: out, scale, offset })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primitives;

    #[test]
    fn cube_0_2_maps_to_unit_cube() {
        let m = primitives::box_mesh(Vec3::zeros(), Vec3::repeat(2.0));
        let n = normalize_to_unit_cube(&m).unwrap();
        assert_eq!(n.scale, 1.0);
        assert_eq!(n.offset, Vec3::new(-1.0, -1.0, -1.0));
        let bb = n.mesh.aabb();
        assert_eq!(bb.min, Vec3::repeat(-1.0));
        assert_eq!(bb.max, Vec3::repeat(1.0));
        for (v, o) in n.mesh.vertices.iter().zip(&m.vertices) {
            assert!((n.to_original(v) - o).norm() < 1e-15);
        }
    }

    #[test]
    fn aspect_ratio_preserved() {
        let m = primitives::box_mesh(Vec3::zeros(), Vec3::new(4.0, 2.0, 2.0));
        let bb = normalize_to_unit_cube(&m).unwrap().mesh.aabb();
        assert_eq!((bb.min.x, bb.max.x), (-1.0, 1.0));
        assert_eq!((bb.min.y, bb.max.y), (-0.5, 0.5));
        assert_eq!((bb.min.z, bb.max.z), (-0.5, 0.5));
    }

    #[test]
    fn coincident_vertices_have_zero_extent() {
        let p = Vec3::new(0.3, 0.3, 0.3);
        let m = TriangleMesh::new(vec![p, p, p], vec![[0, 1, 2]]).unwrap();
        assert!(matches!(normalize_to_unit_cube(&m), Err(MeshError::ZeroExtent)));
    }

    #[test]
    fn out_of_range_index_rejected() {
        let err = TriangleMesh::new(vec![Vec3::zeros(); 2], vec![[0, 1, 2]]).unwrap_err();
        assert!(matches!(err, MeshError::IndexOutOfRange { index: 2, .. }));
    }

    #[test]
    fn degenerate_faces_dropped() {
        let v = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(2.0, 0.0, 0.0),
        ];
        let mut m = TriangleMesh::new(v, vec![[0, 1, 2], [0, 0, 1], [0, 1, 3]]).unwrap();
        assert_eq!(m.remove_degenerate_faces(), 2);
        assert_eq!(m.faces, vec![[0, 1, 2]]);
    }

    #[test]
    fn non_unit_normals_rejected() {
        let m = primitives::box_mesh(Vec3::zeros(), Vec3::repeat(1.0));
        let n = vec![Vec3::new(0.0, 0.0, 2.0); m.vertex_count()];
        assert!(matches!(m.with_vertex_normals(n), Err(MeshError::NonUnitNormal { .. })));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn normalization_is_idempotent(
                pts in proptest::collection::vec((-50.0f64..50.0, -50.0f64..50.0, -50.0f64..50.0), 3..40)
            ) {
                let vertices: Vec<Vec3> = pts.iter().map(|&(x, y, z)| Vec3::new(x, y, z)).collect();
                let faces: Vec<[u32; 3]> = (0..vertices.len() as u32 - 2).map(|i| [i, i + 1, i + 2]).collect();
                let m = TriangleMesh::new(vertices, faces).unwrap();
                let Ok(once) = normalize_to_unit_cube(&m) else { return Ok(()); };
                let twice = normalize_to_unit_cube(&once.mesh).unwrap();
                for (a, b) in once.mesh.vertices.iter().zip(&twice.mesh.vertices) {
                    prop_assert!((a - b).norm() <= 1e-12);
                }
            }
        }
    }
}
