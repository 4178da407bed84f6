//! Surface point sets for training data: area-uniform samples, sharp-edge
//! samples, farthest point sampling and signed-distance supervision sets.
//!
//! Every sampler draws from independent ChaCha streams keyed by
//! `(seed, stream, chunk)`, so results do not depend on thread scheduling.

mod fps;
mod io;
mod sdf;

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, WeightedAliasIndex};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fps::fps;
pub use io::{read_points, write_points, PointFile, POINTS_MAGIC};
pub use sdf::{sdf_supervision_samples, winding_sign, SdfParams, SdfSamples, SdfSupervisionSet};

use crate::geom::Vec3;
use crate::mesh::{EdgeMap, TriangleMesh};

pub const DEFAULT_DIHEDRAL_DEG: f64 = 30.0;
pub const DEFAULT_SALIENT_COUNT: usize = 16384;

const CHUNK: usize = 4096;

#[derive(Debug, Error)]
pub enum SamplingError {
    #[error("mesh has zero surface area")]
    ZeroArea,
    #[error("cannot select {k} of {n} points")]
    KTooLarge { k: usize, n: usize },
    #[error("start index {start} out of range for {n} points")]
    StartOutOfRange { start: usize, n: usize },
    #[error("near-surface band {band} accepts only {acceptance:.4} of candidates")]
    BandTooSmall { band: f64, acceptance: f64 },
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Uniform,
    Salient,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SampledPointSet {
    pub positions: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub provenance: Vec<Provenance>,
    pub seed: u64,
    /// Requested salient points that could not be drawn.
    pub salient_shortfall: usize,
    /// Set when the mesh had no edge above the dihedral threshold.
    pub no_salient_edges: bool,
}

impl SampledPointSet {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn count(&self, p: Provenance) -> usize {
        self.provenance.iter().filter(|x| **x == p).count()
    }

    /// Positions with the given provenance.
    pub fn positions_of(&self, p: Provenance) -> Vec<Vec3> {
        self.positions.iter().zip(&self.provenance).filter(|(_, x)| **x == p).map(|(v, _)| *v).collect()
    }
}

pub(crate) fn stream_rng(seed: u64, stream: u64, chunk: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((stream << 32) | chunk);
    rng
}

/// Runs `draw` for `n` items in fixed-size chunks, each with its own stream.
pub(crate) fn chunked<T: Send>(
    n: usize,
    seed: u64,
    stream: u64,
    draw: impl Fn(&mut ChaCha8Rng, usize) -> T + Sync,
) -> Vec<T> {
    let chunks = n.div_ceil(CHUNK);
    let parts: Vec<Vec<T>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(seed, stream, c as u64);
            let len = CHUNK.min(n - c * CHUNK);
            (0..len).map(|_| draw(&mut rng, c)).collect()
        })
        .collect();
    parts.into_iter().flatten().collect()
}

/// Area-weighted face picker with uniform barycentric placement.
pub(crate) struct SurfaceSampler<'a> {
    mesh: &'a TriangleMesh,
    alias: WeightedAliasIndex<f64>,
}

impl<'a> SurfaceSampler<'a> {
    pub fn new(mesh: &'a TriangleMesh) -> Result<Self, SamplingError> {
        let areas: Vec<f64> = (0..mesh.face_count()).map(|f| mesh.face_area(f)).collect();
        if areas.iter().sum::<f64>() <= 0.0 {
            return Err(SamplingError::ZeroArea);
        }
        let alias = WeightedAliasIndex::new(areas).map_err(|_| SamplingError::ZeroArea)?;
        Ok(SurfaceSampler { mesh, alias })
    }

    /// A point, its face normal and its face index.
    pub fn draw(&self, rng: &mut ChaCha8Rng) -> (Vec3, Vec3, usize) {
        let f = self.alias.sample(rng);
        let [a, b, c] = self.mesh.triangle(f);
        let (mut r1, mut r2): (f64, f64) = (rng.gen(), rng.gen());
        if r1 + r2 > 1.0 {
            r1 = 1.0 - r1;
            r2 = 1.0 - r2;
        }
        (a + (b - a) * r1 + (c - a) * r2, self.mesh.face_normal(f), f)
    }
}

/// `n` points distributed uniformly by area, with face normals.
pub fn uniform_surface_sample(mesh: &TriangleMesh, n: usize, seed: u64) -> Result<SampledPointSet, SamplingError> {
    let sampler = SurfaceSampler::new(mesh)?;
    let pts = chunked(n, seed, 0, |rng, _| {
        let (p, nrm, _) = sampler.draw(rng);
        (p, nrm)
    });
    let (positions, normals) = pts.into_iter().unzip();
    Ok(SampledPointSet { positions, normals, provenance: vec![Provenance::Uniform; n], seed, ..Default::default() })
}

/// Interior edges whose adjacent face normals differ by more than the
/// threshold, as `(a, b, bisector normal)`, in sorted edge order.
pub fn salient_edges(mesh: &TriangleMesh, dihedral_threshold_deg: f64) -> Vec<(u32, u32, Vec3)> {
    let cos_thr = dihedral_threshold_deg.to_radians().cos();
    EdgeMap::build(mesh)
        .sorted()
        .into_iter()
        .filter_map(|((a, b), faces)| {
            if faces.len() != 2 {
                return None;
            }
            let n0 = mesh.face_normal(faces[0].0 as usize);
            let n1 = mesh.face_normal(faces[1].0 as usize);
            if n0.dot(&n1) >= cos_thr {
                return None;
            }
            let bis = (n0 + n1).try_normalize(1e-12).unwrap_or(n0);
            Some((a, b, bis))
        })
        .collect()
}

/// `n` points placed uniformly by length along salient edges. Returns an
/// empty set flagged `no_salient_edges` when there are none.
pub fn sharp_edge_sample(mesh: &TriangleMesh, n: usize, dihedral_threshold_deg: f64, seed: u64) -> SampledPointSet {
    let edges = salient_edges(mesh, dihedral_threshold_deg);
    let lengths: Vec<f64> = edges
        .iter()
        .map(|(a, b, _)| (mesh.vertices[*a as usize] - mesh.vertices[*b as usize]).norm())
        .collect();
    let alias = match WeightedAliasIndex::new(lengths) {
        Ok(a) => a,
        Err(_) => {
            return SampledPointSet { seed, salient_shortfall: n, no_salient_edges: true, ..Default::default() };
        }
    };
    let pts = chunked(n, seed, 1, |rng, _| {
        let (a, b, nrm) = edges[alias.sample(rng)];
        let t: f64 = rng.gen();
        let (pa, pb) = (mesh.vertices[a as usize], mesh.vertices[b as usize]);
        (pa + (pb - pa) * t, nrm)
    });
    let (positions, normals) = pts.into_iter().unzip();
    SampledPointSet { positions, normals, provenance: vec![Provenance::Salient; n], seed, ..Default::default() }
}

/// `P = P_uniform ∪ P_salient`. A salient shortfall is reported, not backfilled.
pub fn build_vae_point_set(
    mesh: &TriangleMesh,
    n_uniform: usize,
    n_salient: usize,
    dihedral_threshold_deg: f64,
    seed: u64,
) -> Result<SampledPointSet, SamplingError> {
    let mut out = if n_uniform > 0 {
        uniform_surface_sample(mesh, n_uniform, seed)?
    } else {
        SampledPointSet { seed, ..Default::default() }
    };
    if n_salient > 0 {
        let s = sharp_edge_sample(mesh, n_salient, dihedral_threshold_deg, seed);
        out.positions.extend(s.positions);
        out.normals.extend(s.normals);
        out.provenance.extend(s.provenance);
        out.salient_shortfall = s.salient_shortfall;
        out.no_salient_edges = s.no_salient_edges;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::closest_point_on_triangle;
    use crate::primitives;

    fn on_mesh(mesh: &TriangleMesh, p: &Vec3) -> f64 {
        (0..mesh.face_count())
            .map(|f| {
                let [a, b, c] = mesh.triangle(f);
                (closest_point_on_triangle(p, &a, &b, &c) - p).norm()
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn face_counts_follow_area() {
        // Areas 1 and 3.
        let m = TriangleMesh::new(
            vec![
                Vec3::new(0.0, 0.0, 0.0),
                Vec3::new(2.0, 0.0, 0.0),
                Vec3::new(0.0, 1.0, 0.0),
                Vec3::new(5.0, 0.0, 0.0),
                Vec3::new(7.0, 0.0, 0.0),
                Vec3::new(5.0, 3.0, 0.0),
            ],
            vec![[0, 1, 2], [3, 4, 5]],
        )
        .unwrap();
        let s = uniform_surface_sample(&m, 4000, 0).unwrap();
        let first = s.positions.iter().filter(|p| p.x < 3.0).count() as f64;
        let sigma = (4000.0f64 * 0.25 * 0.75).sqrt();
        assert!((first - 1000.0).abs() <= 3.0 * sigma, "{first}");
    }

    #[test]
    fn unit_square_centroid() {
        let m = primitives::quad_plane(0.5).transformed(|v| v + Vec3::new(0.5, 0.5, 0.0));
        let s = uniform_surface_sample(&m, 10_000, 3).unwrap();
        let c = s.positions.iter().sum::<Vec3>() / s.len() as f64;
        assert!((c.x - 0.5).abs() < 0.02 && (c.y - 0.5).abs() < 0.02);
        assert!(s.normals.iter().all(|n| (n - Vec3::z()).norm() < 1e-12));
    }

    #[test]
    fn single_point_on_surface_and_deterministic() {
        let m = primitives::icosphere(0.5, 2);
        let s = uniform_surface_sample(&m, 1, 9).unwrap();
        assert_eq!(s.len(), 1);
        assert!(on_mesh(&m, &s.positions[0]) < 1e-9);
        let a = uniform_surface_sample(&m, 9000, 4).unwrap();
        let b = uniform_surface_sample(&m, 9000, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.positions, uniform_surface_sample(&m, 9000, 5).unwrap().positions);
    }

    #[test]
    fn zero_area_is_an_error() {
        let m = TriangleMesh::new(vec![Vec3::zeros(), Vec3::x(), Vec3::x() * 2.0], vec![[0, 1, 2]]).unwrap();
        assert!(matches!(uniform_surface_sample(&m, 5, 0), Err(SamplingError::ZeroArea)));
    }

    #[test]
    fn cube_edges_are_salient() {
        let m = primitives::cube(0.5);
        assert_eq!(salient_edges(&m, 30.0).len(), 12);
        let s = sharp_edge_sample(&m, 2000, 30.0, 1);
        for (p, n) in s.positions.iter().zip(&s.normals) {
            let on_faces = p.iter().filter(|c| (c.abs() - 0.5).abs() < 1e-9).count();
            assert!(on_faces >= 2, "{p:?}");
            assert!((n.norm() - 1.0).abs() < 1e-9);
            // Bisector of two axis normals.
            assert!(n.iter().filter(|c| c.abs() > 0.7).count() == 2);
        }
    }

    #[test]
    fn smooth_sphere_has_no_salient_edges() {
        let s = sharp_edge_sample(&primitives::icosphere(0.5, 4), 100, 30.0, 0);
        assert!(s.is_empty() && s.no_salient_edges && s.salient_shortfall == 100);
    }

    #[test]
    fn crease_counts_follow_length() {
        let m = primitives::folded_panels(2.0, 1.0);
        let s = sharp_edge_sample(&m, 3000, 30.0, 11);
        let long = s.positions.iter().filter(|p| p.y < -0.5).count() as f64;
        let sigma = (3000.0f64 * (2.0 / 3.0) * (1.0 / 3.0)).sqrt();
        assert!((long - 2000.0).abs() <= 3.0 * sigma, "{long}");
    }

    #[test]
    fn vae_point_set_composition() {
        let cube = primitives::cube(0.5);
        let s = build_vae_point_set(&cube, 1000, 500, 30.0, 0).unwrap();
        assert_eq!((s.len(), s.count(Provenance::Salient), s.salient_shortfall), (1500, 500, 0));
        let sphere = primitives::icosphere(0.5, 4);
        let s = build_vae_point_set(&sphere, 1000, 500, 30.0, 0).unwrap();
        assert_eq!((s.len(), s.salient_shortfall), (1000, 500));
        assert!(build_vae_point_set(&sphere, 0, 0, 30.0, 0).unwrap().is_empty());
    }
}
