//! Software z-buffer rasterizer producing per-view G-buffers (albedo, alpha,
//! depth, camera-space normal, world position) for orthographic and
//! perspective cameras.
//!
//! Coverage is binary: a pixel belongs to a triangle when its center is
//! inside under the top-left fill rule. Attributes are interpolated with
//! perspective-correct barycentrics, so the stored world position is the exact
//! ray/triangle hit up to rounding.

mod camera;
mod io;

use rayon::prelude::*;
use thiserror::Error;

pub use camera::{
    canonical_camera, sample_training_camera, Camera, Projected, Projection, TrainingCameraConfig, ViewKey,
    CANONICAL_DISTANCE, SENSOR_WIDTH_MM,
};
pub use io::{load_view_images, save_view_set, ViewImage, CAMERAS_FILE};

use crate::geom::{triangle_normal, Vec3};
use crate::mesh::TriangleMesh;
use crate::raster::{Image, RasterError};

/// Albedo of untextured surfaces.
pub const DEFAULT_GRAY: f32 = 0.75;
/// Face-id value of background pixels.
pub const NO_FACE: u32 = u32::MAX;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("mesh is not normalized: bounding box reaches {0:.4} (limit 1.001)")]
    UnnormalizedMesh(f64),
    #[error("resolution {0} is out of range")]
    ResolutionOutOfRange(usize),
    #[error("camera forward/up are degenerate or projection parameters invalid")]
    DegenerateCamera,
    #[error("duplicate view key '{0}'")]
    DuplicateViewKey(String),
    #[error("view '{0}' is missing")]
    MissingView(String),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("{path}: {message}")]
    Io { path: std::path::PathBuf, message: String },
}

#[derive(Debug, Clone)]
pub struct ViewBuffer {
    pub key: String,
    pub camera: Camera,
    pub albedo: Image<[f32; 3]>,
    pub alpha: Image<f32>,
    /// Distance along the pixel ray; `+∞` on background.
    pub depth: Image<f32>,
    pub normal_cam: Image<[f32; 3]>,
    /// World position of the visible point; `(0,0,0)` on background.
    pub position_world: Image<[f32; 3]>,
    pub face_id: Image<u32>,
}

impl ViewBuffer {
    pub fn width(&self) -> usize {
        self.camera.width
    }

    pub fn height(&self) -> usize {
        self.camera.height
    }

    pub fn covered(&self, x: usize, y: usize) -> bool {
        self.alpha.get(x, y) > 0.0
    }

    pub fn coverage(&self) -> f64 {
        self.alpha.data.iter().filter(|a| **a > 0.0).count() as f64 / self.alpha.data.len() as f64
    }

    /// Albedo with alpha as RGBA.
    pub fn rgba(&self) -> Image<[f32; 4]> {
        Image::from_fn(self.width(), self.height(), |x, y| {
            let c = self.albedo.get(x, y);
            [c[0], c[1], c[2], self.alpha.get(x, y)]
        })
    }
}

#[derive(Debug, Clone, Default)]
pub struct ViewSet {
    pub views: Vec<ViewBuffer>,
}

impl ViewSet {
    pub fn push(&mut self, view: ViewBuffer) -> Result<(), RenderError> {
        if self.views.iter().any(|v| v.key == view.key) {
            return Err(RenderError::DuplicateViewKey(view.key));
        }
        self.views.push(view);
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&ViewBuffer> {
        self.views.iter().find(|v| v.key == key)
    }

    pub fn canonical(&self, key: ViewKey) -> Result<&ViewBuffer, RenderError> {
        self.get(key.as_str()).ok_or_else(|| RenderError::MissingView(key.as_str().into()))
    }

    pub fn len(&self) -> usize {
        self.views.len()
    }

    pub fn is_empty(&self) -> bool {
        self.views.is_empty()
    }
}

/// Texture source for albedo lookups: RGBA image indexed by the mesh's face UVs.
pub type TextureImage = Image<[f32; 4]>;

/// Renders the six orthographic canonical views of a normalized mesh.
pub fn render_canonical_views(
    mesh: &TriangleMesh,
    resolution: usize,
    texture: Option<&TextureImage>,
) -> Result<ViewSet, RenderError> {
    if !(64..=4096).contains(&resolution) {
        return Err(RenderError::ResolutionOutOfRange(resolution));
    }
    let bb = mesh.aabb();
    let reach = bb.min.abs().sup(&bb.max.abs()).max();
    if !bb.is_empty() && reach > 1.001 {
        return Err(RenderError::UnnormalizedMesh(reach));
    }
    let cameras = ViewKey::ALL
        .iter()
        .map(|&k| canonical_camera(k, resolution).map(|c| (k, c)))
        .collect::<Result<Vec<_>, _>>()?;
    let views: Vec<ViewBuffer> = cameras
        .par_iter()
        .map(|(k, cam)| render_view(mesh, cam, k.as_str(), texture))
        .collect();
    let mut set = ViewSet::default();
    for v in views {
        set.push(v)?;
    }
    Ok(set)
}

#[derive(Clone, Copy)]
pub(crate) struct Fragment {
    pub depth: f64,
    pub face: u32,
    /// Perspective-correct barycentric weights of corners 1 and 2.
    pub b1: f64,
    pub b2: f64,
}

const EMPTY: Fragment = Fragment { depth: f64::INFINITY, face: NO_FACE, b1: 0.0, b2: 0.0 };

/// Edge function: positive when `p` is left of `a → b` in y-down screen space.
#[inline]
fn edge(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> f64 {
    (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0)
}

#[inline]
fn top_left(a: (f64, f64), b: (f64, f64)) -> bool {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    (dy == 0.0 && dx > 0.0) || dy < 0.0
}

/// Rasterizes depth only, returning per-pixel nearest fragments.
pub(crate) fn rasterize(mesh: &TriangleMesh, camera: &Camera) -> Vec<Fragment> {
    let (w, h) = (camera.width, camera.height);
    let mut frags = vec![EMPTY; w * h];
    let s = camera.pixel_scale();
    let right = camera.right();
    let ortho = camera.is_orthographic();
    // Screen position plus camera-space z for every vertex.
    let screen: Vec<(f64, f64, f64)> = mesh
        .vertices
        .iter()
        .map(|v| {
            let d = v - camera.position;
            let (x, y, z) = (d.dot(&right), d.dot(&camera.up), d.dot(&camera.forward));
            if ortho {
                (w as f64 * 0.5 + x * s, h as f64 * 0.5 - y * s, z)
            } else {
                (w as f64 * 0.5 + s * x / z, h as f64 * 0.5 - s * y / z, z)
            }
        })
        .collect();
    for (fi, f) in mesh.faces.iter().enumerate() {
        let mut idx = [f[0] as usize, f[1] as usize, f[2] as usize];
        if !ortho && idx.iter().any(|&i| screen[i].2 <= 1e-6) {
            // No near-plane clipping; such triangles straddle the camera.
            continue;
        }
        let p = |i: usize| (screen[i].0, screen[i].1);
        let mut area = edge(p(idx[0]), p(idx[1]), p(idx[2]));
        // Track which original corner each slot holds so barycentrics map back.
        let mut corner = [0usize, 1, 2];
        if area < 0.0 {
            idx.swap(1, 2);
            corner.swap(1, 2);
            area = -area;
        }
        if !(area > 1e-12) {
            continue;
        }
        let (a, b, c) = (p(idx[0]), p(idx[1]), p(idx[2]));
        let min_x = a.0.min(b.0).min(c.0);
        let max_x = a.0.max(b.0).max(c.0);
        let min_y = a.1.min(b.1).min(c.1);
        let max_y = a.1.max(b.1).max(c.1);
        let x0 = ((min_x - 0.5).ceil().max(0.0)) as usize;
        let y0 = ((min_y - 0.5).ceil().max(0.0)) as usize;
        if max_x < 0.5 || max_y < 0.5 {
            continue;
        }
        let x1 = ((max_x - 0.5).floor() as usize).min(w.saturating_sub(1));
        let y1 = ((max_y - 0.5).floor() as usize).min(h.saturating_sub(1));
        if x0 > x1 || y0 > y1 {
            continue;
        }
        let (tl0, tl1, tl2) = (top_left(b, c), top_left(c, a), top_left(a, b));
        let z = [screen[idx[0]].2, screen[idx[1]].2, screen[idx[2]].2];
        let verts = [
            mesh.vertices[idx[0]],
            mesh.vertices[idx[1]],
            mesh.vertices[idx[2]],
        ];
        for py in y0..=y1 {
            let cy = py as f64 + 0.5;
            for px in x0..=x1 {
                let q = (px as f64 + 0.5, cy);
                let w0 = edge(b, c, q);
                let w1 = edge(c, a, q);
                let w2 = edge(a, b, q);
                let inside = (w0 > 0.0 || (w0 == 0.0 && tl0))
                    && (w1 > 0.0 || (w1 == 0.0 && tl1))
                    && (w2 > 0.0 || (w2 == 0.0 && tl2));
                if !inside {
                    continue;
                }
                let mut l = [w0 / area, w1 / area, w2 / area];
                if !ortho {
                    let inv = [l[0] / z[0], l[1] / z[1], l[2] / z[2]];
                    let sum = inv[0] + inv[1] + inv[2];
                    l = [inv[0] / sum, inv[1] / sum, inv[2] / sum];
                }
                let world = verts[0] * l[0] + verts[1] * l[1] + verts[2] * l[2];
                let depth = if ortho {
                    (world - camera.position).dot(&camera.forward)
                } else {
                    (world - camera.position).norm()
                };
                let slot = &mut frags[py * w + px];
                if depth < slot.depth {
                    // Map slot weights back to the face's own corner order.
                    let mut orig = [0.0; 3];
                    for k in 0..3 {
                        orig[corner[k]] = l[k];
                    }
                    *slot = Fragment { depth, face: fi as u32, b1: orig[1], b2: orig[2] };
                }
            }
        }
    }
    frags
}

/// Renders only the depth buffer (distance along each pixel ray).
pub fn render_depth(mesh: &TriangleMesh, camera: &Camera) -> Image<f32> {
    let frags = rasterize(mesh, camera);
    Image {
        width: camera.width,
        height: camera.height,
        data: frags.iter().map(|f| f.depth as f32).collect(),
    }
}

/// Renders one G-buffer. Albedo comes from `texture` through face UVs when
/// both exist, otherwise flat gray.
pub fn render_view(
    mesh: &TriangleMesh,
    camera: &Camera,
    key: &str,
    texture: Option<&TextureImage>,
) -> ViewBuffer {
    let (w, h) = (camera.width, camera.height);
    let frags = rasterize(mesh, camera);
    let face_normals: Vec<Vec3> = (0..mesh.faces.len())
        .map(|f| {
            let [a, b, c] = mesh.triangle(f);
            triangle_normal(&a, &b, &c).unwrap_or_else(|| -camera.forward)
        })
        .collect();
    let texture = texture.filter(|_| mesh.face_uvs.is_some());
    let mut view = ViewBuffer {
        key: key.to_string(),
        camera: *camera,
        albedo: Image::new(w, h, [0.0; 3]),
        alpha: Image::new(w, h, 0.0),
        depth: Image::new(w, h, f32::INFINITY),
        normal_cam: Image::new(w, h, [0.0; 3]),
        position_world: Image::new(w, h, [0.0; 3]),
        face_id: Image::new(w, h, NO_FACE),
    };
    for (i, frag) in frags.iter().enumerate() {
        if frag.face == NO_FACE {
            continue;
        }
        let (x, y) = (i % w, i / w);
        let fi = frag.face as usize;
        let l = [1.0 - frag.b1 - frag.b2, frag.b1, frag.b2];
        let [va, vb, vc] = mesh.triangle(fi);
        let world = va * l[0] + vb * l[1] + vc * l[2];
        let n = match &mesh.vertex_normals {
            Some(ns) => {
                let f = mesh.faces[fi];
                let n = ns[f[0] as usize] * l[0] + ns[f[1] as usize] * l[1] + ns[f[2] as usize] * l[2];
                n.try_normalize(1e-12).unwrap_or(face_normals[fi])
            }
            None => face_normals[fi],
        };
        let nc = camera.to_camera_frame(&n);
        let albedo = match (texture, &mesh.face_uvs) {
            (Some(tex), Some(uvs)) => {
                let [ua, ub, uc] = uvs[fi];
                let uv = ua * l[0] + ub * l[1] + uc * l[2];
                let t = tex.sample_uv(uv.x, uv.y);
                [t[0], t[1], t[2]]
            }
            _ => [DEFAULT_GRAY; 3],
        };
        view.albedo.set(x, y, albedo);
        view.alpha.set(x, y, 1.0);
        view.depth.set(x, y, frag.depth as f32);
        view.normal_cam.set(x, y, [nc.x as f32, nc.y as f32, nc.z as f32]);
        view.position_world.set(x, y, [world.x as f32, world.y as f32, world.z as f32]);
        view.face_id.set(x, y, frag.face);
    }
    view
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::ray_triangle;
    use crate::primitives;
    use proptest::prelude::*;

    #[test]
    fn cube_front_view_square_and_flat_depth() {
        let views = render_canonical_views(&primitives::cube(0.5), 512, None).unwrap();
        let f = views.canonical(ViewKey::Front).unwrap();
        for y in 0..512 {
            for x in 0..512 {
                let inside = (128..384).contains(&x) && (128..384).contains(&y);
                assert_eq!(f.covered(x, y), inside, "pixel {x},{y}");
                if inside {
                    assert_eq!(f.depth.get(x, y), 2.5);
                    let n = f.normal_cam.get(x, y);
                    assert_eq!(n, [0.0, 0.0, 1.0]);
                }
            }
        }
    }

    #[test]
    fn background_contract() {
        let views = render_canonical_views(&primitives::cube(0.5), 64, None).unwrap();
        let f = views.canonical(ViewKey::Top).unwrap();
        assert_eq!(f.alpha.get(0, 0), 0.0);
        assert_eq!(f.depth.get(0, 0), f32::INFINITY);
        assert_eq!(f.position_world.get(0, 0), [0.0; 3]);
    }

    #[test]
    fn sphere_coverage_matches_disk() {
        let views = render_canonical_views(&primitives::icosphere(0.999, 5), 512, None).unwrap();
        for v in &views.views {
            let cov = v.coverage();
            let expect = std::f64::consts::PI * 0.999 * 0.999 / 4.0;
            assert!((cov - expect).abs() / expect < 0.01, "{} {cov}", v.key);
        }
    }

    #[test]
    fn unnormalized_rejected() {
        let err = render_canonical_views(&primitives::cube(1.2), 64, None).unwrap_err();
        assert!(matches!(err, RenderError::UnnormalizedMesh(_)));
        assert!(matches!(
            render_canonical_views(&primitives::cube(0.5), 32, None),
            Err(RenderError::ResolutionOutOfRange(32))
        ));
    }

    #[test]
    fn symmetric_mesh_opposite_alpha_mirror() {
        let views = render_canonical_views(&primitives::icosphere(0.8, 3), 128, None).unwrap();
        for (a, b) in ViewKey::OPPOSITE_PAIRS {
            let va = views.canonical(a).unwrap();
            let vb = views.canonical(b).unwrap();
            let mismatched = va
                .alpha
                .data
                .iter()
                .zip(&vb.alpha.flipped_horizontally().data)
                .filter(|(p, q)| p != q)
                .count();
            // The icosphere is mirror-symmetric about all three planes.
            assert_eq!(mismatched, 0, "{a:?}");
        }
    }

    #[test]
    fn shared_edges_cover_each_pixel_once() {
        // Two triangles meeting along a diagonal through pixel centers: no gaps, no overlap.
        let m = primitives::quad_plane(0.75);
        let cam = canonical_camera(ViewKey::Front, 64).unwrap();
        let frags = rasterize(&m, &cam);
        let covered = frags.iter().filter(|f| f.face != NO_FACE).count();
        assert_eq!(covered, 48 * 48);
    }

    #[test]
    fn textured_albedo_uses_uvs() {
        let m = primitives::quad_plane(1.0);
        let face_uvs = m
            .faces
            .iter()
            .map(|f| {
                f.map(|v| {
                    let p = m.vertices[v as usize];
                    crate::geom::Vec2::new((p.x + 1.0) / 2.0, (1.0 - p.y) / 2.0)
                })
            })
            .collect();
        let m = m.with_face_uvs(face_uvs).unwrap();
        // Left half red, right half blue.
        let tex = Image::from_fn(8, 8, |x, _| if x < 4 { [1.0, 0.0, 0.0, 1.0] } else { [0.0, 0.0, 1.0, 1.0] });
        let v = render_view(&m, &canonical_camera(ViewKey::Front, 64).unwrap(), "front", Some(&tex));
        assert_eq!(v.albedo.get(5, 30), [1.0, 0.0, 0.0]);
        assert_eq!(v.albedo.get(60, 30), [0.0, 0.0, 1.0]);
    }

    fn random_mesh(seed: u64) -> TriangleMesh {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut tris = Vec::new();
        for _ in 0..12 {
            let c = Vec3::new(rng.gen_range(-0.6..0.6), rng.gen_range(-0.6..0.6), rng.gen_range(-0.6..0.6));
            let mut t = [Vec3::zeros(); 3];
            for v in &mut t {
                *v = c + Vec3::new(rng.gen_range(-0.4..0.4), rng.gen_range(-0.4..0.4), rng.gen_range(-0.4..0.4));
            }
            tris.push(t);
        }
        let mut m = primitives::weld_triangles(&tris);
        m.remove_degenerate_faces();
        m
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn depth_matches_brute_force_rays(seed in 0u64..10_000, persp in any::<bool>()) {
            let m = random_mesh(seed);
            let cfg = TrainingCameraConfig {
                perspective_probability: if persp { 1.0 } else { 0.0 },
                resolution: 48,
                ..Default::default()
            };
            let cam = sample_training_camera(seed, &cfg, Vec3::zeros(), 3f64.sqrt());
            let v = render_view(&m, &cam, "x", None);
            for y in 0..48 {
                for x in 0..48 {
                    let (o, d) = cam.pixel_ray(x, y);
                    let best = (0..m.face_count())
                        .filter_map(|f| { let [a, b, c] = m.triangle(f); ray_triangle(&o, &d, &a, &b, &c) })
                        .fold(f64::INFINITY, f64::min);
                    let got = v.depth.get(x, y) as f64;
                    if best.is_finite() && got.is_finite() {
                        prop_assert!((best - got).abs() < 1e-5, "depth {best} vs {got}");
                        let p = v.position_world.get(x, y);
                        let r = o + d * got;
                        prop_assert!((Vec3::new(p[0] as f64, p[1] as f64, p[2] as f64) - r).norm() < 1e-5);
                        let n = v.normal_cam.get(x, y);
                        let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
                        prop_assert!((len - 1.0).abs() < 1e-4);
                    } else {
                        // Rays grazing a shared edge may disagree on hit vs miss; only
                        // allow that when the hit is at an edge (not checked here) by
                        // requiring both to agree in the common case.
                        prop_assert!(best.is_finite() == got.is_finite() || edge_graze(&m, &o, &d));
                    }
                }
            }
        }
    }

    /// True when the ray passes within 1e-9 (barycentric) of some triangle edge.
    fn edge_graze(m: &TriangleMesh, o: &Vec3, d: &Vec3) -> bool {
        (0..m.face_count()).any(|f| {
            let [a, b, c] = m.triangle(f);
            let n = (b - a).cross(&(c - a));
            let denom = n.dot(d);
            if denom.abs() < 1e-15 {
                return false;
            }
            let t = n.dot(&(a - o)) / denom;
            let p = o + d * t;
            let area = n.norm_squared();
            let l0 = (c - b).cross(&(p - b)).dot(&n) / area;
            let l1 = (a - c).cross(&(p - c)).dot(&n) / area;
            let l2 = 1.0 - l0 - l1;
            let m = l0.min(l1).min(l2);
            m.abs() < 1e-9
        })
    }
}
