//! Texture-space synchronization of views: unproject each view into the
//! atlas, fuse with clamped cosine weights, and project the fused texture
//! back through the same cameras.

use rayon::prelude::*;

use super::{SurfaceMap, Texture, TexbakeError, UvAtlas};
use crate::geom::Vec3;
use crate::mesh::TriangleMesh;
use crate::raster::Image;
use crate::render::{rasterize, render_depth, Camera, ViewBuffer, ViewImage, DEFAULT_GRAY, NO_FACE};

/// Largest `tan θ` used to widen the depth tolerance at grazing angles.
const MAX_TAN: f64 = 8.0;

/// A color view with its camera and (once attached) its depth buffer.
#[derive(Debug, Clone)]
pub struct BakeView {
    pub key: String,
    pub camera: Camera,
    /// RGB plus coverage in alpha.
    pub rgba: Image<[f32; 4]>,
    /// Distance along each pixel ray, `+∞` on background.
    pub depth: Option<Image<f32>>,
}

impl BakeView {
    pub fn from_buffer(v: &ViewBuffer) -> BakeView {
        BakeView { key: v.key.clone(), camera: v.camera, rgba: v.rgba(), depth: Some(v.depth.clone()) }
    }

    pub fn from_image(v: ViewImage) -> BakeView {
        BakeView { key: v.key, camera: v.camera, rgba: v.rgba, depth: None }
    }

    /// Replaces the depth buffer with one rendered from `mesh`.
    pub fn with_rendered_depth(mut self, mesh: &TriangleMesh) -> BakeView {
        self.depth = Some(render_depth(mesh, &self.camera));
        self
    }

    fn checked_depth(&self) -> Result<&Image<f32>, TexbakeError> {
        let d = self.depth.as_ref().ok_or_else(|| TexbakeError::MissingDepth(self.key.clone()))?;
        let expected = (self.camera.width, self.camera.height);
        for got in [(d.width, d.height), (self.rgba.width, self.rgba.height)] {
            if got != expected {
                return Err(TexbakeError::SizeMismatch { key: self.key.clone(), got, expected });
            }
        }
        Ok(d)
    }
}

/// Per-view, per-texel fusion weights in `[0, 1]`; 0 where the view does not
/// see the texel.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewWeights {
    pub width: usize,
    pub height: usize,
    pub per_view: Vec<Vec<f32>>,
}

/// Bilinear color at continuous pixel coordinates, weighting each tap by its
/// coverage so background never bleeds in. `None` when no tap is covered.
fn sample_covered(img: &Image<[f32; 4]>, px: f64, py: f64) -> Option<[f32; 3]> {
    let (w, h) = (img.width, img.height);
    let fx = (px - 0.5).clamp(0.0, (w - 1) as f64);
    let fy = (py - 0.5).clamp(0.0, (h - 1) as f64);
    let (x0, y0) = (fx.floor() as usize, fy.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let (tx, ty) = (fx - x0 as f64, fy - y0 as f64);
    let mut acc = [0.0f64; 3];
    let mut wsum = 0.0;
    for (x, y, wt) in [
        (x0, y0, (1.0 - tx) * (1.0 - ty)),
        (x1, y0, tx * (1.0 - ty)),
        (x0, y1, (1.0 - tx) * ty),
        (x1, y1, tx * ty),
    ] {
        let c = img.get(x, y);
        let wa = wt * c[3].clamp(0.0, 1.0) as f64;
        if wa > 0.0 {
            for k in 0..3 {
                acc[k] += wa * c[k] as f64;
            }
            wsum += wa;
        }
    }
    (wsum > 1e-9).then(|| acc.map(|a| (a / wsum) as f32))
}

/// Color and weight one view contributes to one surface point.
fn view_sample(view: &BakeView, depth: &Image<f32>, p: &Vec3, n: &Vec3, exponent: f64) -> Option<([f32; 3], f32)> {
    let cam = &view.camera;
    let cos = n.dot(&cam.toward_camera(p));
    if !(cos > 0.0) {
        return None;
    }
    let q = cam.project(p)?;
    if q.px < 0.0 || q.py < 0.0 || q.px >= cam.width as f64 || q.py >= cam.height as f64 {
        return None;
    }
    let stored = depth.get(q.px as usize, q.py as usize) as f64;
    let pixel_world = if cam.is_orthographic() { 1.0 } else { q.depth } / cam.pixel_scale();
    let tan = ((1.0 - cos * cos).max(0.0).sqrt() / cos).min(MAX_TAN);
    if q.depth > stored + 1.5 * pixel_world * (1.0 + tan) {
        return None;
    }
    let color = sample_covered(&view.rgba, q.px, q.py)?;
    Some((color, cos.powf(exponent) as f32))
}

/// One partial texture per view plus the fusion weights. A texel gets a
/// view's color only where the view sees it: the texel's depth must not
/// exceed the view's depth buffer by more than `1.5·pixel·(1 + tan θ)`.
pub fn unproject_views_to_texture(
    surface: &SurfaceMap,
    views: &[BakeView],
    exponent: f64,
) -> Result<(Vec<Texture>, ViewWeights), TexbakeError> {
    let (w, h) = (surface.width, surface.height);
    let mut partials = Vec::with_capacity(views.len());
    let mut per_view = Vec::with_capacity(views.len());
    for view in views {
        let depth = view.checked_depth()?;
        let samples: Vec<Option<([f32; 3], f32)>> = (0..w * h)
            .into_par_iter()
            .map(|i| {
                if !surface.covered(i) {
                    return None;
                }
                view_sample(view, depth, &surface.position[i], &surface.normal[i], exponent)
            })
            .collect();
        let mut tex = Texture::new(w, h);
        let mut weights = vec![0.0f32; w * h];
        for (i, s) in samples.into_iter().enumerate() {
            if let Some((c, wt)) = s {
                tex.set(i, [c[0], c[1], c[2], 1.0]);
                weights[i] = wt;
            }
        }
        partials.push(tex);
        per_view.push(weights);
    }
    Ok((partials, ViewWeights { width: w, height: h, per_view }))
}

/// Running `Σ wᵢ·Tᵢ` and `Σ wᵢ` per texel, so views can be fused one at a time.
pub(crate) struct FusionAccumulator {
    width: usize,
    height: usize,
    acc: Vec<([f64; 4], f64)>,
}

impl FusionAccumulator {
    pub(crate) fn new(width: usize, height: usize) -> Self {
        FusionAccumulator { width, height, acc: vec![([0.0; 4], 0.0); width * height] }
    }

    /// Zero weights and invalid texels are skipped outright.
    pub(crate) fn add(&mut self, partial: &Texture, weights: &[f32]) {
        self.acc.par_iter_mut().enumerate().for_each(|(i, (sum, wsum))| {
            let wt = weights[i] as f64;
            if wt == 0.0 || !partial.valid[i] {
                return;
            }
            let c = partial.rgba.data[i];
            for k in 0..4 {
                sum[k] += wt * c[k] as f64;
            }
            *wsum += wt;
        });
    }

    pub(crate) fn finish(self) -> Texture {
        let mut out = Texture::new(self.width, self.height);
        for (i, (sum, wsum)) in self.acc.into_iter().enumerate() {
            if wsum > 0.0 {
                out.set(i, sum.map(|a| (a / wsum) as f32));
            }
        }
        out
    }
}

/// Weighted mean `Σ wᵢ·Tᵢ / Σ wᵢ` per texel over views with nonzero weight.
/// Texels no view contributes to stay invalid.
pub fn fuse_partial_textures(partials: &[Texture], weights: &ViewWeights) -> Texture {
    let mut acc = FusionAccumulator::new(weights.width, weights.height);
    for (t, w) in partials.iter().zip(&weights.per_view) {
        acc.add(t, w);
    }
    acc.finish()
}

#[derive(Debug, Clone)]
pub struct ProjectedImage {
    /// Background pixels are transparent black.
    pub rgba: Image<[f32; 4]>,
    /// Covered pixels whose texture lookup found no valid texel and were
    /// painted flat gray instead.
    pub fallback: Vec<bool>,
}

impl ProjectedImage {
    pub fn fallback_pixels(&self) -> usize {
        self.fallback.iter().filter(|f| **f).count()
    }
}

/// Textured rasterization of `mesh` through `atlas`. Each pixel takes the
/// texel it lands in, so when pixels are finer than texels, unprojecting the
/// result returns the texture unchanged.
pub fn project_texture_to_views(
    mesh: &TriangleMesh,
    atlas: &UvAtlas,
    texture: &Texture,
    cameras: &[Camera],
) -> Vec<ProjectedImage> {
    cameras
        .iter()
        .map(|cam| {
            let frags = rasterize(mesh, cam);
            let texels: Vec<([f32; 4], bool)> = frags
                .par_iter()
                .map(|f| {
                    if f.face == NO_FACE {
                        return ([0.0; 4], false);
                    }
                    let [a, b, c] = atlas.uvs[f.face as usize];
                    let uv = a * (1.0 - f.b1 - f.b2) + b * f.b1 + c * f.b2;
                    match texture.sample_nearest_valid(uv.x, uv.y) {
                        Some(t) => ([t[0], t[1], t[2], 1.0], false),
                        None => ([DEFAULT_GRAY, DEFAULT_GRAY, DEFAULT_GRAY, 1.0], true),
                    }
                })
                .collect();
            let (data, fallback) = texels.into_iter().unzip();
            ProjectedImage { rgba: Image { width: cam.width, height: cam.height, data }, fallback }
        })
        .collect()
}

/// One unproject → fuse → project round. Pixels the fused texture covers are
/// replaced, everything else is kept.
pub fn synchronize_views(
    mesh: &TriangleMesh,
    atlas: &UvAtlas,
    views: &[BakeView],
    exponent: f64,
) -> Result<Vec<BakeView>, TexbakeError> {
    let surface = atlas.rasterize(mesh);
    let (partials, weights) = unproject_views_to_texture(&surface, views, exponent)?;
    let fused = fuse_partial_textures(&partials, &weights);
    let cameras: Vec<Camera> = views.iter().map(|v| v.camera).collect();
    let projected = project_texture_to_views(mesh, atlas, &fused, &cameras);
    Ok(views
        .iter()
        .zip(projected)
        .map(|(v, p)| {
            let mut out = v.clone();
            for (i, px) in p.rgba.data.iter().enumerate() {
                if px[3] > 0.0 && !p.fallback[i] {
                    out.rgba.data[i] = *px;
                }
            }
            out
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::ray_triangle;
    use crate::primitives;
    use crate::render::{canonical_camera, render_canonical_views, Projection, ViewKey};
    use crate::texbake::uv_unwrap;

    fn constant_views(mesh: &TriangleMesh, res: usize, colors: &[[f32; 3]]) -> Vec<BakeView> {
        let set = render_canonical_views(mesh, res, None).unwrap();
        set.views
            .iter()
            .zip(colors)
            .map(|(v, c)| {
                let mut b = BakeView::from_buffer(v);
                for p in &mut b.rgba.data {
                    if p[3] > 0.0 {
                        *p = [c[0], c[1], c[2], 1.0];
                    }
                }
                b
            })
            .collect()
    }

    fn front_face_texels(mesh: &TriangleMesh, surface: &SurfaceMap) -> Vec<usize> {
        (0..surface.face.len())
            .filter(|&i| surface.covered(i) && mesh.face_normal(surface.face[i] as usize).z > 0.99)
            .collect()
    }

    #[test]
    fn front_view_weight_one_side_view_zero() {
        let cube = primitives::cube(0.5);
        let atlas = uv_unwrap(&cube, 64, 2).unwrap();
        let surface = atlas.rasterize(&cube);
        let views = constant_views(&cube, 128, &[[1.0, 0.0, 0.0]; 6]);
        let (_, weights) = unproject_views_to_texture(&surface, &views, 1.0).unwrap();
        let front = views.iter().position(|v| v.key == "front").unwrap();
        let right = views.iter().position(|v| v.key == "right").unwrap();
        let texels = front_face_texels(&cube, &surface);
        assert!(!texels.is_empty());
        for i in texels {
            assert_eq!(weights.per_view[front][i], 1.0);
            assert_eq!(weights.per_view[right][i], 0.0);
        }
    }

    #[test]
    fn missing_depth_is_an_error() {
        let cube = primitives::cube(0.5);
        let atlas = uv_unwrap(&cube, 64, 2).unwrap();
        let mut views = constant_views(&cube, 64, &[[0.5; 3]; 6]);
        views[2].depth = None;
        let err = unproject_views_to_texture(&atlas.rasterize(&cube), &views, 1.0).unwrap_err();
        assert!(matches!(err, TexbakeError::MissingDepth(k) if k == views[2].key));
    }

    #[test]
    fn blocker_occludes_texels() {
        // A sheet in front of the lower half of the cube's front face.
        let cube = primitives::cube(0.5);
        let mut scene = cube.clone();
        scene.append(&primitives::box_mesh(Vec3::new(-0.9, -0.9, 0.8), Vec3::new(0.9, 0.0, 0.82)));
        let cam = canonical_camera(ViewKey::Front, 256).unwrap();
        let view = BakeView {
            key: "front".into(),
            camera: cam,
            rgba: Image::new(256, 256, [0.2, 0.4, 0.6, 1.0]),
            depth: None,
        }
        .with_rendered_depth(&scene);
        let atlas = uv_unwrap(&cube, 128, 2).unwrap();
        let surface = atlas.rasterize(&cube);
        let (_, weights) = unproject_views_to_texture(&surface, &[view], 1.0).unwrap();
        let mut hidden = 0;
        for i in front_face_texels(&cube, &surface) {
            let p = surface.position[i];
            // Brute force: anything in `scene` between the point and the camera?
            let dir = -cam.forward;
            let blocked = (0..scene.faces.len()).any(|f| {
                let [a, b, c] = scene.triangle(f);
                matches!(ray_triangle(&p, &dir, &a, &b, &c), Some(t) if t > 1e-6)
            });
            // Texels within a pixel of the blocker's edge may go either way.
            if (p.y).abs() < 2.0 / 128.0 {
                continue;
            }
            assert_eq!(weights.per_view[0][i] == 0.0, blocked, "texel at {p:?}");
            hidden += usize::from(blocked);
        }
        assert!(hidden > 100);
    }

    fn one_texel_weights(ws: &[f32]) -> ViewWeights {
        ViewWeights { width: 1, height: 1, per_view: ws.iter().map(|w| vec![*w]).collect() }
    }

    fn one_texel(c: [f32; 4]) -> Texture {
        Texture::filled(Image::new(1, 1, c))
    }

    #[test]
    fn fusion_semantics() {
        let a = [0.3, 0.7, 0.11, 1.0];
        let b = [0.9, 0.1, 0.6, 1.0];
        let fused = fuse_partial_textures(&[one_texel(a)], &one_texel_weights(&[1.0]));
        assert_eq!(fused.rgba.data[0], a);
        let fused = fuse_partial_textures(&[one_texel(a), one_texel(b)], &one_texel_weights(&[0.7, 0.7]));
        for k in 0..4 {
            assert!((fused.rgba.data[0][k] - (a[k] + b[k]) / 2.0).abs() < 1e-7);
        }
        let fused = fuse_partial_textures(&[one_texel(a), one_texel(b)], &one_texel_weights(&[0.9, 0.0]));
        assert_eq!(fused.rgba.data[0], a);
        let none = fuse_partial_textures(&[one_texel(a)], &one_texel_weights(&[0.0]));
        assert!(!none.valid[0]);
    }

    #[test]
    fn constant_texture_projects_exactly() {
        let sphere = primitives::icosphere(0.8, 3);
        let atlas = uv_unwrap(&sphere, 128, 2).unwrap();
        let c = [0.25, 0.5, 0.125, 1.0];
        let tex = Texture::filled(Image::new(128, 128, c));
        let cams: Vec<Camera> = ViewKey::ALL.iter().map(|k| canonical_camera(*k, 96).unwrap()).collect();
        for img in project_texture_to_views(&sphere, &atlas, &tex, &cams) {
            assert_eq!(img.fallback_pixels(), 0);
            for p in &img.rgba.data {
                assert!(p[3] == 0.0 || *p == c);
            }
        }
    }

    #[test]
    fn empty_texture_projects_flagged_gray() {
        let cube = primitives::cube(0.5);
        let atlas = uv_unwrap(&cube, 64, 2).unwrap();
        let cam = canonical_camera(ViewKey::Front, 64).unwrap();
        let img = &project_texture_to_views(&cube, &atlas, &Texture::new(64, 64), &[cam])[0];
        let covered = img.rgba.data.iter().filter(|p| p[3] > 0.0).count();
        assert!(covered > 0);
        assert_eq!(img.fallback_pixels(), covered);
    }

    fn psnr(a: &Texture, b: &Texture) -> f64 {
        let mut se = 0.0;
        let mut n = 0usize;
        for i in 0..a.valid.len() {
            if a.valid[i] && b.valid[i] {
                for k in 0..3 {
                    let d = (a.rgba.data[i][k] - b.rgba.data[i][k]) as f64;
                    se += d * d;
                }
                n += 3;
            }
        }
        10.0 * (1.0 / (se / n as f64)).log10()
    }

    #[test]
    fn checkerboard_round_trip_psnr() {
        let cube = primitives::cube(0.5);
        let atlas = uv_unwrap(&cube, 128, 2).unwrap();
        let surface = atlas.rasterize(&cube);
        // Texel footprint is 512 / 2 / texels_per_unit ≈ 5 pixels.
        assert!(256.0 / atlas.texels_per_unit >= 2.0);
        let mut tex = Texture::new(128, 128);
        for i in 0..128 * 128 {
            if surface.covered(i) {
                let (x, y) = (i % 128, i / 128);
                let v = if (x / 8 + y / 8) % 2 == 0 { 0.9 } else { 0.1 };
                tex.set(i, [v, 1.0 - v, 0.5, 1.0]);
            }
        }
        let cams: Vec<Camera> = ViewKey::ALL.iter().map(|k| canonical_camera(*k, 512).unwrap()).collect();
        let views: Vec<BakeView> = project_texture_to_views(&cube, &atlas, &tex, &cams)
            .into_iter()
            .zip(&cams)
            .map(|(p, c)| {
                BakeView { key: String::new(), camera: *c, rgba: p.rgba, depth: None }.with_rendered_depth(&cube)
            })
            .collect();
        let (partials, weights) = unproject_views_to_texture(&surface, &views, 1.0).unwrap();
        let back = fuse_partial_textures(&partials, &weights);
        assert!(back.valid_count() as f64 > 0.95 * tex.valid_count() as f64);
        let db = psnr(&tex, &back);
        assert!(db >= 30.0, "{db}");
    }

    fn two_view_plane() -> (TriangleMesh, UvAtlas, Vec<BakeView>) {
        let plane = primitives::quad_plane(0.5);
        let atlas = uv_unwrap(&plane, 64, 2).unwrap();
        let views = [(-1.0, [1.0, 0.0, 0.0]), (1.0, [0.0, 0.0, 1.0])]
            .iter()
            .map(|&(sx, c): &(f64, [f32; 3])| {
                let pos = Vec3::new(sx, 0.0, 1.0).normalize() * 3.0;
                let cam = Camera::look_at(
                    Projection::Orthographic { half_extent: 1.0 },
                    pos,
                    Vec3::zeros(),
                    Vec3::y(),
                    128,
                    128,
                )
                .unwrap();
                let depth = render_depth(&plane, &cam);
                let rgba = Image::from_fn(128, 128, |x, y| {
                    if depth.get(x, y).is_finite() {
                        [c[0], c[1], c[2], 1.0]
                    } else {
                        [0.0; 4]
                    }
                });
                BakeView { key: format!("v{sx}"), camera: cam, rgba, depth: Some(depth) }
            })
            .collect();
        (plane, atlas, views)
    }

    fn covered_rms(a: &[BakeView], b: &[BakeView]) -> f64 {
        let mut se = 0.0;
        let mut n = 0usize;
        for (va, vb) in a.iter().zip(b) {
            for (p, q) in va.rgba.data.iter().zip(&vb.rgba.data) {
                if p[3] > 0.0 {
                    for k in 0..3 {
                        se += ((p[k] - q[k]) as f64).powi(2);
                    }
                    n += 3;
                }
            }
        }
        (se / n as f64).sqrt()
    }

    #[test]
    fn disagreeing_views_meet_in_the_middle() {
        let (plane, atlas, views) = two_view_plane();
        let once = synchronize_views(&plane, &atlas, &views, 1.0).unwrap();
        for v in &once {
            for p in v.rgba.data.iter().filter(|p| p[3] > 0.0) {
                assert!((p[0] - 0.5).abs() < 1e-6 && p[1].abs() < 1e-6 && (p[2] - 0.5).abs() < 1e-6, "{p:?}");
            }
        }
        let twice = synchronize_views(&plane, &atlas, &once, 1.0).unwrap();
        assert!(covered_rms(&once, &twice) <= 1e-4);
    }

    #[test]
    fn consistent_views_are_a_fixed_point() {
        let cube = primitives::cube(0.5);
        let atlas = uv_unwrap(&cube, 128, 4).unwrap();
        let surface = atlas.rasterize(&cube);
        let mut tex = Texture::new(128, 128);
        for i in 0..128 * 128 {
            if surface.covered(i) {
                let p = surface.position[i];
                let c = |s: f64| (0.5 + 0.3 * s) as f32;
                tex.set(i, [c((2.0 * p.x).sin()), c((1.5 * p.y).cos()), c(p.z), 1.0]);
            }
        }
        let cams: Vec<Camera> = ViewKey::ALL.iter().map(|k| canonical_camera(*k, 256).unwrap()).collect();
        let views: Vec<BakeView> = project_texture_to_views(&cube, &atlas, &tex, &cams)
            .into_iter()
            .zip(&cams)
            .map(|(p, c)| BakeView { key: String::new(), camera: *c, rgba: p.rgba, depth: None }.with_rendered_depth(&cube))
            .collect();
        let synced = synchronize_views(&cube, &atlas, &views, 1.0).unwrap();
        for (a, b) in views.iter().zip(&synced) {
            for (p, q) in a.rgba.data.iter().zip(&b.rgba.data) {
                for k in 0..4 {
                    assert!((p[k] - q[k]).abs() <= 1.0 / 255.0, "{p:?} {q:?}");
                }
            }
        }
    }
}
