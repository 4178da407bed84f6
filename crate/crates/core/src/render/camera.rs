use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::RenderError;
use crate::geom::Vec3;

/// Width of the 35 mm-equivalent sensor the focal length refers to.
pub const SENSOR_WIDTH_MM: f64 = 36.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Projection {
    Orthographic { half_extent: f64 },
    Perspective { focal_length_mm: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub projection: Projection,
    pub position: Vec3,
    pub forward: Vec3,
    pub up: Vec3,
    pub width: usize,
    pub height: usize,
}

/// A world point mapped into a camera: continuous pixel coordinates and the
/// distance along the pixel ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projected {
    pub px: f64,
    pub py: f64,
    pub depth: f64,
}

impl Camera {
    /// Builds a camera looking along `forward`, orthonormalizing `up_hint`.
    pub fn new(
        projection: Projection,
        position: Vec3,
        forward: Vec3,
        up_hint: Vec3,
        width: usize,
        height: usize,
    ) -> Result<Camera, RenderError> {
        if width < 8 || height < 8 {
            return Err(RenderError::ResolutionOutOfRange(width.min(height)));
        }
        let f = forward.try_normalize(1e-12).ok_or(RenderError::DegenerateCamera)?;
        let up = (up_hint - f * up_hint.dot(&f))
            .try_normalize(1e-9)
            .ok_or(RenderError::DegenerateCamera)?;
        match projection {
            Projection::Orthographic { half_extent } if !(half_extent > 0.0) => {
                return Err(RenderError::DegenerateCamera)
            }
            Projection::Perspective { focal_length_mm } if !(focal_length_mm > 0.0) => {
                return Err(RenderError::DegenerateCamera)
            }
            _ => {}
        }
        Ok(Camera { projection, position, forward: f, up, width, height })
    }

    pub fn look_at(
        projection: Projection,
        position: Vec3,
        target: Vec3,
        up_hint: Vec3,
        width: usize,
        height: usize,
    ) -> Result<Camera, RenderError> {
        Camera::new(projection, position, target - position, up_hint, width, height)
    }

    /// Image-plane x axis; image rows grow along `-up`.
    pub fn right(&self) -> Vec3 {
        self.forward.cross(&self.up)
    }

    fn short_side(&self) -> f64 {
        self.width.min(self.height) as f64
    }

    /// Pixels per world unit (orthographic) or focal length in pixels (perspective).
    pub fn pixel_scale(&self) -> f64 {
        match self.projection {
            Projection::Orthographic { half_extent } => self.short_side() / (2.0 * half_extent),
            Projection::Perspective { focal_length_mm } => focal_length_mm / SENSOR_WIDTH_MM * self.short_side(),
        }
    }

    pub fn is_orthographic(&self) -> bool {
        matches!(self.projection, Projection::Orthographic { .. })
    }

    /// Ray (origin, unit direction) through continuous pixel coordinates.
    pub fn ray(&self, px: f64, py: f64) -> (Vec3, Vec3) {
        let sx = px - self.width as f64 * 0.5;
        let sy = self.height as f64 * 0.5 - py;
        let s = self.pixel_scale();
        match self.projection {
            Projection::Orthographic { .. } => {
                (self.position + self.right() * (sx / s) + self.up * (sy / s), self.forward)
            }
            Projection::Perspective { .. } => {
                let d = self.forward * s + self.right() * sx + self.up * sy;
                (self.position, d.normalize())
            }
        }
    }

    /// Ray through the center of pixel `(x, y)`.
    pub fn pixel_ray(&self, x: usize, y: usize) -> (Vec3, Vec3) {
        self.ray(x as f64 + 0.5, y as f64 + 0.5)
    }

    /// `None` for points at or behind a perspective camera's center.
    pub fn project(&self, p: &Vec3) -> Option<Projected> {
        let d = p - self.position;
        let s = self.pixel_scale();
        let (x, y, z) = (d.dot(&self.right()), d.dot(&self.up), d.dot(&self.forward));
        match self.projection {
            Projection::Orthographic { .. } => Some(Projected {
                px: self.width as f64 * 0.5 + x * s,
                py: self.height as f64 * 0.5 - y * s,
                depth: z,
            }),
            Projection::Perspective { .. } => {
                if z <= 1e-9 {
                    return None;
                }
                Some(Projected {
                    px: self.width as f64 * 0.5 + s * x / z,
                    py: self.height as f64 * 0.5 - s * y / z,
                    depth: d.norm(),
                })
            }
        }
    }

    /// Unit vector from `p` toward the camera.
    pub fn toward_camera(&self, p: &Vec3) -> Vec3 {
        match self.projection {
            Projection::Orthographic { .. } => -self.forward,
            Projection::Perspective { .. } => (self.position - p).try_normalize(0.0).unwrap_or(-self.forward),
        }
    }

    /// World vector expressed in the camera frame (x right, y up, z toward the viewer).
    pub fn to_camera_frame(&self, v: &Vec3) -> Vec3 {
        Vec3::new(v.dot(&self.right()), v.dot(&self.up), -v.dot(&self.forward))
    }
}

/// The six axis-aligned views used for filtering, visibility and baking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewKey {
    Front,
    Back,
    Left,
    Right,
    Top,
    Bottom,
}

impl ViewKey {
    pub const ALL: [ViewKey; 6] =
        [ViewKey::Front, ViewKey::Back, ViewKey::Left, ViewKey::Right, ViewKey::Top, ViewKey::Bottom];

    /// The three (view, opposite view) pairs.
    pub const OPPOSITE_PAIRS: [(ViewKey, ViewKey); 3] =
        [(ViewKey::Front, ViewKey::Back), (ViewKey::Left, ViewKey::Right), (ViewKey::Top, ViewKey::Bottom)];

    pub fn as_str(self) -> &'static str {
        match self {
            ViewKey::Front => "front",
            ViewKey::Back => "back",
            ViewKey::Left => "left",
            ViewKey::Right => "right",
            ViewKey::Top => "top",
            ViewKey::Bottom => "bottom",
        }
    }

    /// (direction from the origin to the camera, up vector).
    pub fn axes(self) -> (Vec3, Vec3) {
        match self {
            ViewKey::Front => (Vec3::z(), Vec3::y()),
            ViewKey::Back => (-Vec3::z(), Vec3::y()),
            ViewKey::Right => (Vec3::x(), Vec3::y()),
            ViewKey::Left => (-Vec3::x(), Vec3::y()),
            ViewKey::Top => (Vec3::y(), -Vec3::z()),
            ViewKey::Bottom => (-Vec3::y(), -Vec3::z()),
        }
    }
}

/// Distance of canonical cameras from the origin; anything beyond the
/// normalized cube works for orthographic views.
pub const CANONICAL_DISTANCE: f64 = 3.0;

/// Orthographic camera for a canonical view covering `[-1, 1]` on both image axes.
pub fn canonical_camera(key: ViewKey, resolution: usize) -> Result<Camera, RenderError> {
    let (dir, up) = key.axes();
    Camera::new(
        Projection::Orthographic { half_extent: 1.0 },
        dir * CANONICAL_DISTANCE,
        -dir,
        up,
        resolution,
        resolution,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingCameraConfig {
    /// Fraction of the shorter image axis the bounding sphere should span.
    pub framing_fraction: f64,
    pub elevation_deg: (f64, f64),
    pub azimuth_deg: (f64, f64),
    pub focal_length_mm: (f64, f64),
    pub perspective_probability: f64,
    pub resolution: usize,
}

impl Default for TrainingCameraConfig {
    fn default() -> Self {
        TrainingCameraConfig {
            framing_fraction: 0.9,
            elevation_deg: (-15.0, 30.0),
            azimuth_deg: (-75.0, 75.0),
            focal_length_mm: (35.0, 100.0),
            perspective_probability: 0.5,
            resolution: 768,
        }
    }
}

/// Draws a random viewpoint around a bounding sphere, framed so the sphere
/// spans `framing_fraction` of the shorter image axis.
pub fn sample_training_camera(
    seed: u64,
    config: &TrainingCameraConfig,
    center: Vec3,
    radius: f64,
) -> Camera {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let el = rng.gen_range(config.elevation_deg.0..=config.elevation_deg.1).to_radians();
    let az = rng.gen_range(config.azimuth_deg.0..=config.azimuth_deg.1).to_radians();
    let perspective = rng.gen_bool(config.perspective_probability);
    let focal = rng.gen_range(config.focal_length_mm.0..=config.focal_length_mm.1);
    let dir = Vec3::new(el.cos() * az.sin(), el.sin(), el.cos() * az.cos());
    let (projection, distance) = if perspective {
        // Angular radius α of the sphere must satisfy tan α = fraction · (sensor/2) / f.
        let alpha = (config.framing_fraction * SENSOR_WIDTH_MM * 0.5 / focal).atan();
        (Projection::Perspective { focal_length_mm: focal }, radius / alpha.sin())
    } else {
        (Projection::Orthographic { half_extent: radius / config.framing_fraction }, 3.0 * radius)
    };
    Camera::new(
        projection,
        center + dir * distance,
        -dir,
        Vec3::y(),
        config.resolution,
        config.resolution,
    )
    .expect("sampled elevations stay away from the poles")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_front_projects_axes() {
        let cam = canonical_camera(ViewKey::Front, 512).unwrap();
        let p = cam.project(&Vec3::new(1.0, 1.0, 0.0)).unwrap();
        assert_eq!((p.px, p.py, p.depth), (512.0, 0.0, 3.0));
        assert!((cam.up.dot(&cam.forward)).abs() < 1e-9);
    }

    #[test]
    fn opposite_views_mirror_horizontally() {
        for (a, b) in ViewKey::OPPOSITE_PAIRS {
            let ca = canonical_camera(a, 64).unwrap();
            let cb = canonical_camera(b, 64).unwrap();
            let p = Vec3::new(0.3, -0.2, 0.55);
            let (pa, pb) = (ca.project(&p).unwrap(), cb.project(&p).unwrap());
            assert!((pa.px - (64.0 - pb.px)).abs() < 1e-12, "{a:?}");
            assert!((pa.py - pb.py).abs() < 1e-12);
        }
    }

    #[test]
    fn ray_and_project_agree() {
        let cfg = TrainingCameraConfig::default();
        for seed in 0..20 {
            let cam = sample_training_camera(seed, &cfg, Vec3::zeros(), 1.0);
            let (o, d) = cam.ray(100.25, 300.75);
            let p = o + d * 2.5;
            let q = cam.project(&p).unwrap();
            assert!((q.px - 100.25).abs() < 1e-9 && (q.py - 300.75).abs() < 1e-9);
            assert!((q.depth - 2.5).abs() < 1e-9 || cam.is_orthographic());
        }
    }

    #[test]
    fn ortho_extent_from_fraction() {
        let cfg = TrainingCameraConfig { perspective_probability: 0.0, ..Default::default() };
        let cam = sample_training_camera(3, &cfg, Vec3::zeros(), 1.0);
        match cam.projection {
            Projection::Orthographic { half_extent } => assert!((half_extent - 1.0 / 0.9).abs() < 1e-12),
            _ => panic!("expected orthographic"),
        }
    }

    #[test]
    fn perspective_framing_spans_fraction() {
        let cfg = TrainingCameraConfig { perspective_probability: 1.0, ..Default::default() };
        let cam = sample_training_camera(5, &cfg, Vec3::zeros(), 1.0);
        // Tangent ray from the camera to the sphere lands at 0.9 · half the image.
        let d = cam.position.norm();
        let alpha = (1.0 / d).asin();
        let r_px = cam.pixel_scale() * alpha.tan();
        assert!((r_px - 0.9 * 384.0).abs() < 1e-6);
    }

    #[test]
    fn sampled_ranges_and_determinism() {
        let cfg = TrainingCameraConfig::default();
        for seed in 0..2000 {
            let cam = sample_training_camera(seed, &cfg, Vec3::zeros(), 1.0);
            let dir = (-cam.forward).normalize();
            let el = dir.y.asin().to_degrees();
            let az = dir.x.atan2(dir.z).to_degrees();
            assert!((-15.0 - 1e-9..=30.0 + 1e-9).contains(&el));
            assert!((-75.0 - 1e-9..=75.0 + 1e-9).contains(&az));
            if let Projection::Perspective { focal_length_mm } = cam.projection {
                assert!((35.0..=100.0).contains(&focal_length_mm));
            }
        }
        assert_eq!(sample_training_camera(9, &cfg, Vec3::zeros(), 1.0), sample_training_camera(9, &cfg, Vec3::zeros(), 1.0));
    }
}
