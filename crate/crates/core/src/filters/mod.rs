//! Asset quality filters over the six canonical renders, the perceptual
//! ranking stand-in, and corpus-level curation.

mod corpus;
mod perceptual;

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub use corpus::{apply_perceptual_cut, curate_asset, curate_corpus, read_manifest, write_report, CurationReport, ManifestEntry};
pub use perceptual::perceptual_score;

use crate::mesh::MaterialInfo;
use crate::render::{ViewBuffer, ViewKey, ViewSet};

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("{path}:{line}: {message}")]
    Manifest { path: PathBuf, line: usize, message: String },
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    TextureQuality,
    SingleSurface,
    SmallObject,
    WrongNormal,
    /// Transparent materials and point-cloud names/types.
    Metadata,
    /// Stand-in verdict for assets that could not be loaded or rendered.
    Load,
}

impl FilterKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FilterKind::TextureQuality => "texture_quality",
            FilterKind::SingleSurface => "single_surface",
            FilterKind::SmallObject => "small_object",
            FilterKind::WrongNormal => "wrong_normal",
            FilterKind::Metadata => "metadata",
            FilterKind::Load => "load",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterVerdict {
    pub filter: FilterKind,
    pub passed: bool,
    pub score: f64,
    /// Filter-specific measurements; failing verdicts carry a `reason` string.
    pub details: BTreeMap<String, Value>,
}

impl FilterVerdict {
    fn new(filter: FilterKind, passed: bool, score: f64) -> Self {
        FilterVerdict { filter, passed, score, details: BTreeMap::new() }
    }

    fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.details.insert(key.to_string(), value.into());
        self
    }

    fn failed(filter: FilterKind, reason: &str) -> Self {
        FilterVerdict::new(filter, false, 0.0).with("reason", reason)
    }

    pub fn reason(&self) -> Option<&str> {
        self.details.get("reason").and_then(Value::as_str)
    }
}

pub const NO_FOREGROUND: &str = "no foreground";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub render_resolution: usize,
    pub dark_value: f64,
    pub bright_value: f64,
    pub min_entropy_bits: f64,
    pub match_tolerance: f64,
    pub single_surface_ratio: f64,
    pub min_coverage: f64,
    pub obtuse_fraction: f64,
    /// Percentage of surviving assets removed by perceptual rank.
    pub bottom_percent: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            render_resolution: 256,
            dark_value: 0.08,
            bright_value: 0.97,
            min_entropy_bits: 1.0,
            match_tolerance: 0.01,
            single_surface_ratio: 0.6,
            min_coverage: 0.10,
            obtuse_fraction: 0.05,
            bottom_percent: 20,
        }
    }
}

pub(crate) fn foreground<'a>(view: &'a ViewBuffer) -> impl Iterator<Item = (usize, usize)> + 'a {
    let w = view.width();
    (0..view.alpha.data.len()).filter(|&i| view.alpha.data[i] > 0.0).map(move |i| (i % w, i / w))
}

/// Hue and value in `[0, 1]`.
pub(crate) fn hue_value(c: [f32; 3]) -> (f64, f64) {
    let (r, g, b) = (c[0] as f64, c[1] as f64, c[2] as f64);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    let h = if d <= 0.0 {
        0.0
    } else if max == r {
        ((g - b) / d).rem_euclid(6.0) / 6.0
    } else if max == g {
        ((b - r) / d + 2.0) / 6.0
    } else {
        ((r - g) / d + 4.0) / 6.0
    };
    (h, max)
}

pub const HISTOGRAM_BINS: usize = 32;

/// Entropy in bits of the joint hue/value histogram.
pub fn hv_entropy(colors: impl Iterator<Item = [f32; 3]>) -> f64 {
    let mut hist = vec![0u64; HISTOGRAM_BINS * HISTOGRAM_BINS];
    let mut total = 0u64;
    let bin = |x: f64| ((x * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1);
    for c in colors {
        let (h, v) = hue_value(c);
        hist[bin(h) * HISTOGRAM_BINS + bin(v)] += 1;
        total += 1;
    }
    if total == 0 {
        return 0.0;
    }
    hist.iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total as f64;
            -p * p.log2()
        })
        .sum()
}

/// Too dark, too bright or overly uniform albedo, pooled over all views.
/// Score: joint (H, V) histogram entropy in bits.
pub fn texture_quality_filter(views: &ViewSet, cfg: &FilterConfig) -> FilterVerdict {
    let colors: Vec<[f32; 3]> =
        views.views.iter().flat_map(|v| foreground(v).map(move |(x, y)| v.albedo.get(x, y))).collect();
    if colors.is_empty() {
        return FilterVerdict::failed(FilterKind::TextureQuality, NO_FOREGROUND);
    }
    let mean_v = colors.iter().map(|c| hue_value(*c).1).sum::<f64>() / colors.len() as f64;
    let entropy = hv_entropy(colors.iter().copied());
    let reason = if mean_v < cfg.dark_value {
        Some("too dark")
    } else if mean_v > cfg.bright_value {
        Some("too bright")
    } else if entropy < cfg.min_entropy_bits {
        Some("overly uniform")
    } else {
        None
    };
    let v = FilterVerdict::new(FilterKind::TextureQuality, reason.is_none(), entropy).with("mean_value", mean_v);
    match reason {
        Some(r) => v.with("reason", r),
        None => v,
    }
}

/// Fraction of co-covered pixels where a view and its opposite (sampled at
/// the mirrored column) see the same 3D point; fails on a high maximum.
pub fn single_surface_filter(views: &ViewSet, cfg: &FilterConfig) -> FilterVerdict {
    let tol2 = (cfg.match_tolerance * cfg.match_tolerance) as f32;
    let mut best: Option<f64> = None;
    let mut verdict = FilterVerdict::new(FilterKind::SingleSurface, true, 0.0);
    for (ka, kb) in ViewKey::OPPOSITE_PAIRS {
        let (Ok(a), Ok(b)) = (views.canonical(ka), views.canonical(kb)) else { continue };
        if (a.width(), a.height()) != (b.width(), b.height()) {
            continue;
        }
        let w = a.width();
        let (mut both, mut matched) = (0usize, 0usize);
        for (x, y) in foreground(a) {
            let xb = w - 1 - x;
            if !b.covered(xb, y) {
                continue;
            }
            both += 1;
            let (pa, pb) = (a.position_world.get(x, y), b.position_world.get(xb, y));
            let d2: f32 = (0..3).map(|i| (pa[i] - pb[i]) * (pa[i] - pb[i])).sum();
            if d2 < tol2 {
                matched += 1;
            }
        }
        if both > 0 {
            let ratio = matched as f64 / both as f64;
            verdict = verdict.with(&format!("{}_{}", ka.as_str(), kb.as_str()), ratio);
            best = Some(best.map_or(ratio, |b: f64| b.max(ratio)));
        }
    }
    let Some(ratio) = best else {
        return FilterVerdict::failed(FilterKind::SingleSurface, NO_FOREGROUND);
    };
    verdict.score = ratio;
    verdict.passed = ratio <= cfg.single_surface_ratio;
    if !verdict.passed {
        verdict = verdict.with("reason", "single surface");
    }
    verdict
}

/// Front-view alpha coverage; fails strictly below `min_coverage`.
pub fn small_object_filter(views: &ViewSet, cfg: &FilterConfig) -> FilterVerdict {
    let Ok(front) = views.canonical(ViewKey::Front) else {
        return FilterVerdict::failed(FilterKind::SmallObject, "missing front view");
    };
    let coverage = front.coverage();
    let passed = !(coverage < cfg.min_coverage);
    let v = FilterVerdict::new(FilterKind::SmallObject, passed, coverage);
    if passed {
        v
    } else {
        v.with("reason", "too small")
    }
}

/// Fraction of covered pixels whose normal points away from the camera.
pub fn wrong_normal_filter(views: &ViewSet, cfg: &FilterConfig) -> FilterVerdict {
    let (mut covered, mut wrong) = (0usize, 0usize);
    for v in &views.views {
        for (x, y) in foreground(v) {
            let n = v.normal_cam.get(x, y);
            let p = v.position_world.get(x, y);
            let p = crate::geom::Vec3::new(p[0] as f64, p[1] as f64, p[2] as f64);
            let t = v.camera.to_camera_frame(&v.camera.toward_camera(&p));
            let dot = n[0] as f64 * t.x + n[1] as f64 * t.y + n[2] as f64 * t.z;
            covered += 1;
            if dot < -1e-3 {
                wrong += 1;
            }
        }
    }
    if covered == 0 {
        return FilterVerdict::failed(FilterKind::WrongNormal, NO_FOREGROUND);
    }
    let frac = wrong as f64 / covered as f64;
    let passed = frac <= cfg.obtuse_fraction;
    let v = FilterVerdict::new(FilterKind::WrongNormal, passed, frac).with("pixels", covered);
    if passed {
        v
    } else {
        v.with("reason", "wrong normals")
    }
}

/// Words in an asset name or mesh type that mark scan/point-cloud data.
pub const POINT_CLOUD_WORDS: [&str; 5] = ["pointcloud", "point_cloud", "point cloud", "scan", "lidar"];

/// Transparent materials and point-cloud assets. Score 1 when passing.
pub fn metadata_filter(material: &MaterialInfo) -> FilterVerdict {
    if material.has_alpha_channel {
        return FilterVerdict::failed(FilterKind::Metadata, "transparent material");
    }
    let name = material.asset_name.to_lowercase();
    let kind = material.declared_mesh_type.to_lowercase();
    if POINT_CLOUD_WORDS.iter().any(|w| name.contains(w) || kind.contains(w)) {
        return FilterVerdict::failed(FilterKind::Metadata, "name/type");
    }
    FilterVerdict::new(FilterKind::Metadata, true, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec3;
    use crate::primitives;
    use crate::raster::Image;
    use crate::render::render_canonical_views;
    use rand::{Rng, SeedableRng};

    fn cfg() -> FilterConfig {
        FilterConfig::default()
    }

    fn paint(views: &mut ViewSet, f: impl Fn(usize, usize, usize) -> [f32; 3]) {
        for (vi, v) in views.views.iter_mut().enumerate() {
            v.albedo = Image::from_fn(v.width(), v.height(), |x, y| f(vi, x, y));
        }
    }

    #[test]
    fn hsv_conversion() {
        assert_eq!(hue_value([1.0, 0.0, 0.0]), (0.0, 1.0));
        let (h, v) = hue_value([0.0, 0.5, 0.0]);
        assert!((h - 1.0 / 3.0).abs() < 1e-12 && v == 0.5);
        assert!((hue_value([0.0, 0.0, 1.0]).0 - 2.0 / 3.0).abs() < 1e-12);
        assert!((hue_value([1.0, 0.0, 1.0]).0 - 5.0 / 6.0).abs() < 1e-7);
    }

    #[test]
    fn texture_quality_cases() {
        let mut views = render_canonical_views(&primitives::icosphere(0.8, 3), 64, None).unwrap();
        paint(&mut views, |_, _, _| [0.0; 3]);
        let v = texture_quality_filter(&views, &cfg());
        assert_eq!((v.passed, v.reason()), (false, Some("too dark")));
        paint(&mut views, |_, _, _| [0.9, 0.1, 0.1]);
        let v = texture_quality_filter(&views, &cfg());
        assert_eq!((v.passed, v.reason()), (false, Some("overly uniform")));
        assert!(v.score.abs() < 1e-12);
    }

    #[test]
    fn random_colors_match_simulated_entropy() {
        let mut views = render_canonical_views(&primitives::icosphere(0.8, 3), 64, None).unwrap();
        let count: usize = views.views.iter().map(|v| foreground(v).count()).sum();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let table: Vec<[f32; 3]> = (0..6 * 64 * 64).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect();
        paint(&mut views, |vi, x, y| table[(vi * 64 + y) * 64 + x]);
        let v = texture_quality_filter(&views, &cfg());
        assert!(v.passed);
        // Independent simulation with the same number of random colors.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let mut hist = std::collections::HashMap::new();
        for _ in 0..count {
            let (r, g, b): (f64, f64, f64) = (rng.gen(), rng.gen(), rng.gen());
            let max = r.max(g).max(b);
            let min = r.min(g).min(b);
            let h = if max == min {
                0.0
            } else if max == r {
                (((g - b) / (max - min)) % 6.0 + 6.0) % 6.0 / 6.0
            } else if max == g {
                ((b - r) / (max - min) + 2.0) / 6.0
            } else {
                ((r - g) / (max - min) + 4.0) / 6.0
            };
            let key = (((h * 32.0) as usize).min(31), ((max * 32.0) as usize).min(31));
            *hist.entry(key).or_insert(0usize) += 1;
        }
        let expected: f64 = hist
            .values()
            .map(|&c| {
                let p = c as f64 / count as f64;
                -p * p.log2()
            })
            .sum();
        assert!((v.score - expected).abs() < 0.2, "{} vs {expected}", v.score);
    }

    #[test]
    fn single_surface_cases() {
        let plane = render_canonical_views(&primitives::quad_plane(0.8), 64, None).unwrap();
        let v = single_surface_filter(&plane, &cfg());
        assert!(!v.passed && v.score >= 0.99, "{v:?}");
        let cube = render_canonical_views(&primitives::cube(0.5), 64, None).unwrap();
        let v = single_surface_filter(&cube, &cfg());
        assert!(v.passed && v.score < 0.01, "{v:?}");
        // Shallow box with its back face removed.
        let b = primitives::box_mesh(Vec3::new(-0.6, -0.6, -0.0025), Vec3::new(0.6, 0.6, 0.0025));
        let keep: Vec<[u32; 3]> = (0..b.face_count())
            .filter(|&f| b.face_normal(f).z > -0.5)
            .map(|f| b.faces[f])
            .collect();
        let open = crate::mesh::TriangleMesh::new(b.vertices.clone(), keep).unwrap();
        let v = single_surface_filter(&render_canonical_views(&open, 64, None).unwrap(), &cfg());
        assert!(!v.passed && v.score > 0.95, "{v:?}");
    }

    #[test]
    fn small_object_cases() {
        let big = render_canonical_views(&primitives::icosphere(0.999, 4), 128, None).unwrap();
        let v = small_object_filter(&big, &cfg());
        assert!(v.passed && (v.score - std::f64::consts::FRAC_PI_4).abs() < 0.02, "{}", v.score);
        let small = render_canonical_views(&primitives::icosphere(0.15, 4), 128, None).unwrap();
        let v = small_object_filter(&small, &cfg());
        assert!(!v.passed && (v.score - std::f64::consts::PI * 0.0225 / 4.0).abs() < 0.003, "{}", v.score);
        // Exactly 10% coverage passes.
        let mut front = big.canonical(ViewKey::Front).unwrap().clone();
        front.camera.width = 100;
        front.camera.height = 100;
        front.alpha = Image::from_fn(100, 100, |x, y| if y * 100 + x < 1000 { 1.0 } else { 0.0 });
        let exact = ViewSet { views: vec![front] };
        assert_eq!(exact.views[0].coverage(), 0.10);
        assert!(small_object_filter(&exact, &cfg()).passed);
    }

    #[test]
    fn wrong_normal_cases() {
        let sphere = primitives::icosphere(0.7, 3);
        let v = wrong_normal_filter(&render_canonical_views(&sphere, 64, None).unwrap(), &cfg());
        assert!(v.passed && v.score < 1e-9);
        let v = wrong_normal_filter(&render_canonical_views(&sphere.flipped(), 64, None).unwrap(), &cfg());
        assert!(!v.passed && v.score > 0.99);
        let some = primitives::flip_faces(&sphere, |f| f % 5 == 0);
        let v = wrong_normal_filter(&render_canonical_views(&some, 128, None).unwrap(), &cfg());
        assert!(!v.passed && (v.score - 0.2).abs() <= 0.05, "{}", v.score);
    }

    #[test]
    fn metadata_cases() {
        let m = MaterialInfo { has_alpha_channel: true, asset_name: "chair".into(), ..Default::default() };
        assert_eq!(metadata_filter(&m).reason(), Some("transparent material"));
        let m = MaterialInfo { asset_name: "kitchen_scan_017".into(), ..Default::default() };
        assert_eq!(metadata_filter(&m).reason(), Some("name/type"));
        let m = MaterialInfo { asset_name: "thing".into(), declared_mesh_type: "PointCloud".into(), ..Default::default() };
        assert!(!metadata_filter(&m).passed);
        let m = MaterialInfo { asset_name: "chair".into(), ..Default::default() };
        let v = metadata_filter(&m);
        assert!(v.passed && v.score == 1.0);
    }

    #[test]
    fn empty_views_fail_without_foreground() {
        let views = render_canonical_views(&crate::mesh::TriangleMesh::new(vec![], vec![]).unwrap(), 64, None).unwrap();
        for v in [
            texture_quality_filter(&views, &cfg()),
            single_surface_filter(&views, &cfg()),
            wrong_normal_filter(&views, &cfg()),
        ] {
            assert_eq!((v.passed, v.score, v.reason()), (false, 0.0, Some(NO_FOREGROUND)));
        }
    }
}
