use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{chunked, SamplingError, SurfaceSampler};
use crate::field::{winding_screened, Bvh, WindingApprox};
use crate::geom::Vec3;
use crate::mesh::{is_watertight, TriangleMesh};

const MAX_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SdfParams {
    pub n_volume: usize,
    pub n_near: usize,
    pub n_surface: usize,
    /// Near-surface band in normalized-cube units.
    pub band: f64,
}

impl Default for SdfParams {
    fn default() -> Self {
        SdfParams { n_volume: 200_000, n_near: 200_000, n_surface: 200_000, band: 0.02 }
    }
}

/// Points with signed distances (negative inside) and the normal of the
/// nearest face.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SdfSamples {
    pub points: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub sdf: Vec<f64>,
}

impl SdfSamples {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn from_triples(v: Vec<(Vec3, Vec3, f64)>) -> Self {
        let mut out = SdfSamples::default();
        for (p, n, s) in v {
            out.points.push(p);
            out.normals.push(n);
            out.sdf.push(s);
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SdfSupervisionSet {
    pub volume: SdfSamples,
    pub near_surface: SdfSamples,
    pub surface: SdfSamples,
    pub band: f64,
}

/// Inside test `winding > 0.5` through `bvh` (built from `mesh`). On a
/// watertight mesh the winding number is the +x ray crossing count; rays that
/// graze an edge, and open meshes, use a bounded coarse estimate and fall
/// back to `approx` when that cannot decide.
pub fn winding_sign<'a>(mesh: &TriangleMesh, bvh: &'a Bvh, approx: WindingApprox) -> impl Fn(&Vec3) -> bool + Sync + 'a {
    let closed = is_watertight(mesh).watertight;
    move |p| {
        let count = if closed { bvh.crossing_count(p) } else { None };
        count.unwrap_or_else(|| winding_screened(bvh, p, approx, 0.5)) > 0.5
    }
}

/// Volume, near-surface and surface samples with untruncated signed distances.
///
/// Near-surface points are surface samples moved by an isotropic Gaussian
/// offset (σ = band/2) and rejected until their distance is within the band.
pub fn sdf_supervision_samples(
    mesh: &TriangleMesh,
    bvh: &Bvh,
    inside: &(dyn Fn(&Vec3) -> bool + Sync),
    params: &SdfParams,
    seed: u64,
) -> Result<SdfSupervisionSet, SamplingError> {
    if !(params.band > 0.0) {
        return Err(SamplingError::BandTooSmall { band: params.band, acceptance: 0.0 });
    }
    let sampler = SurfaceSampler::new(mesh)?;
    let signed = |p: Vec3| -> (Vec3, Vec3, f64) {
        let c = bvh.closest_point(&p, f64::INFINITY).expect("mesh has faces");
        let s = if inside(&p) { -c.distance } else { c.distance };
        (p, mesh.face_normal(c.face as usize), s)
    };

    let volume = chunked(params.n_volume, seed, 2, |rng, _| {
        signed(Vec3::new(rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)))
    });

    let gauss = Normal::new(0.0, params.band / 2.0).expect("positive sigma");
    // Up to 100 candidates per requested point.
    let near = chunked(params.n_near, seed, 3, |rng, _| {
        for attempt in 1..=MAX_ATTEMPTS {
            let (s, _, _) = sampler.draw(rng);
            let p = s + Vec3::new(gauss.sample(rng), gauss.sample(rng), gauss.sample(rng));
            let c = bvh.closest_point(&p, params.band).filter(|c| c.distance <= params.band);
            if let Some(c) = c {
                let d = if inside(&p) { -c.distance } else { c.distance };
                return (Some((p, mesh.face_normal(c.face as usize), d)), attempt);
            }
        }
        (None, MAX_ATTEMPTS)
    });
    if near.iter().any(|x| x.0.is_none()) {
        let ok = near.iter().filter(|x| x.0.is_some()).count();
        let tried: usize = near.iter().map(|x| x.1).sum();
        return Err(SamplingError::BandTooSmall { band: params.band, acceptance: ok as f64 / tried as f64 });
    }

    let surface = chunked(params.n_surface, seed, 4, |rng, _| {
        let (p, n, _) = sampler.draw(rng);
        (p, n, 0.0)
    });

    Ok(SdfSupervisionSet {
        volume: SdfSamples::from_triples(volume),
        near_surface: SdfSamples::from_triples(near.into_iter().filter_map(|x| x.0).collect()),
        surface: SdfSamples::from_triples(surface),
        band: params.band,
    })
}
