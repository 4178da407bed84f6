//! Normal-bucket charts, planar projection and shelf packing.
//!
//! Faces are bucketed by the signed dominant axis of their normal, grouped
//! into edge-connected components per bucket, and each component is grown
//! breadth-first into charts whose projections never overlap. Charts are then
//! packed into rows at a global texels-per-unit scale, shrinking the scale
//! until everything fits.

use std::collections::{HashMap, VecDeque};

use rayon::prelude::*;
use serde::Serialize;

use super::TexbakeError;
use crate::geom::{Vec2, Vec3};
use crate::mesh::{EdgeMap, TriangleMesh};
use crate::render::NO_FACE;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChartRect {
    /// Texel rectangle including the gutter on every side.
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
    pub faces: usize,
}

#[derive(Debug, Clone)]
pub struct UvAtlas {
    /// Per-face UV corners in `[0, 1]²`, `v = 0` on the top texel row.
    pub uvs: Vec<[Vec2; 3]>,
    pub chart_of_face: Vec<u32>,
    pub charts: Vec<ChartRect>,
    pub resolution: usize,
    pub gutter: usize,
    pub texels_per_unit: f64,
}

impl UvAtlas {
    pub fn chart_count(&self) -> usize {
        self.charts.len()
    }

    /// Copy of `mesh` carrying this atlas as its face UVs.
    pub fn apply(&self, mesh: &TriangleMesh) -> TriangleMesh {
        let mut out = mesh.clone();
        out.face_uvs = Some(self.uvs.clone());
        out
    }

    /// Texel-to-surface map of `mesh` under this atlas.
    pub fn rasterize(&self, mesh: &TriangleMesh) -> SurfaceMap {
        rasterize_surface(mesh, &self.uvs, self.resolution, self.resolution)
    }
}

fn bucket(n: &Vec3) -> usize {
    let a = n.abs();
    let axis = if a.x >= a.y && a.x >= a.z {
        0
    } else if a.y >= a.z {
        1
    } else {
        2
    };
    axis * 2 + usize::from(n[axis] < 0.0)
}

/// Orthographic projection along the bucket axis, mirrored for negative
/// buckets so every chart keeps the faces' winding.
fn project(p: &Vec3, bucket: usize) -> Vec2 {
    let axis = bucket / 2;
    let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
    if bucket % 2 == 0 {
        Vec2::new(p[u], p[v])
    } else {
        Vec2::new(-p[u], p[v])
    }
}

fn perp(d: Vec2) -> Vec2 {
    Vec2::new(-d.y, d.x)
}

/// True when the two triangles share interior area (touching does not count).
fn triangles_overlap(a: &[Vec2; 3], b: &[Vec2; 3], eps: f64) -> bool {
    let area = |t: &[Vec2; 3]| {
        let (e1, e2) = (t[1] - t[0], t[2] - t[0]);
        (e1.x * e2.y - e1.y * e2.x).abs()
    };
    if area(a) <= eps * eps || area(b) <= eps * eps {
        return false;
    }
    for t in [a, b] {
        for k in 0..3 {
            let Some(axis) = perp(t[(k + 1) % 3] - t[k]).try_normalize(0.0) else {
                continue;
            };
            let range = |s: &[Vec2; 3]| {
                let d = s.map(|p| p.dot(&axis));
                (d[0].min(d[1]).min(d[2]), d[0].max(d[1]).max(d[2]))
            };
            let (lo_a, hi_a) = range(a);
            let (lo_b, hi_b) = range(b);
            if hi_a <= lo_b + eps || hi_b <= lo_a + eps {
                return false;
            }
        }
    }
    true
}

/// Uniform grid of already-placed triangles for overlap queries.
struct PlacedGrid {
    cell: f64,
    cells: HashMap<(i64, i64), Vec<u32>>,
}

impl PlacedGrid {
    fn cell_range(&self, t: &[Vec2; 3]) -> (i64, i64, i64, i64) {
        let lo = t[0].inf(&t[1]).inf(&t[2]);
        let hi = t[0].sup(&t[1]).sup(&t[2]);
        let f = |v: f64| (v / self.cell).floor() as i64;
        (f(lo.x), f(lo.y), f(hi.x), f(hi.y))
    }

    fn overlaps(&self, t: &[Vec2; 3], tris: &[[Vec2; 3]], eps: f64) -> bool {
        let (x0, y0, x1, y1) = self.cell_range(t);
        for cy in y0..=y1 {
            for cx in x0..=x1 {
                if let Some(list) = self.cells.get(&(cx, cy)) {
                    if list.iter().any(|&o| triangles_overlap(t, &tris[o as usize], eps)) {
                        return true;
                    }
                }
            }
        }
        false
    }

    fn insert(&mut self, face: u32, t: &[Vec2; 3]) {
        let (x0, y0, x1, y1) = self.cell_range(t);
        for cy in y0..=y1 {
            for cx in x0..=x1 {
                self.cells.entry((cx, cy)).or_default().push(face);
            }
        }
    }
}

struct Chart {
    faces: Vec<u32>,
    min: Vec2,
    size: Vec2,
}

fn build_charts(mesh: &TriangleMesh, proj: &[[Vec2; 3]], buckets: &[usize]) -> Vec<Chart> {
    let nf = mesh.faces.len();
    let edges = EdgeMap::build(mesh);
    let mut neighbors: Vec<Vec<u32>> = vec![Vec::new(); nf];
    for (_, faces) in edges.sorted() {
        for &(f, _) in faces {
            for &(g, _) in faces {
                if f != g && buckets[f as usize] == buckets[g as usize] {
                    neighbors[f as usize].push(g);
                }
            }
        }
    }
    for n in &mut neighbors {
        n.sort_unstable();
        n.dedup();
    }
    let diag = {
        let bb = mesh.aabb();
        (bb.max - bb.min).norm().max(1e-12)
    };
    let eps = diag * 1e-9;
    let mean_extent = {
        let total: f64 = proj
            .iter()
            .map(|t| {
                let d = t[0].sup(&t[1]).sup(&t[2]) - t[0].inf(&t[1]).inf(&t[2]);
                d.x.max(d.y)
            })
            .sum();
        (total / nf.max(1) as f64).max(diag * 1e-6)
    };

    let mut chart_of = vec![u32::MAX; nf];
    let mut charts = Vec::new();
    for seed in 0..nf {
        if chart_of[seed] != u32::MAX {
            continue;
        }
        let id = charts.len() as u32;
        let mut grid = PlacedGrid { cell: mean_extent * 2.0, cells: HashMap::new() };
        let mut faces = vec![seed as u32];
        chart_of[seed] = id;
        grid.insert(seed as u32, &proj[seed]);
        let mut queue = VecDeque::from([seed as u32]);
        while let Some(f) = queue.pop_front() {
            for &g in &neighbors[f as usize] {
                let gi = g as usize;
                if chart_of[gi] != u32::MAX || grid.overlaps(&proj[gi], proj, eps) {
                    continue;
                }
                chart_of[gi] = id;
                grid.insert(g, &proj[gi]);
                faces.push(g);
                queue.push_back(g);
            }
        }
        let mut lo = Vec2::repeat(f64::INFINITY);
        let mut hi = Vec2::repeat(f64::NEG_INFINITY);
        for &f in &faces {
            for p in &proj[f as usize] {
                lo = lo.inf(p);
                hi = hi.sup(p);
            }
        }
        charts.push(Chart { faces, min: lo, size: hi - lo });
    }
    charts
}

fn chart_texels(extent: f64, scale: f64) -> usize {
    (extent * scale).ceil() as usize + 1
}

/// Row packing at one scale; `None` when the charts do not fit.
fn shelf_pack(charts: &[Chart], order: &[usize], scale: f64, res: usize, gutter: usize) -> Option<Vec<(usize, usize)>> {
    let mut pos = vec![(0, 0); charts.len()];
    let (mut x, mut y, mut shelf) = (0usize, 0usize, 0usize);
    for &c in order {
        let w = chart_texels(charts[c].size.x, scale) + 2 * gutter;
        let h = chart_texels(charts[c].size.y, scale) + 2 * gutter;
        if w > res {
            return None;
        }
        if x + w > res {
            y += shelf;
            x = 0;
            shelf = 0;
        }
        if y + h > res {
            return None;
        }
        pos[c] = (x, y);
        x += w;
        shelf = shelf.max(h);
    }
    Some(pos)
}

/// Charts by dominant normal axis, split until injective, shelf-packed into a
/// `resolution`² atlas with `gutter` empty texels around every chart.
pub fn uv_unwrap(mesh: &TriangleMesh, resolution: usize, gutter: usize) -> Result<UvAtlas, TexbakeError> {
    if mesh.faces.is_empty() {
        return Err(TexbakeError::EmptyMesh);
    }
    if resolution < 8 {
        return Err(TexbakeError::PackingOverflow { resolution, charts: 0 });
    }
    let buckets: Vec<usize> = (0..mesh.faces.len()).map(|f| bucket(&mesh.face_normal(f))).collect();
    let proj: Vec<[Vec2; 3]> = (0..mesh.faces.len())
        .map(|f| mesh.triangle(f).map(|p| project(&p, buckets[f])))
        .collect();
    let charts = build_charts(mesh, &proj, &buckets);

    let mut order: Vec<usize> = (0..charts.len()).collect();
    order.sort_by(|&a, &b| charts[b].size.y.total_cmp(&charts[a].size.y).then(a.cmp(&b)));
    let area: f64 = charts.iter().map(|c| c.size.x.max(1e-12) * c.size.y.max(1e-12)).sum();
    let max_extent = charts.iter().map(|c| c.size.x.max(c.size.y)).fold(0.0, f64::max);
    let mut scale = (0.7 * (resolution * resolution) as f64 / area).sqrt();
    scale = scale.min((resolution - 2 * gutter.min(resolution / 2)) as f64 / max_extent.max(1e-12));
    let packed = loop {
        if let Some(p) = shelf_pack(&charts, &order, scale, resolution, gutter) {
            break p;
        }
        // Once every chart is down to a couple of texels, shrinking further
        // cannot help: the gutters alone no longer fit.
        if max_extent * scale < 1.0 {
            return Err(TexbakeError::PackingOverflow { resolution, charts: charts.len() });
        }
        scale *= 0.95;
    };

    let res = resolution as f64;
    let mut uvs = vec![[Vec2::zeros(); 3]; mesh.faces.len()];
    let mut chart_of_face = vec![0u32; mesh.faces.len()];
    let mut rects = Vec::with_capacity(charts.len());
    for (ci, chart) in charts.iter().enumerate() {
        let (x, y) = packed[ci];
        let origin = Vec2::new((x + gutter) as f64 + 0.5, (y + gutter) as f64 + 0.5);
        for &f in &chart.faces {
            let f = f as usize;
            chart_of_face[f] = ci as u32;
            // Projected y grows up; texel rows grow down.
            uvs[f] = proj[f].map(|p| {
                let local = Vec2::new(p.x - chart.min.x, chart.min.y + chart.size.y - p.y) * scale;
                (origin + local) / res
            });
        }
        rects.push(ChartRect {
            x,
            y,
            width: chart_texels(chart.size.x, scale) + 2 * gutter,
            height: chart_texels(chart.size.y, scale) + 2 * gutter,
            faces: chart.faces.len(),
        });
    }
    Ok(UvAtlas { uvs, chart_of_face, charts: rects, resolution, gutter, texels_per_unit: scale })
}

/// Texel → surface lookup produced by rasterizing face UV triangles.
#[derive(Debug, Clone)]
pub struct SurfaceMap {
    pub width: usize,
    pub height: usize,
    /// Owning face per texel, [`NO_FACE`] when uncovered.
    pub face: Vec<u32>,
    pub position: Vec<Vec3>,
    pub normal: Vec<Vec3>,
    /// Texels whose center fell inside more than one face.
    pub conflicts: usize,
}

impl SurfaceMap {
    pub fn covered(&self, i: usize) -> bool {
        self.face[i] != NO_FACE
    }

    pub fn covered_count(&self) -> usize {
        self.face.iter().filter(|&&f| f != NO_FACE).count()
    }
}

/// Edge function with the top-left tie rule so shared edges are owned once.
fn edge_inside(a: Vec2, b: Vec2, p: Vec2) -> Option<f64> {
    let orient = |a: Vec2, b: Vec2| (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
    // Evaluate from the lexicographically smaller endpoint so the two faces
    // sharing an edge get exactly opposite values.
    let e = if (a.x, a.y) <= (b.x, b.y) { orient(a, b) } else { -orient(b, a) };
    let top_left = (b.y - a.y) < 0.0 || ((b.y - a.y) == 0.0 && (b.x - a.x) > 0.0);
    if e > 0.0 || (e == 0.0 && top_left) {
        Some(e)
    } else {
        None
    }
}

/// Covering face of each texel center, with the interpolated surface point and
/// normal (vertex normals when present, else the face normal).
pub fn rasterize_surface(mesh: &TriangleMesh, uvs: &[[Vec2; 3]], width: usize, height: usize) -> SurfaceMap {
    let n = width * height;
    let mut claims = vec![0u8; n];
    let mut face = vec![NO_FACE; n];
    let mut bary = vec![[0.0f64; 3]; n];
    let scale = Vec2::new(width as f64, height as f64);
    for (fi, tri) in uvs.iter().enumerate() {
        let mut t = tri.map(|uv| uv.component_mul(&scale));
        let mut order = [0usize, 1, 2];
        let signed = (t[1] - t[0]).perp(&(t[2] - t[0]));
        if signed == 0.0 {
            continue;
        }
        if signed < 0.0 {
            t.swap(1, 2);
            order.swap(1, 2);
        }
        let area = signed.abs();
        let lo = t[0].inf(&t[1]).inf(&t[2]);
        let hi = t[0].sup(&t[1]).sup(&t[2]);
        let x0 = (lo.x - 0.5).ceil().max(0.0) as usize;
        let y0 = (lo.y - 0.5).ceil().max(0.0) as usize;
        let x1 = ((hi.x - 0.5).floor().min(width as f64 - 1.0)).max(-1.0);
        let y1 = ((hi.y - 0.5).floor().min(height as f64 - 1.0)).max(-1.0);
        if x1 < 0.0 || y1 < 0.0 {
            continue;
        }
        for y in y0..=y1 as usize {
            for x in x0..=x1 as usize {
                let p = Vec2::new(x as f64 + 0.5, y as f64 + 0.5);
                let (Some(e0), Some(e1), Some(e2)) =
                    (edge_inside(t[1], t[2], p), edge_inside(t[2], t[0], p), edge_inside(t[0], t[1], p))
                else {
                    continue;
                };
                let i = y * width + x;
                claims[i] = claims[i].saturating_add(1);
                let mut l = [0.0; 3];
                l[order[0]] = e0 / area;
                l[order[1]] = e1 / area;
                l[order[2]] = e2 / area;
                face[i] = fi as u32;
                bary[i] = l;
            }
        }
    }
    let conflicts = claims.iter().filter(|&&c| c > 1).count();
    let (position, normal): (Vec<Vec3>, Vec<Vec3>) = (0..n)
        .into_par_iter()
        .map(|i| {
            if face[i] == NO_FACE {
                return (Vec3::zeros(), Vec3::zeros());
            }
            let fi = face[i] as usize;
            let l = bary[i];
            let [a, b, c] = mesh.triangle(fi);
            let p = a * l[0] + b * l[1] + c * l[2];
            let fallback = mesh.face_normal(fi);
            let nrm = match &mesh.vertex_normals {
                Some(ns) => {
                    let f = mesh.faces[fi];
                    (ns[f[0] as usize] * l[0] + ns[f[1] as usize] * l[1] + ns[f[2] as usize] * l[2])
                        .try_normalize(1e-12)
                        .unwrap_or(fallback)
                }
                None => fallback,
            };
            (p, nrm)
        })
        .unzip();
    SurfaceMap { width, height, face, position, normal, conflicts }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primitives;

    /// Independent claim counter: point-in-triangle by barycentric sign with
    /// a tolerance, so shared edges may count twice but interiors never do.
    fn interior_claims(atlas: &UvAtlas) -> usize {
        let res = atlas.resolution;
        let mut count = vec![0u32; res * res];
        for tri in &atlas.uvs {
            let t = tri.map(|uv| uv * res as f64);
            let area = (t[1] - t[0]).perp(&(t[2] - t[0]));
            if area.abs() < 1e-12 {
                continue;
            }
            for y in 0..res {
                for x in 0..res {
                    let p = Vec2::new(x as f64 + 0.5, y as f64 + 0.5);
                    let l1 = (t[2] - t[1]).perp(&(p - t[1])) / area;
                    let l2 = (t[0] - t[2]).perp(&(p - t[2])) / area;
                    let l3 = 1.0 - l1 - l2;
                    if l1 > 1e-6 && l2 > 1e-6 && l3 > 1e-6 {
                        count[y * res + x] += 1;
                    }
                }
            }
        }
        count.iter().filter(|&&c| c > 1).count()
    }

    #[test]
    fn cube_has_six_square_charts() {
        let cube = primitives::cube(0.5);
        let atlas = uv_unwrap(&cube, 128, 2).unwrap();
        assert_eq!(atlas.chart_count(), 6);
        for r in &atlas.charts {
            assert_eq!(r.width, r.height);
            assert_eq!(r.faces, 2);
        }
        let map = atlas.rasterize(&cube);
        assert_eq!(map.conflicts, 0);
        for f in 0..12u32 {
            assert!(map.face.contains(&f), "face {f} has no texels");
        }
    }

    #[test]
    fn icosphere_is_injective() {
        let sphere = primitives::icosphere(0.9, 3);
        let atlas = uv_unwrap(&sphere, 256, 2).unwrap();
        assert!(atlas.chart_count() <= 64, "{}", atlas.chart_count());
        assert_eq!(atlas.rasterize(&sphere).conflicts, 0);
        assert_eq!(interior_claims(&atlas), 0);
    }

    #[test]
    fn folded_surface_is_split() {
        // Two stacked sheets facing +z connected by a thin strip: the lower sheet
        // projects onto the upper one, so it must land in another chart.
        let a = [Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)];
        let b = [Vec3::new(0.0, 0.0, -0.1), Vec3::new(1.0, 0.0, -0.1), Vec3::new(0.0, 1.0, -0.1)];
        let tris = vec![
            a,
            [a[0], b[0], a[1]],
            [a[1], b[0], b[1]],
            b,
        ];
        let mesh = primitives::weld_triangles(&tris);
        let atlas = uv_unwrap(&mesh, 64, 1).unwrap();
        assert_ne!(atlas.chart_of_face[0], atlas.chart_of_face[3]);
        assert_eq!(interior_claims(&atlas), 0);
    }

    #[test]
    fn single_triangle_one_chart() {
        let mesh = primitives::weld_triangles(&[[Vec3::zeros(), Vec3::x(), Vec3::y()]]);
        let atlas = uv_unwrap(&mesh, 32, 2).unwrap();
        assert_eq!(atlas.chart_count(), 1);
        let r = atlas.charts[0];
        for uv in atlas.uvs[0] {
            let (x, y) = (uv.x * 32.0, uv.y * 32.0);
            assert!(x >= (r.x + 2) as f64 && x <= (r.x + r.width - 2) as f64);
            assert!(y >= (r.y + 2) as f64 && y <= (r.y + r.height - 2) as f64);
        }
    }

    #[test]
    fn too_many_charts_overflow() {
        // 64 disjoint triangles with 8-texel gutters cannot fit in 32².
        let tris: Vec<[Vec3; 3]> = (0..64)
            .map(|i| {
                let o = Vec3::new(i as f64 * 2.0, 0.0, 0.0);
                [o, o + Vec3::x(), o + Vec3::y()]
            })
            .collect();
        let mesh = primitives::weld_triangles(&tris);
        assert!(matches!(uv_unwrap(&mesh, 32, 8), Err(TexbakeError::PackingOverflow { .. })));
    }

    #[test]
    fn overlap_predicate() {
        let t = [Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)];
        let shared_edge = [Vec2::new(1.0, 0.0), Vec2::new(1.0, 1.0), Vec2::new(0.0, 1.0)];
        let shifted = t.map(|p| p + Vec2::new(0.2, 0.2));
        assert!(!triangles_overlap(&t, &shared_edge, 1e-12));
        assert!(triangles_overlap(&t, &shifted, 1e-12));
    }
}
