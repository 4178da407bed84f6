use std::collections::{HashMap, HashSet};

use serde::Serialize;

use super::TriangleMesh;
use crate::geom::Vec3;

/// Undirected edge → incident faces, each tagged with whether the face walks
/// the edge from the smaller to the larger index.
#[derive(Debug, Clone, Default)]
pub struct EdgeMap {
    edges: HashMap<(u32, u32), Vec<(u32, bool)>>,
}

impl EdgeMap {
    pub fn build(mesh: &TriangleMesh) -> Self {
        let mut edges: HashMap<(u32, u32), Vec<(u32, bool)>> =
            HashMap::with_capacity(mesh.faces.len() * 3 / 2 + 1);
        for (fi, f) in mesh.faces.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                edges.entry(key).or_default().push((fi as u32, a < b));
            }
        }
        EdgeMap { edges }
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn faces(&self, a: u32, b: u32) -> &[(u32, bool)] {
        self.edges
            .get(&(a.min(b), a.max(b)))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(u32, u32), &Vec<(u32, bool)>)> {
        self.edges.iter()
    }

    /// Edges sorted by key; use when iteration order must be reproducible.
    pub fn sorted(&self) -> Vec<((u32, u32), &[(u32, bool)])> {
        let mut v: Vec<_> = self.edges.iter().map(|(k, f)| (*k, f.as_slice())).collect();
        v.sort_unstable_by_key(|e| e.0);
        v
    }

    /// Vertices touching an edge that does not have exactly two incident faces.
    pub fn boundary_vertices(&self, vertex_count: usize) -> Vec<bool> {
        let mut out = vec![false; vertex_count];
        for ((a, b), faces) in &self.edges {
            if faces.len() != 2 {
                out[*a as usize] = true;
                out[*b as usize] = true;
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct WatertightReport {
    pub watertight: bool,
    pub boundary_edges: usize,
    pub nonmanifold_edges: usize,
    /// Edges with two faces that traverse them in the same direction.
    pub inconsistent_edges: usize,
}

pub fn is_watertight(mesh: &TriangleMesh) -> WatertightReport {
    let map = EdgeMap::build(mesh);
    let mut boundary = 0;
    let mut nonmanifold = 0;
    let mut inconsistent = 0;
    for (_, faces) in map.iter() {
        match faces.len() {
            1 => boundary += 1,
            2 => {
                if faces[0].1 == faces[1].1 {
                    inconsistent += 1;
                }
            }
            _ => nonmanifold += 1,
        }
    }
    WatertightReport {
        watertight: !mesh.faces.is_empty() && boundary == 0 && nonmanifold == 0 && inconsistent == 0,
        boundary_edges: boundary,
        nonmanifold_edges: nonmanifold,
        inconsistent_edges: inconsistent,
    }
}

/// A boundary loop that could not be closed by a simple fan.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedLoop {
    pub vertices: Vec<u32>,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct HoleFillOutcome {
    pub mesh: TriangleMesh,
    pub filled_loops: usize,
    pub added_faces: usize,
    pub skipped: Vec<SkippedLoop>,
}

/// Splits a closed vertex walk at repeated vertices into simple loops.
fn split_simple(walk: &[u32]) -> Vec<Vec<u32>> {
    let mut loops = Vec::new();
    let mut path: Vec<u32> = Vec::new();
    for &v in walk {
        if let Some(k) = path.iter().position(|&u| u == v) {
            loops.push(path.split_off(k));
        }
        path.push(v);
    }
    loops.push(path);
    loops
}

/// Closes every boundary loop with a fan around its centroid.
///
/// Where holes touch at a vertex, the walk continues along the boundary edge
/// reached by turning through the faces around that vertex, and a walk that
/// revisits a vertex is cut there into simple loops. Loops that cannot be
/// walked (non-manifold or inconsistently oriented edges) are left open and
/// listed in `skipped`. Face UVs are dropped when anything is added since the
/// fan has no texture mapping.
pub fn fill_holes(mesh: &TriangleMesh) -> HoleFillOutcome {
    let map = EdgeMap::build(mesh);
    let mut face_of: HashMap<(u32, u32), usize> = HashMap::with_capacity(mesh.faces.len() * 3);
    for (fi, f) in mesh.faces.iter().enumerate() {
        for k in 0..3 {
            face_of.insert((f[k], f[(k + 1) % 3]), fi);
        }
    }
    // Directed boundary half-edges as the existing faces walk them.
    let mut boundary: Vec<(u32, u32)> = Vec::new();
    for ((lo, hi), faces) in map.sorted() {
        if faces.len() == 1 {
            boundary.push(if faces[0].1 { (lo, hi) } else { (hi, lo) });
        }
    }
    let after = |f: usize, v: u32| {
        let t = mesh.faces[f];
        let k = t.iter().position(|&u| u == v).expect("vertex on face");
        t[(k + 1) % 3]
    };
    // Boundary successor of the half-edge p -> v: turn around v through
    // interior edges until a boundary edge leaves v.
    let successor = |p: u32, v: u32| -> Result<u32, &'static str> {
        let mut f = face_of[&(p, v)];
        for _ in 0..=mesh.faces.len() {
            let x = after(f, v);
            match map.faces(v, x).len() {
                1 => return Ok(x),
                2 => f = *face_of.get(&(x, v)).ok_or("inconsistently oriented edge at a hole")?,
                _ => return Err("non-manifold edge at a hole"),
            }
        }
        Err("boundary chain does not close")
    };

    let mut used: HashSet<(u32, u32)> = HashSet::new();
    let mut out = mesh.clone();
    let mut filled = 0;
    let mut added = 0;
    let mut skipped = Vec::new();
    for &start in &boundary {
        if used.contains(&start) {
            continue;
        }
        let mut walk = Vec::new();
        let mut h = start;
        let failure = loop {
            used.insert(h);
            walk.push(h.0);
            match successor(h.0, h.1) {
                Ok(n) => h = (h.1, n),
                Err(why) => break Some(why),
            }
            if h == start {
                break None;
            }
            if used.contains(&h) || walk.len() > boundary.len() {
                break Some("boundary chain does not close");
            }
        };
        if let Some(reason) = failure {
            skipped.push(SkippedLoop { vertices: walk, reason: reason.into() });
            continue;
        }
        for loop_vs in split_simple(&walk) {
            if loop_vs.len() < 3 {
                skipped.push(SkippedLoop { vertices: loop_vs, reason: "loop shorter than 3".into() });
                continue;
            }
            let centroid = loop_vs.iter().map(|&v| mesh.vertices[v as usize]).sum::<Vec3>()
                / loop_vs.len() as f64;
            let c = out.vertices.len() as u32;
            out.vertices.push(centroid);
            if let Some(ns) = out.vertex_normals.as_mut() {
                let avg: Vec3 = loop_vs.iter().map(|&v| mesh.vertex_normals.as_ref().unwrap()[v as usize]).sum();
                ns.push(avg.try_normalize(1e-12).unwrap_or_else(Vec3::z));
            }
            for k in 0..loop_vs.len() {
                let a = loop_vs[k];
                let b = loop_vs[(k + 1) % loop_vs.len()];
                out.faces.push([b, a, c]);
            }
            filled += 1;
            added += loop_vs.len();
        }
    }
    if added > 0 && out.face_uvs.is_some() {
        log::debug!("fill_holes dropped face UVs");
        out.face_uvs = None;
    }
    HoleFillOutcome { mesh: out, filled_loops: filled, added_faces: added, skipped }
}

/// Labels faces by connected component (faces sharing a vertex are connected).
/// Returns per-face labels in `0..count` and the count.
pub fn connected_components(mesh: &TriangleMesh) -> (Vec<u32>, usize) {
    let mut parent: Vec<u32> = (0..mesh.vertices.len() as u32).collect();
    fn find(parent: &mut [u32], mut x: u32) -> u32 {
        while parent[x as usize] != x {
            parent[x as usize] = parent[parent[x as usize] as usize];
            x = parent[x as usize];
        }
        x
    }
    for f in &mesh.faces {
        for k in 1..3 {
            let a = find(&mut parent, f[0]);
            let b = find(&mut parent, f[k]);
            if a != b {
                parent[a.max(b) as usize] = a.min(b);
            }
        }
    }
    let mut label: HashMap<u32, u32> = HashMap::new();
    let mut out = Vec::with_capacity(mesh.faces.len());
    for f in &mesh.faces {
        let root = find(&mut parent, f[0]);
        let n = label.len() as u32;
        out.push(*label.entry(root).or_insert(n));
    }
    let count = label.len();
    (out, count)
}
