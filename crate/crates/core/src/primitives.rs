//! Procedural meshes used by the examples, the test suites and the synthetic
//! corpus generator. All closed shapes are outward-oriented.

use std::collections::HashMap;

use crate::geom::Vec3;
use crate::mesh::TriangleMesh;

/// Welds a triangle soup by exact position equality.
pub fn weld_triangles(tris: &[[Vec3; 3]]) -> TriangleMesh {
    let mut index: HashMap<[u64; 3], u32> = HashMap::new();
    let mut vertices = Vec::new();
    let mut faces = Vec::with_capacity(tris.len());
    for t in tris {
        let mut f = [0u32; 3];
        for (k, p) in t.iter().enumerate() {
            // -0.0 and 0.0 must land on the same key.
            let key = [
                (p.x + 0.0).to_bits(),
                (p.y + 0.0).to_bits(),
                (p.z + 0.0).to_bits(),
            ];
            f[k] = *index.entry(key).or_insert_with(|| {
                vertices.push(*p);
                (vertices.len() - 1) as u32
            });
        }
        faces.push(f);
    }
    TriangleMesh::new(vertices, faces).expect("welded indices are in range")
}

/// Pushes quad `a b c d` (counter-clockwise seen from the side `normal` points to).
fn push_quad(tris: &mut Vec<[Vec3; 3]>, q: [Vec3; 4], normal: Vec3) {
    let n = (q[1] - q[0]).cross(&(q[2] - q[0]));
    let q = if n.dot(&normal) >= 0.0 { q } else { [q[0], q[3], q[2], q[1]] };
    tris.push([q[0], q[1], q[2]]);
    tris.push([q[0], q[2], q[3]]);
}

fn box_triangles(min: Vec3, max: Vec3, inward: bool) -> Vec<[Vec3; 3]> {
    let mut tris = Vec::with_capacity(12);
    let s = if inward { -1.0 } else { 1.0 };
    let c = |x: f64, y: f64, z: f64| Vec3::new(x, y, z);
    let (a, b) = (min, max);
    push_quad(&mut tris, [c(a.x, a.y, a.z), c(a.x, b.y, a.z), c(a.x, b.y, b.z), c(a.x, a.y, b.z)], Vec3::x() * -s);
    push_quad(&mut tris, [c(b.x, a.y, a.z), c(b.x, b.y, a.z), c(b.x, b.y, b.z), c(b.x, a.y, b.z)], Vec3::x() * s);
    push_quad(&mut tris, [c(a.x, a.y, a.z), c(b.x, a.y, a.z), c(b.x, a.y, b.z), c(a.x, a.y, b.z)], Vec3::y() * -s);
    push_quad(&mut tris, [c(a.x, b.y, a.z), c(b.x, b.y, a.z), c(b.x, b.y, b.z), c(a.x, b.y, b.z)], Vec3::y() * s);
    push_quad(&mut tris, [c(a.x, a.y, a.z), c(b.x, a.y, a.z), c(b.x, b.y, a.z), c(a.x, b.y, a.z)], Vec3::z() * -s);
    push_quad(&mut tris, [c(a.x, a.y, b.z), c(b.x, a.y, b.z), c(b.x, b.y, b.z), c(a.x, b.y, b.z)], Vec3::z() * s);
    tris
}

/// Closed axis-aligned box, 8 vertices and 12 triangles.
pub fn box_mesh(min: Vec3, max: Vec3) -> TriangleMesh {
    weld_triangles(&box_triangles(min, max, false))
}

/// Axis-aligned cube of half-size `h` centered at the origin.
pub fn cube(h: f64) -> TriangleMesh {
    box_mesh(Vec3::repeat(-h), Vec3::repeat(h))
}

pub fn tetrahedron() -> TriangleMesh {
    let v = vec![
        Vec3::new(1.0, 1.0, 1.0),
        Vec3::new(1.0, -1.0, -1.0),
        Vec3::new(-1.0, 1.0, -1.0),
        Vec3::new(-1.0, -1.0, 1.0),
    ];
    let mut faces = vec![[0u32, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]];
    for f in &mut faces {
        let [a, b, c] = [v[f[0] as usize], v[f[1] as usize], v[f[2] as usize]];
        if (b - a).cross(&(c - a)).dot(&(a + b + c)) < 0.0 {
            f.swap(1, 2);
        }
    }
    TriangleMesh::new(v, faces).unwrap()
}

/// Subdivided icosahedron projected onto a sphere; `20 * 4^subdivisions` faces.
pub fn icosphere(radius: f64, subdivisions: u32) -> TriangleMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vec3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut mid: HashMap<(u32, u32), u32> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        let mut midpoint = |a: u32, b: u32, verts: &mut Vec<Vec3>| -> u32 {
            let key = (a.min(b), a.max(b));
            *mid.entry(key).or_insert_with(|| {
                verts.push(((verts[a as usize] + verts[b as usize]) * 0.5).normalize());
                (verts.len() - 1) as u32
            })
        };
        for &[a, b, c] in &faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    for f in &mut faces {
        let [a, b, c] = [verts[f[0] as usize], verts[f[1] as usize], verts[f[2] as usize]];
        if (b - a).cross(&(c - a)).dot(&(a + b + c)) < 0.0 {
            f.swap(1, 2);
        }
    }
    let verts = verts.into_iter().map(|v| v * radius).collect();
    TriangleMesh::new(verts, faces).unwrap()
}

/// Icosphere carrying exact unit vertex normals.
pub fn smooth_icosphere(radius: f64, subdivisions: u32) -> TriangleMesh {
    let m = icosphere(radius, subdivisions);
    let normals = m.vertices.iter().map(|v| v.normalize()).collect();
    m.with_vertex_normals(normals).unwrap()
}

/// Latitude/longitude sphere restricted to `y >= 0`: an open hemisphere whose
/// boundary ring lies exactly in the `y = 0` plane.
pub fn open_hemisphere(radius: f64, rings: usize, segments: usize) -> TriangleMesh {
    let mut tris = Vec::new();
    let point = |ring: usize, seg: usize| -> Vec3 {
        let phi = std::f64::consts::FRAC_PI_2 * ring as f64 / rings as f64;
        let theta = std::f64::consts::TAU * (seg % segments) as f64 / segments as f64;
        if ring == rings {
            return Vec3::new(0.0, radius, 0.0);
        }
        Vec3::new(radius * phi.cos() * theta.cos(), radius * phi.sin(), radius * phi.cos() * theta.sin())
    };
    for r in 0..rings {
        for s in 0..segments {
            let a = point(r, s);
            let b = point(r, s + 1);
            let c = point(r + 1, s + 1);
            let d = point(r + 1, s);
            let outward = (a + b + c + d) * 0.25;
            if r + 1 == rings {
                let n = (b - a).cross(&(c - a));
                tris.push(if n.dot(&outward) >= 0.0 { [a, b, c] } else { [a, c, b] });
            } else {
                push_quad(&mut tris, [a, b, c, d], outward);
            }
        }
    }
    weld_triangles(&tris)
}

/// Open tube along `y` (no caps): two boundary circles of `segments` edges each.
pub fn open_cylinder(radius: f64, height: f64, segments: usize) -> TriangleMesh {
    let mut tris = Vec::with_capacity(segments * 2);
    let ring = |s: usize, y: f64| {
        let th = std::f64::consts::TAU * (s % segments) as f64 / segments as f64;
        Vec3::new(radius * th.cos(), y, radius * th.sin())
    };
    let (y0, y1) = (-height / 2.0, height / 2.0);
    for s in 0..segments {
        let q = [ring(s, y0), ring(s + 1, y0), ring(s + 1, y1), ring(s, y1)];
        let mid = (q[0] + q[1]) * 0.5;
        push_quad(&mut tris, q, Vec3::new(mid.x, 0.0, mid.z));
    }
    weld_triangles(&tris)
}

/// Single square `[-h, h]²` in the `z = 0` plane facing `+z` (two triangles).
pub fn quad_plane(h: f64) -> TriangleMesh {
    let mut tris = Vec::new();
    push_quad(
        &mut tris,
        [Vec3::new(-h, -h, 0.0), Vec3::new(h, -h, 0.0), Vec3::new(h, h, 0.0), Vec3::new(-h, h, 0.0)],
        Vec3::z(),
    );
    weld_triangles(&tris)
}

/// Square frame in the plane `z = z0`: outer half-size `outer`, hole half-size `hole`.
fn frame_triangles(outer: f64, hole: f64, z0: f64, normal: Vec3) -> Vec<[Vec3; 3]> {
    let p = |x: f64, y: f64| Vec3::new(x, y, z0);
    let (a, h) = (outer, hole);
    let mut tris = Vec::new();
    push_quad(&mut tris, [p(-a, -a), p(a, -a), p(h, -h), p(-h, -h)], normal);
    push_quad(&mut tris, [p(a, -a), p(a, a), p(h, h), p(h, -h)], normal);
    push_quad(&mut tris, [p(a, a), p(-a, a), p(-h, h), p(h, h)], normal);
    push_quad(&mut tris, [p(-a, a), p(-a, -a), p(-h, -h), p(-h, h)], normal);
    tris
}

/// Single-sided square sheet with a square hole through its middle.
pub fn plane_with_hole(outer: f64, hole: f64) -> TriangleMesh {
    weld_triangles(&frame_triangles(outer, hole, 0.0, Vec3::z()))
}

/// Two outward spheres, one inside the other.
pub fn nested_shells(outer: f64, inner: f64, subdivisions: u32) -> TriangleMesh {
    let mut m = icosphere(outer, subdivisions);
    m.append(&icosphere(inner, subdivisions));
    m
}

/// Two boxes that share exactly one edge (along `z` at `x = y = 0`), making
/// that edge non-manifold.
pub fn edge_sharing_boxes(size: f64, depth: f64) -> TriangleMesh {
    let mut tris = box_triangles(Vec3::new(-size, -size, -depth), Vec3::new(0.0, 0.0, depth), false);
    tris.extend(box_triangles(Vec3::new(0.0, 0.0, -depth), Vec3::new(size, size, depth), false));
    weld_triangles(&tris)
}

/// Thick-walled hollow box with a square window tunnel through its `+z` wall
/// and a small closed block floating inside the cavity.
///
/// The wall material lies between the `outer` and `inner` half-sizes; the
/// cavity surfaces face into the cavity. The mesh is closed and manifold.
pub fn windowed_room(outer: f64, inner: f64, window: f64) -> TriangleMesh {
    let mut tris = Vec::new();
    // Outer shell without its +z face, then the +z frame.
    let outer_box = box_triangles(Vec3::repeat(-outer), Vec3::repeat(outer), false);
    let inner_box = box_triangles(Vec3::repeat(-inner), Vec3::repeat(inner), true);
    let not_top = |t: &&[Vec3; 3], z: f64| !t.iter().all(|p| p.z == z);
    tris.extend(outer_box.iter().filter(|t| not_top(t, outer)));
    tris.extend(frame_triangles(outer, window, outer, Vec3::z()));
    tris.extend(inner_box.iter().filter(|t| not_top(t, inner)));
    tris.extend(frame_triangles(inner, window, inner, -Vec3::z()));
    // Tunnel walls face the window axis.
    let w = window;
    let q = |x: f64, y: f64, z: f64| Vec3::new(x, y, z);
    push_quad(&mut tris, [q(-w, -w, inner), q(w, -w, inner), q(w, -w, outer), q(-w, -w, outer)], Vec3::y());
    push_quad(&mut tris, [q(w, -w, inner), q(w, w, inner), q(w, w, outer), q(w, -w, outer)], -Vec3::x());
    push_quad(&mut tris, [q(w, w, inner), q(-w, w, inner), q(-w, w, outer), q(w, w, outer)], -Vec3::y());
    push_quad(&mut tris, [q(-w, w, inner), q(-w, -w, inner), q(-w, -w, outer), q(-w, w, outer)], Vec3::x());
    // Furniture: a closed block off the window's line of sight.
    let s = inner * 0.4;
    tris.extend(box_triangles(
        Vec3::new(inner * 0.4, -inner * 0.4 - s, -s * 0.5),
        Vec3::new(inner * 0.4 + s, -inner * 0.4, s * 0.5),
        false,
    ));
    weld_triangles(&tris)
}

/// Two separate folded panels: one 90° crease of length `long` and one of
/// length `short`. Both panels are open surfaces.
pub fn folded_panels(long: f64, short: f64) -> TriangleMesh {
    let mut tris = Vec::new();
    // Crease along x at y = z = 0, panels in the xz (z <= 0 side) and xy planes.
    let fold = |tris: &mut Vec<[Vec3; 3]>, len: f64, origin: Vec3, width: f64| {
        let o = origin;
        push_quad(
            tris,
            [o, o + Vec3::new(len, 0.0, 0.0), o + Vec3::new(len, width, 0.0), o + Vec3::new(0.0, width, 0.0)],
            Vec3::z(),
        );
        push_quad(
            tris,
            [o, o + Vec3::new(0.0, 0.0, width), o + Vec3::new(len, 0.0, width), o + Vec3::new(len, 0.0, 0.0)],
            -Vec3::y(),
        );
    };
    fold(&mut tris, long, Vec3::new(-1.0, -0.9, -0.5), 0.5);
    fold(&mut tris, short, Vec3::new(-0.5, 0.1, -0.5), 0.5);
    weld_triangles(&tris)
}

/// Flips the winding of every face for which `pick(face)` is true.
pub fn flip_faces(mesh: &TriangleMesh, pick: impl Fn(usize) -> bool) -> TriangleMesh {
    let mut out = mesh.clone();
    for (i, f) in out.faces.iter_mut().enumerate() {
        if pick(i) {
            f.swap(1, 2);
        }
    }
    if let Some(uvs) = out.face_uvs.as_mut() {
        for (i, uv) in uvs.iter_mut().enumerate() {
            if pick(i) {
                uv.swap(1, 2);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::is_watertight;

    #[test]
    fn closed_primitives_are_watertight() {
        for m in [cube(0.5), icosphere(1.0, 2), tetrahedron(), windowed_room(0.7, 0.5, 0.15)] {
            let r = is_watertight(&m);
            assert!(r.watertight, "{r:?}");
        }
    }

    #[test]
    fn counts() {
        let s = icosphere(1.0, 2);
        assert_eq!(s.face_count(), 320);
        assert_eq!(s.vertex_count(), 162);
        let c = open_cylinder(0.5, 1.0, 32);
        assert_eq!(c.face_count(), 64);
        assert_eq!(is_watertight(&c).boundary_edges, 64);
    }

    #[test]
    fn closed_shapes_are_outward() {
        for m in [cube(0.5), icosphere(0.7, 1), tetrahedron()] {
            let mut vol = 0.0;
            for f in 0..m.face_count() {
                let [a, b, c] = m.triangle(f);
                vol += a.dot(&b.cross(&c)) / 6.0;
            }
            assert!(vol > 0.0);
        }
    }
}
