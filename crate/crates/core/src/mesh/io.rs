use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::{MeshError, MeshResult, TriangleMesh};
use crate::geom::{Vec2, Vec3};

/// A mesh fresh from disk plus what the loader had to throw away or found
/// alongside it.
#[derive(Debug, Clone)]
pub struct LoadedMesh {
    pub mesh: TriangleMesh,
    pub dropped_degenerate: usize,
    /// Diffuse texture referenced by the OBJ material library, if any.
    pub texture_path: Option<PathBuf>,
}

pub fn load_mesh(path: &Path) -> MeshResult<LoadedMesh> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    let io_err = |source| MeshError::Io { path: path.to_path_buf(), source };
    let mut loaded = match ext.as_deref() {
        Some("obj") => {
            let text = fs::read_to_string(path).map_err(io_err)?;
            let mut loaded = load_obj_str(&text, path)?;
            if let Some(name) = loaded.1 {
                let mtl_path = path.with_file_name(name);
                if let Ok(mtl) = fs::read_to_string(&mtl_path) {
                    let (alpha, tex) = scan_mtl(&mtl);
                    loaded.0.mesh.material.has_alpha_channel |= alpha;
                    loaded.0.texture_path = tex.map(|t| mtl_path.with_file_name(t));
                }
            }
            loaded.0
        }
        Some("ply") => {
            let bytes = fs::read(path).map_err(io_err)?;
            load_ply_bytes(&bytes, path)?
        }
        _ => return Err(MeshError::UnsupportedFormat { path: path.to_path_buf() }),
    };
    if loaded.mesh.material.asset_name.is_empty() {
        loaded.mesh.material.asset_name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
    }
    Ok(loaded)
}

fn parse_err(path: &Path, location: String, message: impl Into<String>) -> MeshError {
    MeshError::Parse { path: path.to_path_buf(), location, message: message.into() }
}

/// Parses Wavefront OBJ text (`v`, `vn`, `vt`, `f`, `mtllib`). Returns the mesh
/// and the material library name, when one is referenced.
pub fn load_obj_str(text: &str, path: &Path) -> MeshResult<(LoadedMesh, Option<String>)> {
    let mut positions = Vec::new();
    let mut normals: Vec<Vec3> = Vec::new();
    let mut texcoords: Vec<Vec2> = Vec::new();
    let mut faces = Vec::new();
    // Per-face corner attribute indices, when present.
    let mut corner_uv: Vec<Option<[usize; 3]>> = Vec::new();
    let mut vertex_normal_ref: Vec<Option<usize>> = Vec::new();
    let mut mtllib = None;

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut it = line.split_whitespace();
        let Some(tag) = it.next() else { continue };
        let loc = || format!("line {}", lineno + 1);
        let floats = |it: std::str::SplitWhitespace<'_>| -> MeshResult<Vec<f64>> {
            it.map(|t| t.parse::<f64>().map_err(|_| parse_err(path, loc(), format!("bad number '{t}'"))))
                .collect()
        };
        match tag {
            "v" => {
                let f = floats(it)?;
                if f.len() < 3 {
                    return Err(parse_err(path, loc(), "vertex needs 3 coordinates"));
                }
                positions.push(Vec3::new(f[0], f[1], f[2]));
                vertex_normal_ref.push(None);
            }
            "vn" => {
                let f = floats(it)?;
                if f.len() < 3 {
                    return Err(parse_err(path, loc(), "normal needs 3 components"));
                }
                normals.push(Vec3::new(f[0], f[1], f[2]));
            }
            "vt" => {
                let f = floats(it)?;
                if f.len() < 2 {
                    return Err(parse_err(path, loc(), "texcoord needs 2 components"));
                }
                // OBJ has v pointing up; rows are stored top-down.
                texcoords.push(Vec2::new(f[0], 1.0 - f[1]));
            }
            "f" => {
                let mut corners = Vec::new();
                for tok in it {
                    let mut parts = tok.split('/');
                    let resolve = |s: Option<&str>, len: usize| -> MeshResult<Option<usize>> {
                        match s {
                            None | Some("") => Ok(None),
                            Some(s) => {
                                let i: i64 = s
                                    .parse()
                                    .map_err(|_| parse_err(path, loc(), format!("bad index '{s}'")))?;
                                let idx = if i > 0 { i - 1 } else { len as i64 + i };
                                if i == 0 || idx < 0 || idx as usize >= len {
                                    return Err(parse_err(path, loc(), format!("index {i} out of range")));
                                }
                                Ok(Some(idx as usize))
                            }
                        }
                    };
                    let v = resolve(parts.next(), positions.len())?
                        .ok_or_else(|| parse_err(path, loc(), "face corner without vertex"))?;
                    let t = resolve(parts.next(), texcoords.len())?;
                    let n = resolve(parts.next(), normals.len())?;
                    corners.push((v, t, n));
                }
                if corners.len() < 3 {
                    return Err(parse_err(path, loc(), "face needs at least 3 corners"));
                }
                for (v, _, n) in &corners {
                    if let Some(n) = n {
                        vertex_normal_ref[*v] = Some(*n);
                    }
                }
                for k in 1..corners.len() - 1 {
                    let tri = [corners[0], corners[k], corners[k + 1]];
                    faces.push([tri[0].0 as u32, tri[1].0 as u32, tri[2].0 as u32]);
                    corner_uv.push(match (tri[0].1, tri[1].1, tri[2].1) {
                        (Some(a), Some(b), Some(c)) => Some([a, b, c]),
                        _ => None,
                    });
                }
            }
            "mtllib" => mtllib = it.next().map(str::to_owned),
            _ => {}
        }
    }

    let mut mesh = TriangleMesh::new(positions, faces)?;
    if !mesh.faces.is_empty() && corner_uv.iter().all(Option::is_some) {
        let uvs = corner_uv
            .iter()
            .map(|c| {
                let c = c.unwrap();
                [texcoords[c[0]], texcoords[c[1]], texcoords[c[2]]]
            })
            .collect();
        mesh = mesh.with_face_uvs(uvs)?;
    }
    if !vertex_normal_ref.is_empty() && vertex_normal_ref.iter().all(Option::is_some) {
        let ns: Vec<Vec3> = vertex_normal_ref
            .iter()
            .map(|n| normals[n.unwrap()].try_normalize(0.0).unwrap_or_else(Vec3::z))
            .collect();
        mesh = mesh.with_vertex_normals(ns)?;
    }
    finish(mesh).map(|m| (m, mtllib))
}

fn finish(mut mesh: TriangleMesh) -> MeshResult<LoadedMesh> {
    let dropped = mesh.remove_degenerate_faces();
    if dropped > 0 {
        log::warn!("dropped {dropped} degenerate faces on load");
    }
    if mesh.faces.is_empty() {
        return Err(MeshError::EmptyMesh);
    }
    Ok(LoadedMesh { mesh, dropped_degenerate: dropped, texture_path: None })
}

/// Returns (material declares transparency, diffuse texture file name).
fn scan_mtl(text: &str) -> (bool, Option<String>) {
    let mut alpha = false;
    let mut tex = None;
    for line in text.lines() {
        let mut it = line.split_whitespace();
        match it.next() {
            Some("d") => alpha |= it.next().and_then(|v| v.parse::<f64>().ok()).is_some_and(|d| d < 1.0),
            Some("Tr") => alpha |= it.next().and_then(|v| v.parse::<f64>().ok()).is_some_and(|t| t > 0.0),
            Some("map_d") => alpha = true,
            Some("map_Kd") => tex = it.last().map(str::to_owned),
            _ => {}
        }
    }
    (alpha, tex)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar(String, Scalar),
    List(String, Scalar, Scalar),
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

/// Parses ASCII or binary little-endian PLY with vertex positions (and
/// optional normals) and a face list.
pub fn load_ply_bytes(bytes: &[u8], path: &Path) -> MeshResult<LoadedMesh> {
    // Header is ASCII, terminated by "end_header\n".
    let marker = b"end_header";
    let end = bytes
        .windows(marker.len())
        .position(|w| w == marker)
        .ok_or_else(|| parse_err(path, "byte offset 0".into(), "missing end_header"))?;
    let mut body_start = end + marker.len();
    while body_start < bytes.len() && bytes[body_start] != b'\n' {
        body_start += 1;
    }
    body_start += 1;
    let header = std::str::from_utf8(&bytes[..end])
        .map_err(|_| parse_err(path, "byte offset 0".into(), "header is not ASCII"))?;

    let mut binary = None;
    let mut elements: Vec<Element> = Vec::new();
    for (lineno, line) in header.lines().enumerate() {
        let loc = || format!("line {}", lineno + 1);
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["ply"] | [] => {}
            ["comment", ..] | ["obj_info", ..] => {}
            ["format", fmt, _] => {
                binary = Some(match *fmt {
                    "ascii" => false,
                    "binary_little_endian" => true,
                    other => return Err(parse_err(path, loc(), format!("unsupported PLY format {other}"))),
                })
            }
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| parse_err(path, loc(), "bad element count"))?,
                props: Vec::new(),
            }),
            ["property", "list", ct, it, name] => {
                let el = elements.last_mut().ok_or_else(|| parse_err(path, loc(), "property before element"))?;
                let ct = Scalar::parse(ct).ok_or_else(|| parse_err(path, loc(), "bad list count type"))?;
                let it = Scalar::parse(it).ok_or_else(|| parse_err(path, loc(), "bad list item type"))?;
                el.props.push(Property::List(name.to_string(), ct, it));
            }
            ["property", ty, name] => {
                let el = elements.last_mut().ok_or_else(|| parse_err(path, loc(), "property before element"))?;
                let ty = Scalar::parse(ty).ok_or_else(|| parse_err(path, loc(), format!("bad type {ty}")))?;
                el.props.push(Property::Scalar(name.to_string(), ty));
            }
            _ => return Err(parse_err(path, loc(), format!("unrecognized header line '{line}'"))),
        }
    }
    let binary = binary.ok_or_else(|| parse_err(path, "header".into(), "missing format line"))?;

    // Each element row decoded as a flat list of values; list properties are
    // prefixed by their count.
    let mut rows: Vec<Vec<Vec<f64>>> = Vec::with_capacity(elements.len());
    if binary {
        let mut off = body_start;
        for el in &elements {
            let mut out = Vec::with_capacity(el.count);
            for _ in 0..el.count {
                let mut row = Vec::new();
                for p in &el.props {
                    let take = |ty: Scalar, off: &mut usize| -> MeshResult<f64> {
                        let n = ty.size();
                        if *off + n > bytes.len() {
                            return Err(parse_err(path, format!("byte offset {}", *off), "unexpected end of file"));
                        }
                        let v = ty.read_le(&bytes[*off..*off + n]);
                        *off += n;
                        Ok(v)
                    };
                    match p {
                        Property::Scalar(_, ty) => row.push(take(*ty, &mut off)?),
                        Property::List(_, ct, it) => {
                            let n = take(*ct, &mut off)? as usize;
                            row.push(n as f64);
                            for _ in 0..n {
                                row.push(take(*it, &mut off)?);
                            }
                        }
                    }
                }
                out.push(row);
            }
            rows.push(out);
        }
    } else {
        let body = std::str::from_utf8(&bytes[body_start..])
            .map_err(|_| parse_err(path, format!("byte offset {body_start}"), "body is not ASCII"))?;
        let header_lines = header.lines().count() + 1;
        let mut lines = body.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        for el in &elements {
            let mut out = Vec::with_capacity(el.count);
            for _ in 0..el.count {
                let (i, line) = lines
                    .next()
                    .ok_or_else(|| parse_err(path, "end of file".into(), format!("missing {} rows", el.name)))?;
                let row = line
                    .split_whitespace()
                    .map(|t| t.parse::<f64>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|_| parse_err(path, format!("line {}", header_lines + i + 1), "bad number"))?;
                out.push(row);
            }
            rows.push(out);
        }
    }

    let vi = elements.iter().position(|e| e.name == "vertex");
    let fi = elements.iter().position(|e| e.name == "face");
    let vi = vi.ok_or_else(|| parse_err(path, "header".into(), "no vertex element"))?;
    let prop_index = |el: &Element, name: &str| {
        el.props.iter().position(|p| matches!(p, Property::Scalar(n, _) if n == name))
    };
    let vel = &elements[vi];
    // Vertex rows only hold scalars in the layouts we accept.
    if vel.props.iter().any(|p| matches!(p, Property::List(..))) {
        return Err(parse_err(path, "header".into(), "list properties on vertices are not supported"));
    }
    let (x, y, z) = match (prop_index(vel, "x"), prop_index(vel, "y"), prop_index(vel, "z")) {
        (Some(x), Some(y), Some(z)) => (x, y, z),
        _ => return Err(parse_err(path, "header".into(), "vertex element lacks x/y/z")),
    };
    let normal_idx = match (prop_index(vel, "nx"), prop_index(vel, "ny"), prop_index(vel, "nz")) {
        (Some(a), Some(b), Some(c)) => Some((a, b, c)),
        _ => None,
    };
    let row_ok = |r: &Vec<f64>, need: usize| r.len() >= need;
    let need = vel.props.len();
    let mut positions = Vec::with_capacity(vel.count);
    let mut normals = Vec::new();
    for r in &rows[vi] {
        if !row_ok(r, need) {
            return Err(parse_err(path, "vertex data".into(), "short vertex row"));
        }
        positions.push(Vec3::new(r[x], r[y], r[z]));
        if let Some((a, b, c)) = normal_idx {
            normals.push(Vec3::new(r[a], r[b], r[c]).try_normalize(0.0).unwrap_or_else(Vec3::z));
        }
    }

    let mut faces = Vec::new();
    if let Some(fi) = fi {
        let fel = &elements[fi];
        let list_pos = fel
            .props
            .iter()
            .position(|p| matches!(p, Property::List(n, ..) if n == "vertex_indices" || n == "vertex_index"))
            .ok_or_else(|| parse_err(path, "header".into(), "face element lacks vertex_indices"))?;
        for (k, r) in rows[fi].iter().enumerate() {
            // Skip scalar/list props ahead of the index list.
            let mut off = 0;
            for p in &fel.props[..list_pos] {
                off += match p {
                    Property::Scalar(..) => 1,
                    Property::List(..) => 1 + r[off] as usize,
                };
            }
            let n = r[off] as usize;
            if n < 3 || r.len() < off + 1 + n {
                return Err(parse_err(path, format!("face {k}"), "face needs at least 3 indices"));
            }
            let idx = &r[off + 1..off + 1 + n];
            for j in 1..n - 1 {
                faces.push([idx[0] as u32, idx[j] as u32, idx[j + 1] as u32]);
            }
        }
    }
    let mut mesh = TriangleMesh::new(positions, faces)?;
    if normal_idx.is_some() {
        mesh = mesh.with_vertex_normals(normals)?;
    }
    finish(mesh)
}

/// Writes OBJ text; `mtl` adds `mtllib`/`usemtl` lines for a material named
/// `material0`.
pub fn write_obj<W: Write>(mesh: &TriangleMesh, mtl: Option<&str>, out: &mut W) -> std::io::Result<()> {
    if let Some(lib) = mtl {
        writeln!(out, "mtllib {lib}")?;
    }
    for v in &mesh.vertices {
        writeln!(out, "v {} {} {}", v.x, v.y, v.z)?;
    }
    if let Some(ns) = &mesh.vertex_normals {
        for n in ns {
            writeln!(out, "vn {} {} {}", n.x, n.y, n.z)?;
        }
    }
    if let Some(uvs) = &mesh.face_uvs {
        for uv in uvs.iter().flatten() {
            writeln!(out, "vt {} {}", uv.x, 1.0 - uv.y)?;
        }
    }
    if mtl.is_some() {
        writeln!(out, "usemtl material0")?;
    }
    let has_n = mesh.vertex_normals.is_some();
    let has_t = mesh.face_uvs.is_some();
    for (fi, f) in mesh.faces.iter().enumerate() {
        write!(out, "f")?;
        for (k, &v) in f.iter().enumerate() {
            let v = v + 1;
            let t = fi * 3 + k + 1;
            match (has_t, has_n) {
                (false, false) => write!(out, " {v}")?,
                (true, false) => write!(out, " {v}/{t}")?,
                (false, true) => write!(out, " {v}//{v}")?,
                (true, true) => write!(out, " {v}/{t}/{v}")?,
            }
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn save_obj(mesh: &TriangleMesh, path: &Path, mtl: Option<&str>) -> MeshResult<()> {
    let io_err = |source| MeshError::Io { path: path.to_path_buf(), source };
    let file = fs::File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    write_obj(mesh, mtl, &mut w).map_err(io_err)?;
    w.flush().map_err(io_err)
}
