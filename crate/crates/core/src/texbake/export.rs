//! Textured mesh export: binary glTF with the PNG embedded, and OBJ + MTL +
//! PNG side by side.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde_json::json;

use super::{TexbakeError, Texture};
use crate::mesh::{area_weighted_normals, save_obj, TriangleMesh};
use crate::raster::encode_png_rgba;

const GLB_MAGIC: u32 = 0x4654_6C67;
const CHUNK_JSON: u32 = 0x4E4F_534A;
const CHUNK_BIN: u32 = 0x004E_4942;
const GL_FLOAT: u32 = 5126;
const GL_UNSIGNED_INT: u32 = 5125;
const GL_ARRAY_BUFFER: u32 = 34962;
const GL_ELEMENT_ARRAY_BUFFER: u32 = 34963;
const GL_LINEAR: u32 = 9729;
const GL_CLAMP_TO_EDGE: u32 = 33071;

fn io_err(path: &Path, e: impl ToString) -> TexbakeError {
    TexbakeError::Io { path: path.to_path_buf(), message: e.to_string() }
}

/// Vertices split wherever a mesh vertex carries different UVs on different faces.
struct Corners {
    positions: Vec<[f32; 3]>,
    normals: Vec<[f32; 3]>,
    uvs: Vec<[f32; 2]>,
    indices: Vec<u32>,
}

fn split_corners(mesh: &TriangleMesh) -> Corners {
    let uvs = mesh.face_uvs.as_ref().expect("caller checked UVs");
    let normals = mesh.vertex_normals.clone().unwrap_or_else(|| area_weighted_normals(mesh));
    let mut out = Corners { positions: Vec::new(), normals: Vec::new(), uvs: Vec::new(), indices: Vec::new() };
    let mut seen: HashMap<(u32, u64, u64), u32> = HashMap::new();
    for (fi, f) in mesh.faces.iter().enumerate() {
        for k in 0..3 {
            let uv = uvs[fi][k];
            let key = (f[k], uv.x.to_bits(), uv.y.to_bits());
            let idx = *seen.entry(key).or_insert_with(|| {
                let p = mesh.vertices[f[k] as usize];
                let n = normals[f[k] as usize];
                out.positions.push([p.x as f32, p.y as f32, p.z as f32]);
                out.normals.push([n.x as f32, n.y as f32, n.z as f32]);
                out.uvs.push([uv.x as f32, uv.y as f32]);
                (out.positions.len() - 1) as u32
            });
            out.indices.push(idx);
        }
    }
    out
}

fn pad4(buf: &mut Vec<u8>, byte: u8) {
    while buf.len() % 4 != 0 {
        buf.push(byte);
    }
}

/// A single-mesh, single-material GLB. glTF puts UV `(0, 0)` at the top-left
/// of the image, which is the convention used here too.
pub fn glb_bytes(mesh: &TriangleMesh, texture: &Texture) -> Result<Vec<u8>, TexbakeError> {
    if mesh.face_uvs.is_none() {
        return Err(TexbakeError::MissingUvs);
    }
    if mesh.faces.is_empty() {
        return Err(TexbakeError::EmptyMesh);
    }
    let c = split_corners(mesh);
    let png = encode_png_rgba(&texture.rgba);

    let mut bin: Vec<u8> = Vec::new();
    let mut views = Vec::new();
    let mut push_view = |bin: &mut Vec<u8>, bytes: &[u8], target: Option<u32>| {
        pad4(bin, 0);
        let offset = bin.len();
        bin.extend_from_slice(bytes);
        let mut v = json!({ "buffer": 0, "byteOffset": offset, "byteLength": bytes.len() });
        if let Some(t) = target {
            v["target"] = json!(t);
        }
        views.push(v);
        views.len() - 1
    };
    let flat = |xs: &[f32]| xs.iter().flat_map(|x| x.to_le_bytes()).collect::<Vec<u8>>();
    let pos_view = push_view(&mut bin, &flat(c.positions.as_flattened()), Some(GL_ARRAY_BUFFER));
    let nrm_view = push_view(&mut bin, &flat(c.normals.as_flattened()), Some(GL_ARRAY_BUFFER));
    let uv_view = push_view(&mut bin, &flat(c.uvs.as_flattened()), Some(GL_ARRAY_BUFFER));
    let idx_bytes: Vec<u8> = c.indices.iter().flat_map(|i| i.to_le_bytes()).collect();
    let idx_view = push_view(&mut bin, &idx_bytes, Some(GL_ELEMENT_ARRAY_BUFFER));
    let img_view = push_view(&mut bin, &png, None);
    pad4(&mut bin, 0);

    let mut lo = [f32::INFINITY; 3];
    let mut hi = [f32::NEG_INFINITY; 3];
    for p in &c.positions {
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let n = c.positions.len();
    let doc = json!({
        "asset": { "version": "2.0", "generator": "s13d" },
        "scene": 0,
        "scenes": [{ "nodes": [0] }],
        "nodes": [{ "mesh": 0 }],
        "meshes": [{ "primitives": [{
            "attributes": { "POSITION": 0, "NORMAL": 1, "TEXCOORD_0": 2 },
            "indices": 3,
            "material": 0
        }]}],
        "materials": [{
            "pbrMetallicRoughness": {
                "baseColorTexture": { "index": 0 },
                "metallicFactor": 0.0,
                "roughnessFactor": 1.0
            },
            "doubleSided": false
        }],
        "textures": [{ "source": 0, "sampler": 0 }],
        "samplers": [{
            "magFilter": GL_LINEAR, "minFilter": GL_LINEAR,
            "wrapS": GL_CLAMP_TO_EDGE, "wrapT": GL_CLAMP_TO_EDGE
        }],
        "images": [{ "bufferView": img_view, "mimeType": "image/png" }],
        "accessors": [
            { "bufferView": pos_view, "componentType": GL_FLOAT, "count": n, "type": "VEC3", "min": lo, "max": hi },
            { "bufferView": nrm_view, "componentType": GL_FLOAT, "count": n, "type": "VEC3" },
            { "bufferView": uv_view, "componentType": GL_FLOAT, "count": n, "type": "VEC2" },
            { "bufferView": idx_view, "componentType": GL_UNSIGNED_INT, "count": c.indices.len(), "type": "SCALAR" }
        ],
        "bufferViews": views,
        "buffers": [{ "byteLength": bin.len() }]
    });
    let mut json_bytes = serde_json::to_vec(&doc).expect("glTF document serializes");
    pad4(&mut json_bytes, b' ');

    let total = 12 + 8 + json_bytes.len() + 8 + bin.len();
    let mut out = Vec::with_capacity(total);
    for word in [GLB_MAGIC, 2, total as u32, json_bytes.len() as u32, CHUNK_JSON] {
        out.extend_from_slice(&word.to_le_bytes());
    }
    out.extend_from_slice(&json_bytes);
    out.extend_from_slice(&(bin.len() as u32).to_le_bytes());
    out.extend_from_slice(&CHUNK_BIN.to_le_bytes());
    out.extend_from_slice(&bin);
    Ok(out)
}

pub fn export_glb(mesh: &TriangleMesh, texture: &Texture, path: &Path) -> Result<(), TexbakeError> {
    let bytes = glb_bytes(mesh, texture)?;
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

/// Writes `path` plus `<stem>.mtl` and `<stem>.png` next to it.
pub fn export_obj(mesh: &TriangleMesh, texture: &Texture, path: &Path) -> Result<(), TexbakeError> {
    if mesh.face_uvs.is_none() {
        return Err(TexbakeError::MissingUvs);
    }
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("mesh");
    let dir = path.parent().unwrap_or(Path::new("."));
    let (mtl, png) = (format!("{stem}.mtl"), format!("{stem}.png"));
    save_obj(mesh, path, Some(&mtl)).map_err(|e| io_err(path, e))?;
    let mtl_path = dir.join(&mtl);
    let text = format!("newmtl material0\nKa 0 0 0\nKd 1 1 1\nKs 0 0 0\nillum 1\nmap_Kd {png}\n");
    fs::write(&mtl_path, text).map_err(|e| io_err(&mtl_path, e))?;
    let png_path = dir.join(&png);
    fs::write(&png_path, encode_png_rgba(&texture.rgba)).map_err(|e| io_err(&png_path, e))
}
