use std::fs;
use std::path::Path;

use super::SamplingError;
use crate::geom::Vec3;

/// Header: these 7 bytes, `u32` count, `u8` has_sdf. Then per point six
/// `f32` (position, normal) and an optional `f32` sdf, little-endian.
pub const POINTS_MAGIC: &[u8; 7] = b"S13DPTS";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointFile {
    pub positions: Vec<[f32; 3]>,
    pub normals: Vec<[f32; 3]>,
    pub sdf: Option<Vec<f32>>,
}

fn io_err(path: &Path, message: impl ToString) -> SamplingError {
    SamplingError::Io { path: path.to_path_buf(), message: message.to_string() }
}

pub fn write_points(path: &Path, positions: &[Vec3], normals: &[Vec3], sdf: Option<&[f64]>) -> Result<(), SamplingError> {
    if positions.len() != normals.len() || sdf.is_some_and(|s| s.len() != positions.len()) {
        return Err(io_err(path, "point attribute lengths differ"));
    }
    let stride = if sdf.is_some() { 28 } else { 24 };
    let mut out = Vec::with_capacity(12 + positions.len() * stride);
    out.extend_from_slice(POINTS_MAGIC);
    out.extend_from_slice(&(positions.len() as u32).to_le_bytes());
    out.push(sdf.is_some() as u8);
    for (i, (p, n)) in positions.iter().zip(normals).enumerate() {
        for v in p.iter().chain(n.iter()) {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        if let Some(s) = sdf {
            out.extend_from_slice(&(s[i] as f32).to_le_bytes());
        }
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

pub fn read_points(path: &Path) -> Result<PointFile, SamplingError> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    if bytes.len() < 12 || &bytes[..7] != POINTS_MAGIC {
        return Err(io_err(path, "not a point file"));
    }
    let count = u32::from_le_bytes(bytes[7..11].try_into().unwrap()) as usize;
    let has_sdf = match bytes[11] {
        0 => false,
        1 => true,
        b => return Err(io_err(path, format!("bad has_sdf flag {b}"))),
    };
    let stride = if has_sdf { 28 } else { 24 };
    if bytes.len() != 12 + count * stride {
        return Err(io_err(path, "size does not match header"));
    }
    let f = |o: usize| f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let mut out = PointFile { sdf: has_sdf.then(Vec::new), ..Default::default() };
    for i in 0..count {
        let o = 12 + i * stride;
        out.positions.push([f(o), f(o + 4), f(o + 8)]);
        out.normals.push([f(o + 12), f(o + 16), f(o + 20)]);
        if let Some(s) = out.sdf.as_mut() {
            s.push(f(o + 24));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.pts");
        let pos = vec![Vec3::new(0.1, 0.2, 0.3), Vec3::new(-1.0, 0.5, 0.25)];
        let nrm = vec![Vec3::x(), Vec3::z()];
        write_points(&p, &pos, &nrm, Some(&[0.5, -0.25])).unwrap();
        assert_eq!(fs::metadata(&p).unwrap().len(), 12 + 2 * 28);
        let back = read_points(&p).unwrap();
        assert_eq!(back.positions[1], [-1.0, 0.5, 0.25]);
        assert_eq!(back.normals[0], [1.0, 0.0, 0.0]);
        assert_eq!(back.sdf, Some(vec![0.5, -0.25]));
        write_points(&p, &pos, &nrm, None).unwrap();
        assert_eq!(read_points(&p).unwrap().sdf, None);
        fs::write(&p, b"S13DPTS\x05\0\0\0\x01").unwrap();
        assert!(read_points(&p).is_err());
    }
}
