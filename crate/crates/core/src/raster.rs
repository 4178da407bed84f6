//! Plain 2D images: storage, filtered sampling, resizing and the PNG/PFM
//! codecs the pipeline writes.
//!
//! Pixel `(x, y)` covers `[x, x+1) × [y, y+1)` with row 0 at the top; its
//! center sits at `(x + 0.5, y + 0.5)`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Png {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("{path}: malformed PFM: {message}")]
    Pfm { path: PathBuf, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Image<T> {
    pub width: usize,
    pub height: usize,
    pub data: Vec<T>,
}

impl<T: Copy> Image<T> {
    pub fn new(width: usize, height: usize, fill: T) -> Self {
        Image { width, height, data: vec![fill; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Image { width, height, data }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: T) {
        self.data[y * self.width + x] = v;
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Image<U> {
        Image { width: self.width, height: self.height, data: self.data.iter().map(|v| f(*v)).collect() }
    }

    /// Mirror left-right.
    pub fn flipped_horizontally(&self) -> Self {
        Image::from_fn(self.width, self.height, |x, y| self.get(self.width - 1 - x, y))
    }
}

impl<const N: usize> Image<[f32; N]> {
    /// Bilinear lookup at continuous pixel coordinates, clamped at the border.
    pub fn sample_bilinear(&self, px: f64, py: f64) -> [f32; N] {
        let fx = (px - 0.5).clamp(0.0, (self.width - 1) as f64);
        let fy = (py - 0.5).clamp(0.0, (self.height - 1) as f64);
        let x0 = fx.floor() as usize;
        let y0 = fy.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let tx = (fx - x0 as f64) as f32;
        let ty = (fy - y0 as f64) as f32;
        let (a, b, c, d) = (self.get(x0, y0), self.get(x1, y0), self.get(x0, y1), self.get(x1, y1));
        let mut out = [0.0; N];
        for i in 0..N {
            let top = a[i] + (b[i] - a[i]) * tx;
            let bot = c[i] + (d[i] - c[i]) * tx;
            out[i] = top + (bot - top) * ty;
        }
        out
    }

    /// Sample at texture coordinates in `[0,1]²` (row 0 at `v = 0`).
    pub fn sample_uv(&self, u: f64, v: f64) -> [f32; N] {
        self.sample_bilinear(u * self.width as f64, v * self.height as f64)
    }

    /// Separable Catmull-Rom resize. Constant images stay exactly constant
    /// because the kernel weights sum to one and are applied in f64.
    pub fn resize_catmull_rom(&self, width: usize, height: usize) -> Self {
        let horiz = resample_axis(self.width, width);
        let vert = resample_axis(self.height, height);
        // Rows first.
        let mut tmp = vec![[0.0f64; N]; width * self.height];
        for y in 0..self.height {
            for (x, taps) in horiz.iter().enumerate() {
                let mut acc = [0.0f64; N];
                for &(sx, w) in taps {
                    let p = self.get(sx, y);
                    for i in 0..N {
                        acc[i] += w * p[i] as f64;
                    }
                }
                tmp[y * width + x] = acc;
            }
        }
        let mut out = Image::new(width, height, [0.0f32; N]);
        for (y, taps) in vert.iter().enumerate() {
            for x in 0..width {
                let mut acc = [0.0f64; N];
                for &(sy, w) in taps {
                    let p = tmp[sy * width + x];
                    for i in 0..N {
                        acc[i] += w * p[i];
                    }
                }
                out.set(x, y, acc.map(|v| v as f32));
            }
        }
        out
    }
}

fn catmull_rom(t: f64) -> f64 {
    let t = t.abs();
    if t < 1.0 {
        1.5 * t * t * t - 2.5 * t * t + 1.0
    } else if t < 2.0 {
        -0.5 * t * t * t + 2.5 * t * t - 4.0 * t + 2.0
    } else {
        0.0
    }
}

/// Per output index, the clamped source taps and their normalized weights.
fn resample_axis(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|o| {
            let c = (o as f64 + 0.5) * scale - 0.5;
            let base = c.floor() as i64;
            let mut taps: Vec<(usize, f64)> = Vec::with_capacity(4);
            for k in base - 1..=base + 2 {
                let w = catmull_rom(c - k as f64);
                if w == 0.0 {
                    continue;
                }
                let idx = k.clamp(0, src as i64 - 1) as usize;
                match taps.iter_mut().find(|t| t.0 == idx) {
                    Some(t) => t.1 += w,
                    None => taps.push((idx, w)),
                }
            }
            let sum: f64 = taps.iter().map(|t| t.1).sum();
            for t in &mut taps {
                t.1 /= sum;
            }
            taps
        })
        .collect()
}

fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn png_err(path: &Path) -> impl FnOnce(image::ImageError) -> RasterError + '_ {
    move |source| RasterError::Png { path: path.to_path_buf(), source }
}

/// 8-bit RGBA PNG from float channels in `[0,1]`.
pub fn save_png_rgba(img: &Image<[f32; 4]>, path: &Path) -> Result<(), RasterError> {
    let buf: Vec<u8> = img.data.iter().flat_map(|p| p.map(to_u8)).collect();
    image::save_buffer(path, &buf, img.width as u32, img.height as u32, image::ColorType::Rgba8)
        .map_err(png_err(path))
}

pub fn save_png_rgb(img: &Image<[f32; 3]>, path: &Path) -> Result<(), RasterError> {
    let buf: Vec<u8> = img.data.iter().flat_map(|p| p.map(to_u8)).collect();
    image::save_buffer(path, &buf, img.width as u32, img.height as u32, image::ColorType::Rgb8)
        .map_err(png_err(path))
}

pub fn save_png_gray(img: &Image<f32>, path: &Path) -> Result<(), RasterError> {
    let buf: Vec<u8> = img.data.iter().map(|v| to_u8(*v)).collect();
    image::save_buffer(path, &buf, img.width as u32, img.height as u32, image::ColorType::L8)
        .map_err(png_err(path))
}

/// Encodes RGBA as PNG bytes in memory.
pub fn encode_png_rgba(img: &Image<[f32; 4]>) -> Vec<u8> {
    let buf: Vec<u8> = img.data.iter().flat_map(|p| p.map(to_u8)).collect();
    let mut out = Vec::new();
    image::write_buffer_with_format(
        &mut std::io::Cursor::new(&mut out),
        &buf,
        img.width as u32,
        img.height as u32,
        image::ColorType::Rgba8,
        image::ImageFormat::Png,
    )
    .expect("PNG encoding into memory cannot fail for a well-sized buffer");
    out
}

pub fn load_png_rgba(path: &Path) -> Result<Image<[f32; 4]>, RasterError> {
    let img = image::open(path).map_err(png_err(path))?.to_rgba8();
    let (w, h) = img.dimensions();
    let data = img.pixels().map(|p| p.0.map(|c| c as f32 / 255.0)).collect();
    Ok(Image { width: w as usize, height: h as usize, data })
}

/// Writes a little-endian PFM ("Pf" for one channel, "PF" for three).
/// PFM stores rows bottom-up; the flip happens here.
pub fn save_pfm<const N: usize>(img: &Image<[f32; N]>, path: &Path) -> Result<(), RasterError> {
    assert!(N == 1 || N == 3, "PFM holds 1 or 3 channels");
    let io_err = |source| RasterError::Io { path: path.to_path_buf(), source };
    let mut out = Vec::with_capacity(img.data.len() * N * 4 + 32);
    let tag = if N == 1 { "Pf" } else { "PF" };
    write!(out, "{tag}\n{} {}\n-1.0\n", img.width, img.height).map_err(io_err)?;
    for y in (0..img.height).rev() {
        for x in 0..img.width {
            for c in img.get(x, y) {
                out.extend_from_slice(&c.to_le_bytes());
            }
        }
    }
    fs::write(path, out).map_err(io_err)
}

pub fn load_pfm<const N: usize>(path: &Path) -> Result<Image<[f32; N]>, RasterError> {
    let bytes = fs::read(path).map_err(|source| RasterError::Io { path: path.to_path_buf(), source })?;
    let bad = |message: &str| RasterError::Pfm { path: path.to_path_buf(), message: message.into() };
    // Header: three whitespace-separated lines.
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    let channels = match fields[0].as_str() {
        "Pf" => 1,
        "PF" => 3,
        _ => return Err(bad("unknown magic")),
    };
    if channels != N {
        return Err(bad("channel count mismatch"));
    }
    let w: usize = fields[1].parse().map_err(|_| bad("bad width"))?;
    let h: usize = fields[2].parse().map_err(|_| bad("bad height"))?;
    let scale: f32 = fields[3].parse().map_err(|_| bad("bad scale"))?;
    let little = scale < 0.0;
    if bytes.len() < pos + w * h * N * 4 {
        return Err(bad("truncated data"));
    }
    let mut img = Image::new(w, h, [0.0f32; N]);
    let mut off = pos;
    for y in (0..h).rev() {
        for x in 0..w {
            let mut px = [0.0f32; N];
            for c in px.iter_mut() {
                let b: [u8; 4] = bytes[off..off + 4].try_into().unwrap();
                *c = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
                off += 4;
            }
            img.set(x, y, px);
        }
    }
    Ok(img)
}
