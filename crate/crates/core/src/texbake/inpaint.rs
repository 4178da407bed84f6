use serde::Serialize;

use super::{TexbakeError, Texture};

/// Smoothing passes applied to filled texels after the fill converges.
const SMOOTHING_PASSES: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct InpaintStats {
    pub filled: usize,
    /// Fill-front sweeps until no invalid texel had a valid neighbor.
    pub iterations: usize,
}

fn neighbors(i: usize, w: usize, h: usize) -> impl Iterator<Item = usize> {
    let (x, y) = (i % w, i / w);
    [
        (x > 0).then(|| i - 1),
        (x + 1 < w).then(|| i + 1),
        (y > 0).then(|| i - w),
        (y + 1 < h).then(|| i + w),
    ]
    .into_iter()
    .flatten()
}

fn mean_of(values: impl Iterator<Item = [f32; 4]>) -> Option<[f32; 4]> {
    let mut acc = [0.0f64; 4];
    let mut n = 0usize;
    for c in values {
        for k in 0..4 {
            acc[k] += c[k] as f64;
        }
        n += 1;
    }
    (n > 0).then(|| acc.map(|a| (a / n as f64) as f32))
}

/// Grows valid texels into invalid ones: every sweep sets each invalid texel
/// that touches a valid one to the mean of its valid 4-neighbors, reading
/// only the previous sweep's state. Afterwards the filled texels get two
/// Jacobi smoothing passes that never touch originally valid texels.
pub fn inpaint_texture(texture: &Texture) -> Result<(Texture, InpaintStats), TexbakeError> {
    if texture.valid.iter().all(|v| !v) {
        return Err(TexbakeError::AllInvalid);
    }
    let (w, h) = (texture.width(), texture.height());
    let mut out = texture.clone();
    let mut queued = texture.valid.clone();
    let mut front: Vec<usize> = Vec::new();
    for i in 0..w * h {
        if !queued[i] && neighbors(i, w, h).any(|j| texture.valid[j]) {
            queued[i] = true;
            front.push(i);
        }
    }
    let mut filled = Vec::new();
    let mut iterations = 0;
    while !front.is_empty() {
        iterations += 1;
        let values: Vec<[f32; 4]> = front
            .iter()
            .map(|&i| {
                mean_of(neighbors(i, w, h).filter(|&j| out.valid[j]).map(|j| out.rgba.data[j]))
                    .expect("front texels touch a valid texel")
            })
            .collect();
        let mut next = Vec::new();
        for (&i, c) in front.iter().zip(values) {
            out.set(i, c);
            filled.push(i);
        }
        for &i in &front {
            for j in neighbors(i, w, h) {
                if !queued[j] {
                    queued[j] = true;
                    next.push(j);
                }
            }
        }
        front = next;
    }
    for _ in 0..SMOOTHING_PASSES {
        let values: Vec<[f32; 4]> = filled
            .iter()
            .map(|&i| mean_of(neighbors(i, w, h).map(|j| out.rgba.data[j])).unwrap_or(out.rgba.data[i]))
            .collect();
        for (&i, c) in filled.iter().zip(values) {
            out.rgba.data[i] = c;
        }
    }
    Ok((out, InpaintStats { filled: filled.len(), iterations }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Image;
    use proptest::prelude::*;

    fn with_hole(mut t: Texture, x0: usize, y0: usize, x1: usize, y1: usize) -> Texture {
        let w = t.width();
        for y in y0..y1 {
            for x in x0..x1 {
                t.valid[y * w + x] = false;
                t.rgba.data[y * w + x] = [9.0; 4];
            }
        }
        t
    }

    #[test]
    fn constant_fill_is_exact() {
        let c = [0.2, 0.4, 0.6, 1.0];
        let t = with_hole(Texture::filled(Image::new(32, 32, c)), 5, 7, 20, 25);
        let (out, stats) = inpaint_texture(&t).unwrap();
        assert!(out.valid.iter().all(|v| *v));
        assert!(out.rgba.data.iter().all(|p| *p == c));
        assert_eq!(stats.filled, 15 * 18);
        assert!(stats.iterations <= 64);
    }

    #[test]
    fn all_invalid_is_an_error() {
        assert!(matches!(inpaint_texture(&Texture::new(4, 4)), Err(TexbakeError::AllInvalid)));
    }

    #[test]
    fn single_valid_texel_floods_in_bounded_sweeps() {
        let mut t = Texture::new(40, 30);
        t.set(0, [1.0, 0.0, 0.0, 1.0]);
        let (out, stats) = inpaint_texture(&t).unwrap();
        assert!(out.valid.iter().all(|v| *v));
        assert!(stats.iterations <= 40 + 30);
    }

    #[test]
    fn holes_fill_locally() {
        let base = Texture::filled(Image::from_fn(64, 32, |x, y| {
            let v = ((x * 7 + y * 13) % 17) as f32 / 16.0;
            [v, 1.0 - v, 0.5, 1.0]
        }));
        let a = with_hole(with_hole(base.clone(), 4, 4, 14, 20), 40, 8, 48, 16);
        // Same left hole; the right hole grows to swallow its surroundings.
        let b = with_hole(with_hole(base, 4, 4, 14, 20), 30, 2, 60, 30);
        let (fa, _) = inpaint_texture(&a).unwrap();
        let (fb, _) = inpaint_texture(&b).unwrap();
        for y in 4..20 {
            for x in 4..14 {
                assert_eq!(fa.rgba.get(x, y), fb.rgba.get(x, y));
            }
        }
    }

    proptest! {
        #[test]
        fn filled_values_stay_within_bounds(
            vals in proptest::collection::vec(0.1f32..0.9, 16 * 16),
            hx in 1usize..8, hy in 1usize..8, hw in 1usize..7, hh in 1usize..7,
        ) {
            let t = with_hole(
                Texture::filled(Image { width: 16, height: 16, data: vals.iter().map(|v| [*v; 4]).collect() }),
                hx, hy, hx + hw, hy + hh,
            );
            // Bounds come from the valid texels touching the hole only.
            let rim: Vec<f32> = (0..256)
                .filter(|&i| t.valid[i] && neighbors(i, 16, 16).any(|j| !t.valid[j]))
                .map(|i| t.rgba.data[i][0])
                .collect();
            let lo = rim.iter().copied().fold(f32::MAX, f32::min);
            let hi = rim.iter().copied().fold(f32::MIN, f32::max);
            let (out, _) = inpaint_texture(&t).unwrap();
            for (i, c) in out.rgba.data.iter().enumerate() {
                if !t.valid[i] {
                    prop_assert!(c[0] >= lo - 1e-6 && c[0] <= hi + 1e-6);
                } else {
                    prop_assert_eq!(*c, t.rgba.data[i]);
                }
            }
        }
    }
}
