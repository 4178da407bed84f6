use rayon::prelude::*;

use super::SamplingError;
use crate::geom::Vec3;

const PAR_THRESHOLD: usize = 1 << 15;

/// Greedy farthest point sampling from `start`; ties go to the lowest index.
pub fn fps(points: &[Vec3], k: usize, start: usize) -> Result<Vec<usize>, SamplingError> {
    let n = points.len();
    if k > n {
        return Err(SamplingError::KTooLarge { k, n });
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    if start >= n {
        return Err(SamplingError::StartOutOfRange { start, n });
    }
    let mut min_d2 = vec![f64::INFINITY; n];
    let mut out = Vec::with_capacity(k);
    let mut current = start;
    for _ in 0..k {
        out.push(current);
        let c = points[current];
        min_d2[current] = -1.0;
        // (distance, index) of the best candidate; lower index wins equal distances.
        let pick = |a: (f64, usize), b: (f64, usize)| if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a };
        let best = if n >= PAR_THRESHOLD {
            min_d2
                .par_chunks_mut(4096)
                .enumerate()
                .map(|(ci, chunk)| update(chunk, &points[ci * 4096..], &c, ci * 4096))
                .reduce(|| (f64::NEG_INFINITY, usize::MAX), pick)
        } else {
            update(&mut min_d2, points, &c, 0)
        };
        current = best.1;
    }
    Ok(out)
}

fn update(min_d2: &mut [f64], points: &[Vec3], c: &Vec3, offset: usize) -> (f64, usize) {
    let mut best = (f64::NEG_INFINITY, usize::MAX);
    for (i, d) in min_d2.iter_mut().enumerate() {
        if *d < 0.0 {
            continue;
        }
        let e = (points[i] - c).norm_squared();
        if e < *d {
            *d = e;
        }
        if *d > best.0 {
            best = (*d, offset + i);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(xs: &[f64]) -> Vec<Vec3> {
        xs.iter().map(|x| Vec3::new(*x, 0.0, 0.0)).collect()
    }

    #[test]
    fn picks_farthest() {
        assert_eq!(fps(&line(&[0.0, 1.0, 2.0, 10.0]), 2, 0).unwrap(), vec![0, 3]);
        assert_eq!(fps(&line(&[0.0, 1.0, 2.0, 10.0]), 4, 0).unwrap(), vec![0, 3, 2, 1]);
    }

    #[test]
    fn ties_take_lowest_index() {
        assert_eq!(fps(&line(&[0.0, -1.0, 1.0]), 2, 0).unwrap(), vec![0, 1]);
    }

    #[test]
    fn errors() {
        assert!(matches!(fps(&line(&[0.0]), 2, 0), Err(SamplingError::KTooLarge { k: 2, n: 1 })));
        assert!(matches!(fps(&line(&[0.0]), 1, 3), Err(SamplingError::StartOutOfRange { .. })));
        assert!(fps(&[], 0, 0).unwrap().is_empty());
    }

    #[test]
    fn parallel_path_matches_serial() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<Vec3> = (0..PAR_THRESHOLD + 123).map(|_| Vec3::new(rng.gen(), rng.gen(), rng.gen())).collect();
        let fast = fps(&pts, 20, 7).unwrap();
        let mut min_d2 = vec![f64::INFINITY; pts.len()];
        let mut cur = 7;
        let mut slow = Vec::new();
        for _ in 0..20 {
            slow.push(cur);
            min_d2[cur] = -1.0;
            cur = update(&mut min_d2, &pts, &pts[cur].clone(), 0).1;
        }
        assert_eq!(fast, slow);
    }
}
