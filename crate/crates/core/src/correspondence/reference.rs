//! Unwindowed chained correspondence written with plain scalar loops.
//!
//! This is the oracle the windowed tracer is checked against. It shares
//! nothing with the tracer beyond the volume and map types: it builds
//! each adjacent H·W × H·W similarity matrix in full, ranks rows with a
//! full sort, and walks chains directly over those matrices.

use crate::error::{CoveError, Result};
use crate::volume::FeatureVolume;

use super::map::{CorrespondenceMap, WindowSize};

/// Chained top-K correspondence with the whole adjacent frame as the
/// search region.
pub fn full_reference_trajectories(volume: &FeatureVolume, k: usize) -> Result<CorrespondenceMap> {
    if !volume.is_normalized() {
        return Err(CoveError::param("feature volume must be normalized"));
    }
    let s = volume.shape();
    let (n, h, w, d) = (s.frames, s.height, s.width, s.dim);
    let hw = h * w;
    if n < 2 {
        return Err(CoveError::param("tracing needs at least 2 frames"));
    }
    if k == 0 || k > hw {
        return Err(CoveError::param(format!("K = {k} outside 1..={hw}")));
    }
    let data = volume.data();

    // sims[p][a * hw + b] = <frame p token a, frame p+1 token b>
    let mut sims = Vec::with_capacity(n - 1);
    for p in 0..n - 1 {
        let mut m = vec![0.0f32; hw * hw];
        for a in 0..hw {
            let ao = (p * hw + a) * d;
            for b in 0..hw {
                let bo = ((p + 1) * hw + b) * d;
                let mut acc = 0.0f32;
                for c in 0..d {
                    acc += data[ao + c] * data[bo + c];
                }
                m[a * hw + b] = acc;
            }
        }
        sims.push(m);
    }

    let ranked = |score: &dyn Fn(usize) -> f32| -> Vec<(usize, f32)> {
        let mut idx: Vec<usize> = (0..hw).collect();
        idx.sort_by(|&x, &y| {
            let (sx, sy) = (score(x), score(y));
            if sx > sy {
                std::cmp::Ordering::Less
            } else if sx < sy {
                std::cmp::Ordering::Greater
            } else {
                x.cmp(&y)
            }
        });
        idx.truncate(k);
        idx.into_iter().map(|b| (b, score(b))).collect()
    };

    let mut coords = Vec::with_capacity(CorrespondenceMap::expected_len(n, h, w, k));
    let mut scores = Vec::with_capacity(coords.capacity());
    for i in 0..n {
        for t in 0..hw {
            let mut per_frame: Vec<Vec<(usize, f32)>> = vec![Vec::new(); n];
            let mut cur = t;
            for j in i + 1..n {
                let m = &sims[j - 1];
                let row = ranked(&|b| m[cur * hw + b]);
                cur = row[0].0;
                per_frame[j] = row;
            }
            let mut cur = t;
            for j in (0..i).rev() {
                // query lives in frame j + 1, candidates in frame j
                let m = &sims[j];
                let row = ranked(&|b| m[b * hw + cur]);
                cur = row[0].0;
                per_frame[j] = row;
            }
            for (j, row) in per_frame.into_iter().enumerate() {
                if j == i {
                    continue;
                }
                for (b, sc) in row {
                    coords.push([(b / w) as u16, (b % w) as u16]);
                    scores.push(sc);
                }
            }
        }
    }
    CorrespondenceMap::from_parts(n, h, w, k, WindowSize::Full, coords, Some(scores))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::{Shape, TokenCoord};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_frames_top1_is_exhaustive_argmax() {
        let s = Shape::new(2, 3, 3, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let data = (0..s.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v = FeatureVolume::new(s, data).unwrap().normalize().volume;
        let m = full_reference_trajectories(&v, 1).unwrap();
        for a in 0..9 {
            let q = v.token_at(a);
            let mut best = (f64::NEG_INFINITY, 0);
            for b in 0..9 {
                let sim: f64 = q
                    .iter()
                    .zip(v.token_at(9 + b))
                    .map(|(x, y)| *x as f64 * *y as f64)
                    .sum();
                if sim > best.0 {
                    best = (sim, b);
                }
            }
            let got = m.best(TokenCoord::new(0, a / 3, a % 3), 1).unwrap();
            assert_eq!((got.row, got.col), (best.1 / 3, best.1 % 3));
        }
    }

    #[test]
    fn static_video_is_identity() {
        let s1 = Shape::new(1, 3, 4, 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let frame: Vec<f32> = (0..s1.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let data = frame
            .iter()
            .copied()
            .cycle()
            .take(3 * frame.len())
            .collect();
        let v = FeatureVolume::new(Shape::new(3, 3, 4, 6).unwrap(), data)
            .unwrap()
            .normalize()
            .volume;
        let m = full_reference_trajectories(&v, 1).unwrap();
        for i in 0..3 {
            for t in 0..12 {
                for j in (0..3).filter(|&j| j != i) {
                    let got = m.best(TokenCoord::new(i, t / 4, t % 4), j).unwrap();
                    assert_eq!((got.row, got.col), (t / 4, t % 4));
                }
            }
        }
    }
}
