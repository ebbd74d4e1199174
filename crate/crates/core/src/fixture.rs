//! Synthetic volumes with known correspondence.
//!
//! A moving-patch fixture places a rigid block of distinct unit tokens on a
//! static background and translates it by a fixed velocity each frame.
//! Background tokens are projected off the span of the patch tokens, so the
//! translated copy of a patch token is always its unique best match.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{CoveError, Result};
use crate::volume::{FeatureVolume, Shape, TokenCoord};

/// Largest |cosine| allowed between two patch tokens.
const PATCH_COHERENCE_LIMIT: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureParams {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub dim: usize,
    pub patch_height: usize,
    pub patch_width: usize,
    /// Top-left corner of the patch in frame 0.
    pub patch_row: usize,
    pub patch_col: usize,
    /// Per-frame displacement (rows, cols).
    pub velocity: (isize, isize),
    pub seed: u64,
}

impl FixtureParams {
    fn validate(&self) -> Result<Shape> {
        let shape = Shape::new(self.frames, self.height, self.width, self.dim)?;
        if self.patch_height == 0 || self.patch_width == 0 {
            return Err(CoveError::param("patch must be at least 1x1"));
        }
        let patch_tokens = self.patch_height * self.patch_width;
        if patch_tokens >= self.dim {
            return Err(CoveError::param(format!(
                "{patch_tokens} patch tokens need dim > {patch_tokens} to leave room for an orthogonal background, got {}",
                self.dim
            )));
        }
        let last = self.frames as isize - 1;
        for (axis, start, size, extent, v) in [
            (
                "row",
                self.patch_row,
                self.patch_height,
                self.height,
                self.velocity.0,
            ),
            (
                "col",
                self.patch_col,
                self.patch_width,
                self.width,
                self.velocity.1,
            ),
        ] {
            for t in [0, last] {
                let pos = start as isize + v * t;
                if pos < 0 || pos + size as isize > extent as isize {
                    return Err(CoveError::param(format!(
                        "patch {axis} reaches {pos}..{} at frame {t}, outside 0..{extent}",
                        pos + size as isize - 1
                    )));
                }
            }
        }
        Ok(shape)
    }
}

/// Where one patch token sits in every frame.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchTrack {
    /// Position in frame 0.
    pub origin: (usize, usize),
    /// Position in each frame, frame 0 included.
    pub positions: Vec<(usize, usize)>,
}

#[derive(Debug, Clone)]
pub struct MotionFixture {
    pub volume: FeatureVolume,
    pub params: FixtureParams,
    pub ground_truth: Vec<PatchTrack>,
}

impl MotionFixture {
    /// Per-frame displacement magnitude along the larger axis.
    pub fn displacement(&self) -> usize {
        self.params
            .velocity
            .0
            .unsigned_abs()
            .max(self.params.velocity.1.unsigned_abs())
    }

    /// Track of the patch token occupying `coord`, if any.
    pub fn track_at(&self, coord: TokenCoord) -> Option<&PatchTrack> {
        self.ground_truth
            .iter()
            .find(|t| t.positions.get(coord.frame) == Some(&(coord.row, coord.col)))
    }
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

fn unit(mut v: Vec<f64>) -> Option<Vec<f64>> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n < 1e-6 {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= n);
    Some(v)
}

fn dot64(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Builds a moving-patch fixture. Deterministic in `params.seed`.
pub fn synthesize_moving_patch(params: FixtureParams) -> Result<MotionFixture> {
    let shape = params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let d = params.dim;
    let patch_tokens = params.patch_height * params.patch_width;

    let mut patch: Vec<Vec<f64>> = Vec::with_capacity(patch_tokens);
    let mut attempts = 0;
    while patch.len() < patch_tokens {
        attempts += 1;
        if attempts > 10_000 {
            return Err(CoveError::param(
                "could not draw mutually distinct patch tokens; increase dim",
            ));
        }
        let Some(candidate) = unit(gaussian(&mut rng, d)) else {
            continue;
        };
        if patch
            .iter()
            .all(|p| dot64(p, &candidate).abs() < PATCH_COHERENCE_LIMIT)
        {
            patch.push(candidate);
        }
    }

    // Orthonormal basis of the patch span.
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(patch_tokens);
    for p in &patch {
        let mut v = p.clone();
        for q in &basis {
            let c = dot64(&v, q);
            v.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
        }
        if let Some(v) = unit(v) {
            basis.push(v);
        }
    }

    let hw = shape.frame_tokens();
    let mut background: Vec<Vec<f64>> = Vec::with_capacity(hw);
    while background.len() < hw {
        let mut v = gaussian(&mut rng, d);
        let coeffs: Vec<f64> = basis.iter().map(|q| dot64(&v, q)).collect();
        for (c, q) in coeffs.iter().zip(&basis) {
            v.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
        }
        if let Some(v) = unit(v) {
            background.push(v);
        }
    }

    let mut data = Vec::with_capacity(shape.len());
    let mut ground_truth: Vec<PatchTrack> = (0..patch_tokens)
        .map(|p| {
            let origin = (
                params.patch_row + p / params.patch_width,
                params.patch_col + p % params.patch_width,
            );
            PatchTrack {
                origin,
                positions: Vec::with_capacity(params.frames),
            }
        })
        .collect();

    for t in 0..params.frames {
        let top = (params.patch_row as isize + params.velocity.0 * t as isize) as usize;
        let left = (params.patch_col as isize + params.velocity.1 * t as isize) as usize;
        for (p, track) in ground_truth.iter_mut().enumerate() {
            track
                .positions
                .push((top + p / params.patch_width, left + p % params.patch_width));
        }
        for r in 0..params.height {
            for c in 0..params.width {
                let in_patch = r >= top
                    && r < top + params.patch_height
                    && c >= left
                    && c < left + params.patch_width;
                let token = if in_patch {
                    &patch[(r - top) * params.patch_width + (c - left)]
                } else {
                    &background[r * params.width + c]
                };
                data.extend(token.iter().map(|&x| x as f32));
            }
        }
    }

    let volume = FeatureVolume::new(shape, data)?.assume_normalized()?;
    Ok(MotionFixture {
        volume,
        params,
        ground_truth,
    })
}

/// I.i.d. uniform tokens, normalized. Deterministic in `seed`.
pub fn random_features(shape: Shape, seed: u64) -> Result<FeatureVolume> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..shape.len())
        .map(|_| rng.gen_range(-1.0f32..1.0))
        .collect();
    Ok(FeatureVolume::new(shape, data)?.normalize().volume)
}

/// `values` plus i.i.d. N(0, sigma²) noise. Deterministic in `seed`.
pub fn add_gaussian_noise(values: &[f32], sigma: f32, seed: u64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    values
        .iter()
        .map(|&v| {
            let z: f32 = rng.sample(StandardNormal);
            v + sigma * z
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correspondence::dot;

    fn params(velocity: (isize, isize)) -> FixtureParams {
        FixtureParams {
            frames: 4,
            height: 8,
            width: 8,
            dim: 16,
            patch_height: 2,
            patch_width: 2,
            patch_row: 2,
            patch_col: 2,
            velocity,
            seed: 7,
        }
    }

    #[test]
    fn ground_truth_follows_velocity() {
        let f = synthesize_moving_patch(params((1, 0))).unwrap();
        let track = f.ground_truth.iter().find(|t| t.origin == (2, 2)).unwrap();
        assert_eq!(track.positions, vec![(2, 2), (3, 2), (4, 2), (5, 2)]);
        assert_eq!(f.displacement(), 1);
    }

    #[test]
    fn static_fixture_keeps_positions() {
        let f = synthesize_moving_patch(params((0, 0))).unwrap();
        for track in &f.ground_truth {
            assert!(track.positions.iter().all(|&p| p == track.origin));
        }
    }

    #[test]
    fn patch_leaving_frame_is_rejected() {
        let err = synthesize_moving_patch(params((3, 0))).unwrap_err();
        assert!(err.to_string().contains("11"), "{err}");
        assert!(synthesize_moving_patch(params((0, -1))).is_err());
        let mut p = params((0, 0));
        p.dim = 4;
        assert!(synthesize_moving_patch(p).is_err());
    }

    #[test]
    fn patch_tokens_match_and_background_does_not() {
        let f = synthesize_moving_patch(params((1, 1))).unwrap();
        let v = &f.volume;
        assert!(v.is_normalized());
        for track in &f.ground_truth {
            for t in 0..3 {
                let (r0, c0) = track.positions[t];
                let (r1, c1) = track.positions[t + 1];
                let a = v.token(TokenCoord::new(t, r0, c0));
                let b = v.token(TokenCoord::new(t + 1, r1, c1));
                assert!((dot(a, b) - 1.0).abs() < 1e-5);
                for r in 0..8 {
                    for c in 0..8 {
                        if f.track_at(TokenCoord::new(t + 1, r, c)).is_none() {
                            let bg = v.token(TokenCoord::new(t + 1, r, c));
                            assert!(dot(a, bg) < 1.0 - 1e-3);
                            assert!(dot(a, bg).abs() < 1e-5);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn deterministic_in_seed() {
        let a = synthesize_moving_patch(params((1, 0))).unwrap();
        let b = synthesize_moving_patch(params((1, 0))).unwrap();
        assert_eq!(a.volume, b.volume);
        let mut p = params((1, 0));
        p.seed = 8;
        assert_ne!(synthesize_moving_patch(p).unwrap().volume, a.volume);
    }
}
