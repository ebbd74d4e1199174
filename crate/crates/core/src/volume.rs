//! Dense N×H×W×d token volumes.
//!
//! Values are stored row-major in (frame, row, col, channel) order. A
//! [`FeatureVolume`] is the input to correspondence search and is usually
//! normalized per token; a [`LatentVolume`] has the same layout but carries
//! arbitrary finite values and a timestep label.

use serde::{Deserialize, Serialize};

use crate::error::{CoveError, Result};

/// Extents of a volume.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub dim: usize,
}

impl Shape {
    pub fn new(frames: usize, height: usize, width: usize, dim: usize) -> Result<Self> {
        let shape = Shape {
            frames,
            height,
            width,
            dim,
        };
        shape.validate()?;
        Ok(shape)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 || self.height == 0 || self.width == 0 || self.dim == 0 {
            return Err(CoveError::param(format!(
                "all extents must be at least 1, got {}x{}x{}x{}",
                self.frames, self.height, self.width, self.dim
            )));
        }
        self.checked_len()
            .map(|_| ())
            .ok_or_else(|| CoveError::param("volume size overflows usize"))
    }

    fn checked_len(&self) -> Option<usize> {
        self.frames
            .checked_mul(self.height)?
            .checked_mul(self.width)?
            .checked_mul(self.dim)
    }

    /// Tokens per frame.
    pub fn frame_tokens(&self) -> usize {
        self.height * self.width
    }

    /// Tokens in the whole volume.
    pub fn tokens(&self) -> usize {
        self.frames * self.height * self.width
    }

    /// Number of f32 values.
    pub fn len(&self) -> usize {
        self.tokens() * self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, coord: TokenCoord) -> bool {
        coord.frame < self.frames && coord.row < self.height && coord.col < self.width
    }

    /// Flat token index of `coord` in (frame, row, col) order.
    #[inline]
    pub fn token_index(&self, coord: TokenCoord) -> usize {
        (coord.frame * self.height + coord.row) * self.width + coord.col
    }

    #[inline]
    pub fn coord_of(&self, token_index: usize) -> TokenCoord {
        let col = token_index % self.width;
        let rest = token_index / self.width;
        TokenCoord {
            frame: rest / self.height,
            row: rest % self.height,
            col,
        }
    }

    /// Same grid, ignoring channel count.
    pub fn same_grid(&self, other: &Shape) -> bool {
        self.frames == other.frames && self.height == other.height && self.width == other.width
    }
}

/// Position of one token: frame index, row, column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TokenCoord {
    pub frame: usize,
    pub row: usize,
    pub col: usize,
}

impl TokenCoord {
    pub const fn new(frame: usize, row: usize, col: usize) -> Self {
        TokenCoord { frame, row, col }
    }
}

fn check_payload(shape: &Shape, data: &[f32]) -> Result<()> {
    shape.validate()?;
    if data.len() != shape.len() {
        return Err(CoveError::LengthMismatch {
            expected: shape.len(),
            actual: data.len(),
        });
    }
    if let Some(index) = data.iter().position(|v| !v.is_finite()) {
        return Err(CoveError::NonFinite { index });
    }
    Ok(())
}

/// Per-frame feature tokens used for correspondence search.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVolume {
    shape: Shape,
    data: Vec<f32>,
    normalized: bool,
}

impl FeatureVolume {
    /// Wraps raw values. The result is marked as not normalized.
    pub fn new(shape: Shape, data: Vec<f32>) -> Result<Self> {
        check_payload(&shape, &data)?;
        Ok(FeatureVolume {
            shape,
            data,
            normalized: false,
        })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    #[inline]
    pub fn token(&self, coord: TokenCoord) -> &[f32] {
        self.token_at(self.shape.token_index(coord))
    }

    #[inline]
    pub fn token_at(&self, token_index: usize) -> &[f32] {
        let d = self.shape.dim;
        &self.data[token_index * d..(token_index + 1) * d]
    }

    /// Scales every token to unit L2 norm.
    ///
    /// Zero tokens stay zero and are listed in the returned report. Applying
    /// this to an already normalized volume is a no-op up to rounding.
    pub fn normalize(&self) -> Normalized {
        let d = self.shape.dim;
        let mut data = self.data.clone();
        let mut zero_tokens = Vec::new();
        for (t, token) in data.chunks_exact_mut(d).enumerate() {
            // f64 accumulation keeps a second pass from moving any value.
            let norm = token
                .iter()
                .map(|&v| f64::from(v) * f64::from(v))
                .sum::<f64>()
                .sqrt();
            if norm == 0.0 {
                zero_tokens.push(self.shape.coord_of(t));
                continue;
            }
            for v in token.iter_mut() {
                *v = (f64::from(*v) / norm) as f32;
            }
        }
        Normalized {
            volume: FeatureVolume {
                shape: self.shape,
                data,
                normalized: true,
            },
            zero_tokens,
        }
    }

    /// Marks data that is already unit-norm per token (fixtures, stored
    /// normalized files). Fails if any nonzero token is off by more than 1e-5.
    pub fn assume_normalized(mut self) -> Result<Self> {
        for (t, token) in self.data.chunks_exact(self.shape.dim).enumerate() {
            let norm = token.iter().map(|v| v * v).sum::<f32>().sqrt();
            if norm != 0.0 && (norm - 1.0).abs() > 1e-5 {
                let c = self.shape.coord_of(t);
                return Err(CoveError::param(format!(
                    "token ({}, {}, {}) has norm {norm}, not unit",
                    c.frame, c.row, c.col
                )));
            }
        }
        self.normalized = true;
        Ok(self)
    }
}

/// Output of [`FeatureVolume::normalize`].
#[derive(Debug, Clone)]
pub struct Normalized {
    pub volume: FeatureVolume,
    /// Tokens whose norm was exactly zero, in row-major order.
    pub zero_tokens: Vec<TokenCoord>,
}

/// Noisy latent tokens the attention stage operates on.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentVolume {
    shape: Shape,
    data: Vec<f32>,
    /// Diffusion timestep label. Informational only.
    pub timestep: i64,
}

impl LatentVolume {
    pub fn new(shape: Shape, data: Vec<f32>) -> Result<Self> {
        check_payload(&shape, &data)?;
        Ok(LatentVolume {
            shape,
            data,
            timestep: 0,
        })
    }

    pub fn with_timestep(mut self, timestep: i64) -> Self {
        self.timestep = timestep;
        self
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn token(&self, coord: TokenCoord) -> &[f32] {
        let d = self.shape.dim;
        let t = self.shape.token_index(coord);
        &self.data[t * d..(t + 1) * d]
    }
}

impl From<FeatureVolume> for LatentVolume {
    fn from(volume: FeatureVolume) -> Self {
        LatentVolume {
            shape: volume.shape,
            data: volume.data,
            timestep: 0,
        }
    }
}
