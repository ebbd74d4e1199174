use rayon::prelude::*;

use crate::error::{CoveError, Result};
use crate::volume::FeatureVolume;

use super::map::WindowSize;
use super::window::WindowRect;

/// Default token cap for [`similarity_full`]; 16384² f32 is 1 GiB.
pub const DEFAULT_FULL_TOKEN_CAP: usize = 16_384;

/// Inner product accumulated left to right in f32.
///
/// Every similarity in the crate goes through this so that the same token
/// pair always scores bit-identically, whichever path computed it.
#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0f32;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

pub(crate) fn require_normalized(volume: &FeatureVolume) -> Result<()> {
    if volume.is_normalized() {
        Ok(())
    } else {
        Err(CoveError::param(
            "feature volume must be normalized before similarity search",
        ))
    }
}

/// Dense (N·H·W)² cosine similarity matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub tokens: usize,
    pub values: Vec<f32>,
}

impl SimilarityMatrix {
    #[inline]
    pub fn get(&self, a: usize, b: usize) -> f32 {
        self.values[a * self.tokens + b]
    }
}

/// All-pairs similarity of every token against every token, as a single
/// matrix product. Intended as an oracle for small volumes.
pub fn similarity_full(volume: &FeatureVolume, token_cap: usize) -> Result<SimilarityMatrix> {
    require_normalized(volume)?;
    let n = volume.shape().tokens();
    if n > token_cap {
        return Err(CoveError::TooLarge {
            tokens: n,
            cap: token_cap,
        });
    }
    let mut values = vec![0.0f32; n * n];
    values.par_chunks_mut(n).enumerate().for_each(|(a, row)| {
        let ta = volume.token_at(a);
        for (b, out) in row.iter_mut().enumerate() {
            *out = dot(ta, volume.token_at(b));
        }
    });
    Ok(SimilarityMatrix { tokens: n, values })
}

/// Similarities from every token of a source frame to the tokens of a
/// target frame, optionally restricted to a window around each source
/// token's position.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityBlock {
    pub source_frame: usize,
    pub target_frame: usize,
    pub height: usize,
    pub width: usize,
    pub window: WindowSize,
    /// Window extent in the target frame; `(H, W)` for [`WindowSize::Full`].
    pub window_rows: usize,
    pub window_cols: usize,
    /// `H·W` rows of `window_rows·window_cols` entries.
    pub entries: Vec<f32>,
    /// Top-left corner of each source token's window in the target frame.
    pub origins: Vec<(usize, usize)>,
}

impl SimilarityBlock {
    pub fn row_len(&self) -> usize {
        self.window_rows * self.window_cols
    }

    /// Scores of source token `(h, w)` over its window, row-major.
    pub fn row(&self, h: usize, w: usize) -> &[f32] {
        let n = self.row_len();
        let r = h * self.width + w;
        &self.entries[r * n..(r + 1) * n]
    }

    /// Score between source `(h, w)` and absolute target `(th, tw)`, if the
    /// target lies inside the source token's window.
    pub fn get(&self, h: usize, w: usize, th: usize, tw: usize) -> Option<f32> {
        let (r0, c0) = self.origins[h * self.width + w];
        if th < r0 || tw < c0 || th >= r0 + self.window_rows || tw >= c0 + self.window_cols {
            return None;
        }
        Some(self.row(h, w)[(th - r0) * self.window_cols + (tw - c0)])
    }
}

/// Scores every source-frame token against its window in the target frame.
pub fn similarity_block(
    volume: &FeatureVolume,
    source: usize,
    target: usize,
    window: WindowSize,
) -> Result<SimilarityBlock> {
    require_normalized(volume)?;
    let window = window.validate()?;
    let s = volume.shape();
    if source >= s.frames || target >= s.frames {
        return Err(CoveError::param(format!(
            "frames ({source}, {target}) out of range for {} frames",
            s.frames
        )));
    }
    let (window_rows, window_cols) = window.extent(s.height, s.width);
    let row_len = window_rows * window_cols;
    let hw = s.frame_tokens();
    let mut entries = vec![0.0f32; hw * row_len];
    let origins: Vec<(usize, usize)> = (0..hw)
        .map(|t| {
            let rect = WindowRect::around((t / s.width, t % s.width), window, s.height, s.width);
            (rect.row0, rect.col0)
        })
        .collect();
    entries
        .par_chunks_mut(row_len)
        .enumerate()
        .for_each(|(t, row)| {
            let query = volume.token_at(source * hw + t);
            let (r0, c0) = origins[t];
            for lr in 0..window_rows {
                for lc in 0..window_cols {
                    let cand = volume.token_at(target * hw + (r0 + lr) * s.width + c0 + lc);
                    row[lr * window_cols + lc] = dot(query, cand);
                }
            }
        });
    Ok(SimilarityBlock {
        source_frame: source,
        target_frame: target,
        height: s.height,
        width: s.width,
        window,
        window_rows,
        window_cols,
        entries,
        origins,
    })
}

/// Full H·W × H·W similarity between frame `i` and frame `i + 1`.
pub fn similarity_adjacent(volume: &FeatureVolume, i: usize) -> Result<SimilarityBlock> {
    let frames = volume.shape().frames;
    if i + 1 >= frames {
        return Err(CoveError::param(format!(
            "adjacent pair ({i}, {}) out of range for {frames} frames",
            i + 1
        )));
    }
    similarity_block(volume, i, i + 1, WindowSize::Full)
}
