use serde::{Deserialize, Serialize};

use crate::error::{CoveError, Result};
use crate::volume::{Shape, TokenCoord};

/// Spatial extent of the search window in the adjacent frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WindowSize {
    /// Whole frame.
    Full,
    /// Nominal side length `l` of an l×l window.
    Length(usize),
}

impl WindowSize {
    pub fn validate(self) -> Result<Self> {
        match self {
            WindowSize::Length(0) => Err(CoveError::param("window length must be at least 1")),
            w => Ok(w),
        }
    }

    /// Effective (rows, cols) of the window once clamped to a frame.
    pub fn extent(self, height: usize, width: usize) -> (usize, usize) {
        match self {
            WindowSize::Full => (height, width),
            WindowSize::Length(l) => (l.min(height), l.min(width)),
        }
    }

    /// Encoding used by the map file format: 0 stands for the full frame.
    pub fn to_code(self) -> u32 {
        match self {
            WindowSize::Full => 0,
            WindowSize::Length(l) => l as u32,
        }
    }

    pub fn from_code(code: u32) -> Self {
        match code {
            0 => WindowSize::Full,
            l => WindowSize::Length(l as usize),
        }
    }
}

impl std::fmt::Display for WindowSize {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            WindowSize::Full => write!(f, "full"),
            WindowSize::Length(l) => write!(f, "{l}"),
        }
    }
}

/// For every anchor token and every other frame, the K best matching
/// (row, col) positions in descending similarity.
///
/// Entries are laid out anchor-major in row-major (frame, row, col) order;
/// inside one anchor, frames `j != i` ascend and each holds `k` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceMap {
    frames: usize,
    height: usize,
    width: usize,
    k: usize,
    window: WindowSize,
    coords: Vec<[u16; 2]>,
    scores: Option<Vec<f32>>,
}

impl CorrespondenceMap {
    /// Number of coordinate pairs a map with these dimensions holds.
    pub fn expected_len(frames: usize, height: usize, width: usize, k: usize) -> usize {
        frames * height * width * frames.saturating_sub(1) * k
    }

    pub fn from_parts(
        frames: usize,
        height: usize,
        width: usize,
        k: usize,
        window: WindowSize,
        coords: Vec<[u16; 2]>,
        scores: Option<Vec<f32>>,
    ) -> Result<Self> {
        if frames < 2 || height == 0 || width == 0 || k == 0 {
            return Err(CoveError::param(format!(
                "map needs N >= 2, H, W, K >= 1; got N={frames} H={height} W={width} K={k}"
            )));
        }
        if height > u16::MAX as usize + 1 || width > u16::MAX as usize + 1 {
            return Err(CoveError::param(
                "frame extent exceeds u16 coordinate range",
            ));
        }
        let expected = Self::expected_len(frames, height, width, k);
        if coords.len() != expected {
            return Err(CoveError::LengthMismatch {
                expected,
                actual: coords.len(),
            });
        }
        if let Some(s) = &scores {
            if s.len() != expected {
                return Err(CoveError::LengthMismatch {
                    expected,
                    actual: s.len(),
                });
            }
        }
        if let Some(bad) = coords
            .iter()
            .position(|&[r, c]| r as usize >= height || c as usize >= width)
        {
            return Err(CoveError::DimensionMismatch(format!(
                "map entry {bad} = {:?} lies outside {height}x{width}",
                coords[bad]
            )));
        }
        Ok(CorrespondenceMap {
            frames,
            height,
            width,
            k,
            window: window.validate()?,
            coords,
            scores,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn window(&self) -> WindowSize {
        self.window
    }

    /// Raw coordinate table in file order.
    pub fn coords(&self) -> &[[u16; 2]] {
        &self.coords
    }

    /// Similarities recorded alongside each coordinate, when the map was
    /// computed in-process rather than loaded.
    pub fn scores(&self) -> Option<&[f32]> {
        self.scores.as_deref()
    }

    /// Drops recorded similarities, leaving what the file format stores.
    pub fn without_scores(mut self) -> Self {
        self.scores = None;
        self
    }

    /// True if the grid matches the first three extents of `shape`.
    pub fn matches_grid(&self, shape: &Shape) -> bool {
        self.frames == shape.frames && self.height == shape.height && self.width == shape.width
    }

    fn offset(&self, anchor: TokenCoord, frame: usize) -> Option<usize> {
        if anchor.frame >= self.frames
            || anchor.row >= self.height
            || anchor.col >= self.width
            || frame >= self.frames
            || frame == anchor.frame
        {
            return None;
        }
        let a = (anchor.frame * self.height + anchor.row) * self.width + anchor.col;
        let slot = if frame < anchor.frame {
            frame
        } else {
            frame - 1
        };
        Some((a * (self.frames - 1) + slot) * self.k)
    }

    /// The K matches of `anchor` in `frame`, best first. `None` when
    /// `frame` is the anchor's own frame or anything is out of range.
    pub fn matches(&self, anchor: TokenCoord, frame: usize) -> Option<&[[u16; 2]]> {
        let off = self.offset(anchor, frame)?;
        Some(&self.coords[off..off + self.k])
    }

    pub fn match_scores(&self, anchor: TokenCoord, frame: usize) -> Option<&[f32]> {
        let off = self.offset(anchor, frame)?;
        self.scores.as_ref().map(|s| &s[off..off + self.k])
    }

    /// Top-1 match of `anchor` in `frame` as a full coordinate.
    pub fn best(&self, anchor: TokenCoord, frame: usize) -> Option<TokenCoord> {
        self.matches(anchor, frame)
            .map(|m| TokenCoord::new(frame, m[0][0] as usize, m[0][1] as usize))
    }
}
