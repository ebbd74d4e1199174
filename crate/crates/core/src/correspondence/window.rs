use crate::error::{CoveError, Result};
use crate::volume::FeatureVolume;

use super::map::WindowSize;

/// Start index and length of a window of nominal length `l` around
/// `center` on an axis of size `extent`.
///
/// The window reaches `(l - 1) / 2` cells toward smaller indices, so an
/// even `l` puts its extra cell on the larger side. When the window would
/// cross an edge it is shifted inward, keeping `min(l, extent)` cells.
#[inline]
pub fn clamp_span(center: usize, l: usize, extent: usize) -> (usize, usize) {
    let len = l.min(extent);
    let start = center.saturating_sub((l - 1) / 2).min(extent - len);
    (start, len)
}

/// Rectangle of a frame selected around a center token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowRect {
    pub row0: usize,
    pub col0: usize,
    pub rows: usize,
    pub cols: usize,
}

impl WindowRect {
    pub fn around(center: (usize, usize), window: WindowSize, height: usize, width: usize) -> Self {
        match window {
            WindowSize::Full => WindowRect {
                row0: 0,
                col0: 0,
                rows: height,
                cols: width,
            },
            WindowSize::Length(l) => {
                let (row0, rows) = clamp_span(center.0, l, height);
                let (col0, cols) = clamp_span(center.1, l, width);
                WindowRect {
                    row0,
                    col0,
                    rows,
                    cols,
                }
            }
        }
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Absolute (row, col) of a window-local position.
    #[inline]
    pub fn absolute(&self, local_row: usize, local_col: usize) -> (usize, usize) {
        (self.row0 + local_row, self.col0 + local_col)
    }
}

/// Tokens of one frame inside a [`WindowRect`].
#[derive(Debug, Clone, Copy)]
pub struct WindowView<'a> {
    volume: &'a FeatureVolume,
    frame: usize,
    rect: WindowRect,
}

impl<'a> WindowView<'a> {
    pub fn rect(&self) -> WindowRect {
        self.rect
    }

    pub fn origin(&self) -> (usize, usize) {
        (self.rect.row0, self.rect.col0)
    }

    pub fn frame(&self) -> usize {
        self.frame
    }

    /// Token at a window-local position.
    pub fn token(&self, local_row: usize, local_col: usize) -> &'a [f32] {
        let s = self.volume.shape();
        let (r, c) = self.rect.absolute(local_row, local_col);
        self.volume
            .token_at((self.frame * s.height + r) * s.width + c)
    }

    /// Window tokens in row-major order together with their absolute
    /// (row, col).
    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), &'a [f32])> + '_ {
        (0..self.rect.rows).flat_map(move |lr| {
            (0..self.rect.cols).map(move |lc| (self.rect.absolute(lr, lc), self.token(lr, lc)))
        })
    }
}

/// Crops frame `frame` of `volume` to the l×l window centered on `center`,
/// shifted inward at frame borders.
pub fn window_crop(
    volume: &FeatureVolume,
    frame: usize,
    center: (usize, usize),
    window: WindowSize,
) -> Result<WindowView<'_>> {
    let window = window.validate()?;
    let s = volume.shape();
    if frame >= s.frames {
        return Err(CoveError::param(format!(
            "frame {frame} out of range for {} frames",
            s.frames
        )));
    }
    if center.0 >= s.height || center.1 >= s.width {
        return Err(CoveError::param(format!(
            "window center {center:?} outside {}x{} frame",
            s.height, s.width
        )));
    }
    Ok(WindowView {
        volume,
        frame,
        rect: WindowRect::around(center, window, s.height, s.width),
    })
}
