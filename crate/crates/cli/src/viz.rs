//! Trajectory rendering as binary PPM frames.

use std::fmt::Write as _;

use cove_core::{CorrespondenceMap, FeatureVolume, TokenCoord};

pub const ANCHOR_COLOR: [u8; 3] = [255, 0, 0];
pub const MATCH_COLOR: [u8; 3] = [255, 255, 0];
const PLAIN_BACKGROUND: u8 = 96;

/// What to draw: one image per frame, the anchor in its own frame and its
/// correspondents everywhere else.
#[derive(Debug, Clone)]
pub struct VizSpec {
    pub anchor: TokenCoord,
    /// Pixels per token along each axis.
    pub scale: usize,
}

/// An RGB raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[u8; 3]>,
}

impl Image {
    fn fill(width: usize, height: usize, gray: impl Fn(usize, usize) -> u8) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let g = gray(y, x);
                pixels.push([g, g, g]);
            }
        }
        Image {
            width,
            height,
            pixels,
        }
    }

    #[cfg(test)]
    pub fn get(&self, y: usize, x: usize) -> [u8; 3] {
        self.pixels[y * self.width + x]
    }

    /// P6 encoding.
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut header = String::new();
        let _ = write!(header, "P6\n{} {}\n255\n", self.width, self.height);
        let mut out = header.into_bytes();
        out.reserve(self.pixels.len() * 3);
        for p in &self.pixels {
            out.extend_from_slice(p);
        }
        out
    }
}

/// Renders every frame of `map` for `spec`. `features`, when given, must
/// share the map's grid and supplies the grayscale background from token
/// norms.
pub fn render(
    map: &CorrespondenceMap,
    spec: &VizSpec,
    features: Option<&FeatureVolume>,
) -> Result<Vec<Image>, String> {
    let (n, h, w) = (map.frames(), map.height(), map.width());
    let a = spec.anchor;
    if a.frame >= n || a.row >= h || a.col >= w {
        return Err(format!(
            "anchor {},{},{} outside map grid {n}x{h}x{w}",
            a.frame, a.row, a.col
        ));
    }
    if spec.scale == 0 {
        return Err("scale must be at least 1".into());
    }
    let norms: Option<Vec<f32>> = match features {
        Some(f) if !map.matches_grid(&f.shape()) => {
            return Err("feature grid does not match map grid".into())
        }
        Some(f) => Some(
            f.data()
                .chunks_exact(f.shape().dim)
                .map(|t| t.iter().map(|v| v * v).sum::<f32>().sqrt())
                .collect(),
        ),
        None => None,
    };
    let max_norm = norms
        .as_ref()
        .map(|v| v.iter().copied().fold(0.0f32, f32::max))
        .unwrap_or(0.0);

    let s = spec.scale;
    let mut frames = Vec::with_capacity(n);
    for j in 0..n {
        let mut img = Image::fill(w * s, h * s, |y, x| match &norms {
            Some(v) if max_norm > 0.0 => {
                let t = (j * h + y / s) * w + x / s;
                (v[t] / max_norm * 200.0).round() as u8
            }
            _ => PLAIN_BACKGROUND,
        });
        let mut mark = |row: usize, col: usize, color: [u8; 3]| {
            for dy in 0..s {
                for dx in 0..s {
                    img.pixels[(row * s + dy) * w * s + col * s + dx] = color;
                }
            }
        };
        if j == a.frame {
            mark(a.row, a.col, ANCHOR_COLOR);
        } else {
            let matches = map.matches(a, j).expect("frame differs from anchor frame");
            // best match drawn last so it stays visible
            for &[r, c] in matches.iter().rev() {
                mark(r as usize, c as usize, MATCH_COLOR);
            }
        }
        frames.push(img);
    }
    Ok(frames)
}
