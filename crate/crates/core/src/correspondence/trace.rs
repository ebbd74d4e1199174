//! Sliding-window chained correspondence.
//!
//! For each adjacent pair of frames, every token of the earlier frame is
//! scored against the l×l window around its own position in the later
//! frame and the K best are kept (the forward table). The backward table
//! does the same from each frame toward the previous one. Chains then walk
//! these tables: the top-1 match in frame j becomes the query for frame
//! j ± 1, so each anchor costs only table lookups.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CoveError, Result};
use crate::volume::FeatureVolume;

use super::map::{CorrespondenceMap, WindowSize};
use super::similarity::{dot, require_normalized};
use super::topk::TopK;
use super::window::WindowRect;

/// Instrumented arithmetic counts for one trace.
///
/// A multiply-accumulate counts as two operations. Top-K bookkeeping is
/// not counted.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceStats {
    /// Multiply-adds spent building the forward table.
    pub forward_ops: u64,
    /// Multiply-adds spent building the backward table.
    pub backward_ops: u64,
    /// Largest candidate set scored for a single query token.
    pub peak_candidates: usize,
}

impl TraceStats {
    pub fn total_ops(&self) -> u64 {
        self.forward_ops + self.backward_ops
    }
}

/// Per adjacent pair, the K best targets of every source-frame token.
struct StepTable {
    /// Target token index within the frame (`row * W + col`).
    targets: Vec<u32>,
    scores: Vec<f32>,
}

#[derive(Clone, Copy)]
enum Direction {
    Forward,
    Backward,
}

fn build_table(
    volume: &FeatureVolume,
    k: usize,
    window: WindowSize,
    direction: Direction,
) -> (StepTable, u64, usize) {
    let s = volume.shape();
    let hw = s.frame_tokens();
    let rows = (s.frames - 1) * hw;
    let mut targets = vec![0u32; rows * k];
    let mut scores = vec![0.0f32; rows * k];

    let (ops, peak) = targets
        .par_chunks_mut(k)
        .zip(scores.par_chunks_mut(k))
        .enumerate()
        .map(|(row, (out_t, out_s))| {
            let pair = row / hw;
            let t = row % hw;
            let (source, target) = match direction {
                Direction::Forward => (pair, pair + 1),
                Direction::Backward => (pair + 1, pair),
            };
            let query = volume.token_at(source * hw + t);
            let rect = WindowRect::around((t / s.width, t % s.width), window, s.height, s.width);
            let mut top = TopK::new(k);
            for r in rect.row0..rect.row0 + rect.rows {
                for c in rect.col0..rect.col0 + rect.cols {
                    let idx = r * s.width + c;
                    top.offer(dot(query, volume.token_at(target * hw + idx)), idx);
                }
            }
            for (slot, (score, idx)) in top.into_sorted().into_iter().enumerate() {
                out_t[slot] = idx as u32;
                out_s[slot] = score;
            }
            (2 * (s.dim as u64) * rect.len() as u64, rect.len())
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1.max(b.1)));

    (StepTable { targets, scores }, ops, peak)
}

fn check_params(volume: &FeatureVolume, k: usize, window: WindowSize) -> Result<()> {
    require_normalized(volume)?;
    let window = window.validate()?;
    let s = volume.shape();
    if s.frames < 2 {
        return Err(CoveError::param("tracing needs at least 2 frames"));
    }
    if k == 0 {
        return Err(CoveError::param("K must be at least 1"));
    }
    if s.height > u16::MAX as usize + 1 || s.width > u16::MAX as usize + 1 {
        return Err(CoveError::param(
            "frame extent exceeds u16 coordinate range",
        ));
    }
    let (wr, wc) = window.extent(s.height, s.width);
    if k > wr * wc {
        return Err(CoveError::param(format!(
            "K = {k} exceeds the {wr}x{wc} candidate window"
        )));
    }
    Ok(())
}

/// Chained top-K correspondence for every token of `volume`.
///
/// `window` restricts each step to an l×l neighbourhood (shifted inward at
/// frame borders); [`WindowSize::Full`] searches the whole adjacent frame.
pub fn trace_trajectories(
    volume: &FeatureVolume,
    k: usize,
    window: WindowSize,
) -> Result<CorrespondenceMap> {
    trace_trajectories_instrumented(volume, k, window).map(|(map, _)| map)
}

/// [`trace_trajectories`] that also reports operation counts.
pub fn trace_trajectories_instrumented(
    volume: &FeatureVolume,
    k: usize,
    window: WindowSize,
) -> Result<(CorrespondenceMap, TraceStats)> {
    check_params(volume, k, window)?;
    let s = volume.shape();
    let hw = s.frame_tokens();
    let n = s.frames;

    let ((fwd, forward_ops, peak_f), (bwd, backward_ops, peak_b)) = rayon::join(
        || build_table(volume, k, window, Direction::Forward),
        || build_table(volume, k, window, Direction::Backward),
    );

    let per_anchor = (n - 1) * k;
    let anchors = n * hw;
    let mut coords = vec![[0u16; 2]; anchors * per_anchor];
    let mut scores = vec![0.0f32; anchors * per_anchor];
    let width = s.width;

    coords
        .par_chunks_mut(per_anchor)
        .zip(scores.par_chunks_mut(per_anchor))
        .enumerate()
        .for_each(|(anchor, (out_c, out_s))| {
            let i = anchor / hw;
            let t = anchor % hw;
            let mut emit = |slot: usize, row: usize, table: &StepTable| -> usize {
                let src = &table.targets[row * k..(row + 1) * k];
                let src_s = &table.scores[row * k..(row + 1) * k];
                for kk in 0..k {
                    let idx = src[kk] as usize;
                    out_c[slot * k + kk] = [(idx / width) as u16, (idx % width) as u16];
                    out_s[slot * k + kk] = src_s[kk];
                }
                src[0] as usize
            };

            let mut cur = t;
            for j in i + 1..n {
                // forward row for source frame j - 1
                cur = emit(j - 1, (j - 1) * hw + cur, &fwd);
            }
            let mut cur = t;
            for j in (0..i).rev() {
                // backward row for source frame j + 1 lives at pair j
                cur = emit(j, j * hw + cur, &bwd);
            }
        });

    let map = CorrespondenceMap::from_parts(n, s.height, s.width, k, window, coords, Some(scores))?;
    Ok((
        map,
        TraceStats {
            forward_ops,
            backward_ops,
            peak_candidates: peak_f.max(peak_b),
        },
    ))
}
