//! Arithmetic cost of correspondence search.
//!
//! Counts follow one convention throughout: a multiply-accumulate is two
//! operations, and top-K selection is free. With that convention the
//! windowed forward pass over N frames of H×W tokens with d channels costs
//! `2·d·(N−1)·H·W·l²`.

use serde::{Deserialize, Serialize};

use crate::correspondence::{trace_trajectories_instrumented, WindowSize};
use crate::error::{CoveError, Result};
use crate::fixture::random_features;
use crate::volume::Shape;

/// Channel count of the reference feature maps (64×64 tokens, 20 frames)
/// the default benchmark configuration models.
pub const REFERENCE_CHANNELS: usize = 320;

fn mul_all(factors: &[u64]) -> Result<u64> {
    factors.iter().try_fold(1u64, |acc, &f| {
        acc.checked_mul(f)
            .ok_or_else(|| CoveError::param("operation count overflows u64"))
    })
}

/// Forward-pass operation count for one trace.
///
/// Windowed lengths must not exceed `min(H, W)`; beyond that the window
/// saturates and [`WindowSize::Full`] gives the count.
pub fn analytic_ops(shape: Shape, window: WindowSize) -> Result<u64> {
    shape.validate()?;
    let window = window.validate()?;
    let (n, h, w, d) = (
        shape.frames as u64,
        shape.height as u64,
        shape.width as u64,
        shape.dim as u64,
    );
    match window {
        WindowSize::Length(l) => {
            if l > shape.height.min(shape.width) {
                return Err(CoveError::param(format!(
                    "window {l} exceeds min(H, W) = {}",
                    shape.height.min(shape.width)
                )));
            }
            let l = l as u64;
            mul_all(&[2, d, n - 1, h, w, l, l])
        }
        WindowSize::Full => mul_all(&[2, d, n - 1, h * w, h * w]),
    }
}

/// Cost of the single all-pairs similarity product over every token.
pub fn all_pairs_ops(shape: Shape) -> Result<u64> {
    shape.validate()?;
    let t = shape.tokens() as u64;
    mul_all(&[2, shape.dim as u64, t, t])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeasuredOps {
    pub forward: u64,
    pub total: u64,
    pub peak_candidates: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCountReport {
    pub shape: Shape,
    pub window: WindowSize,
    /// Forward pass, or `None` when the window is wider than the frame.
    pub analytic_forward: Option<u64>,
    /// Forward plus backward tables.
    pub analytic_total: Option<u64>,
    /// Forward pass with the whole adjacent frame as window.
    pub full_adjacent_forward: u64,
    pub all_pairs: u64,
    pub measured: Option<MeasuredOps>,
}

impl OpCountReport {
    pub fn analytic(shape: Shape, window: WindowSize) -> Result<Self> {
        let window = window.validate()?;
        let analytic_forward = match window {
            WindowSize::Length(l) if l > shape.height.min(shape.width) => None,
            w => Some(analytic_ops(shape, w)?),
        };
        let analytic_total = analytic_forward
            .map(|f| {
                f.checked_mul(2)
                    .ok_or_else(|| CoveError::param("operation count overflows u64"))
            })
            .transpose()?;
        Ok(OpCountReport {
            shape,
            window,
            analytic_forward,
            analytic_total,
            full_adjacent_forward: analytic_ops(shape, WindowSize::Full)?,
            all_pairs: all_pairs_ops(shape)?,
            measured: None,
        })
    }
}

/// Runs an instrumented trace over a random volume of `shape` and reports
/// measured next to analytic counts.
pub fn measured_ops(
    shape: Shape,
    window: WindowSize,
    k: usize,
    seed: u64,
) -> Result<OpCountReport> {
    let mut report = OpCountReport::analytic(shape, window)?;
    let volume = random_features(shape, seed)?;
    let (_, stats) = trace_trajectories_instrumented(&volume, k, window)?;
    report.measured = Some(MeasuredOps {
        forward: stats.forward_ops,
        total: stats.total_ops(),
        peak_candidates: stats.peak_candidates,
    });
    Ok(report)
}
