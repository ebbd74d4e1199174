use crate::error::{CoveError, Result};

/// Running top-K over a stream visited in ascending index order.
///
/// Ordering is by descending score; among equal scores the entry seen
/// first (smaller index) wins, so the stream order is the tie-break.
#[derive(Debug, Clone)]
pub(crate) struct TopK {
    k: usize,
    entries: Vec<(f32, usize)>,
}

impl TopK {
    pub(crate) fn new(k: usize) -> Self {
        TopK {
            k,
            entries: Vec::with_capacity(k + 1),
        }
    }

    #[inline]
    pub(crate) fn offer(&mut self, score: f32, index: usize) {
        if self.entries.len() == self.k {
            match self.entries.last() {
                Some(&(worst, _)) if score > worst => {
                    self.entries.pop();
                }
                _ => return,
            }
        }
        let pos = self
            .entries
            .iter()
            .position(|&(s, _)| s < score)
            .unwrap_or(self.entries.len());
        self.entries.insert(pos, (score, index));
    }

    pub(crate) fn into_sorted(self) -> Vec<(f32, usize)> {
        self.entries
    }
}

/// Coordinates of the `k` largest values of a row-major `rows × cols` grid,
/// largest first. Ties go to the smaller row-major index. `k` larger than
/// the grid is truncated to the grid size.
pub fn top_k_argmax(scores: &[f32], cols: usize, k: usize) -> Result<Vec<(usize, usize)>> {
    if k == 0 {
        return Err(CoveError::param("K must be at least 1"));
    }
    if scores.is_empty() || cols == 0 || !scores.len().is_multiple_of(cols) {
        return Err(CoveError::param(format!(
            "score grid of {} values is not a nonempty grid with {cols} columns",
            scores.len()
        )));
    }
    let mut top = TopK::new(k.min(scores.len()));
    for (i, &s) in scores.iter().enumerate() {
        top.offer(s, i);
    }
    Ok(top
        .into_sorted()
        .into_iter()
        .map(|(_, i)| (i / cols, i % cols))
        .collect())
}
