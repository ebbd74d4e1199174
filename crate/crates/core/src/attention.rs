//! Correspondence-guided attention.
//!
//! For a query token at (i, h, w) the tokens its correspondence map points
//! to in every other frame are gathered from the latent, reduced by
//! bipartite soft matching, and used as both keys and values of a single
//! scaled dot-product attention step.

use rayon::prelude::*;

use crate::correspondence::CorrespondenceMap;
use crate::error::{CoveError, Result};
use crate::volume::{LatentVolume, TokenCoord};

/// Tokens gathered for one anchor, in (frame ascending, rank ascending)
/// order.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenList {
    dim: usize,
    data: Vec<f32>,
    sources: Vec<TokenCoord>,
}

impl TokenList {
    /// Wraps `data` as rows of `dim` values with their source positions.
    pub fn new(dim: usize, data: Vec<f32>, sources: Vec<TokenCoord>) -> Result<Self> {
        if dim == 0 || data.len() != sources.len() * dim {
            return Err(CoveError::DimensionMismatch(format!(
                "{} values do not form {} tokens of dim {dim}",
                data.len(),
                sources.len()
            )));
        }
        Ok(TokenList { dim, data, sources })
    }

    /// Rows without meaningful positions; sources are numbered along frame 0.
    pub fn from_rows(dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(CoveError::DimensionMismatch(format!(
                "{} values do not divide into tokens of dim {dim}",
                data.len()
            )));
        }
        let sources = (0..data.len() / dim)
            .map(|i| TokenCoord::new(0, 0, i))
            .collect();
        Ok(TokenList { dim, data, sources })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    pub fn token(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn sources(&self) -> &[TokenCoord] {
        &self.sources
    }
}

/// Collects the latent tokens `map` assigns to `anchor` in every other
/// frame. The anchor's own frame contributes nothing.
pub fn gather_corr(
    latent: &LatentVolume,
    map: &CorrespondenceMap,
    anchor: TokenCoord,
) -> Result<TokenList> {
    let shape = latent.shape();
    if !map.matches_grid(&shape) {
        return Err(CoveError::DimensionMismatch(format!(
            "map grid {}x{}x{} vs latent grid {}x{}x{}",
            map.frames(),
            map.height(),
            map.width(),
            shape.frames,
            shape.height,
            shape.width
        )));
    }
    if !shape.contains(anchor) {
        return Err(CoveError::param(format!("anchor {anchor:?} out of bounds")));
    }
    let count = (shape.frames - 1) * map.k();
    let mut data = Vec::with_capacity(count * shape.dim);
    let mut sources = Vec::with_capacity(count);
    for j in (0..shape.frames).filter(|&j| j != anchor.frame) {
        let matches = map
            .matches(anchor, j)
            .expect("frame j differs from anchor frame");
        for &[r, c] in matches {
            let coord = TokenCoord::new(j, r as usize, c as usize);
            data.extend_from_slice(latent.token(coord));
            sources.push(coord);
        }
    }
    TokenList::new(shape.dim, data, sources)
}

/// Output of [`merge_tokens`].
#[derive(Debug, Clone, PartialEq)]
pub struct MergedTokenSet {
    dim: usize,
    tokens: Vec<f32>,
    sizes: Vec<u32>,
    provenance: Vec<Vec<usize>>,
}

impl MergedTokenSet {
    /// Builds a set directly. Each token gets the matching size; provenance
    /// is left empty.
    pub fn from_parts(dim: usize, tokens: Vec<f32>, sizes: Vec<u32>) -> Result<Self> {
        if dim == 0 || tokens.len() != sizes.len() * dim {
            return Err(CoveError::DimensionMismatch(format!(
                "{} values for {} tokens of dim {dim}",
                tokens.len(),
                sizes.len()
            )));
        }
        if sizes.contains(&0) {
            return Err(CoveError::param("group sizes must be positive"));
        }
        let provenance = vec![Vec::new(); sizes.len()];
        Ok(MergedTokenSet {
            dim,
            tokens,
            sizes,
            provenance,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    pub fn token(&self, m: usize) -> &[f32] {
        &self.tokens[m * self.dim..(m + 1) * self.dim]
    }

    pub fn tokens(&self) -> &[f32] {
        &self.tokens
    }

    pub fn sizes(&self) -> &[u32] {
        &self.sizes
    }

    /// Positions in the input list absorbed by each merged token.
    pub fn provenance(&self) -> &[Vec<usize>] {
        &self.provenance
    }

    /// Source coordinates absorbed by each merged token.
    pub fn absorbed(&self, list: &TokenList) -> Vec<Vec<TokenCoord>> {
        self.provenance
            .iter()
            .map(|g| g.iter().map(|&p| list.sources[p]).collect())
            .collect()
    }
}

fn cosine(a: &[f32], b: &[f32]) -> f32 {
    let mut ab = 0.0f32;
    let mut aa = 0.0f32;
    let mut bb = 0.0f32;
    for (x, y) in a.iter().zip(b) {
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    let denom = (aa * bb).sqrt();
    if denom == 0.0 {
        0.0
    } else {
        ab / denom
    }
}

/// Bipartite soft matching over the list.
///
/// Even positions form set A and odd positions set B. Every A token
/// proposes one edge to its most similar B token (cosine, ties to the
/// smaller B position); the `floor(ratio · |A|)` strongest edges (ties to
/// the smaller A position) are merged into their B token as a size-weighted
/// mean. Surviving tokens keep the relative order of the input list.
pub fn merge_tokens(list: &TokenList, ratio: f32) -> Result<MergedTokenSet> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(CoveError::param(format!(
            "merge ratio {ratio} outside [0, 1)"
        )));
    }
    if list.is_empty() {
        return Err(CoveError::param("cannot merge an empty token list"));
    }
    let n = list.len();
    let a_count = n.div_ceil(2);
    let b_count = n / 2;
    let r = if b_count == 0 {
        0
    } else {
        (ratio as f64 * a_count as f64).floor() as usize
    };

    // merged_into[a] = Some(b position) for A tokens that get absorbed
    let mut merged_into: Vec<Option<usize>> = vec![None; n];
    if r > 0 {
        let mut edges: Vec<(f32, usize, usize)> = (0..a_count)
            .map(|ai| {
                let a = 2 * ai;
                let mut best = (f32::NEG_INFINITY, 1);
                for bi in 0..b_count {
                    let b = 2 * bi + 1;
                    let s = cosine(list.token(a), list.token(b));
                    if s > best.0 {
                        best = (s, b);
                    }
                }
                (best.0, a, best.1)
            })
            .collect();
        edges.sort_by(|x, y| {
            y.0.partial_cmp(&x.0)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(x.1.cmp(&y.1))
        });
        for &(_, a, b) in edges.iter().take(r) {
            merged_into[a] = Some(b);
        }
    }

    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); n];
    for p in 0..n {
        match merged_into[p] {
            Some(b) => groups[b].push(p),
            None => groups[p].push(p),
        }
    }

    let d = list.dim;
    let mut tokens = Vec::with_capacity((n - r) * d);
    let mut sizes = Vec::with_capacity(n - r);
    let mut provenance = Vec::with_capacity(n - r);
    for mut group in groups.into_iter().filter(|g| !g.is_empty()) {
        group.sort_unstable();
        let size = group.len();
        if size == 1 {
            tokens.extend_from_slice(list.token(group[0]));
        } else {
            let mut acc = vec![0.0f32; d];
            for &p in &group {
                acc.iter_mut().zip(list.token(p)).for_each(|(s, v)| *s += v);
            }
            tokens.extend(acc.into_iter().map(|s| s / size as f32));
        }
        sizes.push(size as u32);
        provenance.push(group);
    }
    Ok(MergedTokenSet {
        dim: d,
        tokens,
        sizes,
        provenance,
    })
}

/// How merged group sizes enter the attention logits.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum AttentionMode {
    /// Each merged token is one key, regardless of its size.
    #[default]
    Plain,
    /// Adds `ln(size)` to each logit so a merged token weighs as much as
    /// the tokens it absorbed.
    Proportional,
}

fn check_attention_inputs(query: &[f32], merged: &MergedTokenSet, d_k: usize) -> Result<()> {
    if merged.is_empty() {
        return Err(CoveError::param("attention needs at least one key"));
    }
    if query.len() != merged.dim {
        return Err(CoveError::DimensionMismatch(format!(
            "query dim {} vs key dim {}",
            query.len(),
            merged.dim
        )));
    }
    if d_k == 0 {
        return Err(CoveError::param("d_k must be at least 1"));
    }
    Ok(())
}

fn softmax_weights(
    query: &[f32],
    merged: &MergedTokenSet,
    d_k: usize,
    mode: AttentionMode,
) -> Result<Vec<f64>> {
    check_attention_inputs(query, merged, d_k)?;
    let scale = 1.0 / (d_k as f64).sqrt();
    let mut logits: Vec<f64> = (0..merged.len())
        .map(|m| {
            let s: f64 = query
                .iter()
                .zip(merged.token(m))
                .map(|(&q, &k)| q as f64 * k as f64)
                .sum();
            s * scale
        })
        .collect();
    if mode == AttentionMode::Proportional {
        for (l, &size) in logits.iter_mut().zip(&merged.sizes) {
            *l += (size as f64).ln();
        }
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0f64;
    for l in logits.iter_mut() {
        *l = (*l - max).exp();
        total += *l;
    }
    for l in logits.iter_mut() {
        *l /= total;
    }
    Ok(logits)
}

/// Softmax of `query · keysᵀ / sqrt(d_k)` over the merged tokens, computed
/// with the maximum logit subtracted. Accumulation is in f64.
pub fn attention_weights(
    query: &[f32],
    merged: &MergedTokenSet,
    d_k: usize,
    mode: AttentionMode,
) -> Result<Vec<f32>> {
    Ok(softmax_weights(query, merged, d_k, mode)?
        .into_iter()
        .map(|w| w as f32)
        .collect())
}

/// Attention of one query over merged corresponding tokens, which serve
/// as both keys and values.
pub fn corr_guided_attention(
    query: &[f32],
    merged: &MergedTokenSet,
    d_k: usize,
    mode: AttentionMode,
) -> Result<Vec<f32>> {
    let weights = softmax_weights(query, merged, d_k, mode)?;
    let mut out = vec![0.0f64; merged.dim];
    for (m, w) in weights.iter().enumerate() {
        out.iter_mut()
            .zip(merged.token(m))
            .for_each(|(o, &v)| *o += w * v as f64);
    }
    Ok(out.into_iter().map(|v| v as f32).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameAttentionConfig {
    pub merge_ratio: f32,
    /// Attention scale dimension; `None` uses the latent channel count.
    pub d_k: Option<usize>,
    pub mode: AttentionMode,
}

impl Default for FrameAttentionConfig {
    fn default() -> Self {
        FrameAttentionConfig {
            merge_ratio: 0.5,
            d_k: None,
            mode: AttentionMode::Plain,
        }
    }
}

/// Runs gather, merge and attend for every token of `latent`, writing into
/// a fresh volume. Every query reads the unmodified input.
pub fn apply_frame_attention(
    latent: &LatentVolume,
    map: &CorrespondenceMap,
    config: FrameAttentionConfig,
) -> Result<LatentVolume> {
    let shape = latent.shape();
    if !map.matches_grid(&shape) {
        return Err(CoveError::DimensionMismatch(format!(
            "map grid {}x{}x{} vs latent grid {}x{}x{}",
            map.frames(),
            map.height(),
            map.width(),
            shape.frames,
            shape.height,
            shape.width
        )));
    }
    if !(0.0..1.0).contains(&config.merge_ratio) {
        return Err(CoveError::param(format!(
            "merge ratio {} outside [0, 1)",
            config.merge_ratio
        )));
    }
    let d_k = config.d_k.unwrap_or(shape.dim);
    let mut out = vec![0.0f32; shape.len()];
    out.par_chunks_mut(shape.dim)
        .enumerate()
        .try_for_each(|(t, dst)| -> Result<()> {
            let anchor = shape.coord_of(t);
            let gathered = gather_corr(latent, map, anchor)?;
            let merged = merge_tokens(&gathered, config.merge_ratio)?;
            let y = corr_guided_attention(latent.token(anchor), &merged, d_k, config.mode)?;
            dst.copy_from_slice(&y);
            Ok(())
        })?;
    Ok(LatentVolume::new(shape, out)?.with_timestep(latent.timestep))
}
