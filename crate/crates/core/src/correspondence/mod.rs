//! Token correspondence across frames: similarity blocks, windowing,
//! top-K selection, the chained sliding-window tracer and its unwindowed
//! scalar oracle.

mod map;
mod reference;
mod similarity;
mod topk;
mod trace;
mod window;

pub use map::{CorrespondenceMap, WindowSize};
pub use reference::full_reference_trajectories;
pub use similarity::{
    dot, similarity_adjacent, similarity_block, similarity_full, SimilarityBlock, SimilarityMatrix,
    DEFAULT_FULL_TOKEN_CAP,
};
pub use topk::top_k_argmax;
pub use trace::{trace_trajectories, trace_trajectories_instrumented, TraceStats};
pub use window::{clamp_span, window_crop, WindowRect, WindowView};
