//! Correspondence engine for temporally consistent video editing.
//!
//! Given an N×H×W×d feature volume (one d-dimensional token per spatial
//! position per frame), [`correspondence::trace_trajectories`] finds, for
//! every token, its K most similar tokens in every other frame by chaining
//! top-1 matches through l×l windows in adjacent frames. The
//! [`attention`] module uses those maps to gather, merge and attend over
//! corresponding tokens of a latent volume, and [`bench`] counts the
//! arithmetic the search performs.
//!
//! Volumes and maps are stored in small little-endian binary formats, see
//! [`format`].

pub mod attention;
pub mod bench;
pub mod correspondence;
pub mod error;
pub mod fixture;
pub mod format;
pub mod volume;

pub use correspondence::{trace_trajectories, CorrespondenceMap, WindowSize};
pub use error::{CoveError, Result};
pub use volume::{FeatureVolume, LatentVolume, Shape, TokenCoord};
