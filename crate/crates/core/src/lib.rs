//! Trajectory-aware attention for video super-resolution.
//!
//! Location maps track where every pixel of the current frame came from in
//! each past frame. Attention then compares a query token only with the
//! tokens along its own trajectory instead of every spatial token of every
//! past frame.

pub mod attention;
pub mod error;
pub mod motion;
pub mod pipeline;
pub mod tensor;
pub mod tokenize;
pub mod trajectory;

pub use attention::{attend, cosine_similarity, gather_keys_values, select, AttentionSelection};
pub use error::{Error, Result};
pub use motion::{block_match_flow, pool_flow, read_flo, write_flo, Flow};
pub use pipeline::metrics::{charbonnier, psnr, ssim, Psnr, SsimMode};
pub use pipeline::weights::{load_weights, save_weights, Tensor, WeightSet};
pub use pipeline::{run_sequence, Pipeline, PipelineConfig};
pub use tensor::{Coord, FeatureMap};
pub use tokenize::{cross_scale_tokenize, TokenGrid};
pub use trajectory::{oracle_track, LocationMap, LocationMapStack, Trajectory};
