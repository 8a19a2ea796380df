//! Cross-attention token pruning.
//!
//! Query tokens of a multimodal bridge are scored by rank votes cast by
//! every image token in every cross-attention head and layer, then the
//! lowest-scoring fraction is pruned. The crate also carries two baseline
//! scorers, a seeded toy attention generator, a small binary tensor format
//! and the `catp` command-line tool.

pub mod analysis;
pub mod attnio;
pub mod baselines;
pub mod cli;
pub mod error;
pub mod layers;
pub mod report;
pub mod selection;
pub mod tensor;
pub mod toymodel;
pub mod voting;

pub use error::{CatpError, Result};
pub use layers::LayerSelection;
pub use selection::{keep_count, prune, select_tokens, PruneDecision};
pub use tensor::{AnyTensor, AttnTensor, EmbeddingMatrix, SelfAttnTensor, TensorKind};
pub use voting::{importance, rank_points, ImageWeights, ImportanceVector, VotePoints};
