//! The recommendation network: masks, encoder/decoder, heads, checkpoints.

mod checkpoint;
mod config;
mod history;
mod mask;
mod network;

pub use checkpoint::{Checkpoint, TrainingState, FORMAT_VERSION};
pub use config::ModelConfig;
pub use history::{TokenId, TurnedHistory};
pub use mask::{build_causal_mask, build_global_mask, build_local_mask, MaskMatrix, NEG};
pub use network::{
    attention_head, parameter_layout, AttentionParams, AttentionTrace, Decoded, EncodedHistory, MaskMode, Model,
    ModelParams, ParamSpec,
};
