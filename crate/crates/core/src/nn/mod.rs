//! Minimal transformer building blocks on candle tensors.

mod attention;
mod layers;
mod params;

pub use attention::{
    biased_attention, softmax_last, AttentionOutput, BiasPlacement, MultiHeadAttention, PartAdjacency, RelativeBias,
    TransformerBlock,
};
pub use layers::{sinusoidal_embedding, FeedForward, LayerNorm, Linear};
pub use params::{ParamBuilder, ParamStore};
