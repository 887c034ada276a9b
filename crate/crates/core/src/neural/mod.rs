//! Minimal self-contained differentiable-computation layer.
//!
//! Everything is `f64`. Forward passes build a [`Graph`] (a tape of
//! tensor-granularity operations over parameters held in a
//! [`ParameterStore`]); `backward` walks the tape in reverse and
//! accumulates parameter gradients. There is exactly one forward
//! implementation: training, decoding, and the public value-level ops all
//! run through the same tape, so the finite-difference checker validates
//! the whole stack.

mod attention;
mod checkpoint;
mod embedding;
mod encoder;
mod gradcheck;
mod store;
mod tape;
mod tensor;

pub use attention::{attend_values, AttentionParams, AttentionTrace};
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError, CheckpointFile};
pub use embedding::{EmbeddingError, EmbeddingMeta, EmbeddingTable, PretrainedVectors};
pub use encoder::{encode_sentence_values, EncoderError, EncoderParams, GruCellParams};
pub use gradcheck::{grad_check, GradCheckReport};
pub use store::{NeuralError, ParamId, ParameterStore};
pub use tape::{Graph, NodeId};
pub use tensor::Tensor;
