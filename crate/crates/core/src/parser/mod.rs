//! The tree parsers: three node-representation variants over a shared
//! encoder, per-node prediction heads, the masked tree log-likelihood,
//! and greedy/beam decoding in DFS order.

mod decode;
mod loss;
mod model;
mod train;

pub use decode::{beam_decode, greedy_decode, DecodeResult, NodeDiagnostics};
pub use loss::{tree_log_likelihood, LossError, NodeForward};
pub use model::{ModelDims, ModelError, ParserModel, Variant};
pub use train::{
    evaluate_accuracy, train_parser, Hyperparams, TrainConfig, TrainError, TrainLogEntry,
    TrainReport,
};
