//! Evaluation: exact-match tree accuracy, per-node-kind
//! precision/recall/F1, and the three confusion-table procedures.

mod confusion;
mod metrics;

pub use confusion::{
    confusion_tables, CatConfusion, ConfusionTables, InternalConfusion, SpanConfusion,
    SpanOutcome, UNATTRIBUTED,
};
pub use metrics::{per_node_prf, tree_accuracy, EvalError, MetricsReport, Prf};
