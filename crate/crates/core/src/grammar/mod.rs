//! The action-tree grammar as data.
//!
//! A grammar is a rooted tree of nodes of three kinds: *internal* nodes
//! group arguments, *categorical* leaves pick one label from a fixed
//! vocabulary, and *span* leaves select an inclusive token range of the
//! input sentence. A parse ([`ActionTree`]) assigns each node an
//! activation bit plus, for active leaves, a label or range. The active
//! set is closed under the parent relation: a node can only be active if
//! its parent is.

mod schema;
mod serial;
mod tokenize;
mod tree;

pub mod random;

pub use random::random_tree;
pub use schema::{GrammarSchema, NodeIx, NodeKind, NodeSpec, SchemaError};
pub use serial::{deserialize_tree, serialize_tree, TreeDocError};
pub use tokenize::tokenize;
pub use tree::{
    tree_equal, tree_with_action, ActionTree, TreeBuilder, TreeBuildError, ValidationReport,
    Violation, ViolationKind,
};
