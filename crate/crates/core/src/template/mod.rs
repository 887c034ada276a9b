//! Template-based corpus synthesis.
//!
//! A template object links an atomic game concept to the ways it can be
//! said: each realization pairs a surface fragment with a tree fragment
//! (categorical labels, span placeholders, explicit activations). A
//! template is an ordered slot sequence of objects; sampling one
//! realization per slot and concatenating yields a sentence, and
//! composing the fragments (with span placeholders resolved to the
//! emitting fragment's token range) yields its action tree.

mod library;
mod noop;
mod splits;

pub use library::{
    GeneratedExample, Realization, Template, TemplateError, TemplateLibrary, TemplateObject,
};
pub use noop::{sample_noop, NoopCorpus, NoopError};
pub use splits::{generate_examples, generate_splits, GenerateConfig};
