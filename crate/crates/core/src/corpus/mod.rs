//! Example corpora on disk and the machinery that feeds training.
//!
//! Corpus files are UTF-8, one example per line, `sentence<TAB>tree
//! document`; lines starting with `# ` carry provenance metadata and are
//! skipped on read. The mixed sampler alternates strictly between named
//! pools and, when a target action distribution is configured, draws an
//! action type first and then an unseen example of that type, reshuffling
//! each (pool, type) subset only when it is exhausted.

mod agreement;
mod dist;
mod io;
mod rephrase;
mod sampler;
mod stats;

pub use agreement::{agreement_filter, AnnotationTriple, TripleError};
pub use dist::{parse_distribution, DistError};
pub use io::{read_examples, write_examples, write_examples_with_header, CorpusError, Example, Source};
pub use rephrase::{substitute_rephrase_spans, RephraseError, SpanWordMap};
pub use sampler::{MixedSampler, SamplerError, SamplerSpec, SamplerState};
pub use stats::{action_frequency_stats, action_key, ActionHistogram};
