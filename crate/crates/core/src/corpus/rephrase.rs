use std::collections::BTreeMap;

use thiserror::Error;

use crate::grammar::{tokenize, GrammarSchema, NodeIx, TreeBuilder};

use super::io::{Example, Source};

/// Per span node of the original tree: the token range a worker
/// highlighted in their rephrased sentence.
pub type SpanWordMap = BTreeMap<String, (usize, usize)>;

#[derive(Debug, Error)]
pub enum RephraseError {
    #[error("map is missing active span node `{0}`")]
    MissingSpan(String),
    #[error("map names `{0}`, which is not an active span node of the original tree")]
    ExtraSpan(String),
    #[error("node `{node}`: range ({s},{e}) invalid for rephrased sentence of {len} tokens")]
    BadRange {
        node: String,
        s: usize,
        e: usize,
        len: usize,
    },
}

/// Transfers the original tree onto a rephrased sentence: structure,
/// activations, and categorical labels are kept; each span node's range
/// is replaced by the highlighted range from `map`.
pub fn substitute_rephrase_spans(
    original: &Example,
    rephrased_sentence: &str,
    map: &SpanWordMap,
    schema: &GrammarSchema,
) -> Result<Example, RephraseError> {
    let sentence = tokenize(rephrased_sentence);
    let len = sentence.len();

    let active_spans: Vec<NodeIx> = schema
        .node_indices()
        .filter(|&n| original.tree.span(n).is_some())
        .collect();
    for key in map.keys() {
        let ok = schema
            .lookup(key)
            .map(|n| active_spans.contains(&n))
            .unwrap_or(false);
        if !ok {
            return Err(RephraseError::ExtraSpan(key.clone()));
        }
    }

    let mut builder = TreeBuilder::new(schema);
    for n in schema.node_indices() {
        if !original.tree.is_active(n) {
            continue;
        }
        builder.activate_ix(n);
        if let Some(l) = original.tree.label(n) {
            builder.set_label_ix(n, l);
        }
        if original.tree.span(n).is_some() {
            let id = schema.id(n);
            let &(s, e) = map
                .get(id)
                .ok_or_else(|| RephraseError::MissingSpan(id.to_string()))?;
            if s > e || e >= len {
                return Err(RephraseError::BadRange {
                    node: id.to_string(),
                    s,
                    e,
                    len,
                });
            }
            builder.set_span_ix(n, s, e);
        }
    }
    Ok(Example {
        sentence,
        tree: builder.build(len),
        source: Source::Rephrase,
    })
}
