use thiserror::Error;

use crate::grammar::{tree_equal, ActionTree, GrammarSchema};

/// Three annotations of one sentence from distinct annotators.
#[derive(Debug, Clone)]
pub struct AnnotationTriple {
    pub sentence: Vec<String>,
    pub trees: [ActionTree; 3],
}

#[derive(Debug, Error)]
pub enum TripleError {
    #[error("annotation {index} does not validate: node `{node}`: {message}")]
    Invalid {
        index: usize,
        node: String,
        message: String,
    },
}

impl AnnotationTriple {
    pub fn new(
        sentence: Vec<String>,
        trees: [ActionTree; 3],
        schema: &GrammarSchema,
    ) -> Result<Self, TripleError> {
        for (i, t) in trees.iter().enumerate() {
            let report = t.clone().with_sentence_length(sentence.len()).validate(schema);
            if let Some(v) = report.violations.first() {
                return Err(TripleError::Invalid {
                    index: i,
                    node: v.node.clone(),
                    message: v.message.clone(),
                });
            }
        }
        Ok(AnnotationTriple { sentence, trees })
    }
}

/// Keeps a sentence only when at least two of its three annotations match
/// exactly; returns the majority tree, or `None` when all three differ.
pub fn agreement_filter(triple: &AnnotationTriple) -> Option<ActionTree> {
    let [a, b, c] = &triple.trees;
    if tree_equal(a, b) || tree_equal(a, c) {
        Some(a.clone())
    } else if tree_equal(b, c) {
        Some(b.clone())
    } else {
        None
    }
}
