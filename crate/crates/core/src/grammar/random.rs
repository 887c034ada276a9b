//! Random valid trees, used by fuzz tests and the decoding oracles.

use rand::Rng;

use super::schema::{GrammarSchema, NodeIx, NodeKind};
use super::tree::{ActionTree, TreeBuilder};

/// Samples a valid tree over `schema` for a sentence of `sentence_length`
/// tokens (must be ≥ 1). The root and discriminator are always active;
/// every other node activates below its parent with probability
/// `branch_p`. Active leaves get uniform labels / uniform ordered spans.
pub fn random_tree<R: Rng>(
    schema: &GrammarSchema,
    sentence_length: usize,
    branch_p: f64,
    rng: &mut R,
) -> ActionTree {
    assert!(sentence_length >= 1, "random trees need at least one token");
    let mut builder = TreeBuilder::new(schema);
    let mut stack: Vec<NodeIx> = vec![schema.root()];
    while let Some(n) = stack.pop() {
        for &c in schema.children(n) {
            let forced = Some(c) == schema.discriminator();
            if !forced && !rng.gen_bool(branch_p) {
                continue;
            }
            match schema.kind(c) {
                NodeKind::Internal => {
                    builder.activate_ix(c);
                    stack.push(c);
                }
                NodeKind::Categorical => {
                    let l = rng.gen_range(0..schema.vocab(c).len()) as u32;
                    builder.set_label_ix(c, l);
                }
                NodeKind::Span => {
                    let s = rng.gen_range(0..sentence_length);
                    let e = rng.gen_range(s..sentence_length);
                    builder.set_span_ix(c, s, e);
                }
            }
        }
    }
    builder.build(sentence_length)
}
