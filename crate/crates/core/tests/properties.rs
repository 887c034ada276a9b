//! Property tests for the grammar-level invariants.

use arbor_core::corpus::{agreement_filter, AnnotationTriple};
use arbor_core::grammar::{
    deserialize_tree, random_tree, serialize_tree, tokenize, tree_equal, GrammarSchema,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn schema() -> &'static GrammarSchema {
    use std::sync::OnceLock;
    static SCHEMA: OnceLock<GrammarSchema> = OnceLock::new();
    SCHEMA.get_or_init(|| GrammarSchema::load(arbor_core::REFERENCE_SCHEMA_JSON).unwrap())
}

proptest! {
    /// Serialization round trip is the identity on valid trees, and
    /// canonical documents are a fixed point of deserialize∘serialize.
    #[test]
    fn round_trip_identity(seed in any::<u64>(), len in 1usize..16, p in 0.05f64..0.95) {
        let s = schema();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tree = random_tree(s, len, p, &mut rng);
        let doc = serialize_tree(&tree, s).unwrap();
        let back = deserialize_tree(&doc, s).unwrap();
        prop_assert!(tree_equal(&back, &tree));
        let doc2 = serialize_tree(&back.with_sentence_length(len), s).unwrap();
        prop_assert_eq!(doc, doc2);
    }

    /// Random trees respect activation closure by construction.
    #[test]
    fn random_trees_are_closed_under_parents(seed in any::<u64>(), len in 1usize..12) {
        let s = schema();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tree = random_tree(s, len, 0.5, &mut rng);
        prop_assert!(tree.validate(s).ok());
        for n in s.node_indices() {
            if tree.is_active(n) {
                if let Some(parent) = s.parent(n) {
                    prop_assert!(tree.is_active(parent));
                }
            }
        }
    }

    /// Tokenization is idempotent: retokenizing the joined tokens changes
    /// nothing.
    #[test]
    fn tokenize_idempotent(input in "\\PC{0,40}") {
        let once = tokenize(&input);
        let twice = tokenize(&once.join(" "));
        prop_assert_eq!(once, twice);
    }

    /// Tree equality is an equivalence relation: reflexive across random
    /// trees, symmetric and transitive across triples.
    #[test]
    fn tree_equal_is_an_equivalence(seed in any::<u64>()) {
        let s = schema();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_tree(s, 6, 0.5, &mut rng);
        let b = random_tree(s, 6, 0.5, &mut rng);
        let c = random_tree(s, 6, 0.5, &mut rng);
        prop_assert!(tree_equal(&a, &a));
        prop_assert_eq!(tree_equal(&a, &b), tree_equal(&b, &a));
        if tree_equal(&a, &b) && tree_equal(&b, &c) {
            prop_assert!(tree_equal(&a, &c));
        }
    }

    /// The agreement filter does not depend on annotator order.
    #[test]
    fn agreement_filter_is_permutation_invariant(seed in any::<u64>(), perm in 0usize..6) {
        let s = schema();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let trees = [
            random_tree(s, 4, 0.4, &mut rng),
            random_tree(s, 4, 0.4, &mut rng),
            random_tree(s, 4, 0.4, &mut rng),
        ];
        let orders = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let base = AnnotationTriple {
            sentence: vec!["w".into(); 4],
            trees: trees.clone(),
        };
        let [i, j, k] = orders[perm];
        let permuted = AnnotationTriple {
            sentence: vec!["w".into(); 4],
            trees: [trees[i].clone(), trees[j].clone(), trees[k].clone()],
        };
        match (agreement_filter(&base), agreement_filter(&permuted)) {
            (Some(x), Some(y)) => prop_assert!(tree_equal(&x, &y)),
            (None, None) => {}
            other => prop_assert!(false, "permutation changed outcome: {:?}", other.0.is_some()),
        }
    }
}
