//! Parsing natural-language agent commands into typed action trees.
//!
//! The crate is organized around the lifecycle of a parser:
//!
//! - [`grammar`] defines the action-tree grammar as data: node universe,
//!   tree construction and validation, canonical serialization, DFS order.
//! - [`template`] synthesizes paired (sentence, tree) corpora from a
//!   template library, plus NOOP examples drawn from a dialogue-line file.
//! - [`corpus`] reads and writes example files, remaps rephrase spans,
//!   filters annotation triples by agreement, and drives the mixed
//!   training sampler.
//! - [`neural`] is a small self-contained differentiable-computation
//!   layer: tensors, a reverse-mode tape, a bidirectional GRU encoder,
//!   multi-head attention, Adagrad, and a finite-difference grad checker.
//! - [`parser`] implements the three node-representation models
//!   (independent, sequence-to-tree, sentence-recurrent), the masked tree
//!   log-likelihood, and greedy/beam decoding in DFS order.
//! - [`eval`] computes tree accuracy, per-node-kind precision/recall/F1,
//!   and the three confusion-table procedures.

pub mod corpus;
pub mod eval;
pub mod grammar;
pub mod neural;
pub mod parser;
pub mod template;

pub use grammar::{
    ActionTree, GrammarSchema, NodeIx, NodeKind, NodeSpec, TreeBuilder, ValidationReport,
};

/// Reference grammar shipped with the crate.
pub const REFERENCE_SCHEMA_JSON: &str = include_str!("../assets/schema.json");
/// Reference template library shipped with the crate.
pub const REFERENCE_TEMPLATES_JSON: &str = include_str!("../assets/templates.json");
/// Small bundled utterance corpus for NOOP sampling (one line per utterance).
pub const NOOP_LINES: &str = include_str!("../assets/noop_lines.txt");
/// Approximate target action distributions for the three human-data settings.
pub const DIST_REPHRASES: &str = include_str!("../assets/dist_rephrases.txt");
pub const DIST_PROMPTS: &str = include_str!("../assets/dist_prompts.txt");
pub const DIST_INTERACTIVE: &str = include_str!("../assets/dist_interactive.txt");

/// 64-bit FNV-1a digest, used to fingerprint configs and schemas so output
/// artifacts can record what produced them.
pub fn fnv64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100_0000_01b3);
    }
    h
}

/// Hex form of [`fnv64`], the digest format embedded in output files.
pub fn digest_hex(bytes: &[u8]) -> String {
    format!("{:016x}", fnv64(bytes))
}

/// Derives an independent RNG seed from a base seed and a path of indices.
/// Used to give each generated example / training step its own stream so
/// output is deterministic regardless of evaluation order.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    let mut x = base ^ 0x9e37_79b9_7f4a_7c15;
    for &p in path {
        x ^= p.wrapping_add(0x9e37_79b9_7f4a_7c15);
        x = splitmix64(x);
    }
    splitmix64(x)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
