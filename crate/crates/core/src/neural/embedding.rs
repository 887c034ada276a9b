use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::store::{NeuralError, ParamId, ParameterStore};
use super::tape::{Graph, NodeId};
use super::tensor::Tensor;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("embedding file line {0}: expected `token v1 v2 ...`")]
    BadLine(usize),
    #[error("embedding file line {line}: vector has {found} dims, expected {expected}")]
    RaggedVector {
        line: usize,
        found: usize,
        expected: usize,
    },
    #[error("embedding table would have zero width (no pretrained dims and no free dims)")]
    ZeroWidth,
    #[error(transparent)]
    Store(#[from] NeuralError),
}

/// Pretrained word vectors parsed from the plain-text format: one token
/// per line, token followed by its floats, whitespace separated.
#[derive(Debug, Clone)]
pub struct PretrainedVectors {
    pub dim: usize,
    pub vectors: HashMap<String, Vec<f64>>,
}

impl PretrainedVectors {
    pub fn parse(text: &str) -> Result<Self, EmbeddingError> {
        let mut dim = None;
        let mut vectors = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let token = parts.next().ok_or(EmbeddingError::BadLine(i + 1))?;
            let vec: Result<Vec<f64>, _> = parts.map(str::parse::<f64>).collect();
            let vec = vec.map_err(|_| EmbeddingError::BadLine(i + 1))?;
            if vec.is_empty() {
                return Err(EmbeddingError::BadLine(i + 1));
            }
            match dim {
                None => dim = Some(vec.len()),
                Some(d) if d != vec.len() => {
                    return Err(EmbeddingError::RaggedVector {
                        line: i + 1,
                        found: vec.len(),
                        expected: d,
                    })
                }
                _ => {}
            }
            vectors.insert(token.to_string(), vec);
        }
        Ok(PretrainedVectors {
            dim: dim.unwrap_or(0),
            vectors,
        })
    }

    /// Deterministic stand-in for real pretrained vectors: a unit-scale
    /// Gaussian row per token, seeded by the token's hash. Frozen like
    /// any other pretrained table.
    pub fn hashed_random(tokens: &[String], dim: usize, seed: u64) -> Self {
        use rand::SeedableRng;
        let mut vectors = HashMap::new();
        for t in tokens {
            let mut rng = ChaCha8Rng::seed_from_u64(crate::derive_seed(
                seed,
                &[crate::fnv64(t.as_bytes())],
            ));
            let v: Vec<f64> = (0..dim).map(|_| gaussian(&mut rng) * 0.3).collect();
            vectors.insert(t.clone(), v);
        }
        PretrainedVectors { dim, vectors }
    }
}

fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller.
    let u1: f64 = rng.gen::<f64>().max(1e-12);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

pub const UNK_TOKEN: &str = "<unk>";

/// Token embeddings: a frozen pretrained part (possibly zero-width) and a
/// learnable free part initialized to zero. Row 0 is the unknown token;
/// out-of-vocabulary tokens and word-dropout casualties map there.
#[derive(Debug)]
pub struct EmbeddingTable {
    vocab: Vec<String>,
    index: HashMap<String, usize>,
    pretrained: Tensor,
    d_free: usize,
    free: Option<ParamId>,
}

/// Vocabulary metadata stored in checkpoints.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddingMeta {
    pub vocab: Vec<String>,
    pub d_pre: usize,
    pub d_free: usize,
    pub pretrained_bits: Vec<u64>,
}

impl EmbeddingTable {
    /// Builds the table for a corpus vocabulary. `tokens` may repeat and
    /// in any order; the stored vocabulary is sorted and deduplicated
    /// with `<unk>` first. Vocabulary tokens missing from `pretrained`
    /// get a zero pretrained row.
    pub fn build(
        tokens: impl IntoIterator<Item = String>,
        pretrained: Option<&PretrainedVectors>,
        d_free: usize,
        store: &mut ParameterStore,
    ) -> Result<Self, EmbeddingError> {
        let d_pre = pretrained.map(|p| p.dim).unwrap_or(0);
        if d_pre + d_free == 0 {
            return Err(EmbeddingError::ZeroWidth);
        }
        let mut vocab: Vec<String> = tokens.into_iter().filter(|t| t != UNK_TOKEN).collect();
        vocab.sort();
        vocab.dedup();
        vocab.insert(0, UNK_TOKEN.to_string());
        let index: HashMap<String, usize> = vocab
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        let mut table = Tensor::zeros(vocab.len(), d_pre.max(1));
        if let Some(p) = pretrained {
            for (i, t) in vocab.iter().enumerate() {
                if let Some(v) = p.vectors.get(t) {
                    table.row_mut(i).copy_from_slice(v);
                }
            }
        }
        if d_pre == 0 {
            table = Tensor::zeros(vocab.len(), 0);
        }
        let free = if d_free > 0 {
            Some(store.register("embed.free", Tensor::zeros(vocab.len(), d_free))?)
        } else {
            None
        };
        Ok(EmbeddingTable {
            vocab,
            index,
            pretrained: table,
            d_free,
            free,
        })
    }

    /// Restores a table from checkpoint metadata. The free part must be
    /// registered into `store` before parameters are restored over it.
    pub fn from_meta(meta: EmbeddingMeta, store: &mut ParameterStore) -> Result<Self, EmbeddingError> {
        let v = meta.vocab.len();
        let data: Vec<f64> = meta.pretrained_bits.iter().map(|&b| f64::from_bits(b)).collect();
        let pretrained = Tensor::from_vec(v, meta.d_pre, data);
        let index = meta
            .vocab
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        let free = if meta.d_free > 0 {
            Some(store.register("embed.free", Tensor::zeros(v, meta.d_free))?)
        } else {
            None
        };
        Ok(EmbeddingTable {
            vocab: meta.vocab,
            index,
            pretrained,
            d_free: meta.d_free,
            free,
        })
    }

    pub fn to_meta(&self) -> EmbeddingMeta {
        EmbeddingMeta {
            vocab: self.vocab.clone(),
            d_pre: self.d_pre(),
            d_free: self.d_free,
            pretrained_bits: self.pretrained.as_slice().iter().map(|v| v.to_bits()).collect(),
        }
    }

    pub fn vocab_len(&self) -> usize {
        self.vocab.len()
    }

    pub fn d_pre(&self) -> usize {
        if self.pretrained.is_empty() {
            0
        } else {
            self.pretrained.cols()
        }
    }

    pub fn d_free(&self) -> usize {
        self.d_free
    }

    pub fn input_dim(&self) -> usize {
        self.d_pre() + self.d_free
    }

    pub fn free_param(&self) -> Option<ParamId> {
        self.free
    }

    pub fn pretrained_rows(&self) -> &Tensor {
        &self.pretrained
    }

    pub fn row_index(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(0)
    }

    /// Embeds a sentence onto the tape: one `(d_pre+d_free, 1)` node per
    /// token. With `training` set, each token is independently replaced
    /// by the unknown row with probability `word_dropout`.
    pub fn embed<R: Rng>(
        &self,
        graph: &mut Graph,
        tokens: &[String],
        word_dropout: f64,
        rng: &mut R,
        training: bool,
    ) -> Vec<NodeId> {
        tokens
            .iter()
            .map(|t| {
                let mut row = self.row_index(t);
                if training && word_dropout > 0.0 && rng.gen::<f64>() < word_dropout {
                    row = 0;
                }
                self.embed_row(graph, row)
            })
            .collect()
    }

    /// Value-level embedding: one row of width `d_pre + d_free` per
    /// token, with word dropout applied as in [`Self::embed`].
    pub fn embed_values<R: Rng>(
        &self,
        store: &ParameterStore,
        tokens: &[String],
        word_dropout: f64,
        rng: &mut R,
        training: bool,
    ) -> Vec<Vec<f64>> {
        let mut graph = Graph::new(store.values());
        self.embed(&mut graph, tokens, word_dropout, rng, training)
            .into_iter()
            .map(|n| graph.value(n).as_slice().to_vec())
            .collect()
    }

    fn embed_row(&self, graph: &mut Graph, row: usize) -> NodeId {
        match (self.d_pre() > 0, self.free) {
            (true, Some(free)) => {
                let pre = graph.input(Tensor::vector(self.pretrained.row(row).to_vec()));
                let fr = graph.gather_row(free, row);
                graph.concat(pre, fr)
            }
            (true, None) => graph.input(Tensor::vector(self.pretrained.row(row).to_vec())),
            (false, Some(free)) => graph.gather_row(free, row),
            (false, None) => unreachable!("zero-width table rejected at construction"),
        }
    }
}
