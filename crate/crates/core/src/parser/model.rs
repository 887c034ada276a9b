use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grammar::{GrammarSchema, NodeIx, NodeKind};
use crate::neural::{
    AttentionParams, EmbeddingTable, EncoderParams, Graph, GruCellParams, NeuralError, NodeId,
    ParamId, ParameterStore, PretrainedVectors, Tensor,
};

/// Which node-representation function the model uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    /// Each node attends over the sentence independently.
    Independent,
    /// Recurrent decoder over siblings; the recurrent input is the node's
    /// input embedding concatenated with the parent state.
    Seq2Tree,
    /// Seq2Tree with the node representation added to the recurrent
    /// input, tying the tree-side recurrence to the sentence.
    SentenceRec,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Independent, Variant::Seq2Tree, Variant::SentenceRec];

    pub fn is_recurrent(self) -> bool {
        !matches!(self, Variant::Independent)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Independent => "independent",
            Variant::Seq2Tree => "seq2tree",
            Variant::SentenceRec => "sentencerec",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "independent" => Ok(Variant::Independent),
            "seq2tree" => Ok(Variant::Seq2Tree),
            "sentencerec" => Ok(Variant::SentenceRec),
            other => Err(format!(
                "unknown variant `{other}` (expected independent, seq2tree, or sentencerec)"
            )),
        }
    }
}

/// Model widths. `d` is the shared hidden width, `heads` the attention
/// head count, `d_free` the learnable embedding width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub d: usize,
    pub heads: usize,
    pub d_free: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        // Desk-scale defaults; larger widths (d=256) stay available
        // through configuration.
        ModelDims {
            d: 64,
            heads: 2,
            d_free: 8,
        }
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Embedding(#[from] crate::neural::EmbeddingError),
    #[error("checkpoint: {0}")]
    Checkpoint(#[from] crate::neural::CheckpointError),
    #[error("checkpoint metadata: {0}")]
    Meta(String),
    #[error("checkpoint was trained on a different schema (digest {ckpt:016x} vs {ours:016x})")]
    SchemaMismatch { ckpt: u64, ours: u64 },
}

/// Per-node parameters: query vector, recurrent input embedding, and the
/// prediction head for the node's kind.
pub(crate) struct NodeParams {
    /// Query vector v_n.
    pub v: ParamId,
    /// Recurrent input rows: one per label for categorical nodes, a
    /// single row otherwise. Present only for recurrent variants.
    pub v2: Option<ParamId>,
    /// Activation head p_n.
    pub p: ParamId,
    pub head: HeadParams,
}

pub(crate) enum HeadParams {
    Internal,
    Categorical { mc: ParamId },
    Span { ms: ParamId, me: ParamId },
}

/// Checkpoint metadata: everything needed to rebuild the model before
/// restoring parameters.
#[derive(Debug, Serialize, Deserialize)]
pub struct ModelMeta {
    pub variant: Variant,
    pub dims: ModelDims,
    pub schema_digest: u64,
    pub embedding: crate::neural::EmbeddingMeta,
    pub config_digest: String,
    pub extra: serde_json::Value,
}

/// One of the three parsers: encoder, attention, per-node query and head
/// parameters, and (for recurrent variants) the sibling GRU.
pub struct ParserModel {
    pub variant: Variant,
    pub dims: ModelDims,
    pub schema: Arc<GrammarSchema>,
    pub store: ParameterStore,
    pub(crate) embed: EmbeddingTable,
    pub(crate) encoder: EncoderParams,
    pub(crate) attn: AttentionParams,
    pub(crate) dec: Option<GruCellParams>,
    pub(crate) nodes: Vec<NodeParams>,
}

impl ParserModel {
    /// Builds a freshly initialized model. `vocab_tokens` is the training
    /// corpus vocabulary (duplicates fine); `pretrained` adds a frozen
    /// embedding block. Initialization is fully determined by `seed`.
    pub fn new(
        schema: Arc<GrammarSchema>,
        variant: Variant,
        dims: ModelDims,
        vocab_tokens: impl IntoIterator<Item = String>,
        pretrained: Option<&PretrainedVectors>,
        seed: u64,
    ) -> Result<Self, ModelError> {
        use rand::SeedableRng;
        let mut store = ParameterStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(crate::derive_seed(seed, &[0xA11]));
        let embed = EmbeddingTable::build(vocab_tokens, pretrained, dims.d_free, &mut store)?;
        let (encoder, attn, dec, nodes) =
            register_params(&schema, variant, dims, embed.input_dim(), &mut store, &mut rng)?;
        Ok(ParserModel {
            variant,
            dims,
            schema,
            store,
            embed,
            encoder,
            attn,
            dec,
            nodes,
        })
    }

    /// Rebuilds a model from checkpoint metadata + parameters.
    pub fn from_checkpoint(
        file: &crate::neural::CheckpointFile,
        schema: Arc<GrammarSchema>,
    ) -> Result<(Self, ModelMeta), ModelError> {
        use rand::SeedableRng;
        let meta: ModelMeta = serde_json::from_str(&file.meta_json)
            .map_err(|e| ModelError::Meta(e.to_string()))?;
        if meta.schema_digest != schema.digest() {
            return Err(ModelError::SchemaMismatch {
                ckpt: meta.schema_digest,
                ours: schema.digest(),
            });
        }
        let mut store = ParameterStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let embed = EmbeddingTable::from_meta(meta.embedding.clone(), &mut store)?;
        let (encoder, attn, dec, nodes) = register_params(
            &schema,
            meta.variant,
            meta.dims,
            embed.input_dim(),
            &mut store,
            &mut rng,
        )?;
        file.restore_into(&mut store).map_err(ModelError::Checkpoint)?;
        Ok((
            ParserModel {
                variant: meta.variant,
                dims: meta.dims,
                schema,
                store,
                embed,
                encoder,
                attn,
                dec,
                nodes,
            },
            meta,
        ))
    }

    pub fn meta(&self, config_digest: &str, extra: serde_json::Value) -> ModelMeta {
        ModelMeta {
            variant: self.variant,
            dims: self.dims,
            schema_digest: self.schema.digest(),
            embedding: self.embed.to_meta(),
            config_digest: config_digest.to_string(),
            extra,
        }
    }

    pub fn embedding(&self) -> &EmbeddingTable {
        &self.embed
    }

    /// Copies every parameter value from `other` (same variant layout
    /// required). Used by the variant-degeneration checks.
    pub fn copy_params_from(&mut self, other: &ParserModel) {
        assert_eq!(self.store.len(), other.store.len(), "param layout mismatch");
        for id in other.store.ids().collect::<Vec<_>>() {
            let name = other.store.name(id).to_string();
            let mine = self
                .store
                .id(&name)
                .unwrap_or_else(|| panic!("missing param {name}"));
            *self.store.value_mut(mine) = other.store.value(id).clone();
        }
    }
}

#[allow(clippy::type_complexity)]
fn register_params(
    schema: &GrammarSchema,
    variant: Variant,
    dims: ModelDims,
    input_dim: usize,
    store: &mut ParameterStore,
    rng: &mut ChaCha8Rng,
) -> Result<(EncoderParams, AttentionParams, Option<GruCellParams>, Vec<NodeParams>), ModelError> {
    let d = dims.d;
    let encoder = EncoderParams::register(store, input_dim, d, 2, rng)?;
    let attn = AttentionParams::register(store, "attn", d, dims.heads, rng)?;
    let dec = if variant.is_recurrent() {
        Some(GruCellParams::register(store, "dec", 2 * d, d, rng)?)
    } else {
        None
    };
    let mut nodes = Vec::with_capacity(schema.len());
    for n in schema.node_indices() {
        let id = schema.id(n);
        let v = store.register(&format!("node.{id}.v"), small_init(d, 1, rng))?;
        let v2 = if variant.is_recurrent() {
            let rows = match schema.kind(n) {
                NodeKind::Categorical => schema.vocab(n).len(),
                _ => 1,
            };
            Some(store.register(&format!("node.{id}.v2"), small_init_rows(rows, d, rng))?)
        } else {
            None
        };
        let p = store.register(&format!("head.{id}.p"), small_init(d, 1, rng))?;
        let head = match schema.kind(n) {
            NodeKind::Internal => HeadParams::Internal,
            NodeKind::Categorical => HeadParams::Categorical {
                mc: store.register(
                    &format!("head.{id}.mc"),
                    xavier_pub(schema.vocab(n).len(), d, rng),
                )?,
            },
            NodeKind::Span => HeadParams::Span {
                ms: store.register(&format!("head.{id}.ms"), xavier_pub(d, d, rng))?,
                me: store.register(&format!("head.{id}.me"), xavier_pub(d, d, rng))?,
            },
        };
        nodes.push(NodeParams { v, v2, p, head });
    }
    Ok((encoder, attn, dec, nodes))
}

fn small_init(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let bound = (1.0 / rows as f64).sqrt();
    Tensor::from_fn(rows, cols, |_, _| rng.gen_range(-bound..bound))
}

fn small_init_rows(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let bound = (1.0 / cols as f64).sqrt();
    Tensor::from_fn(rows, cols, |_, _| rng.gen_range(-bound..bound))
}

fn xavier_pub(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Tensor::from_fn(rows, cols, |_, _| rng.gen_range(-bound..bound))
}

/// The encoded sentence: per-token state nodes stacked into a `(T,d)`
/// matrix node.
pub(crate) struct EncodedSentence {
    pub h_stack: NodeId,
}

/// Borrowed view of everything a forward traversal needs, separated from
/// the store so gradients can be written while the graph is alive.
pub(crate) struct ForwardCtx<'m> {
    pub schema: &'m GrammarSchema,
    pub variant: Variant,
    pub embed: &'m EmbeddingTable,
    pub encoder: &'m EncoderParams,
    pub attn: &'m AttentionParams,
    pub dec: Option<&'m GruCellParams>,
    pub nodes: &'m [NodeParams],
}

/// Per-node prediction nodes on the tape.
pub(crate) struct NodeDistributions {
    pub r: NodeId,
    pub activation_logit: NodeId,
    pub label_log_probs: Option<NodeId>,
    pub start_log_probs: Option<NodeId>,
    pub end_log_probs: Option<NodeId>,
}

/// A decision made at one node during a traversal.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Decision {
    pub active: bool,
    pub label: Option<u32>,
}

/// Visitor driving one gold- or prediction-conditioned traversal.
pub(crate) trait TreeVisitor {
    fn visit(&mut self, g: &mut Graph, node: NodeIx, dists: &NodeDistributions) -> Decision;
}

impl ParserModel {
    pub(crate) fn ctx(&self) -> ForwardCtx<'_> {
        ForwardCtx {
            schema: &self.schema,
            variant: self.variant,
            embed: &self.embed,
            encoder: &self.encoder,
            attn: &self.attn,
            dec: self.dec.as_ref(),
            nodes: &self.nodes,
        }
    }
}

impl<'m> ForwardCtx<'m> {
    /// Embeds and encodes a sentence. Dropout masks (word dropout on the
    /// embedding lookup, inverted dropout on encoder states) are drawn
    /// from `rng` only when `training`.
    pub fn encode_sentence<R: Rng>(
        &self,
        g: &mut Graph,
        sentence: &[String],
        word_dropout: f64,
        dropout: f64,
        rng: &mut R,
        training: bool,
    ) -> Result<EncodedSentence, crate::neural::EncoderError> {
        let embedded = self.embed.embed(g, sentence, word_dropout, rng, training);
        let hs = self.encoder.encode(g, &embedded)?;
        let hs: Vec<NodeId> = if training && dropout > 0.0 {
            hs.into_iter()
                .map(|h| {
                    let keep = 1.0 / (1.0 - dropout);
                    let mask: Vec<f64> = (0..self.encoder.d)
                        .map(|_| if rng.gen::<f64>() < dropout { 0.0 } else { keep })
                        .collect();
                    g.dropout(h, mask)
                })
                .collect()
        } else {
            hs
        };
        let h_stack = g.stack_rows(&hs);
        Ok(EncodedSentence { h_stack })
    }

    /// The representation of `node` given the sibling-chain state. For
    /// the independent variant the state is ignored.
    pub(crate) fn node_repr(&self, g: &mut Graph, enc: &EncodedSentence, node: NodeIx, g_sib: Option<NodeId>) -> NodeId {
        let v = g.param_vec(self.nodes[node.0].v);
        let query = match (self.variant.is_recurrent(), g_sib) {
            (true, Some(state)) => g.add(v, state),
            _ => v,
        };
        let (out, _) = self.attn.attend(g, query, enc.h_stack);
        out
    }

    /// Prediction heads over one node representation.
    pub(crate) fn distributions(
        &self,
        g: &mut Graph,
        enc: &EncodedSentence,
        node: NodeIx,
        r: NodeId,
    ) -> NodeDistributions {
        let params = &self.nodes[node.0];
        let p = g.param_vec(params.p);
        let activation_logit = g.dot(r, p);
        let mut dists = NodeDistributions {
            r,
            activation_logit,
            label_log_probs: None,
            start_log_probs: None,
            end_log_probs: None,
        };
        match &params.head {
            HeadParams::Internal => {}
            HeadParams::Categorical { mc } => {
                let logits = g.matvec(*mc, r);
                dists.label_log_probs = Some(g.log_softmax(logits));
            }
            HeadParams::Span { ms, me } => {
                let qs = g.matvec_t(*ms, r);
                let s_logits = g.rows_dot(enc.h_stack, qs);
                dists.start_log_probs = Some(g.log_softmax(s_logits));
                let qe = g.matvec_t(*me, r);
                let e_logits = g.rows_dot(enc.h_stack, qe);
                dists.end_log_probs = Some(g.log_softmax(e_logits));
            }
        }
        dists
    }

    /// The recurrent state update after an *active* decision:
    /// `g_n = f_rec(g_sib, u ∘ g_parent)` where `u` is the node's input
    /// row (per decided label for categoricals), plus `r` for the
    /// sentence-recurrent variant.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn state_update(
        &self,
        g: &mut Graph,
        node: NodeIx,
        decision: Decision,
        r: NodeId,
        g_sib: NodeId,
        g_parent: NodeId,
        include_repr: bool,
    ) -> NodeId {
        let dec = self.dec.expect("recurrent variant");
        let v2 = self.nodes[node.0].v2.expect("recurrent variant");
        let row = decision.label.unwrap_or(0) as usize;
        let mut u = g.gather_row(v2, row);
        if include_repr {
            u = g.add(u, r);
        }
        let input = g.concat(u, g_parent);
        dec.step(g, input, g_sib)
    }

    /// Walks the tree in DFS order, deciding each node via `visitor` and
    /// skipping subtrees of inactive nodes. `include_repr` overrides the
    /// sentence-recurrent term (used by the variant-degeneration check);
    /// pass `None` for the variant's own behaviour.
    pub fn traverse(
        &self,
        g: &mut Graph,
        enc: &EncodedSentence,
        visitor: &mut dyn TreeVisitor,
        include_repr: Option<bool>,
    ) {
        let include_repr =
            include_repr.unwrap_or(matches!(self.variant, Variant::SentenceRec));
        let root = self.schema.root();
        if self.variant.is_recurrent() {
            let zero = g.zeros(self.attn.d);
            let r_root = self.node_repr(g, enc, root, Some(zero));
            let dists = self.distributions(g, enc, root, r_root);
            let decision = visitor.visit(g, root, &dists);
            if decision.active {
                let g_root =
                    self.state_update(g, root, decision, r_root, zero, zero, include_repr);
                self.walk_children(g, enc, root, g_root, visitor, include_repr);
            }
        } else {
            let r_root = self.node_repr(g, enc, root, None);
            let dists = self.distributions(g, enc, root, r_root);
            let decision = visitor.visit(g, root, &dists);
            if decision.active {
                self.walk_children_independent(g, enc, root, visitor);
            }
        }
    }

    fn walk_children(
        &self,
        g: &mut Graph,
        enc: &EncodedSentence,
        parent: NodeIx,
        g_parent: NodeId,
        visitor: &mut dyn TreeVisitor,
        include_repr: bool,
    ) {
        let mut g_sib = g.zeros(self.attn.d);
        for &child in self.schema.children(parent) {
            let r = self.node_repr(g, enc, child, Some(g_sib));
            let dists = self.distributions(g, enc, child, r);
            let decision = visitor.visit(g, child, &dists);
            if decision.active {
                let g_child =
                    self.state_update(g, child, decision, r, g_sib, g_parent, include_repr);
                self.walk_children(g, enc, child, g_child, visitor, include_repr);
                g_sib = g_child;
            }
        }
    }

    fn walk_children_independent(
        &self,
        g: &mut Graph,
        enc: &EncodedSentence,
        parent: NodeIx,
        visitor: &mut dyn TreeVisitor,
    ) {
        for &child in self.schema.children(parent) {
            let r = self.node_repr(g, enc, child, None);
            let dists = self.distributions(g, enc, child, r);
            let decision = visitor.visit(g, child, &dists);
            if decision.active {
                self.walk_children_independent(g, enc, child, visitor);
            }
        }
    }
}
