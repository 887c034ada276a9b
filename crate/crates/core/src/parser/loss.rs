use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::grammar::{ActionTree, NodeIx};
use crate::neural::{Graph, NodeId};

use super::model::{Decision, ForwardCtx, NodeDistributions, ParserModel, TreeVisitor};

#[derive(Debug, Error)]
pub enum LossError {
    #[error("gold tree does not validate: node `{node}`: {message}")]
    InvalidGold { node: String, message: String },
    #[error(transparent)]
    Encode(#[from] crate::neural::EncoderError),
}

/// Gold-conditioned visitor: accumulates per-node log-likelihood terms
/// (Bernoulli activation terms for every visited node, label/span terms
/// for active leaves) and steers the traversal along the gold tree.
struct GoldVisitor<'t> {
    gold: &'t ActionTree,
    smoothing: f64,
    terms: Vec<NodeId>,
}

impl TreeVisitor for GoldVisitor<'_> {
    fn visit(&mut self, g: &mut Graph, node: NodeIx, dists: &NodeDistributions) -> Decision {
        let active = self.gold.is_active(node);
        let term = if active {
            g.log_sigmoid(dists.activation_logit)
        } else {
            let neg = g.affine(dists.activation_logit, -1.0, 0.0);
            g.log_sigmoid(neg)
        };
        self.terms.push(term);
        if active {
            if let Some(lp) = dists.label_log_probs {
                let gold_label = self.gold.label(node).expect("validated gold") as usize;
                self.terms.push(smoothed_pick(g, lp, gold_label, self.smoothing));
            }
            if let (Some(sp), Some(ep)) = (dists.start_log_probs, dists.end_log_probs) {
                let (s, e) = self.gold.span(node).expect("validated gold");
                self.terms.push(smoothed_pick(g, sp, s as usize, self.smoothing));
                self.terms.push(smoothed_pick(g, ep, e as usize, self.smoothing));
            }
        }
        Decision {
            active,
            label: self.gold.label(node),
        }
    }
}

/// `(1-s)·logp[gold] + (s/V)·Σ_c logp[c]` — plain pick at `s = 0`.
fn smoothed_pick(g: &mut Graph, log_probs: NodeId, gold: usize, smoothing: f64) -> NodeId {
    let picked = g.pick(log_probs, gold);
    if smoothing == 0.0 {
        return picked;
    }
    let v = g.value(log_probs).rows() as f64;
    let main = g.affine(picked, 1.0 - smoothing, 0.0);
    let total = g.sum(log_probs);
    let spread = g.affine(total, smoothing / v, 0.0);
    g.add(main, spread)
}

/// Builds the (optionally smoothed) log-likelihood of `gold` on the tape
/// and returns its node. Dropout is the caller's choice via the encode
/// arguments.
#[allow(clippy::too_many_arguments)]
pub(crate) fn build_log_likelihood<R: Rng>(
    ctx: &ForwardCtx<'_>,
    g: &mut Graph,
    sentence: &[String],
    gold: &ActionTree,
    smoothing: f64,
    word_dropout: f64,
    dropout: f64,
    rng: &mut R,
    training: bool,
) -> Result<NodeId, LossError> {
    let enc = ctx.encode_sentence(g, sentence, word_dropout, dropout, rng, training)?;
    let mut visitor = GoldVisitor {
        gold,
        smoothing,
        terms: Vec::new(),
    };
    ctx.traverse(g, &enc, &mut visitor, None);
    Ok(g.sum_terms(&visitor.terms))
}

fn check_gold(model: &ParserModel, gold: &ActionTree) -> Result<(), LossError> {
    let report = gold.validate(&model.schema);
    if let Some(v) = report.violations.first() {
        return Err(LossError::InvalidGold {
            node: v.node.clone(),
            message: v.message.clone(),
        });
    }
    Ok(())
}

/// Everything the model computed at one visited node during a
/// gold-conditioned forward pass.
#[derive(Debug, Clone)]
pub struct NodeForward {
    pub node: String,
    pub repr: Vec<f64>,
    pub activation_logit: f64,
    pub p_active: f64,
    pub label_log_probs: Option<Vec<f64>>,
    pub start_log_probs: Option<Vec<f64>>,
    pub end_log_probs: Option<Vec<f64>>,
}

struct TraceVisitor<'t> {
    gold: &'t ActionTree,
    schema: &'t crate::grammar::GrammarSchema,
    out: Vec<NodeForward>,
}

impl TreeVisitor for TraceVisitor<'_> {
    fn visit(&mut self, g: &mut Graph, node: NodeIx, dists: &NodeDistributions) -> Decision {
        let logit = g.scalar(dists.activation_logit);
        self.out.push(NodeForward {
            node: self.schema.id(node).to_string(),
            repr: g.value(dists.r).as_slice().to_vec(),
            activation_logit: logit,
            p_active: 1.0 / (1.0 + (-logit).exp()),
            label_log_probs: dists.label_log_probs.map(|n| g.value(n).as_slice().to_vec()),
            start_log_probs: dists.start_log_probs.map(|n| g.value(n).as_slice().to_vec()),
            end_log_probs: dists.end_log_probs.map(|n| g.value(n).as_slice().to_vec()),
        });
        Decision {
            active: self.gold.is_active(node),
            label: self.gold.label(node),
        }
    }
}

impl ParserModel {
    /// Gold-conditioned forward pass exposing per-node representations
    /// and prediction distributions, in visit (DFS) order. No dropout.
    ///
    /// `repr_in_recurrence` overrides whether the node representation is
    /// added to the recurrent input: `None` keeps the variant's own rule;
    /// `Some(false)` makes a sentence-recurrent model compute exactly the
    /// sequence-to-tree update.
    pub fn forward_trace(
        &self,
        sentence: &[String],
        gold: &ActionTree,
        repr_in_recurrence: Option<bool>,
    ) -> Result<Vec<NodeForward>, LossError> {
        check_gold(self, gold)?;
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ctx = self.ctx();
        let mut g = Graph::new(self.store.values());
        let enc = ctx.encode_sentence(&mut g, sentence, 0.0, 0.0, &mut rng, false)?;
        let mut visitor = TraceVisitor {
            gold,
            schema: &self.schema,
            out: Vec::new(),
        };
        ctx.traverse(&mut g, &enc, &mut visitor, repr_in_recurrence);
        Ok(visitor.out)
    }

    /// The encoder states `h_t` for one sentence, without dropout.
    pub fn encode_values(
        &self,
        sentence: &[String],
    ) -> Result<Vec<Vec<f64>>, crate::neural::EncoderError> {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ctx = self.ctx();
        let mut g = Graph::new(self.store.values());
        let enc = ctx.encode_sentence(&mut g, sentence, 0.0, 0.0, &mut rng, false)?;
        let h = g.value(enc.h_stack);
        Ok((0..h.rows()).map(|t| h.row(t).to_vec()).collect())
    }

    /// The attention parameters (their matrices live in the store).
    pub fn attention(&self) -> &crate::neural::AttentionParams {
        &self.attn
    }
}

/// The tree log-likelihood `L`: masked activation terms over all nodes
/// with an active parent, plus label terms for active categorical nodes
/// and start/end terms for active span nodes. Deterministic (no dropout,
/// no smoothing).
pub fn tree_log_likelihood(
    model: &ParserModel,
    sentence: &[String],
    gold: &ActionTree,
) -> Result<f64, LossError> {
    check_gold(model, gold)?;
    let ctx = model.ctx();
    let mut g = Graph::new(model.store.values());
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let loss =
        build_log_likelihood(&ctx, &mut g, sentence, gold, 0.0, 0.0, 0.0, &mut rng, false)?;
    Ok(g.scalar(loss))
}

impl ParserModel {
    /// Training objective for one example: `-L` with label smoothing,
    /// dropout and word dropout active. Gradients accumulate into the
    /// store; returns the loss value.
    pub fn loss_and_grad(
        &mut self,
        sentence: &[String],
        gold: &ActionTree,
        smoothing: f64,
        word_dropout: f64,
        dropout: f64,
        step_seed: u64,
    ) -> Result<f64, LossError> {
        {
            let report = gold.validate(&self.schema);
            if let Some(v) = report.violations.first() {
                return Err(LossError::InvalidGold {
                    node: v.node.clone(),
                    message: v.message.clone(),
                });
            }
        }
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(step_seed);
        let ParserModel {
            store,
            schema,
            embed,
            encoder,
            attn,
            dec,
            nodes,
            variant,
            ..
        } = self;
        let ctx = ForwardCtx {
            schema,
            variant: *variant,
            embed,
            encoder,
            attn,
            dec: dec.as_ref(),
            nodes,
        };
        let (values, grads) = store.split_grads();
        let mut g = Graph::new(values);
        let log_lik = build_log_likelihood(
            &ctx, &mut g, sentence, gold, smoothing, word_dropout, dropout, &mut rng, true,
        )?;
        let loss = g.affine(log_lik, -1.0, 0.0);
        g.backward(loss, grads);
        Ok(g.scalar(loss))
    }

    /// Runs the finite-difference gradient checker over every parameter
    /// against the deterministic loss `-L` (dropout off, smoothing off).
    pub fn grad_check(
        &mut self,
        sentence: &[String],
        gold: &ActionTree,
        epsilon: f64,
    ) -> Result<crate::neural::GradCheckReport, LossError> {
        {
            let report = gold.validate(&self.schema);
            if let Some(v) = report.violations.first() {
                return Err(LossError::InvalidGold {
                    node: v.node.clone(),
                    message: v.message.clone(),
                });
            }
        }
        use rand::SeedableRng;
        let ParserModel {
            store,
            schema,
            embed,
            encoder,
            attn,
            dec,
            nodes,
            variant,
            ..
        } = self;
        let ctx = ForwardCtx {
            schema,
            variant: *variant,
            embed,
            encoder,
            attn,
            dec: dec.as_ref(),
            nodes,
        };
        let forward = |s: &crate::neural::ParameterStore| {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let mut g = Graph::new(s.values());
            let log_lik = build_log_likelihood(
                &ctx, &mut g, sentence, gold, 0.0, 0.0, 0.0, &mut rng, false,
            )
            .expect("validated inputs");
            -g.scalar(log_lik)
        };
        let forward_backward = |s: &mut crate::neural::ParameterStore| {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let (values, grads) = s.split_grads();
            let mut g = Graph::new(values);
            let log_lik = build_log_likelihood(
                &ctx, &mut g, sentence, gold, 0.0, 0.0, 0.0, &mut rng, false,
            )
            .expect("validated inputs");
            let loss = g.affine(log_lik, -1.0, 0.0);
            g.backward(loss, grads);
            g.scalar(loss)
        };
        Ok(crate::neural::grad_check(
            store,
            forward,
            forward_backward,
            epsilon,
        ))
    }

    /// `-L` with smoothing but without dropout: the deterministic value
    /// the finite-difference gradient checker needs.
    pub fn loss_value(
        &self,
        sentence: &[String],
        gold: &ActionTree,
        smoothing: f64,
    ) -> Result<f64, LossError> {
        check_gold(self, gold)?;
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ctx = self.ctx();
        let mut g = Graph::new(self.store.values());
        let log_lik = build_log_likelihood(
            &ctx, &mut g, sentence, gold, smoothing, 0.0, 0.0, &mut rng, false,
        )?;
        Ok(-g.scalar(log_lik))
    }
}
