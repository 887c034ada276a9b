use std::collections::HashMap;

use thiserror::Error;

use crate::grammar::{ActionTree, NodeIx, NodeKind, TreeBuilder};
use crate::neural::{Graph, NodeId};

use super::model::{
    Decision, EncodedSentence, ForwardCtx, NodeDistributions, ParserModel, TreeVisitor,
};

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error(transparent)]
    Encode(#[from] crate::neural::EncoderError),
}

/// Probabilities behind the decisions at one decoded node.
#[derive(Debug, Clone)]
pub struct NodeDiagnostics {
    pub node: String,
    pub p_active: f64,
    pub chosen_active: bool,
    /// (label, probability) for active categorical nodes.
    pub label: Option<(String, f64)>,
    /// (range, p_start, p_end) for active span nodes.
    pub span: Option<((usize, usize), f64, f64)>,
}

#[derive(Debug)]
pub struct DecodeResult {
    pub tree: ActionTree,
    /// Cumulative log-probability of the decision sequence.
    pub log_prob: f64,
    pub diagnostics: Vec<NodeDiagnostics>,
}

/// Greedy decoding in DFS order: activation threshold 0.5 (ties decode
/// active), argmax labels, start/end argmaxed independently and swapped
/// into order if needed. The root and the action-type discriminator are
/// always active.
pub fn greedy_decode(
    model: &ParserModel,
    sentence: &[String],
) -> Result<DecodeResult, DecodeError> {
    let ctx = model.ctx();
    let mut g = Graph::new(model.store.values());
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let enc = ctx.encode_sentence(&mut g, sentence, 0.0, 0.0, &mut rng, false)?;
    let mut visitor = GreedyVisitor {
        schema: &model.schema,
        forced: forced_nodes(model),
        builder: TreeBuilder::new(&model.schema),
        score: 0.0,
        diagnostics: Vec::new(),
    };
    ctx.traverse(&mut g, &enc, &mut visitor, None);
    let tree = visitor.builder.build(sentence.len());
    debug_assert!(tree.validate(&model.schema).ok());
    Ok(DecodeResult {
        tree,
        log_prob: visitor.score,
        diagnostics: visitor.diagnostics,
    })
}

fn forced_nodes(model: &ParserModel) -> Vec<bool> {
    let mut forced = vec![false; model.schema.len()];
    forced[model.schema.root().0] = true;
    if let Some(d) = model.schema.discriminator() {
        forced[d.0] = true;
    }
    forced
}

struct GreedyVisitor<'s> {
    schema: &'s crate::grammar::GrammarSchema,
    forced: Vec<bool>,
    builder: TreeBuilder<'s>,
    score: f64,
    diagnostics: Vec<NodeDiagnostics>,
}

impl TreeVisitor for GreedyVisitor<'_> {
    fn visit(&mut self, g: &mut Graph, node: NodeIx, dists: &NodeDistributions) -> Decision {
        let logit = g.scalar(dists.activation_logit);
        let log_p = stable_log_sigmoid(logit);
        let log_1mp = stable_log_sigmoid(-logit);
        let p = logit_to_p(logit);
        let active = self.forced[node.0] || log_p >= log_1mp;
        self.score += if active { log_p } else { log_1mp };
        let mut diag = NodeDiagnostics {
            node: self.schema.id(node).to_string(),
            p_active: p,
            chosen_active: active,
            label: None,
            span: None,
        };
        let mut label = None;
        if active {
            self.builder.activate_ix(node);
            if let Some(lp) = dists.label_log_probs {
                let values = g.value(lp).as_slice();
                let best = argmax(values);
                self.score += values[best];
                self.builder.set_label_ix(node, best as u32);
                label = Some(best as u32);
                diag.label = Some((
                    self.schema.vocab(node)[best].clone(),
                    values[best].exp(),
                ));
            }
            if let (Some(sp), Some(ep)) = (dists.start_log_probs, dists.end_log_probs) {
                let s_values = g.value(sp).as_slice();
                let e_values = g.value(ep).as_slice();
                let s_best = argmax(s_values);
                let e_best = argmax(e_values);
                self.score += s_values[s_best] + e_values[e_best];
                let (lo, hi) = (s_best.min(e_best), s_best.max(e_best));
                self.builder.set_span_ix(node, lo, hi);
                diag.span = Some(((lo, hi), s_values[s_best].exp(), e_values[e_best].exp()));
            }
        }
        self.diagnostics.push(diag);
        Decision { active, label }
    }
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn logit_to_p(logit: f64) -> f64 {
    if logit >= 0.0 {
        1.0 / (1.0 + (-logit).exp())
    } else {
        let e = logit.exp();
        e / (1.0 + e)
    }
}

fn stable_log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(1.0 + (-x).exp()).ln()
    } else {
        x - (1.0 + x.exp()).ln()
    }
}

/// Beam decoding in DFS order.
///
/// Hypotheses expand decision-by-decision (activation bits, labels, span
/// start/end pairs), pruned to the beam width by cumulative log-prob at
/// every level. To make the best score non-decreasing in `width` by
/// construction, a `width`-w call runs an internal widening ladder
/// (`1..=min(w,16)`, then powers of two, then `w`), pools every completed
/// hypothesis, dedupes identical trees keeping the best score, and
/// returns the top `width`. Widths up to 16 therefore nest exactly;
/// larger widths nest along the power-of-two ladder.
pub fn beam_decode(
    model: &ParserModel,
    sentence: &[String],
    width: usize,
) -> Result<Vec<(ActionTree, f64)>, DecodeError> {
    assert!(width >= 1, "beam width must be at least 1");
    let mut completed: Vec<Hyp> = Vec::new();
    for w in ladder(width) {
        let mut run = beam_run(model, sentence, w)?;
        completed.append(&mut run);
    }
    // Dedupe identical trees, keeping the best score.
    let mut best: HashMap<TreeKey, (usize, f64)> = HashMap::new();
    for (i, h) in completed.iter().enumerate() {
        let key = TreeKey {
            active: h.active.clone(),
            labels: h.labels.clone(),
            spans: h.spans.clone(),
        };
        match best.get(&key) {
            Some(&(_, s)) if s >= h.score => {}
            _ => {
                best.insert(key, (i, h.score));
            }
        }
    }
    let mut survivors: Vec<(usize, f64)> = best.into_values().collect();
    survivors.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    survivors.truncate(width);
    Ok(survivors
        .into_iter()
        .map(|(i, score)| {
            let h = &completed[i];
            let mut builder = TreeBuilder::new(&model.schema);
            for n in model.schema.node_indices() {
                if h.active[n.0] {
                    builder.activate_ix(n);
                }
                if let Some(l) = h.labels[n.0] {
                    builder.set_label_ix(n, l);
                }
                if let Some((s, e)) = h.spans[n.0] {
                    builder.set_span_ix(n, s as usize, e as usize);
                }
            }
            (builder.build(sentence.len()), score)
        })
        .collect())
}

fn ladder(width: usize) -> Vec<usize> {
    let mut runs: Vec<usize> = (1..=width.min(16)).collect();
    let mut w = 32;
    while w < width {
        runs.push(w);
        w *= 2;
    }
    if width > 16 {
        runs.push(width);
    }
    runs
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct TreeKey {
    active: Vec<bool>,
    labels: Vec<Option<u32>>,
    spans: Vec<Option<(u32, u32)>>,
}

/// One beam hypothesis: decided tree content, cumulative score, and the
/// DFS agenda still to process. States are node handles into the shared
/// per-run graph.
#[derive(Clone)]
struct Hyp {
    score: f64,
    order: u64,
    active: Vec<bool>,
    labels: Vec<Option<u32>>,
    spans: Vec<Option<(u32, u32)>>,
    agenda: Vec<Task>,
}

/// Where the next sibling continues after the current child resolves.
#[derive(Clone, Copy)]
struct Continuation {
    parent: NodeIx,
    child_pos: usize,
    g_parent: Option<NodeId>,
    g_sib: Option<NodeId>,
}

/// One pending decision. Every hypothesis consumes exactly one task per
/// beam level, mirroring greedy's decision granularity: activation bit,
/// then label, then span start, then span end.
#[derive(Clone, Copy)]
enum Task {
    /// Decide the activation of `children(parent)[child_pos]`.
    Child(Continuation),
    /// Decide the label of an already-active categorical node.
    Label { node: NodeIx, cont: Continuation },
    /// Decide the span start of an already-active span node.
    SpanStart { node: NodeIx, cont: Continuation },
    /// Decide the span end; `start` was chosen one level earlier.
    SpanEnd {
        node: NodeIx,
        start: u32,
        cont: Continuation,
    },
}

struct DistValues {
    r: NodeId,
    log_p: f64,
    log_1mp: f64,
    label_lp: Option<Vec<f64>>,
    start_lp: Option<Vec<f64>>,
    end_lp: Option<Vec<f64>>,
}

/// One standard level-synchronous beam run at a fixed width. Returns the
/// completed hypotheses.
fn beam_run(model: &ParserModel, sentence: &[String], width: usize) -> Result<Vec<Hyp>, DecodeError> {
    let ctx = model.ctx();
    let mut g = Graph::new(model.store.values());
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let enc = ctx.encode_sentence(&mut g, sentence, 0.0, 0.0, &mut rng, false)?;
    let schema = &model.schema;
    let forced = forced_nodes(model);
    let recurrent = model.variant.is_recurrent();
    let n_nodes = schema.len();

    let mut dist_cache: HashMap<(usize, usize), DistValues> = HashMap::new();
    let mut state_cache: HashMap<(usize, usize, usize, u32), NodeId> = HashMap::new();
    let mut order: u64 = 0;

    // Root prefix shared by all hypotheses: forced active, scored.
    let root = schema.root();
    let zero = if recurrent { Some(g.zeros(ctx.attn.d)) } else { None };
    compute_dists(&ctx, &mut g, &enc, root, zero, &mut dist_cache);
    let root_score = dist_cache[&key_of(root, zero)].log_p;
    let mut active0 = vec![false; n_nodes];
    active0[root.0] = true;
    let g_root = if recurrent {
        let r = dist_cache[&key_of(root, zero)].r;
        Some(cached_state(
            &ctx,
            &mut g,
            root,
            Decision { active: true, label: None },
            r,
            zero.unwrap(),
            zero.unwrap(),
            &mut state_cache,
        ))
    } else {
        None
    };
    let initial = Hyp {
        score: root_score,
        order: next_order(&mut order),
        active: active0,
        labels: vec![None; n_nodes],
        spans: vec![None; n_nodes],
        agenda: vec![Task::Child(Continuation {
            parent: root,
            child_pos: 0,
            g_parent: g_root,
            g_sib: zero,
        })],
    };

    let mut pool = vec![initial];
    loop {
        if pool.iter().all(|h| h.agenda.is_empty()) {
            return Ok(pool);
        }
        let mut next: Vec<Hyp> = Vec::new();
        for hyp in pool {
            if hyp.agenda.is_empty() {
                next.push(hyp);
                continue;
            }
            expand(
                &ctx,
                &mut g,
                &enc,
                schema,
                &forced,
                recurrent,
                zero,
                hyp,
                &mut dist_cache,
                &mut state_cache,
                &mut order,
                &mut next,
            );
        }
        next.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap().then(a.order.cmp(&b.order)));
        next.truncate(width);
        pool = next;
    }
}

fn next_order(counter: &mut u64) -> u64 {
    let v = *counter;
    *counter += 1;
    v
}

fn key_of(node: NodeIx, g_sib: Option<NodeId>) -> (usize, usize) {
    (node.0, g_sib.map(|n| n.raw() + 1).unwrap_or(0))
}

#[allow(clippy::map_entry)]
fn compute_dists<'c>(
    ctx: &ForwardCtx<'_>,
    g: &mut Graph,
    enc: &EncodedSentence,
    node: NodeIx,
    g_sib: Option<NodeId>,
    cache: &'c mut HashMap<(usize, usize), DistValues>,
) -> &'c DistValues {
    let key = key_of(node, g_sib);
    if !cache.contains_key(&key) {
        let r = ctx.node_repr(g, enc, node, g_sib);
        let dists = ctx.distributions(g, enc, node, r);
        let logit = g.scalar(dists.activation_logit);
        let values = DistValues {
            r,
            log_p: stable_log_sigmoid(logit),
            log_1mp: stable_log_sigmoid(-logit),
            label_lp: dists.label_log_probs.map(|n| g.value(n).as_slice().to_vec()),
            start_lp: dists.start_log_probs.map(|n| g.value(n).as_slice().to_vec()),
            end_lp: dists.end_log_probs.map(|n| g.value(n).as_slice().to_vec()),
        };
        cache.insert(key, values);
    }
    &cache[&key]
}

#[allow(clippy::too_many_arguments)]
fn cached_state(
    ctx: &ForwardCtx<'_>,
    g: &mut Graph,
    node: NodeIx,
    decision: Decision,
    r: NodeId,
    g_sib: NodeId,
    g_parent: NodeId,
    cache: &mut HashMap<(usize, usize, usize, u32), NodeId>,
) -> NodeId {
    let key = (
        node.0,
        g_sib.raw(),
        g_parent.raw(),
        decision.label.unwrap_or(0),
    );
    if let Some(&state) = cache.get(&key) {
        return state;
    }
    let include_repr = matches!(ctx.variant, super::model::Variant::SentenceRec);
    let state = ctx.state_update(g, node, decision, r, g_sib, g_parent, include_repr);
    cache.insert(key, state);
    state
}

#[allow(clippy::too_many_arguments)]
fn expand(
    ctx: &ForwardCtx<'_>,
    g: &mut Graph,
    enc: &EncodedSentence,
    schema: &crate::grammar::GrammarSchema,
    forced: &[bool],
    recurrent: bool,
    zero: Option<NodeId>,
    mut hyp: Hyp,
    dist_cache: &mut HashMap<(usize, usize), DistValues>,
    state_cache: &mut HashMap<(usize, usize, usize, u32), NodeId>,
    order: &mut u64,
    out: &mut Vec<Hyp>,
) {
    let task = hyp.agenda.pop().expect("non-empty agenda");
    match task {
        Task::Child(cont) => {
            let children = schema.children(cont.parent);
            if cont.child_pos >= children.len() {
                // Frame exhausted; hypothesis advances without a decision.
                hyp.order = next_order(order);
                out.push(hyp);
                return;
            }
            let child = children[cont.child_pos];
            compute_dists(ctx, g, enc, child, cont.g_sib, dist_cache);
            let (log_p, log_1mp) = {
                let d = &dist_cache[&key_of(child, cont.g_sib)];
                (d.log_p, d.log_1mp)
            };
            // Active first, so that score ties resolve toward activation,
            // matching greedy's `p >= 0.5` rule.
            {
                let mut cand = hyp.clone();
                cand.order = next_order(order);
                cand.score += log_p;
                cand.active[child.0] = true;
                match schema.kind(child) {
                    NodeKind::Categorical => {
                        cand.agenda.push(Task::Label { node: child, cont });
                    }
                    NodeKind::Span => {
                        cand.agenda.push(Task::SpanStart { node: child, cont });
                    }
                    NodeKind::Internal => {
                        resolve_active(
                            ctx,
                            g,
                            schema,
                            recurrent,
                            zero,
                            &mut cand,
                            child,
                            cont,
                            dist_cache,
                            state_cache,
                        );
                    }
                }
                out.push(cand);
            }
            if !forced[child.0] {
                let mut cand = hyp;
                cand.order = next_order(order);
                cand.score += log_1mp;
                cand.agenda.push(Task::Child(Continuation {
                    child_pos: cont.child_pos + 1,
                    ..cont
                }));
                out.push(cand);
            }
        }
        Task::Label { node, cont } => {
            let label_lp = dist_cache[&key_of(node, cont.g_sib)]
                .label_lp
                .clone()
                .expect("categorical node");
            for (l, lp) in label_lp.iter().enumerate() {
                let mut cand = hyp.clone();
                cand.order = next_order(order);
                cand.score += lp;
                cand.labels[node.0] = Some(l as u32);
                resolve_active(
                    ctx,
                    g,
                    schema,
                    recurrent,
                    zero,
                    &mut cand,
                    node,
                    cont,
                    dist_cache,
                    state_cache,
                );
                out.push(cand);
            }
        }
        Task::SpanStart { node, cont } => {
            let start_lp = dist_cache[&key_of(node, cont.g_sib)]
                .start_lp
                .clone()
                .expect("span node");
            for (s, lp) in start_lp.iter().enumerate() {
                let mut cand = hyp.clone();
                cand.order = next_order(order);
                cand.score += lp;
                cand.agenda.push(Task::SpanEnd {
                    node,
                    start: s as u32,
                    cont,
                });
                out.push(cand);
            }
        }
        Task::SpanEnd { node, start, cont } => {
            let end_lp = dist_cache[&key_of(node, cont.g_sib)]
                .end_lp
                .clone()
                .expect("span node");
            for (e, lp) in end_lp.iter().enumerate() {
                let mut cand = hyp.clone();
                cand.order = next_order(order);
                cand.score += lp;
                let e = e as u32;
                cand.spans[node.0] = Some((start.min(e), start.max(e)));
                resolve_active(
                    ctx,
                    g,
                    schema,
                    recurrent,
                    zero,
                    &mut cand,
                    node,
                    cont,
                    dist_cache,
                    state_cache,
                );
                out.push(cand);
            }
        }
    }
}

/// All sub-decisions of an active child are in: update the recurrent
/// state and queue the sibling continuation (and the child's own
/// children, for internal nodes).
#[allow(clippy::too_many_arguments)]
fn resolve_active(
    ctx: &ForwardCtx<'_>,
    g: &mut Graph,
    schema: &crate::grammar::GrammarSchema,
    recurrent: bool,
    zero: Option<NodeId>,
    cand: &mut Hyp,
    child: NodeIx,
    cont: Continuation,
    dist_cache: &mut HashMap<(usize, usize), DistValues>,
    state_cache: &mut HashMap<(usize, usize, usize, u32), NodeId>,
) {
    let g_child = if recurrent {
        let r = dist_cache[&key_of(child, cont.g_sib)].r;
        let decision = Decision {
            active: true,
            label: cand.labels[child.0],
        };
        Some(cached_state(
            ctx,
            g,
            child,
            decision,
            r,
            cont.g_sib.unwrap(),
            cont.g_parent.unwrap(),
            state_cache,
        ))
    } else {
        None
    };
    cand.agenda.push(Task::Child(Continuation {
        parent: cont.parent,
        child_pos: cont.child_pos + 1,
        g_parent: cont.g_parent,
        g_sib: if recurrent { g_child } else { None },
    }));
    if schema.kind(child) == NodeKind::Internal {
        cand.agenda.push(Task::Child(Continuation {
            parent: child,
            child_pos: 0,
            g_parent: g_child,
            g_sib: zero,
        }));
    }
}
