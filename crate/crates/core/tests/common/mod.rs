//! Shared reference math for the oracle tests, written independently of
//! the tape: plain loops over raw parameter tensors.

#![allow(dead_code)]
#![allow(clippy::needless_range_loop)]

use arbor_core::grammar::{ActionTree, GrammarSchema, NodeIx, NodeKind, TreeBuilder};
use arbor_core::parser::Variant;
use arbor_core::neural::Tensor;
use arbor_core::parser::ParserModel;

pub const TOY_SCHEMA: &str = r#"{
    "root": "act",
    "nodes": [
        {"id": "act", "kind": "internal", "children": ["act:kind", "arg", "act:note_"]},
        {"id": "act:kind", "kind": "categorical", "values": ["A", "B", "C"]},
        {"id": "arg", "kind": "internal", "children": ["arg:label", "arg:span_"]},
        {"id": "arg:label", "kind": "categorical", "values": ["X", "Y"]},
        {"id": "arg:span_", "kind": "span"},
        {"id": "act:note_", "kind": "span"}
    ]
}"#;

pub fn toy_schema() -> GrammarSchema {
    GrammarSchema::load(TOY_SCHEMA).unwrap()
}

pub fn words(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("w{i}")).collect()
}

pub fn matvec(w: &Tensor, x: &[f64]) -> Vec<f64> {
    (0..w.rows())
        .map(|r| w.row(r).iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

pub fn matvec_t(w: &Tensor, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; w.cols()];
    for r in 0..w.rows() {
        for (o, v) in out.iter_mut().zip(w.row(r)) {
            *o += v * x[r];
        }
    }
    out
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

pub fn log_softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z = x.iter().map(|v| (v - m).exp()).sum::<f64>().ln() + m;
    x.iter().map(|v| v - z).collect()
}

pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(1.0 + (-x).exp()).ln()
    } else {
        x - (1.0 + x.exp()).ln()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn param<'m>(model: &'m ParserModel, name: &str) -> &'m Tensor {
    let id = model
        .store
        .id(name)
        .unwrap_or_else(|| panic!("missing param {name}"));
    model.store.value(id)
}

/// Reference multi-head attention with residual, from raw head matrices.
pub fn attend_ref(model: &ParserModel, x: &[f64], h_rows: &[Vec<f64>]) -> Vec<f64> {
    let d = x.len();
    let mut out = x.to_vec();
    for k in 0..model.attention().heads.len() {
        let m = param(model, &format!("attn.m{k}"));
        let q = matvec_t(m, x);
        let scores: Vec<f64> = h_rows
            .iter()
            .map(|h| q.iter().zip(h).map(|(a, b)| a * b).sum::<f64>() / (d as f64).sqrt())
            .collect();
        let alpha = softmax(&scores);
        for (t, h) in h_rows.iter().enumerate() {
            for (o, v) in out.iter_mut().zip(h) {
                *o += alpha[t] * v;
            }
        }
    }
    out
}

/// Reference GRU step from raw parameters under `prefix`, gate layout
/// `[r; z; n]`, update `h' = (1-z)·n + z·h`.
pub fn gru_step_ref(model: &ParserModel, prefix: &str, input: &[f64], state: &[f64]) -> Vec<f64> {
    let w_ih = param(model, &format!("{prefix}.w_ih"));
    let w_hh = param(model, &format!("{prefix}.w_hh"));
    let b_ih = param(model, &format!("{prefix}.b_ih"));
    let b_hh = param(model, &format!("{prefix}.b_hh"));
    let d = w_hh.cols();
    let gi = add(&matvec(w_ih, input), b_ih.as_slice());
    let gh = add(&matvec(w_hh, state), b_hh.as_slice());
    let mut out = vec![0.0; d];
    for j in 0..d {
        let r = sigmoid(gi[j] + gh[j]);
        let z = sigmoid(gi[d + j] + gh[d + j]);
        let n = (gi[2 * d + j] + r * gh[2 * d + j]).tanh();
        out[j] = (1.0 - z) * n + z * state[j];
    }
    out
}

/// Reference prediction heads for one node given its representation.
pub struct RefDists {
    pub logit: f64,
    pub label_lp: Option<Vec<f64>>,
    pub start_lp: Option<Vec<f64>>,
    pub end_lp: Option<Vec<f64>>,
}

pub fn dists_ref(
    model: &ParserModel,
    schema: &GrammarSchema,
    node: NodeIx,
    r: &[f64],
    h_rows: &[Vec<f64>],
) -> RefDists {
    let id = schema.id(node);
    let p = param(model, &format!("head.{id}.p"));
    let logit: f64 = p.as_slice().iter().zip(r).map(|(a, b)| a * b).sum();
    let mut out = RefDists {
        logit,
        label_lp: None,
        start_lp: None,
        end_lp: None,
    };
    match schema.kind(node) {
        NodeKind::Categorical => {
            let mc = param(model, &format!("head.{id}.mc"));
            out.label_lp = Some(log_softmax(&matvec(mc, r)));
        }
        NodeKind::Span => {
            let ms = param(model, &format!("head.{id}.ms"));
            let me = param(model, &format!("head.{id}.me"));
            let qs = matvec_t(ms, r);
            let qe = matvec_t(me, r);
            let s: Vec<f64> = h_rows
                .iter()
                .map(|h| qs.iter().zip(h).map(|(a, b)| a * b).sum())
                .collect();
            let e: Vec<f64> = h_rows
                .iter()
                .map(|h| qe.iter().zip(h).map(|(a, b)| a * b).sum())
                .collect();
            out.start_lp = Some(log_softmax(&s));
            out.end_lp = Some(log_softmax(&e));
        }
        NodeKind::Internal => {}
    }
    out
}

pub fn node_v(model: &ParserModel, schema: &GrammarSchema, node: NodeIx) -> Vec<f64> {
    param(model, &format!("node.{}.v", schema.id(node)))
        .as_slice()
        .to_vec()
}

pub fn node_v2_row(
    model: &ParserModel,
    schema: &GrammarSchema,
    node: NodeIx,
    label: Option<u32>,
) -> Vec<f64> {
    param(model, &format!("node.{}.v2", schema.id(node)))
        .row(label.unwrap_or(0) as usize)
        .to_vec()
}

/// Step-by-step reference recomputation of a gold-conditioned recurrent
/// traversal: returns (node id, representation) in visit order.
pub fn recurrent_trace_ref(
    model: &ParserModel,
    schema: &GrammarSchema,
    h_rows: &[Vec<f64>],
    gold: &ActionTree,
    include_repr: bool,
) -> Vec<(String, Vec<f64>)> {
    let d = model.dims.d;
    let zero = vec![0.0; d];
    let mut out = Vec::new();

    // Root as the single child of a virtual parent with zero states.
    let root = schema.root();
    let v_root = node_v(model, schema, root);
    let query = add(&v_root, &zero);
    let r_root = attend_ref(model, &query, h_rows);
    out.push((schema.id(root).to_string(), r_root.clone()));
    let mut u = node_v2_row(model, schema, root, None);
    if include_repr {
        u = add(&u, &r_root);
    }
    let mut input = u;
    input.extend_from_slice(&zero);
    let g_root = gru_step_ref(model, "dec", &input, &zero);
    walk_ref(model, schema, h_rows, gold, include_repr, root, &g_root, &mut out);
    out
}

#[allow(clippy::too_many_arguments)]
fn walk_ref(
    model: &ParserModel,
    schema: &GrammarSchema,
    h_rows: &[Vec<f64>],
    gold: &ActionTree,
    include_repr: bool,
    parent: NodeIx,
    g_parent: &[f64],
    out: &mut Vec<(String, Vec<f64>)>,
) {
    let d = model.dims.d;
    let mut g_sib = vec![0.0; d];
    for &child in schema.children(parent) {
        let v = node_v(model, schema, child);
        let query = add(&v, &g_sib);
        let r = attend_ref(model, &query, h_rows);
        out.push((schema.id(child).to_string(), r.clone()));
        if gold.is_active(child) {
            let mut u = node_v2_row(model, schema, child, gold.label(child));
            if include_repr {
                u = add(&u, &r);
            }
            let mut input = u;
            input.extend_from_slice(g_parent);
            let g_child = gru_step_ref(model, "dec", &input, &g_sib);
            walk_ref(model, schema, h_rows, gold, include_repr, child, &g_child, out);
            g_sib = g_child;
        }
    }
}

/// Independent-variant reference: r_n = attn(v_n, H) for the visited set.
pub fn independent_trace_ref(
    model: &ParserModel,
    schema: &GrammarSchema,
    h_rows: &[Vec<f64>],
    gold: &ActionTree,
) -> Vec<(String, Vec<f64>)> {
    let mut out = Vec::new();
    fn walk(
        model: &ParserModel,
        schema: &GrammarSchema,
        h_rows: &[Vec<f64>],
        gold: &ActionTree,
        node: NodeIx,
        out: &mut Vec<(String, Vec<f64>)>,
    ) {
        let v = node_v(model, schema, node);
        out.push((schema.id(node).to_string(), attend_ref(model, &v, h_rows)));
        if gold.is_active(node) {
            for &c in schema.children(node) {
                walk(model, schema, h_rows, gold, c, out);
            }
        }
    }
    walk(model, schema, h_rows, gold, schema.root(), &mut out);
    out
}

/// Plants head parameters so the model assigns probability one to every
/// decision of `gold` (and probability zero of activating anything else
/// the traversal can see). Representations are untouched.
pub fn saturate_to_gold(model: &mut ParserModel, sentence: &[String], gold: &ActionTree) {
    const C: f64 = 800.0;
    let schema = model.schema.clone();
    let h_rows = model.encode_values(sentence).unwrap();
    let trace = model.forward_trace(sentence, gold, None).unwrap();
    for nf in &trace {
        let node = schema.lookup(&nf.node).unwrap();
        let r = &nf.repr;
        let r_norm2: f64 = r.iter().map(|v| v * v).sum();
        assert!(r_norm2 > 1e-12, "degenerate representation");
        let sign = if gold.is_active(node) { 1.0 } else { -1.0 };
        let p_id = model.store.id(&format!("head.{}.p", nf.node)).unwrap();
        {
            let p = model.store.value_mut(p_id);
            for (i, pv) in p.as_mut_slice().iter_mut().enumerate() {
                *pv = sign * C * r[i] / r_norm2;
            }
        }
        if !gold.is_active(node) {
            continue;
        }
        match schema.kind(node) {
            NodeKind::Categorical => {
                let gold_label = gold.label(node).unwrap() as usize;
                let mc_id = model.store.id(&format!("head.{}.mc", nf.node)).unwrap();
                let mc = model.store.value_mut(mc_id);
                for row in 0..mc.rows() {
                    let sign = if row == gold_label { 1.0 } else { -1.0 };
                    for (j, w) in mc.row_mut(row).iter_mut().enumerate() {
                        *w = sign * C * r[j] / r_norm2;
                    }
                }
            }
            NodeKind::Span => {
                let (s, e) = gold.span(node).unwrap();
                for (mat, target) in [("ms", s as usize), ("me", e as usize)] {
                    let y: Vec<f64> = (0..h_rows.len())
                        .map(|t| if t == target { C } else { -C })
                        .collect();
                    let u = solve_h_u_eq_y(&h_rows, &y);
                    let id = model
                        .store
                        .id(&format!("head.{}.{mat}", nf.node))
                        .unwrap();
                    let m = model.store.value_mut(id);
                    // M := r uᵀ / |r|², so that Mᵀ r = u and H u = y.
                    for i in 0..m.rows() {
                        for j in 0..m.cols() {
                            m.set(i, j, r[i] * u[j] / r_norm2);
                        }
                    }
                }
            }
            NodeKind::Internal => {}
        }
    }
}

/// Least-norm solve of `H u = y` via `u = Hᵀ (H Hᵀ)⁻¹ y`.
fn solve_h_u_eq_y(h_rows: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let t = h_rows.len();
    let mut gram = vec![vec![0.0; t]; t];
    for i in 0..t {
        for j in 0..t {
            gram[i][j] = h_rows[i].iter().zip(&h_rows[j]).map(|(a, b)| a * b).sum();
        }
    }
    let lambda = gauss_solve(gram, y.to_vec());
    let d = h_rows[0].len();
    let mut u = vec![0.0; d];
    for (i, h) in h_rows.iter().enumerate() {
        for (uv, hv) in u.iter_mut().zip(h) {
            *uv += lambda[i] * hv;
        }
    }
    u
}

fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        assert!(a[col][col].abs() > 1e-12, "singular gram matrix");
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    x
}

/// One enumerated decision at a node. Spans keep their raw (start, end)
/// order for scoring; the tree stores the swapped range.
#[derive(Debug, Clone)]
pub struct PathDecision {
    node: NodeIx,
    active: bool,
    label: Option<u32>,
    span: Option<(u32, u32)>,
}

/// Exhaustive enumeration of every decision sequence, scored with the
/// independent reference math (no tape involvement).
pub fn enumerate_best(
    model: &ParserModel,
    schema: &GrammarSchema,
    h_rows: &[Vec<f64>],
) -> (f64, ActionTree) {
    let recurrent = model.variant.is_recurrent();
    let d = model.dims.d;
    let zero = vec![0.0; d];

    let root = schema.root();
    let v_root = node_v(model, schema, root);
    let query = if recurrent { add(&v_root, &zero) } else { v_root };
    let r_root = attend_ref(model, &query, h_rows);
    let root_dists = dists_ref(model, schema, root, &r_root, h_rows);
    let base_score = log_sigmoid(root_dists.logit);
    let g_root = if recurrent {
        let mut input = node_v2_row(model, schema, root, None);
        if matches!(model.variant, Variant::SentenceRec) {
            input = add(&input, &r_root);
        }
        input.extend_from_slice(&zero);
        gru_step_ref(model, "dec", &input, &zero)
    } else {
        zero.clone()
    };

    let all = enum_children(model, schema, h_rows, root, &g_root, 0, &zero);
    let mut best: Option<(f64, Vec<PathDecision>)> = None;
    for (score, path) in all {
        let total = base_score + score;
        if best.as_ref().map(|(s, _)| total > *s).unwrap_or(true) {
            best = Some((total, path));
        }
    }
    let (score, path) = best.unwrap();
    let mut builder = TreeBuilder::new(schema);
    for d in &path {
        if !d.active {
            continue;
        }
        builder.activate_ix(d.node);
        if let Some(l) = d.label {
            builder.set_label_ix(d.node, l);
        }
        if let Some((s, e)) = d.span {
            builder.set_span_ix(d.node, s.min(e) as usize, s.max(e) as usize);
        }
    }
    (score, builder.build(h_rows.len()))
}

/// All (score, decisions) continuations for `parent`'s children starting
/// at `idx` with sibling state `g_sib`.
pub fn enum_children(
    model: &ParserModel,
    schema: &GrammarSchema,
    h_rows: &[Vec<f64>],
    parent: NodeIx,
    g_parent: &[f64],
    idx: usize,
    g_sib: &[f64],
) -> Vec<(f64, Vec<PathDecision>)> {
    let children = schema.children(parent);
    if idx >= children.len() {
        return vec![(0.0, Vec::new())];
    }
    let child = children[idx];
    let recurrent = model.variant.is_recurrent();
    let forced = Some(child) == schema.discriminator();
    let v = node_v(model, schema, child);
    let query = if recurrent { add(&v, g_sib) } else { v };
    let r = attend_ref(model, &query, h_rows);
    let dists = dists_ref(model, schema, child, &r, h_rows);
    let mut out = Vec::new();

    if !forced {
        for (rest_score, mut rest) in
            enum_children(model, schema, h_rows, parent, g_parent, idx + 1, g_sib)
        {
            let mut path = vec![PathDecision {
                node: child,
                active: false,
                label: None,
                span: None,
            }];
            path.append(&mut rest);
            out.push((log_sigmoid(-dists.logit) + rest_score, path));
        }
    }

    let label_choices: Vec<Option<u32>> = match schema.kind(child) {
        NodeKind::Categorical => (0..schema.vocab(child).len() as u32).map(Some).collect(),
        _ => vec![None],
    };
    for label in label_choices {
        let mut score = log_sigmoid(dists.logit);
        if let Some(l) = label {
            score += dists.label_lp.as_ref().unwrap()[l as usize];
        }
        let span_choices: Vec<Option<(u32, u32, f64)>> = match schema.kind(child) {
            NodeKind::Span => {
                let sp = dists.start_lp.as_ref().unwrap();
                let ep = dists.end_lp.as_ref().unwrap();
                let mut pairs = Vec::new();
                for (s, &sv) in sp.iter().enumerate() {
                    for (e, &ev) in ep.iter().enumerate() {
                        pairs.push(Some((s as u32, e as u32, sv + ev)));
                    }
                }
                pairs
            }
            _ => vec![None],
        };
        for span in span_choices {
            let mut score = score;
            let mut decision = PathDecision {
                node: child,
                active: true,
                label,
                span: None,
            };
            if let Some((s, e, lp)) = span {
                score += lp;
                decision.span = Some((s, e));
            }
            let g_child = if recurrent {
                let mut input = node_v2_row(model, schema, child, label);
                if matches!(model.variant, Variant::SentenceRec) {
                    input = add(&input, &r);
                }
                input.extend_from_slice(g_parent);
                gru_step_ref(model, "dec", &input, g_sib)
            } else {
                g_sib.to_vec()
            };
            let subtrees = if schema.kind(child) == NodeKind::Internal {
                let zero = vec![0.0; model.dims.d];
                enum_children(model, schema, h_rows, child, &g_child, 0, &zero)
            } else {
                vec![(0.0, Vec::new())]
            };
            for (sub_score, sub_path) in subtrees {
                for (rest_score, rest) in
                    enum_children(model, schema, h_rows, parent, g_parent, idx + 1, &g_child)
                {
                    let mut path = vec![decision.clone()];
                    path.extend(sub_path.iter().cloned());
                    path.extend(rest.iter().cloned());
                    out.push((score + sub_score + rest_score, path));
                }
            }
        }
    }
    out
}


/// Independent node-enumeration recomputation of the log-likelihood from
/// traced distributions, iterating nodes in reverse id order rather than
/// DFS.
pub fn enumeration_loglik(
    schema: &GrammarSchema,
    trace: &[arbor_core::parser::NodeForward],
    gold: &arbor_core::ActionTree,
) -> f64 {
    let mut ids: Vec<&str> = trace.iter().map(|n| n.node.as_str()).collect();
    ids.sort();
    ids.reverse();
    let mut total = 0.0;
    for id in ids {
        let nf = trace.iter().find(|n| n.node == id).unwrap();
        let node = schema.lookup(id).unwrap();
        let active = gold.is_active(node);
        total += if active {
            log_sigmoid(nf.activation_logit)
        } else {
            log_sigmoid(-nf.activation_logit)
        };
        if active {
            if let Some(lp) = &nf.label_log_probs {
                total += lp[gold.label(node).unwrap() as usize];
            }
            if let (Some(sp), Some(ep)) = (&nf.start_log_probs, &nf.end_log_probs) {
                let (s, e) = gold.span(node).unwrap();
                total += sp[s as usize] + ep[e as usize];
            }
        }
    }
    total
}

