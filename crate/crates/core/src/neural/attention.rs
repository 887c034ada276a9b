use rand::Rng;

use super::encoder::xavier;
use super::store::{NeuralError, ParamId, ParameterStore};
use super::tape::{Graph, NodeId};
use super::tensor::Tensor;

/// K head matrices, each `(d,d)`.
#[derive(Debug, Clone)]
pub struct AttentionParams {
    pub heads: Vec<ParamId>,
    pub d: usize,
}

impl AttentionParams {
    pub fn register<R: Rng>(
        store: &mut ParameterStore,
        prefix: &str,
        d: usize,
        k: usize,
        rng: &mut R,
    ) -> Result<Self, NeuralError> {
        assert!(k >= 1);
        let mut heads = Vec::with_capacity(k);
        for i in 0..k {
            heads.push(store.register(&format!("{prefix}.m{i}"), xavier(d, d, rng))?);
        }
        Ok(AttentionParams { heads, d })
    }

    /// Multi-head attention with a residual connection:
    /// per head, `α_k = softmax(xᵀ M_k H / √d)`; the output is
    /// `x + Σ_k α_kᵀ H`. Returns the output node and the per-head weight
    /// nodes.
    pub fn attend(
        &self,
        g: &mut Graph,
        x: NodeId,
        h_stack: NodeId,
    ) -> (NodeId, Vec<NodeId>) {
        let scale = 1.0 / (self.d as f64).sqrt();
        let mut alphas = Vec::with_capacity(self.heads.len());
        let mut acc = x;
        for &m in &self.heads {
            let q = g.matvec_t(m, x);
            let scores = g.rows_dot(h_stack, q);
            let scaled = g.affine(scores, scale, 0.0);
            let alpha = g.softmax(scaled);
            let pooled = g.rows_weighted_sum(h_stack, alpha);
            acc = g.add(acc, pooled);
            alphas.push(alpha);
        }
        (acc, alphas)
    }
}

/// Per-head weights and the pooled vector of one attention application.
#[derive(Debug, Clone)]
pub struct AttentionTrace {
    /// One length-T probability vector per head.
    pub head_weights: Vec<Vec<f64>>,
    /// `x^α = Σ_k α_kᵀ H`, i.e. output minus the residual input.
    pub pooled: Vec<f64>,
    pub output: Vec<f64>,
}

/// Value-level attention entry point: runs the tape forward only.
pub fn attend_values(
    store: &ParameterStore,
    params: &AttentionParams,
    x: &[f64],
    h_rows: &[Vec<f64>],
) -> (Vec<f64>, AttentionTrace) {
    let mut g = Graph::new(store.values());
    let xn = g.input(Tensor::vector(x.to_vec()));
    let hs: Vec<NodeId> = h_rows
        .iter()
        .map(|r| g.input(Tensor::vector(r.clone())))
        .collect();
    let h = g.stack_rows(&hs);
    let (out, alphas) = params.attend(&mut g, xn, h);
    let output = g.value(out).as_slice().to_vec();
    let pooled = output
        .iter()
        .zip(x)
        .map(|(o, xi)| o - xi)
        .collect::<Vec<f64>>();
    let trace = AttentionTrace {
        head_weights: alphas
            .into_iter()
            .map(|a| g.value(a).as_slice().to_vec())
            .collect(),
        pooled,
        output: output.clone(),
    };
    (output, trace)
}
