#![allow(clippy::needless_range_loop)]

use super::store::ParamId;
use super::tensor::{dot_slices, Tensor};

/// Handle to one node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

impl NodeId {
    pub(crate) fn raw(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Input,
    ParamVec(ParamId),
    GatherRow { table: ParamId, row: usize },
    MatVec { w: ParamId, x: NodeId },
    MatVecT { w: ParamId, x: NodeId },
    AddBias { x: NodeId, b: ParamId },
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Affine { x: NodeId, scale: f64 },
    Sigmoid(NodeId),
    Tanh(NodeId),
    LogSigmoid(NodeId),
    Concat(NodeId, NodeId),
    Slice { x: NodeId, start: usize, len: usize },
    Dot(NodeId, NodeId),
    StackRows(Vec<NodeId>),
    RowsDot { h: NodeId, q: NodeId },
    RowsWeightedSum { h: NodeId, w: NodeId },
    Softmax(NodeId),
    LogSoftmax(NodeId),
    Pick { x: NodeId, index: usize },
    Sum(NodeId),
    SumTerms(Vec<NodeId>),
    Dropout { x: NodeId, mask: Vec<f64> },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Reverse-mode tape over tensor-granularity operations. Parameters live
/// in the [`super::ParameterStore`] whose values slice is borrowed here;
/// everything else (inputs, intermediates) lives in the tape.
pub struct Graph<'a> {
    params: &'a [Tensor],
    nodes: Vec<Node>,
}

impl<'a> Graph<'a> {
    pub fn new(params: &'a [Tensor]) -> Self {
        Graph {
            params,
            nodes: Vec::with_capacity(256),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, n: NodeId) -> &Tensor {
        &self.nodes[n.0].value
    }

    pub fn scalar(&self, n: NodeId) -> f64 {
        self.nodes[n.0].value.scalar()
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    /// Constant leaf; gradients stop here.
    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Input)
    }

    pub fn zeros(&mut self, n: usize) -> NodeId {
        self.input(Tensor::zeros(n, 1))
    }

    /// A `(n,1)` parameter brought onto the tape.
    pub fn param_vec(&mut self, p: ParamId) -> NodeId {
        let value = self.params[p.0].clone();
        debug_assert_eq!(value.cols(), 1, "param_vec expects a column vector");
        self.push(value, Op::ParamVec(p))
    }

    /// Row `row` of a `(V,d)` parameter table, as a `(d,1)` vector.
    pub fn gather_row(&mut self, table: ParamId, row: usize) -> NodeId {
        let t = &self.params[table.0];
        let value = Tensor::vector(t.row(row).to_vec());
        self.push(value, Op::GatherRow { table, row })
    }

    /// `W x` for parameter `W (m,n)` and node `x (n,1)`.
    pub fn matvec(&mut self, w: ParamId, x: NodeId) -> NodeId {
        let wt = &self.params[w.0];
        let xv = &self.nodes[x.0].value;
        debug_assert_eq!(wt.cols(), xv.rows());
        let mut out = vec![0.0; wt.rows()];
        for r in 0..wt.rows() {
            out[r] = dot_slices(wt.row(r), xv.as_slice());
        }
        self.push(Tensor::vector(out), Op::MatVec { w, x })
    }

    /// `Wᵀ x` for parameter `W (m,n)` and node `x (m,1)`.
    pub fn matvec_t(&mut self, w: ParamId, x: NodeId) -> NodeId {
        let wt = &self.params[w.0];
        let xv = &self.nodes[x.0].value;
        debug_assert_eq!(wt.rows(), xv.rows());
        let mut out = vec![0.0; wt.cols()];
        for r in 0..wt.rows() {
            let xr = xv.as_slice()[r];
            for (o, wv) in out.iter_mut().zip(wt.row(r)) {
                *o += wv * xr;
            }
        }
        self.push(Tensor::vector(out), Op::MatVecT { w, x })
    }

    pub fn add_bias(&mut self, x: NodeId, b: ParamId) -> NodeId {
        let mut value = self.nodes[x.0].value.clone();
        value.add_assign(&self.params[b.0]);
        self.push(value, Op::AddBias { x, b })
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let mut value = self.nodes[a.0].value.clone();
        value.add_assign(&self.nodes[b.0].value);
        self.push(value, Op::Add(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let av = &self.nodes[a.0].value;
        let bv = &self.nodes[b.0].value;
        debug_assert_eq!(av.shape(), bv.shape());
        let data = av
            .as_slice()
            .iter()
            .zip(bv.as_slice())
            .map(|(x, y)| x * y)
            .collect();
        let (r, c) = av.shape();
        self.push(Tensor::from_vec(r, c, data), Op::Mul(a, b))
    }

    /// `scale * x + shift`, elementwise.
    pub fn affine(&mut self, x: NodeId, scale: f64, shift: f64) -> NodeId {
        let xv = &self.nodes[x.0].value;
        let data = xv.as_slice().iter().map(|v| scale * v + shift).collect();
        let (r, c) = xv.shape();
        self.push(Tensor::from_vec(r, c, data), Op::Affine { x, scale })
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let xv = &self.nodes[x.0].value;
        let data = xv.as_slice().iter().map(|&v| sigmoid(v)).collect();
        let (r, c) = xv.shape();
        self.push(Tensor::from_vec(r, c, data), Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let xv = &self.nodes[x.0].value;
        let data = xv.as_slice().iter().map(|v| v.tanh()).collect();
        let (r, c) = xv.shape();
        self.push(Tensor::from_vec(r, c, data), Op::Tanh(x))
    }

    /// `log σ(x)`, computed stably.
    pub fn log_sigmoid(&mut self, x: NodeId) -> NodeId {
        let xv = &self.nodes[x.0].value;
        let data = xv.as_slice().iter().map(|&v| log_sigmoid(v)).collect();
        let (r, c) = xv.shape();
        self.push(Tensor::from_vec(r, c, data), Op::LogSigmoid(x))
    }

    pub fn concat(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let av = &self.nodes[a.0].value;
        let bv = &self.nodes[b.0].value;
        debug_assert_eq!(av.cols(), 1);
        debug_assert_eq!(bv.cols(), 1);
        let mut data = av.as_slice().to_vec();
        data.extend_from_slice(bv.as_slice());
        self.push(Tensor::vector(data), Op::Concat(a, b))
    }

    pub fn slice(&mut self, x: NodeId, start: usize, len: usize) -> NodeId {
        let xv = &self.nodes[x.0].value;
        debug_assert_eq!(xv.cols(), 1);
        let data = xv.as_slice()[start..start + len].to_vec();
        self.push(Tensor::vector(data), Op::Slice { x, start, len })
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let av = &self.nodes[a.0].value;
        let bv = &self.nodes[b.0].value;
        let v = dot_slices(av.as_slice(), bv.as_slice());
        self.push(Tensor::vector(vec![v]), Op::Dot(a, b))
    }

    /// Stacks T `(d,1)` vectors into a `(T,d)` matrix.
    pub fn stack_rows(&mut self, xs: &[NodeId]) -> NodeId {
        assert!(!xs.is_empty());
        let d = self.nodes[xs[0].0].value.rows();
        let mut data = Vec::with_capacity(xs.len() * d);
        for &x in xs {
            data.extend_from_slice(self.nodes[x.0].value.as_slice());
        }
        self.push(
            Tensor::from_vec(xs.len(), d, data),
            Op::StackRows(xs.to_vec()),
        )
    }

    /// `H q` for `H (T,d)`, `q (d,1)` → `(T,1)` of per-row dot products.
    pub fn rows_dot(&mut self, h: NodeId, q: NodeId) -> NodeId {
        let hv = &self.nodes[h.0].value;
        let qv = &self.nodes[q.0].value;
        debug_assert_eq!(hv.cols(), qv.rows());
        let data = (0..hv.rows())
            .map(|t| dot_slices(hv.row(t), qv.as_slice()))
            .collect();
        self.push(Tensor::vector(data), Op::RowsDot { h, q })
    }

    /// `Hᵀ w` for `H (T,d)`, `w (T,1)` → `(d,1)` weighted sum of rows.
    pub fn rows_weighted_sum(&mut self, h: NodeId, w: NodeId) -> NodeId {
        let hv = &self.nodes[h.0].value;
        let wv = &self.nodes[w.0].value;
        debug_assert_eq!(hv.rows(), wv.rows());
        let mut out = vec![0.0; hv.cols()];
        for t in 0..hv.rows() {
            let c = wv.as_slice()[t];
            for (o, x) in out.iter_mut().zip(hv.row(t)) {
                *o += c * x;
            }
        }
        self.push(Tensor::vector(out), Op::RowsWeightedSum { h, w })
    }

    pub fn softmax(&mut self, x: NodeId) -> NodeId {
        let xv = self.nodes[x.0].value.as_slice();
        let max = xv.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = xv.iter().map(|v| (v - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        let data = exps.into_iter().map(|e| e / sum).collect();
        self.push(Tensor::vector(data), Op::Softmax(x))
    }

    pub fn log_softmax(&mut self, x: NodeId) -> NodeId {
        let xv = self.nodes[x.0].value.as_slice();
        let max = xv.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_sum = xv.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
        let data = xv.iter().map(|v| v - log_sum).collect();
        self.push(Tensor::vector(data), Op::LogSoftmax(x))
    }

    pub fn pick(&mut self, x: NodeId, index: usize) -> NodeId {
        let v = self.nodes[x.0].value.as_slice()[index];
        self.push(Tensor::vector(vec![v]), Op::Pick { x, index })
    }

    /// Sum of all elements of one node into a scalar.
    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let v = self.nodes[x.0].value.as_slice().iter().sum();
        self.push(Tensor::vector(vec![v]), Op::Sum(x))
    }

    /// Sum of scalar terms into one scalar.
    pub fn sum_terms(&mut self, xs: &[NodeId]) -> NodeId {
        let v = xs.iter().map(|&x| self.nodes[x.0].value.scalar()).sum();
        self.push(Tensor::vector(vec![v]), Op::SumTerms(xs.to_vec()))
    }

    /// Elementwise multiply by a fixed mask (inverted-dropout values `0`
    /// or `1/(1-p)`). The mask is data, not a differentiable input.
    pub fn dropout(&mut self, x: NodeId, mask: Vec<f64>) -> NodeId {
        let xv = &self.nodes[x.0].value;
        debug_assert_eq!(xv.len(), mask.len());
        let data = xv
            .as_slice()
            .iter()
            .zip(&mask)
            .map(|(v, m)| v * m)
            .collect();
        let (r, c) = xv.shape();
        self.push(Tensor::from_vec(r, c, data), Op::Dropout { x, mask })
    }

    /// Reverse pass from `loss` (a `(1,1)` node), accumulating parameter
    /// gradients into `grads` (parallel to the store's values).
    pub fn backward(&self, loss: NodeId, grads: &mut [Tensor]) {
        let mut node_grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        node_grads[loss.0] = Some(Tensor::vector(vec![1.0]));

        for i in (0..self.nodes.len()).rev() {
            let g = match node_grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            match &self.nodes[i].op {
                Op::Input => {}
                Op::ParamVec(p) => grads[p.0].add_assign(&g),
                Op::GatherRow { table, row } => {
                    let dst = grads[table.0].row_mut(*row);
                    for (d, s) in dst.iter_mut().zip(g.as_slice()) {
                        *d += s;
                    }
                }
                Op::MatVec { w, x } => {
                    let xv = self.nodes[x.0].value.as_slice();
                    let wt = &self.params[w.0];
                    {
                        let gw = &mut grads[w.0];
                        for r in 0..wt.rows() {
                            let gr = g.as_slice()[r];
                            let row = gw.row_mut(r);
                            for (dw, xl) in row.iter_mut().zip(xv) {
                                *dw += gr * xl;
                            }
                        }
                    }
                    let mut dx = vec![0.0; wt.cols()];
                    for r in 0..wt.rows() {
                        let gr = g.as_slice()[r];
                        for (d, wv) in dx.iter_mut().zip(wt.row(r)) {
                            *d += gr * wv;
                        }
                    }
                    accumulate(&mut node_grads, *x, Tensor::vector(dx));
                }
                Op::MatVecT { w, x } => {
                    let xv = self.nodes[x.0].value.as_slice();
                    let wt = &self.params[w.0];
                    {
                        let gw = &mut grads[w.0];
                        for r in 0..wt.rows() {
                            let xr = xv[r];
                            let row = gw.row_mut(r);
                            for (dw, gl) in row.iter_mut().zip(g.as_slice()) {
                                *dw += xr * gl;
                            }
                        }
                    }
                    let mut dx = vec![0.0; wt.rows()];
                    for (r, d) in dx.iter_mut().enumerate() {
                        *d = dot_slices(wt.row(r), g.as_slice());
                    }
                    accumulate(&mut node_grads, *x, Tensor::vector(dx));
                }
                Op::AddBias { x, b } => {
                    grads[b.0].add_assign(&g);
                    accumulate(&mut node_grads, *x, g);
                }
                Op::Add(a, b) => {
                    accumulate(&mut node_grads, *a, g.clone());
                    accumulate(&mut node_grads, *b, g);
                }
                Op::Mul(a, b) => {
                    let av = &self.nodes[a.0].value;
                    let bv = &self.nodes[b.0].value;
                    let mut da = g.clone();
                    for (x, y) in da.as_mut_slice().iter_mut().zip(bv.as_slice()) {
                        *x *= y;
                    }
                    let mut db = g;
                    for (x, y) in db.as_mut_slice().iter_mut().zip(av.as_slice()) {
                        *x *= y;
                    }
                    accumulate(&mut node_grads, *a, da);
                    accumulate(&mut node_grads, *b, db);
                }
                Op::Affine { x, scale, .. } => {
                    let mut dx = g;
                    for v in dx.as_mut_slice() {
                        *v *= scale;
                    }
                    accumulate(&mut node_grads, *x, dx);
                }
                Op::Sigmoid(x) => {
                    let y = &self.nodes[i].value;
                    let mut dx = g;
                    for (d, &yv) in dx.as_mut_slice().iter_mut().zip(y.as_slice()) {
                        *d *= yv * (1.0 - yv);
                    }
                    accumulate(&mut node_grads, *x, dx);
                }
                Op::Tanh(x) => {
                    let y = &self.nodes[i].value;
                    let mut dx = g;
                    for (d, &yv) in dx.as_mut_slice().iter_mut().zip(y.as_slice()) {
                        *d *= 1.0 - yv * yv;
                    }
                    accumulate(&mut node_grads, *x, dx);
                }
                Op::LogSigmoid(x) => {
                    // d/dx log σ(x) = 1 − σ(x) = 1 − e^y.
                    let y = &self.nodes[i].value;
                    let mut dx = g;
                    for (d, &yv) in dx.as_mut_slice().iter_mut().zip(y.as_slice()) {
                        *d *= 1.0 - yv.exp();
                    }
                    accumulate(&mut node_grads, *x, dx);
                }
                Op::Concat(a, b) => {
                    let na = self.nodes[a.0].value.rows();
                    let da = Tensor::vector(g.as_slice()[..na].to_vec());
                    let db = Tensor::vector(g.as_slice()[na..].to_vec());
                    accumulate(&mut node_grads, *a, da);
                    accumulate(&mut node_grads, *b, db);
                }
                Op::Slice { x, start, len } => {
                    let n = self.nodes[x.0].value.rows();
                    let mut dx = Tensor::zeros(n, 1);
                    dx.as_mut_slice()[*start..start + len].copy_from_slice(g.as_slice());
                    accumulate(&mut node_grads, *x, dx);
                }
                Op::Dot(a, b) => {
                    let s = g.scalar();
                    let mut da = self.nodes[b.0].value.clone();
                    for v in da.as_mut_slice() {
                        *v *= s;
                    }
                    let mut db = self.nodes[a.0].value.clone();
                    for v in db.as_mut_slice() {
                        *v *= s;
                    }
                    accumulate(&mut node_grads, *a, da);
                    accumulate(&mut node_grads, *b, db);
                }
                Op::StackRows(xs) => {
                    for (t, &x) in xs.iter().enumerate() {
                        accumulate(&mut node_grads, x, Tensor::vector(g.row(t).to_vec()));
                    }
                }
                Op::RowsDot { h, q } => {
                    let hv = &self.nodes[h.0].value;
                    let qv = &self.nodes[q.0].value;
                    let (t_len, d) = hv.shape();
                    let mut dh = Tensor::zeros(t_len, d);
                    let mut dq = vec![0.0; d];
                    for t in 0..t_len {
                        let gt = g.as_slice()[t];
                        let row = dh.row_mut(t);
                        for ((dr, &qvv), &hvv) in
                            row.iter_mut().zip(qv.as_slice()).zip(hv.row(t))
                        {
                            *dr += gt * qvv;
                            let _ = hvv;
                        }
                        for (dqv, &hvv) in dq.iter_mut().zip(hv.row(t)) {
                            *dqv += gt * hvv;
                        }
                    }
                    accumulate(&mut node_grads, *h, dh);
                    accumulate(&mut node_grads, *q, Tensor::vector(dq));
                }
                Op::RowsWeightedSum { h, w } => {
                    let hv = &self.nodes[h.0].value;
                    let wv = &self.nodes[w.0].value;
                    let (t_len, d) = hv.shape();
                    let mut dh = Tensor::zeros(t_len, d);
                    let mut dw = vec![0.0; t_len];
                    for t in 0..t_len {
                        let c = wv.as_slice()[t];
                        let row = dh.row_mut(t);
                        for (dr, &gl) in row.iter_mut().zip(g.as_slice()) {
                            *dr += c * gl;
                        }
                        dw[t] = dot_slices(g.as_slice(), hv.row(t));
                    }
                    accumulate(&mut node_grads, *h, dh);
                    accumulate(&mut node_grads, *w, Tensor::vector(dw));
                }
                Op::Softmax(x) => {
                    let y = &self.nodes[i].value;
                    let inner = dot_slices(g.as_slice(), y.as_slice());
                    let data = y
                        .as_slice()
                        .iter()
                        .zip(g.as_slice())
                        .map(|(&yv, &gv)| yv * (gv - inner))
                        .collect();
                    accumulate(&mut node_grads, *x, Tensor::vector(data));
                }
                Op::LogSoftmax(x) => {
                    let y = &self.nodes[i].value;
                    let gsum: f64 = g.as_slice().iter().sum();
                    let data = y
                        .as_slice()
                        .iter()
                        .zip(g.as_slice())
                        .map(|(&yv, &gv)| gv - yv.exp() * gsum)
                        .collect();
                    accumulate(&mut node_grads, *x, Tensor::vector(data));
                }
                Op::Pick { x, index } => {
                    let n = self.nodes[x.0].value.rows();
                    let mut dx = Tensor::zeros(n, 1);
                    dx.as_mut_slice()[*index] = g.scalar();
                    accumulate(&mut node_grads, *x, dx);
                }
                Op::Sum(x) => {
                    let s = g.scalar();
                    let (r, c) = self.nodes[x.0].value.shape();
                    let mut dx = Tensor::zeros(r, c);
                    dx.fill(s);
                    accumulate(&mut node_grads, *x, dx);
                }
                Op::SumTerms(xs) => {
                    let s = g.scalar();
                    for &x in xs {
                        accumulate(&mut node_grads, x, Tensor::vector(vec![s]));
                    }
                }
                Op::Dropout { x, mask } => {
                    let mut dx = g;
                    for (d, m) in dx.as_mut_slice().iter_mut().zip(mask) {
                        *d *= m;
                    }
                    accumulate(&mut node_grads, *x, dx);
                }
            }
        }
    }
}

fn accumulate(buf: &mut [Option<Tensor>], node: NodeId, g: Tensor) {
    match &mut buf[node.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(1.0 + (-x).exp()).ln()
    } else {
        x - (1.0 + x.exp()).ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::store::ParameterStore;

    /// Numeric gradient of a scalar-valued builder with respect to one
    /// parameter element.
    fn numeric_grad(
        store: &mut ParameterStore,
        p: super::super::store::ParamId,
        elem: usize,
        f: impl Fn(&ParameterStore) -> f64,
    ) -> f64 {
        let eps = 1e-6;
        let old = store.value(p).as_slice()[elem];
        store.value_mut(p).as_mut_slice()[elem] = old + eps;
        let hi = f(store);
        store.value_mut(p).as_mut_slice()[elem] = old - eps;
        let lo = f(store);
        store.value_mut(p).as_mut_slice()[elem] = old;
        (hi - lo) / (2.0 * eps)
    }

    #[test]
    fn composite_graph_gradients_match_finite_differences() {
        let mut store = ParameterStore::new();
        let w = store
            .register(
                "w",
                Tensor::from_vec(2, 3, vec![0.1, -0.2, 0.3, 0.4, 0.5, -0.6]),
            )
            .unwrap();
        let b = store
            .register("b", Tensor::vector(vec![0.05, -0.15]))
            .unwrap();
        let v = store
            .register("v", Tensor::vector(vec![0.2, 0.7]))
            .unwrap();

        let f = |s: &ParameterStore| {
            let mut g = Graph::new(s.values());
            let x = g.input(Tensor::vector(vec![1.0, -2.0, 0.5]));
            let y = g.matvec(w, x);
            let y = g.add_bias(y, b);
            let y = g.tanh(y);
            let vv = g.param_vec(v);
            let z = g.mul(y, vv);
            let s1 = g.sigmoid(z);
            let sm = g.log_softmax(s1);
            let p0 = g.pick(sm, 0);
            let d = g.dot(y, vv);
            let ls = g.log_sigmoid(d);
            let total = g.sum_terms(&[p0, ls]);
            g.scalar(total)
        };

        store.zero_grads();
        {
            let (values, grads) = store.split_grads();
            let mut g = Graph::new(values);
            let x = g.input(Tensor::vector(vec![1.0, -2.0, 0.5]));
            let y = g.matvec(w, x);
            let y = g.add_bias(y, b);
            let y = g.tanh(y);
            let vv = g.param_vec(v);
            let z = g.mul(y, vv);
            let s1 = g.sigmoid(z);
            let sm = g.log_softmax(s1);
            let p0 = g.pick(sm, 0);
            let d = g.dot(y, vv);
            let ls = g.log_sigmoid(d);
            let total = g.sum_terms(&[p0, ls]);
            g.backward(total, grads);
        }

        for (pid, len) in [(w, 6), (b, 2), (v, 2)] {
            for e in 0..len {
                let analytic = store.grad(pid).as_slice()[e];
                let numeric = numeric_grad(&mut store, pid, e, f);
                let denom = analytic.abs().max(numeric.abs()).max(1e-6);
                assert!(
                    ((analytic - numeric) / denom).abs() < 1e-7,
                    "param {pid:?} elem {e}: {analytic} vs {numeric}"
                );
            }
        }
    }

    #[test]
    fn rows_ops_match_finite_differences() {
        let mut store = ParameterStore::new();
        let m = store
            .register(
                "m",
                Tensor::from_vec(3, 3, vec![0.3, 0.1, -0.2, 0.0, 0.4, 0.2, -0.1, 0.5, 0.6]),
            )
            .unwrap();

        let build = |g: &mut Graph| {
            let h1 = g.input(Tensor::vector(vec![0.1, 0.5, -0.3]));
            let h2 = g.input(Tensor::vector(vec![0.7, -0.2, 0.4]));
            let h = g.stack_rows(&[h1, h2]);
            let x = g.input(Tensor::vector(vec![0.2, -0.6, 0.9]));
            let q = g.matvec_t(m, x);
            let scores = g.rows_dot(h, q);
            let scaled = g.affine(scores, 1.0 / (3f64).sqrt(), 0.0);
            let alpha = g.softmax(scaled);
            let pooled = g.rows_weighted_sum(h, alpha);
            let picked = g.slice(pooled, 0, 2);
            let sm = g.log_softmax(picked);
            g.pick(sm, 1)
        };

        let f = |s: &ParameterStore| {
            let mut g = Graph::new(s.values());
            let out = build(&mut g);
            g.scalar(out)
        };

        store.zero_grads();
        {
            let (values, grads) = store.split_grads();
            let mut g = Graph::new(values);
            let out = build(&mut g);
            g.backward(out, grads);
        }
        for e in 0..9 {
            let analytic = store.grad(m).as_slice()[e];
            let numeric = numeric_grad(&mut store, m, e, f);
            let denom = analytic.abs().max(numeric.abs()).max(1e-6);
            assert!(
                ((analytic - numeric) / denom).abs() < 1e-7,
                "elem {e}: {analytic} vs {numeric}"
            );
        }
    }

    #[test]
    fn softmax_output_is_a_probability_vector() {
        let store = ParameterStore::new();
        let mut g = Graph::new(store.values());
        let x = g.input(Tensor::vector(vec![1.0, 2.0, 3.0, -100.0]));
        let s = g.softmax(x);
        let v = g.value(s).as_slice();
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(v.iter().all(|&p| (0.0..=1.0).contains(&p)));
    }

    #[test]
    fn gather_row_routes_gradient_to_one_row() {
        let mut store = ParameterStore::new();
        let t = store
            .register("t", Tensor::from_vec(3, 2, vec![1., 2., 3., 4., 5., 6.]))
            .unwrap();
        {
            let (values, grads) = store.split_grads();
            let mut g = Graph::new(values);
            let row = g.gather_row(t, 1);
            let u = g.input(Tensor::vector(vec![10.0, 100.0]));
            let d = g.dot(row, u);
            g.backward(d, grads);
        }
        assert_eq!(store.grad(t).row(0), &[0.0, 0.0]);
        assert_eq!(store.grad(t).row(1), &[10.0, 100.0]);
        assert_eq!(store.grad(t).row(2), &[0.0, 0.0]);
    }
}
