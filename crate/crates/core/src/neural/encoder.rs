use rand::Rng;
use thiserror::Error;

use super::store::{NeuralError, ParamId, ParameterStore};
use super::tape::{Graph, NodeId};
use super::tensor::Tensor;

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("cannot encode an empty sentence")]
    EmptySentence,
    #[error(transparent)]
    Store(#[from] NeuralError),
}

/// One GRU cell's parameters, gate layout `[r; z; n]`.
#[derive(Debug, Clone, Copy)]
pub struct GruCellParams {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub b_ih: ParamId,
    pub b_hh: ParamId,
    pub hidden: usize,
}

impl GruCellParams {
    pub fn register<R: Rng>(
        store: &mut ParameterStore,
        prefix: &str,
        input_dim: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self, NeuralError> {
        let w_ih = store.register(
            &format!("{prefix}.w_ih"),
            xavier(3 * hidden, input_dim, rng),
        )?;
        let w_hh = store.register(&format!("{prefix}.w_hh"), xavier(3 * hidden, hidden, rng))?;
        let b_ih = store.register(&format!("{prefix}.b_ih"), Tensor::zeros(3 * hidden, 1))?;
        let b_hh = store.register(&format!("{prefix}.b_hh"), Tensor::zeros(3 * hidden, 1))?;
        Ok(GruCellParams {
            w_ih,
            w_hh,
            b_ih,
            b_hh,
            hidden,
        })
    }

    /// One step: `h' = (1-z) ⊙ n + z ⊙ h` with
    /// `r = σ(W_r x + U_r h)`, `z = σ(W_z x + U_z h)`,
    /// `n = tanh(W_n x + r ⊙ (U_n h))` (biases folded in).
    pub fn step(&self, g: &mut Graph, x: NodeId, h: NodeId) -> NodeId {
        let d = self.hidden;
        let gi = self.apply_affine(g, self.w_ih, self.b_ih, x);
        let gh = self.apply_affine(g, self.w_hh, self.b_hh, h);
        let gi_r = g.slice(gi, 0, d);
        let gi_z = g.slice(gi, d, d);
        let gi_n = g.slice(gi, 2 * d, d);
        let gh_r = g.slice(gh, 0, d);
        let gh_z = g.slice(gh, d, d);
        let gh_n = g.slice(gh, 2 * d, d);
        let r_pre = g.add(gi_r, gh_r);
        let r = g.sigmoid(r_pre);
        let z_pre = g.add(gi_z, gh_z);
        let z = g.sigmoid(z_pre);
        let gated = g.mul(r, gh_n);
        let n_pre = g.add(gi_n, gated);
        let n = g.tanh(n_pre);
        let keep = g.affine(z, -1.0, 1.0);
        let new_part = g.mul(keep, n);
        let old_part = g.mul(z, h);
        g.add(new_part, old_part)
    }

    fn apply_affine(&self, g: &mut Graph, w: ParamId, b: ParamId, x: NodeId) -> NodeId {
        let y = g.matvec(w, x);
        g.add_bias(y, b)
    }
}

/// Stacked bidirectional GRU encoder with a learned projection of the
/// final concatenated states down to width `d`.
#[derive(Debug, Clone)]
pub struct EncoderParams {
    layers: Vec<(GruCellParams, GruCellParams)>,
    proj: ParamId,
    proj_b: ParamId,
    pub d: usize,
}

impl EncoderParams {
    pub fn register<R: Rng>(
        store: &mut ParameterStore,
        input_dim: usize,
        d: usize,
        num_layers: usize,
        rng: &mut R,
    ) -> Result<Self, NeuralError> {
        let mut layers = Vec::with_capacity(num_layers);
        let mut width = input_dim;
        for l in 0..num_layers {
            let fwd = GruCellParams::register(store, &format!("enc.l{l}.fwd"), width, d, rng)?;
            let bwd = GruCellParams::register(store, &format!("enc.l{l}.bwd"), width, d, rng)?;
            layers.push((fwd, bwd));
            width = 2 * d;
        }
        let proj = store.register("enc.proj", xavier(d, 2 * d, rng))?;
        let proj_b = store.register("enc.proj_b", Tensor::zeros(d, 1))?;
        Ok(EncoderParams {
            layers,
            proj,
            proj_b,
            d,
        })
    }

    /// Encodes embedded tokens into per-token states `h_t ∈ R^d`.
    /// Bidirectional: every output depends on the whole sentence.
    pub fn encode(&self, g: &mut Graph, inputs: &[NodeId]) -> Result<Vec<NodeId>, EncoderError> {
        if inputs.is_empty() {
            return Err(EncoderError::EmptySentence);
        }
        let t_len = inputs.len();
        let mut layer_in: Vec<NodeId> = inputs.to_vec();
        for (fwd, bwd) in &self.layers {
            let mut fwd_states = Vec::with_capacity(t_len);
            let mut h = g.zeros(fwd.hidden);
            for &x in &layer_in {
                h = fwd.step(g, x, h);
                fwd_states.push(h);
            }
            let mut bwd_states = Vec::with_capacity(t_len);
            let mut hb = g.zeros(bwd.hidden);
            for t in (0..t_len).rev() {
                hb = bwd.step(g, layer_in[t], hb);
                bwd_states.push(hb);
            }
            bwd_states.reverse();
            layer_in = (0..t_len)
                .map(|t| g.concat(fwd_states[t], bwd_states[t]))
                .collect();
        }
        Ok(layer_in
            .into_iter()
            .map(|x| {
                let y = g.matvec(self.proj, x);
                g.add_bias(y, self.proj_b)
            })
            .collect())
    }
}

/// Value-level encoder entry point: takes an already-embedded matrix as
/// rows and returns the per-token states.
pub fn encode_sentence_values(
    store: &ParameterStore,
    params: &EncoderParams,
    embedded: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>, EncoderError> {
    let mut g = Graph::new(store.values());
    let inputs: Vec<NodeId> = embedded
        .iter()
        .map(|row| g.input(Tensor::vector(row.clone())))
        .collect();
    let hs = params.encode(&mut g, &inputs)?;
    Ok(hs.into_iter().map(|h| g.value(h).as_slice().to_vec()).collect())
}

pub(crate) fn xavier<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Tensor::from_fn(rows, cols, |_, _| rng.gen_range(-bound..bound))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(input_dim: usize, d: usize) -> (ParameterStore, EncoderParams) {
        let mut store = ParameterStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let enc = EncoderParams::register(&mut store, input_dim, d, 2, &mut rng).unwrap();
        (store, enc)
    }

    #[test]
    fn single_token_has_width_d() {
        let (store, enc) = setup(3, 5);
        let h = encode_sentence_values(&store, &enc, &[vec![0.1, 0.2, 0.3]]).unwrap();
        assert_eq!(h.len(), 1);
        assert_eq!(h[0].len(), 5);
    }

    #[test]
    fn empty_sentence_is_an_error() {
        let (store, enc) = setup(3, 4);
        assert!(matches!(
            encode_sentence_values(&store, &enc, &[]),
            Err(EncoderError::EmptySentence)
        ));
    }

    #[test]
    fn all_zero_parameters_give_identical_states_across_positions() {
        // With every cell weight and bias zero the update degenerates to
        // h' = 0.5·tanh(0) + 0.5·h = 0.5·h, which stays at the zero
        // initial state, so all positions encode identically.
        let mut store = ParameterStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let enc = EncoderParams::register(&mut store, 2, 3, 2, &mut rng).unwrap();
        for id in store.ids().collect::<Vec<_>>() {
            store.value_mut(id).fill(0.0);
        }
        let h = encode_sentence_values(
            &store,
            &enc,
            &[vec![1.0, -1.0], vec![0.3, 0.9], vec![2.0, 0.0]],
        )
        .unwrap();
        for t in 1..h.len() {
            assert_eq!(h[t], h[0]);
        }
        assert!(h[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn each_state_depends_on_the_whole_sentence() {
        let (store, enc) = setup(2, 4);
        let base = vec![vec![0.5, -0.2], vec![0.1, 0.9], vec![-0.7, 0.3]];
        let h0 = encode_sentence_values(&store, &enc, &base).unwrap();
        for changed in 0..3 {
            let mut alt = base.clone();
            alt[changed][0] += 1.0;
            let h1 = encode_sentence_values(&store, &enc, &alt).unwrap();
            for t in 0..3 {
                assert_ne!(
                    h0[t], h1[t],
                    "state {t} ignored a change at position {changed}"
                );
            }
        }
    }

    #[test]
    fn deterministic_given_params() {
        let (store, enc) = setup(2, 4);
        let s = vec![vec![0.5, -0.2], vec![0.1, 0.9]];
        let a = encode_sentence_values(&store, &enc, &s).unwrap();
        let b = encode_sentence_values(&store, &enc, &s).unwrap();
        assert_eq!(a, b);
    }
}
