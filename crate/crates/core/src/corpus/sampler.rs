use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grammar::GrammarSchema;

use super::io::Example;
use super::stats::action_key;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("no pools configured")]
    NoPools,
    #[error("pool `{0}` is empty")]
    EmptyPool(String),
    #[error("target distribution entry `{0}` is not positive")]
    NonPositiveTarget(String),
    #[error("pool `{pool}` has no examples of action type `{action}` (target probability {p})")]
    MissingType {
        pool: String,
        action: String,
        p: f64,
    },
}

/// Named pools plus an optional target action distribution. With a
/// target, each draw picks an action type first and then an unseen
/// example of that type; without one, each pool is a single subset
/// sampled in whole-epoch shuffles.
pub struct SamplerSpec {
    pools: Vec<(String, Vec<Example>)>,
    target: Option<Vec<(String, f64)>>,
}

impl SamplerSpec {
    pub fn new(
        pools: Vec<(String, Vec<Example>)>,
        target: Option<Vec<(String, f64)>>,
        schema: &GrammarSchema,
    ) -> Result<Self, SamplerError> {
        if pools.is_empty() {
            return Err(SamplerError::NoPools);
        }
        for (name, examples) in &pools {
            if examples.is_empty() {
                return Err(SamplerError::EmptyPool(name.clone()));
            }
        }
        if let Some(target) = &target {
            for (action, p) in target {
                if !p.is_finite() || *p <= 0.0 {
                    return Err(SamplerError::NonPositiveTarget(action.clone()));
                }
            }
            for (name, examples) in &pools {
                for (action, p) in target {
                    let present = examples
                        .iter()
                        .any(|ex| &action_key(&ex.tree, schema) == action);
                    if !present {
                        return Err(SamplerError::MissingType {
                            pool: name.clone(),
                            action: action.clone(),
                            p: *p,
                        });
                    }
                }
            }
        }
        Ok(SamplerSpec { pools, target })
    }

    pub fn pools(&self) -> &[(String, Vec<Example>)] {
        &self.pools
    }
}

/// Resumable position of a sampler: enough to reproduce the next draw
/// exactly. Serialized into training checkpoints.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct SamplerState {
    pub draw: u64,
    /// Per (pool, subset-key): epoch counter and position within the
    /// epoch's shuffle.
    pub subsets: BTreeMap<String, (u64, usize)>,
}

impl SamplerState {
    pub fn fresh() -> Self {
        SamplerState {
            draw: 0,
            subsets: BTreeMap::new(),
        }
    }
}

/// Deterministic mixed sampler. Pools alternate strictly (draw i comes
/// from pool i mod P); subset shuffles are keyed by (seed, pool, subset,
/// epoch) so any state can be re-entered exactly.
pub struct MixedSampler<'a> {
    spec: &'a SamplerSpec,
    /// Per pool: subset key -> example indices of that subset.
    subsets: Vec<BTreeMap<String, Vec<usize>>>,
    seed: u64,
    state: SamplerState,
    /// Current epoch's shuffle per subset, keyed like the state map.
    order_cache: std::collections::HashMap<String, (u64, Vec<usize>)>,
}

const WHOLE_POOL: &str = "__all__";

impl<'a> MixedSampler<'a> {
    pub fn new(spec: &'a SamplerSpec, schema: &GrammarSchema, seed: u64) -> Self {
        Self::with_state(spec, schema, seed, SamplerState::fresh())
    }

    pub fn with_state(
        spec: &'a SamplerSpec,
        schema: &GrammarSchema,
        seed: u64,
        state: SamplerState,
    ) -> Self {
        let mut subsets = Vec::new();
        for (_, examples) in &spec.pools {
            let mut m: BTreeMap<String, Vec<usize>> = BTreeMap::new();
            match &spec.target {
                Some(_) => {
                    for (i, ex) in examples.iter().enumerate() {
                        m.entry(action_key(&ex.tree, schema)).or_default().push(i);
                    }
                }
                None => {
                    m.insert(WHOLE_POOL.to_string(), (0..examples.len()).collect());
                }
            }
            subsets.push(m);
        }
        MixedSampler {
            spec,
            subsets,
            seed,
            state,
            order_cache: std::collections::HashMap::new(),
        }
    }

    pub fn state(&self) -> &SamplerState {
        &self.state
    }

    /// Draws the next example. Deterministic given (spec, seed, state).
    pub fn next_example(&mut self) -> &'a Example {
        let pool_ix = (self.state.draw % self.spec.pools.len() as u64) as usize;
        let subset_key = match &self.spec.target {
            Some(target) => {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(crate::derive_seed(self.seed, &[0, self.state.draw]));
                let x: f64 = rng.gen();
                pick_from_target(target, x)
            }
            None => WHOLE_POOL.to_string(),
        };
        let indices = &self.subsets[pool_ix][&subset_key];
        let state_key = format!("{pool_ix}/{subset_key}");
        let (epoch, pos) = self
            .state
            .subsets
            .get(&state_key)
            .copied()
            .unwrap_or((0, 0));
        let (epoch, pos) = if pos >= indices.len() { (epoch + 1, 0) } else { (epoch, pos) };
        let cached = self.order_cache.get(&state_key);
        if cached.map(|(e, _)| *e != epoch).unwrap_or(true) {
            let order = self.epoch_order(pool_ix, &subset_key, epoch, indices.len());
            self.order_cache.insert(state_key.clone(), (epoch, order));
        }
        let order = &self.order_cache[&state_key].1;
        let example_ix = indices[order[pos]];
        self.state.subsets.insert(state_key, (epoch, pos + 1));
        self.state.draw += 1;
        &self.spec.pools[pool_ix].1[example_ix]
    }

    /// The shuffle of one subset epoch. Recomputed on demand from its key
    /// so sampler state stays tiny.
    fn epoch_order(&self, pool_ix: usize, subset: &str, epoch: u64, len: usize) -> Vec<usize> {
        let key = crate::derive_seed(
            self.seed,
            &[1, pool_ix as u64, crate::fnv64(subset.as_bytes()), epoch],
        );
        let mut order: Vec<usize> = (0..len).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(key));
        order
    }
}

fn pick_from_target(target: &[(String, f64)], x: f64) -> String {
    let total: f64 = target.iter().map(|(_, p)| p).sum();
    let mut acc = 0.0;
    for (name, p) in target {
        acc += p / total;
        if x < acc {
            return name.clone();
        }
    }
    target.last().unwrap().0.clone()
}
