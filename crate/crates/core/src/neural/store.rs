use std::collections::HashMap;

use thiserror::Error;

use super::tensor::Tensor;

/// Handle to one named parameter tensor in a [`ParameterStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("parameter `{0}` registered twice")]
    DuplicateParam(String),
    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("non-finite value in parameter `{0}` after update")]
    NonFiniteParam(String),
}

const ADAGRAD_EPS: f64 = 1e-10;

/// Named dense parameters with paired gradient buffers and Adagrad
/// accumulators. Registration order is the canonical iteration order, so
/// checkpoints and seeded initialization are reproducible.
#[derive(Debug, Clone)]
pub struct ParameterStore {
    names: Vec<String>,
    index: HashMap<String, usize>,
    values: Vec<Tensor>,
    grads: Vec<Tensor>,
    accums: Vec<Tensor>,
}

impl ParameterStore {
    pub fn new() -> Self {
        ParameterStore {
            names: Vec::new(),
            index: HashMap::new(),
            values: Vec::new(),
            grads: Vec::new(),
            accums: Vec::new(),
        }
    }

    pub fn register(&mut self, name: &str, value: Tensor) -> Result<ParamId, NeuralError> {
        if self.index.contains_key(name) {
            return Err(NeuralError::DuplicateParam(name.to_string()));
        }
        let id = self.values.len();
        self.index.insert(name.to_string(), id);
        self.names.push(name.to_string());
        let (r, c) = value.shape();
        self.values.push(value);
        self.grads.push(Tensor::zeros(r, c));
        self.accums.push(Tensor::zeros(r, c));
        Ok(ParamId(id))
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn element_count(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    /// Direct mutable access, used by tests that plant specific weights
    /// and by checkpoint restore.
    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.grads[id.0]
    }

    pub fn accum(&self, id: ParamId) -> &Tensor {
        &self.accums[id.0]
    }

    pub fn accum_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.accums[id.0]
    }

    pub fn values(&self) -> &[Tensor] {
        &self.values
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    /// Simultaneous read access to values and write access to gradients,
    /// the two halves `Graph::backward` needs.
    pub fn split_grads(&mut self) -> (&[Tensor], &mut [Tensor]) {
        (&self.values, &mut self.grads)
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            g.fill(0.0);
        }
    }

    /// One Adagrad update over every parameter:
    /// `accum += g²; param -= lr * g / (sqrt(accum) + eps)`.
    /// Gradients are cleared afterwards. Fails fast on non-finite
    /// gradients so a diverging run aborts at the first bad step.
    pub fn adagrad_step(&mut self, learning_rate: f64) -> Result<(), NeuralError> {
        for i in 0..self.values.len() {
            if !self.grads[i].is_finite() {
                return Err(NeuralError::NonFiniteGradient(self.names[i].clone()));
            }
            let value = self.values[i].as_mut_slice();
            let grad = self.grads[i].as_mut_slice();
            let accum = self.accums[i].as_mut_slice();
            for j in 0..value.len() {
                let g = grad[j];
                accum[j] += g * g;
                value[j] -= learning_rate * g / (accum[j].sqrt() + ADAGRAD_EPS);
                grad[j] = 0.0;
            }
            if !self.values[i].is_finite() {
                return Err(NeuralError::NonFiniteParam(self.names[i].clone()));
            }
        }
        Ok(())
    }

    /// Gradient L2 norm, for divergence diagnostics.
    pub fn grad_norm(&self) -> f64 {
        self.grads
            .iter()
            .flat_map(|g| g.as_slice())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    /// (name, value, accum) triples in registration order, for
    /// checkpointing.
    pub fn entries(&self) -> impl Iterator<Item = (&str, &Tensor, &Tensor)> {
        self.names
            .iter()
            .zip(&self.values)
            .zip(&self.accums)
            .map(|((n, v), a)| (n.as_str(), v, a))
    }

    /// Overwrites values and accumulators by name. Every entry must match
    /// an existing parameter with identical shape.
    pub fn restore(&mut self, entries: &[(String, Tensor, Tensor)]) -> Result<(), String> {
        for (name, value, accum) in entries {
            let id = self
                .index
                .get(name)
                .copied()
                .ok_or_else(|| format!("checkpoint has unknown parameter `{name}`"))?;
            if self.values[id].shape() != value.shape() {
                return Err(format!(
                    "parameter `{name}` shape mismatch: {:?} vs {:?}",
                    self.values[id].shape(),
                    value.shape()
                ));
            }
            self.values[id] = value.clone();
            self.accums[id] = accum.clone();
        }
        Ok(())
    }
}

impl Default for ParameterStore {
    fn default() -> Self {
        Self::new()
    }
}
