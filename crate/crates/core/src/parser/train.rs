use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Example, MixedSampler};
use crate::grammar::tree_equal;
use crate::neural::Tensor;

use super::decode::greedy_decode;
use super::model::ParserModel;

/// Regularization and step-size knobs. The defaults are house choices;
/// tune them per dataset.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Hyperparams {
    pub learning_rate: f64,
    pub dropout: f64,
    pub word_dropout: f64,
    pub label_smoothing: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            learning_rate: 0.05,
            dropout: 0.2,
            word_dropout: 0.1,
            label_smoothing: 0.1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub steps: usize,
    /// Validation cadence; the best-accuracy checkpoint wins.
    pub eval_every: usize,
    pub seed: u64,
    pub hyper: Hyperparams,
    /// Step offset when resuming; per-step RNG streams are derived from
    /// (seed, absolute step), so a resumed run replays the original one.
    pub start_step: usize,
}

impl TrainConfig {
    pub fn new(steps: usize, eval_every: usize, seed: u64) -> Self {
        TrainConfig {
            steps,
            eval_every,
            seed,
            hyper: Hyperparams::default(),
            start_step: 0,
        }
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training loss diverged at step {step}: {loss} (grad norm {grad_norm})")]
    Diverged {
        step: usize,
        loss: f64,
        grad_norm: f64,
    },
    #[error("step {step}: {source}")]
    Loss {
        step: usize,
        #[source]
        source: super::loss::LossError,
    },
    #[error("update failed at step {step}: {source}")]
    Update {
        step: usize,
        #[source]
        source: crate::neural::NeuralError,
    },
    #[error(transparent)]
    Decode(#[from] super::decode::DecodeError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainLogEntry {
    pub step: usize,
    pub mean_loss: f64,
    pub valid_accuracy: f64,
}

#[derive(Debug)]
pub struct TrainReport {
    pub curve: Vec<TrainLogEntry>,
    pub best_accuracy: f64,
    pub best_step: usize,
    pub final_step: usize,
    /// Parameter state at the last step (the model itself is left at the
    /// best-on-validation state). Needed to resume a run exactly.
    pub final_entries: Vec<(String, Tensor, Tensor)>,
}

/// Fraction of `pairs` whose greedy parse exactly matches gold.
pub fn evaluate_accuracy(model: &ParserModel, examples: &[Example]) -> Result<f64, TrainError> {
    if examples.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    for ex in examples {
        let decoded = greedy_decode(model, &ex.sentence)?;
        if tree_equal(&decoded.tree, &ex.tree) {
            hits += 1;
        }
    }
    Ok(hits as f64 / examples.len() as f64)
}

/// Online training: one Adagrad step per sampled example, periodic greedy
/// evaluation on `valid`, and best-on-validation model selection (the
/// model is left holding the best parameters).
pub fn train_parser(
    model: &mut ParserModel,
    sampler: &mut MixedSampler,
    valid: &[Example],
    config: &TrainConfig,
) -> Result<TrainReport, TrainError> {
    let mut curve = Vec::new();
    let mut best_accuracy = f64::NEG_INFINITY;
    let mut best_step = config.start_step;
    let mut best_params: Option<Vec<(String, Tensor, Tensor)>> = None;
    let mut window_loss = 0.0;
    let mut window_count = 0usize;

    if config.steps == 0 {
        return Ok(TrainReport {
            curve,
            best_accuracy: evaluate_accuracy(model, valid)?,
            best_step,
            final_step: config.start_step,
            final_entries: snapshot(model),
        });
    }

    for i in 0..config.steps {
        let step = config.start_step + i;
        let example = sampler.next_example().clone();
        let step_seed = crate::derive_seed(config.seed, &[2, step as u64]);
        let loss = model
            .loss_and_grad(
                &example.sentence,
                &example.tree,
                config.hyper.label_smoothing,
                config.hyper.word_dropout,
                config.hyper.dropout,
                step_seed,
            )
            .map_err(|source| TrainError::Loss { step, source })?;
        if !loss.is_finite() {
            return Err(TrainError::Diverged {
                step,
                loss,
                grad_norm: model.store.grad_norm(),
            });
        }
        model
            .store
            .adagrad_step(config.hyper.learning_rate)
            .map_err(|source| TrainError::Update { step, source })?;
        window_loss += loss;
        window_count += 1;

        let is_eval = (i + 1) % config.eval_every == 0 || i + 1 == config.steps;
        if is_eval {
            let accuracy = evaluate_accuracy(model, valid)?;
            curve.push(TrainLogEntry {
                step: step + 1,
                mean_loss: window_loss / window_count.max(1) as f64,
                valid_accuracy: accuracy,
            });
            window_loss = 0.0;
            window_count = 0;
            if accuracy > best_accuracy {
                best_accuracy = accuracy;
                best_step = step + 1;
                best_params = Some(
                    model
                        .store
                        .entries()
                        .map(|(n, v, a)| (n.to_string(), v.clone(), a.clone()))
                        .collect(),
                );
            }
        }
    }

    let final_entries = snapshot(model);
    if let Some(entries) = best_params {
        model
            .store
            .restore(&entries)
            .expect("snapshot matches the store it came from");
    }
    Ok(TrainReport {
        curve,
        best_accuracy,
        best_step,
        final_step: config.start_step + config.steps,
        final_entries,
    })
}

fn snapshot(model: &ParserModel) -> Vec<(String, Tensor, Tensor)> {
    model
        .store
        .entries()
        .map(|(n, v, a)| (n.to_string(), v.clone(), a.clone()))
        .collect()
}
