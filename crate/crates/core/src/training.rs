//! Mini-batch training with cross-entropy loss and Adam.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::fusion::classify;
use crate::model::{backward, forward_batch, loss_from_logits, ArticleFeatures, ModelParams};
use crate::rng::{SeededRng, SHUFFLE_STREAM};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Seeds the per-epoch shuffle.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 16,
            epochs: 10,
            learning_rate: 1e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::InvalidArgument("Adam betas must lie in [0, 1)".into()));
        }
        if self.adam_eps.is_nan() || self.adam_eps <= 0.0 {
            return Err(Error::InvalidArgument("adam_eps must be positive".into()));
        }
        Ok(())
    }
}

/// Anything Adam can update: an ordered list of flat tensors.
pub trait Parameters {
    fn slices(&self) -> Vec<&[f64]>;
    fn slices_mut(&mut self) -> Vec<&mut [f64]>;
    fn mark_updated(&mut self) {}
}

impl Parameters for ModelParams {
    fn slices(&self) -> Vec<&[f64]> {
        self.tensors().into_iter().map(|t| t.data).collect()
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.tensors_mut()
    }

    fn mark_updated(&mut self) {
        self.generation += 1;
    }
}

impl Parameters for Vec<f64> {
    fn slices(&self) -> Vec<&[f64]> {
        vec![self.as_slice()]
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.as_mut_slice()]
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdamState {
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

/// One bias-corrected Adam update:
/// `m ← β1 m + (1-β1) g`, `v ← β2 v + (1-β2) g²`,
/// `θ ← θ - lr · m̂ / (sqrt(v̂) + ε)` with `m̂ = m / (1-β1^t)`, `v̂ = v / (1-β2^t)`.
pub fn adam_step<P: Parameters>(params: &mut P, grads: &P, state: &mut AdamState, config: &TrainConfig) {
    let grads = grads.slices();
    if state.m.is_empty() {
        state.m = grads.iter().map(|g| vec![0.0; g.len()]).collect();
        state.v = state.m.clone();
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (config.adam_beta1, config.adam_beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (((p, g), m), v) in params
        .slices_mut()
        .into_iter()
        .zip(grads)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        for i in 0..p.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= config.learning_rate * m_hat / (v_hat.sqrt() + config.adam_eps);
        }
    }
    params.mark_updated();
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub train_accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Not part of any written artifact, so reruns stay byte-identical.
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

impl TrainHistory {
    /// One JSON object per epoch, each carrying `extra` (seeds, config hash).
    pub fn to_jsonl(&self, extra: &serde_json::Map<String, serde_json::Value>) -> Result<String> {
        let mut out = String::new();
        for rec in &self.epochs {
            let mut obj = match serde_json::to_value(rec)? {
                serde_json::Value::Object(o) => o,
                _ => unreachable!("struct serialises to an object"),
            };
            for (k, v) in extra {
                obj.insert(k.clone(), v.clone());
            }
            out.push_str(&serde_json::to_string(&obj)?);
            out.push('\n');
        }
        Ok(out)
    }
}

/// Trains every parameter group for `config.epochs` passes over `train_set`.
/// Each epoch visits the samples in a fresh seeded permutation, in batches of
/// `batch_size` (the last one may be smaller). Loss and accuracy in the
/// history are measured on each batch before its update.
pub fn train(
    mut model: ModelParams,
    train_set: &[ArticleFeatures],
    config: &TrainConfig,
) -> Result<(ModelParams, TrainHistory)> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    let started = Instant::now();
    let mut history = TrainHistory::default();
    let mut state = AdamState::default();
    let mut rng = SeededRng::new(config.seed ^ SHUFFLE_STREAM);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=config.epochs {
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&ArticleFeatures> = chunk.iter().map(|&i| &train_set[i]).collect();
            let cache = forward_batch(&model, &batch)?;
            for (x, probs) in batch.iter().zip(cache.probs()) {
                if classify(probs) == x.label {
                    correct += 1;
                }
            }
            loss_sum += cache_loss(&cache, &batch);
            let grads = backward(&model, &batch, &cache)?;
            adam_step(&mut model, &grads, &mut state, config);
        }
        if !model.is_finite() {
            return Err(Error::NonFinite(format!("model parameters after epoch {epoch}")));
        }
        let n = train_set.len() as f64;
        history.epochs.push(EpochRecord {
            epoch,
            mean_loss: loss_sum / n,
            train_accuracy: correct as f64 / n,
        });
        log::debug!(
            "epoch {epoch}: loss {:.4} acc {:.4}",
            loss_sum / n,
            correct as f64 / n
        );
    }
    history.wall_clock_secs = started.elapsed().as_secs_f64();
    Ok((model, history))
}

fn cache_loss(cache: &crate::model::BatchCache, batch: &[&ArticleFeatures]) -> f64 {
    cache
        .logits()
        .zip(batch)
        .map(|(z, x)| loss_from_logits(z, x.label))
        .sum()
}

/// Fraction of `data` the model labels correctly.
pub fn accuracy(model: &ModelParams, data: &[ArticleFeatures]) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0;
    for x in data {
        if classify(crate::model::predict(model, x)?) == x.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Labels in evaluation order.
pub fn labels(data: &[ArticleFeatures]) -> Vec<Label> {
    data.iter().map(|x| x.label).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_identity() {
        let mut p = vec![1.0, -2.0, 3.5];
        let before = p.clone();
        let mut st = AdamState::default();
        adam_step(&mut p, &vec![0.0; 3], &mut st, &TrainConfig::default());
        assert_eq!(p, before);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let cfg = TrainConfig {
            learning_rate: 0.01,
            ..TrainConfig::default()
        };
        for g in [0.5, -3.0, 1e-3] {
            let mut p = vec![0.0];
            adam_step(&mut p, &vec![g], &mut AdamState::default(), &cfg);
            // m̂ = g, v̂ = g², so the step is lr · g / (|g| + eps)
            let expected = -0.01 * g / (g.abs() + 1e-8);
            assert!((p[0] - expected).abs() < 1e-15);
            assert!((p[0].abs() - 0.01).abs() < 1e-7);
        }
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn history_jsonl_has_one_line_per_epoch() {
        let h = TrainHistory {
            epochs: vec![
                EpochRecord {
                    epoch: 1,
                    mean_loss: 0.5,
                    train_accuracy: 0.75,
                },
                EpochRecord {
                    epoch: 2,
                    mean_loss: 0.25,
                    train_accuracy: 1.0,
                },
            ],
            wall_clock_secs: 3.0,
        };
        let mut extra = serde_json::Map::new();
        extra.insert("train_seed".into(), 7.into());
        let s = h.to_jsonl(&extra).unwrap();
        let lines: Vec<_> = s.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[1].contains("\"train_seed\":7"));
        assert!(!s.contains("wall_clock"));
    }
}
