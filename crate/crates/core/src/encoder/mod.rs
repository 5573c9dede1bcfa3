//! d-vector speaker encoder: stacked LSTM layers, a linear projection to the
//! embedding width, pooling over time, L2 normalization and a softmax speaker
//! classifier used only during training.
//!
//! All parameters live in one flat vector so the optimizer and the
//! finite-difference checker can treat the model uniformly.

mod checkpoint;
mod gradcheck;
mod lstm;
mod ops;
mod train;

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::{check_dim, Embedding};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

pub use checkpoint::{load_model, save_model};
pub use gradcheck::{gradient_check, GradientCheck, Objective, MAX_CHECK_PARAMS};
pub use train::{batch_gradient, train, Adam, TrainOutcome};

use lstm::{LstmGrads, LstmWeights};
use ops::{add_assign, gemv_add, gemv_t_add, outer_add};

/// How per-frame projection outputs are reduced to one utterance vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    #[default]
    Mean,
    Last,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub input_dim: usize,
    pub n_recurrent_layers: usize,
    pub recurrent_units: usize,
    pub embedding_dim: usize,
    pub n_speakers: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_steps: usize,
    pub seed: u64,
    pub pooling: Pooling,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            input_dim: 20,
            n_recurrent_layers: 2,
            recurrent_units: 64,
            embedding_dim: 128,
            n_speakers: 16,
            learning_rate: 1e-3,
            batch_size: 16,
            max_steps: 500,
            seed: 0,
            pooling: Pooling::Mean,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("input_dim", self.input_dim),
            ("n_recurrent_layers", self.n_recurrent_layers),
            ("recurrent_units", self.recurrent_units),
            ("embedding_dim", self.embedding_dim),
            ("n_speakers", self.n_speakers),
            ("batch_size", self.batch_size),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidConfig(format!("{name} must be positive")));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(
                "learning_rate must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorInfo {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
struct LayerSlots {
    input: usize,
    /// Whole layer: `w_input`, then `w_recurrent`, then `bias`.
    range: Range<usize>,
}

#[derive(Debug, Clone, PartialEq)]
struct Layout {
    layers: Vec<LayerSlots>,
    proj_w: Range<usize>,
    proj_b: Range<usize>,
    cls_w: Range<usize>,
    cls_b: Range<usize>,
}

impl Layout {
    fn new(c: &EncoderConfig) -> Self {
        let h = c.recurrent_units;
        let mut at = 0;
        let mut take = |n: usize| {
            let r = at..at + n;
            at += n;
            r
        };
        let layers = (0..c.n_recurrent_layers)
            .map(|l| {
                let input = if l == 0 { c.input_dim } else { h };
                LayerSlots {
                    input,
                    range: take(4 * h * (input + h + 1)),
                }
            })
            .collect();
        let proj_w = take(c.embedding_dim * h);
        let proj_b = take(c.embedding_dim);
        let cls_w = take(c.n_speakers * c.embedding_dim);
        let cls_b = take(c.n_speakers);
        Self {
            layers,
            proj_w,
            proj_b,
            cls_w,
            cls_b,
        }
    }

    fn total(&self) -> usize {
        self.cls_b.end
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderModel {
    config: EncoderConfig,
    params: Vec<f64>,
    layout: Layout,
}

struct Forward {
    layer_inputs: Vec<Vec<f64>>,
    caches: Vec<lstm::LstmCache>,
    pooled_norm: f64,
    embedding: Vec<f64>,
    log_probs: Vec<f64>,
    steps: usize,
}

impl EncoderModel {
    /// Fresh model, every matrix uniform in `±1/sqrt(fan_in)` from the config seed.
    pub fn new(config: EncoderConfig) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        let mut params = vec![0.0; layout.total()];
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let h = config.recurrent_units;
        let mut fill = |r: Range<usize>, fan_in: usize| {
            let a = 1.0 / (fan_in as f64).sqrt();
            for p in &mut params[r] {
                *p = rng.random_range(-a..a);
            }
        };
        for slot in &layout.layers {
            let s = slot.range.start;
            let wx = 4 * h * slot.input;
            fill(s..s + wx, slot.input);
            fill(s + wx..s + wx + 4 * h * h, h);
            fill(s + wx + 4 * h * h..slot.range.end, h);
        }
        fill(layout.proj_w.clone(), h);
        fill(layout.proj_b.clone(), h);
        fill(layout.cls_w.clone(), config.embedding_dim);
        fill(layout.cls_b.clone(), config.embedding_dim);
        Ok(Self {
            config,
            params,
            layout,
        })
    }

    pub fn from_parts(config: EncoderConfig, params: Vec<f64>) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        if params.len() != layout.total() {
            return Err(Error::InvalidInput(format!(
                "parameter vector has {} values, config requires {}",
                params.len(),
                layout.total()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidInput("non-finite model weight".into()));
        }
        Ok(Self {
            config,
            params,
            layout,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    /// Named tensors in storage order.
    pub fn tensors(&self) -> Vec<TensorInfo> {
        let h = self.config.recurrent_units;
        let e = self.config.embedding_dim;
        let mut out = Vec::new();
        for (l, slot) in self.layout.layers.iter().enumerate() {
            let s = slot.range.start;
            let wx = 4 * h * slot.input;
            out.push(TensorInfo {
                name: format!("lstm{l}.w_input"),
                shape: vec![4 * h, slot.input],
                offset: s,
            });
            out.push(TensorInfo {
                name: format!("lstm{l}.w_recurrent"),
                shape: vec![4 * h, h],
                offset: s + wx,
            });
            out.push(TensorInfo {
                name: format!("lstm{l}.bias"),
                shape: vec![4 * h],
                offset: s + wx + 4 * h * h,
            });
        }
        out.push(TensorInfo {
            name: "projection.weight".into(),
            shape: vec![e, h],
            offset: self.layout.proj_w.start,
        });
        out.push(TensorInfo {
            name: "projection.bias".into(),
            shape: vec![e],
            offset: self.layout.proj_b.start,
        });
        out.push(TensorInfo {
            name: "classifier.weight".into(),
            shape: vec![self.config.n_speakers, e],
            offset: self.layout.cls_w.start,
        });
        out.push(TensorInfo {
            name: "classifier.bias".into(),
            shape: vec![self.config.n_speakers],
            offset: self.layout.cls_b.start,
        });
        out
    }

    fn lstm_weights(&self, l: usize) -> LstmWeights<'_> {
        let slot = &self.layout.layers[l];
        let h = self.config.recurrent_units;
        let p = &self.params[slot.range.clone()];
        let (w_input, rest) = p.split_at(4 * h * slot.input);
        let (w_recurrent, bias) = rest.split_at(4 * h * h);
        LstmWeights {
            w_input,
            w_recurrent,
            bias,
            input: slot.input,
            hidden: h,
        }
    }

    fn check_features(&self, features: &FeatureMatrix) -> Result<()> {
        if features.n_coeffs != self.config.input_dim {
            return Err(Error::FeatureDimensionMismatch {
                expected: self.config.input_dim,
                actual: features.n_coeffs,
            });
        }
        if features.n_frames == 0 {
            return Err(Error::InvalidInput("feature matrix has no frames".into()));
        }
        Ok(())
    }

    /// Projection output pooled over time, before normalization.
    fn pool(&self, top: &[f64], steps: usize) -> Vec<f64> {
        let h = self.config.recurrent_units;
        let mut summary = vec![0.0; h];
        match self.config.pooling {
            Pooling::Mean => {
                for row in top.chunks_exact(h) {
                    summary.iter_mut().zip(row).for_each(|(s, v)| *s += v);
                }
                summary.iter_mut().for_each(|s| *s /= steps as f64);
            }
            Pooling::Last => summary.copy_from_slice(&top[(steps - 1) * h..]),
        }
        // The projection is affine, so pooling commutes with it.
        let mut pooled = self.params[self.layout.proj_b.clone()].to_vec();
        gemv_add(
            &mut pooled,
            &self.params[self.layout.proj_w.clone()],
            &summary,
        );
        pooled
    }

    fn forward(&self, features: &FeatureMatrix) -> Forward {
        let steps = features.n_frames;
        let mut layer_inputs = Vec::with_capacity(self.layout.layers.len());
        let mut caches = Vec::with_capacity(self.layout.layers.len());
        let mut xs = features.data.clone();
        for l in 0..self.layout.layers.len() {
            let cache = lstm::forward(&self.lstm_weights(l), &xs);
            let next = cache.hidden.clone();
            layer_inputs.push(std::mem::replace(&mut xs, next));
            caches.push(cache);
        }
        let pooled = self.pool(&xs, steps);
        let pooled_norm = crate::embedding::norm(&pooled).max(1e-12);
        let embedding: Vec<f64> = pooled.iter().map(|v| v / pooled_norm).collect();
        let mut logits = self.params[self.layout.cls_b.clone()].to_vec();
        gemv_add(
            &mut logits,
            &self.params[self.layout.cls_w.clone()],
            &embedding,
        );
        Forward {
            layer_inputs,
            caches,
            pooled_norm,
            embedding,
            log_probs: log_softmax(&logits),
            steps,
        }
    }

    /// Backward pass for one example; accumulates into `grad` and returns the loss.
    fn backward(&self, fwd: &Forward, label: usize, grad: &mut [f64]) -> f64 {
        let h = self.config.recurrent_units;
        let e_dim = self.config.embedding_dim;
        let steps = fwd.steps;
        let loss = -fwd.log_probs[label];

        let mut d_logits: Vec<f64> = fwd.log_probs.iter().map(|lp| lp.exp()).collect();
        d_logits[label] -= 1.0;
        outer_add(
            &mut grad[self.layout.cls_w.clone()],
            &d_logits,
            &fwd.embedding,
        );
        add_assign(&mut grad[self.layout.cls_b.clone()], &d_logits);
        let mut d_emb = vec![0.0; e_dim];
        gemv_t_add(
            &mut d_emb,
            &self.params[self.layout.cls_w.clone()],
            &d_logits,
        );

        let e = &fwd.embedding;
        let radial = crate::embedding::dot(e, &d_emb);
        let d_pooled: Vec<f64> = d_emb
            .iter()
            .zip(e)
            .map(|(d, v)| (d - v * radial) / fwd.pooled_norm)
            .collect();

        let top = &fwd.caches.last().expect("at least one layer").hidden;
        let mut d_summary = vec![0.0; h];
        gemv_t_add(
            &mut d_summary,
            &self.params[self.layout.proj_w.clone()],
            &d_pooled,
        );
        let mut d_hidden = vec![0.0; steps * h];
        match self.config.pooling {
            Pooling::Mean => {
                let mut h_mean = vec![0.0; h];
                for row in top.chunks_exact(h) {
                    h_mean.iter_mut().zip(row).for_each(|(s, v)| *s += v);
                }
                h_mean.iter_mut().for_each(|s| *s /= steps as f64);
                outer_add(&mut grad[self.layout.proj_w.clone()], &d_pooled, &h_mean);
                let scaled: Vec<f64> = d_summary.iter().map(|v| v / steps as f64).collect();
                for row in d_hidden.chunks_exact_mut(h) {
                    row.copy_from_slice(&scaled);
                }
            }
            Pooling::Last => {
                outer_add(
                    &mut grad[self.layout.proj_w.clone()],
                    &d_pooled,
                    &top[(steps - 1) * h..],
                );
                d_hidden[(steps - 1) * h..].copy_from_slice(&d_summary);
            }
        }
        add_assign(&mut grad[self.layout.proj_b.clone()], &d_pooled);

        for l in (0..self.layout.layers.len()).rev() {
            let slot = &self.layout.layers[l];
            let g = &mut grad[slot.range.clone()];
            let (g_wx, rest) = g.split_at_mut(4 * h * slot.input);
            let (g_wh, g_b) = rest.split_at_mut(4 * h * h);
            d_hidden = lstm::backward(
                &self.lstm_weights(l),
                &fwd.layer_inputs[l],
                &fwd.caches[l],
                &d_hidden,
                LstmGrads {
                    w_input: g_wx,
                    w_recurrent: g_wh,
                    bias: g_b,
                },
            );
        }
        loss
    }

    /// L2-normalized d-vector for one utterance.
    pub fn embed(&self, features: &FeatureMatrix) -> Result<Embedding> {
        self.check_features(features)?;
        let fwd = self.forward(features);
        Ok(Embedding {
            values: fwd.embedding,
            normalized: true,
        })
    }

    /// Speaker-classification log-probabilities for one utterance.
    pub fn log_probs(&self, features: &FeatureMatrix) -> Result<Vec<f64>> {
        self.check_features(features)?;
        Ok(self.forward(features).log_probs)
    }

    /// Cross-entropy loss and its gradient with respect to every parameter.
    pub fn loss_and_gradient(
        &self,
        features: &FeatureMatrix,
        label: usize,
    ) -> Result<(f64, Vec<f64>)> {
        self.check_features(features)?;
        self.check_label(label)?;
        let fwd = self.forward(features);
        let mut grad = vec![0.0; self.params.len()];
        let loss = self.backward(&fwd, label, &mut grad);
        Ok((loss, grad))
    }

    pub fn loss(&self, features: &FeatureMatrix, label: usize) -> Result<f64> {
        self.check_features(features)?;
        self.check_label(label)?;
        Ok(-self.forward(features).log_probs[label])
    }

    fn check_label(&self, label: usize) -> Result<()> {
        if label >= self.config.n_speakers {
            return Err(Error::InvalidInput(format!(
                "label {label} out of range for {} speakers",
                self.config.n_speakers
            )));
        }
        Ok(())
    }
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

/// Arithmetic mean of embeddings, left unnormalized.
///
/// Uses a running mean so that k copies of `v` average to exactly `v`.
pub fn mean_embedding<'a, I>(embeddings: I) -> Result<Embedding>
where
    I: IntoIterator<Item = &'a Embedding>,
{
    let mut iter = embeddings.into_iter();
    let first = iter.next().ok_or(Error::EmptyCluster)?;
    let mut mean = first.values.clone();
    for (k, e) in iter.enumerate() {
        check_dim(mean.len(), e.dim())?;
        let n = (k + 2) as f64;
        mean.iter_mut()
            .zip(&e.values)
            .for_each(|(m, v)| *m += (v - *m) / n);
    }
    Ok(Embedding {
        values: mean,
        normalized: false,
    })
}
