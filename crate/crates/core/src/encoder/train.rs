use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{EncoderConfig, EncoderModel};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n_params: usize, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grad)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.learning_rate * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: EncoderModel,
    /// Mean batch cross-entropy per optimizer step.
    pub losses: Vec<f64>,
}

/// Summed loss and summed gradient over a batch of labelled utterances.
///
/// Per-example gradients are computed in parallel and reduced in batch order.
pub fn batch_gradient(
    model: &EncoderModel,
    batch: &[(&FeatureMatrix, usize)],
) -> Result<(f64, Vec<f64>)> {
    let parts = batch
        .par_iter()
        .map(|(f, label)| model.loss_and_gradient(f, *label))
        .collect::<Result<Vec<_>>>()?;
    let mut grad = vec![0.0; model.n_params()];
    let mut loss = 0.0;
    for (l, g) in parts {
        loss += l;
        grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
    }
    Ok((loss, grad))
}

fn validate_dataset(dataset: &[(FeatureMatrix, usize)], config: &EncoderConfig) -> Result<()> {
    let speakers: BTreeSet<usize> = dataset.iter().map(|(_, l)| *l).collect();
    if speakers.len() < 2 {
        return Err(Error::DegenerateDataset(format!(
            "need at least 2 distinct speakers, found {}",
            speakers.len()
        )));
    }
    for (i, (f, label)) in dataset.iter().enumerate() {
        if *label >= config.n_speakers {
            return Err(Error::InvalidInput(format!(
                "example {i}: label {label} >= n_speakers {}",
                config.n_speakers
            )));
        }
        if f.n_coeffs != config.input_dim {
            return Err(Error::FeatureDimensionMismatch {
                expected: config.input_dim,
                actual: f.n_coeffs,
            });
        }
        if f.n_frames == 0 {
            return Err(Error::InvalidInput(format!("example {i} has no frames")));
        }
    }
    Ok(())
}

/// Trains a fresh encoder with softmax cross-entropy and Adam.
///
/// Mini-batches are drawn from seeded epoch shuffles; the whole run is a
/// deterministic function of `(dataset, config)`.
pub fn train(dataset: &[(FeatureMatrix, usize)], config: &EncoderConfig) -> Result<TrainOutcome> {
    config.validate()?;
    validate_dataset(dataset, config)?;
    let mut model = EncoderModel::new(config.clone())?;
    let mut adam = Adam::new(model.n_params(), config.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_ba7c_4e55_0001);
    let batch_size = config.batch_size.min(dataset.len());
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut cursor = order.len();
    let mut losses = Vec::with_capacity(config.max_steps);

    for step in 0..config.max_steps {
        let mut idx = Vec::with_capacity(batch_size);
        while idx.len() < batch_size {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            idx.push(order[cursor]);
            cursor += 1;
        }
        let batch: Vec<(&FeatureMatrix, usize)> =
            idx.iter().map(|&i| (&dataset[i].0, dataset[i].1)).collect();
        let (loss_sum, mut grad) = batch_gradient(&model, &batch)?;
        let loss = loss_sum / batch.len() as f64;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::TrainingDiverged { step, loss });
        }
        grad.iter_mut().for_each(|g| *g /= batch.len() as f64);
        adam.step(model.params_mut(), &grad);
        if step % 50 == 0 {
            log::debug!("step {step}: loss {loss:.4}");
        }
        losses.push(loss);
    }
    Ok(TrainOutcome { model, losses })
}
