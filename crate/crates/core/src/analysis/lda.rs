//! Two-class Fisher linear discriminant with ridge shrinkage.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::common_dim;
use crate::embedding::{check_dim, dot, norm};
use crate::error::{Error, Result};
use crate::store::Store;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LdaConfig {
    /// Fraction of each class used for training.
    pub split_fraction: f64,
    pub seed: u64,
    /// Ridge added to the within-class scatter; `None` uses
    /// `1e-3 * trace(S_w) / dim`.
    pub shrinkage: Option<f64>,
}

impl Default for LdaConfig {
    fn default() -> Self {
        Self {
            split_fraction: 0.75,
            seed: 0,
            shrinkage: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaModel {
    /// Names of class 0 and class 1.
    pub classes: [String; 2],
    /// Unit-norm discriminant direction, pointing from class 0 to class 1.
    pub weights: Vec<f64>,
    pub bias: f64,
    pub class_means: [Vec<f64>; 2],
    pub shrinkage: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub train_accuracy: f64,
    /// Held-out accuracy; absent when the split leaves no test data.
    pub test_accuracy: Option<f64>,
}

impl LdaModel {
    /// Signed distance to the decision boundary; positive means class 1.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.weights.len(), x.len())?;
        Ok(dot(&self.weights, x) + self.bias)
    }

    pub fn class_name(&self, label: usize) -> &str {
        &self.classes[label]
    }

    pub fn accuracy<V: AsRef<[f64]>>(&self, data: &[V], labels: &[usize]) -> Result<f64> {
        let mut hits = 0usize;
        for (x, &y) in data.iter().zip(labels) {
            if lda_predict(self, x.as_ref())?.0 == y {
                hits += 1;
            }
        }
        Ok(hits as f64 / data.len().max(1) as f64)
    }
}

/// Returns `(label, signed score)` with label 1 iff the score is positive.
pub fn lda_predict(model: &LdaModel, x: &[f64]) -> Result<(usize, f64)> {
    let s = model.score(x)?;
    Ok((usize::from(s > 0.0), s))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded, class-stratified train/test partition.
///
/// The training set holds `round(fraction * n)` items in total; class 0
/// receives `round(fraction * n0)` of them and class 1 the rest.
pub fn stratified_split(labels: &[usize], fraction: f64, seed: u64) -> Result<Split> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "split fraction {fraction} outside (0, 1]"
        )));
    }
    if let Some(&l) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::InvalidInput(format!("label {l} is not 0 or 1")));
    }
    // one shuffle of all indices, so renaming the classes keeps the partition
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_class = |c: usize| labels.iter().filter(|&&l| l == c).count();
    let (n0, n1) = (n_class(0), n_class(1));
    let n = labels.len();
    let total = ((fraction * n as f64).round() as usize).min(n);
    let take0 = ((fraction * n0 as f64).round() as usize).min(n0);
    let take1 = total.saturating_sub(take0).min(n1);
    if take0 == 0 || take1 == 0 {
        return Err(Error::DegenerateSplit(
            "a class is absent from the training split".into(),
        ));
    }
    let mut taken = [0usize; 2];
    let mut split = Split {
        train: Vec::with_capacity(total),
        test: Vec::with_capacity(n - total),
    };
    for i in order {
        let c = labels[i];
        if taken[c] < [take0, take1][c] {
            taken[c] += 1;
            split.train.push(i);
        } else {
            split.test.push(i);
        }
    }
    Ok(split)
}

/// Fits on the rows selected by `train` and reports accuracy on both sides.
fn fit_indices<V: AsRef<[f64]>>(
    data: &[V],
    labels: &[usize],
    split: &Split,
    shrinkage: Option<f64>,
) -> Result<LdaModel> {
    let dim = common_dim(data)?;
    let mut means = [vec![0.0; dim], vec![0.0; dim]];
    let mut counts = [0usize; 2];
    for &i in &split.train {
        let c = labels[i];
        counts[c] += 1;
        means[c]
            .iter_mut()
            .zip(data[i].as_ref())
            .for_each(|(m, v)| *m += v);
    }
    if counts.contains(&0) {
        return Err(Error::DegenerateSplit(
            "a class is absent from the training split".into(),
        ));
    }
    for c in 0..2 {
        means[c].iter_mut().for_each(|m| *m /= counts[c] as f64);
    }
    let diff: Vec<f64> = means[1].iter().zip(&means[0]).map(|(a, b)| a - b).collect();
    if norm(&diff) == 0.0 {
        return Err(Error::InvalidInput("class means coincide".into()));
    }

    let centered = DMatrix::from_fn(split.train.len(), dim, |r, j| {
        let i = split.train[r];
        data[i].as_ref()[j] - means[labels[i]][j]
    });
    let mut scatter = centered.tr_mul(&centered);
    let lambda = shrinkage.unwrap_or_else(|| 1e-3 * scatter.trace() / dim as f64);
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "shrinkage {lambda} must be >= 0"
        )));
    }
    for j in 0..dim {
        scatter[(j, j)] += lambda;
    }
    let rhs = DVector::from_column_slice(&diff);
    let w = match scatter.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => scatter
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::InvalidInput("within-class scatter is singular".into()))?,
    };
    let wn = w.norm();
    if !(wn > 0.0 && wn.is_finite()) {
        return Err(Error::InvalidInput(
            "degenerate discriminant direction".into(),
        ));
    }
    let weights: Vec<f64> = w.iter().map(|v| v / wn).collect();
    let midpoint: Vec<f64> = means[0]
        .iter()
        .zip(&means[1])
        .map(|(a, b)| 0.5 * (a + b))
        .collect();
    let bias = -dot(&weights, &midpoint);

    let mut model = LdaModel {
        classes: ["0".into(), "1".into()],
        weights,
        bias,
        class_means: means,
        shrinkage: lambda,
        n_train: split.train.len(),
        n_test: split.test.len(),
        train_accuracy: 0.0,
        test_accuracy: None,
    };
    let acc = |idx: &[usize], m: &LdaModel| -> Result<f64> {
        let mut hits = 0;
        for &i in idx {
            if lda_predict(m, data[i].as_ref())?.0 == labels[i] {
                hits += 1;
            }
        }
        Ok(hits as f64 / idx.len() as f64)
    };
    model.train_accuracy = acc(&split.train, &model)?;
    if !split.test.is_empty() {
        model.test_accuracy = Some(acc(&split.test, &model)?);
    }
    Ok(model)
}

/// Two-class LDA on labelled rows (labels 0 or 1) with a seeded stratified
/// split.
pub fn lda_fit<V: AsRef<[f64]>>(
    data: &[V],
    labels: &[usize],
    config: &LdaConfig,
) -> Result<LdaModel> {
    if data.len() != labels.len() {
        return Err(Error::InvalidInput(
            "data and labels differ in length".into(),
        ));
    }
    let split = stratified_split(labels, config.split_fraction, config.seed)?;
    fit_indices(data, labels, &split, config.shrinkage)
}

/// LDA between one speaker's utterances in two languages; class 1 is `lang_b`.
pub fn lda_fit_languages(
    store: &Store,
    speaker: &str,
    lang_a: &str,
    lang_b: &str,
    config: &LdaConfig,
) -> Result<LdaModel> {
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for r in store.records() {
        if r.speaker_id != speaker {
            continue;
        }
        let label = if r.language == lang_a {
            0
        } else if r.language == lang_b {
            1
        } else {
            continue;
        };
        let e = r
            .embedding
            .as_ref()
            .ok_or_else(|| Error::MissingEmbedding(r.utterance_id.clone()))?;
        data.push(e.values.as_slice());
        labels.push(label);
    }
    let mut model = lda_fit(&data, &labels, config)?;
    model.classes = [lang_a.to_string(), lang_b.to_string()];
    Ok(model)
}
