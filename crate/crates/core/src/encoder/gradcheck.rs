//! Central finite-difference check of analytic gradients.

use std::ops::Range;

use super::EncoderModel;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

/// Largest parameter count accepted by [`gradient_check`].
pub const MAX_CHECK_PARAMS: usize = 5_000;

const STEP: f64 = 1e-5;
/// Gradients smaller than this are compared absolutely rather than relatively.
const ABS_FLOOR: f64 = 1e-6;

/// A differentiable scalar function of a flat parameter vector.
pub trait Objective {
    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];
    fn loss(&self) -> f64;
    fn gradient(&self) -> Vec<f64>;

    /// Named parameter groups for per-tensor reporting.
    fn groups(&self) -> Vec<(String, Range<usize>)> {
        vec![("params".into(), 0..self.params().len())]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheck {
    pub max_relative_error: f64,
    pub per_group: Vec<(String, f64)>,
    pub n_params: usize,
}

impl GradientCheck {
    pub fn group(&self, name: &str) -> Option<f64> {
        self.per_group
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, e)| *e)
    }
}

/// Compares the analytic gradient with central differences on every parameter.
pub fn gradient_check<O: Objective + ?Sized>(obj: &mut O) -> Result<GradientCheck> {
    let n = obj.params().len();
    if n == 0 {
        return Err(Error::EmptyModel);
    }
    if n > MAX_CHECK_PARAMS {
        return Err(Error::ModelTooLarge {
            params: n,
            limit: MAX_CHECK_PARAMS,
        });
    }
    let analytic = obj.gradient();
    let mut errors = vec![0.0; n];
    for i in 0..n {
        let orig = obj.params()[i];
        obj.params_mut()[i] = orig + STEP;
        let up = obj.loss();
        obj.params_mut()[i] = orig - STEP;
        let down = obj.loss();
        obj.params_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * STEP);
        let a = analytic[i];
        errors[i] = (a - numeric).abs() / a.abs().max(numeric.abs()).max(ABS_FLOOR);
    }
    let per_group = obj
        .groups()
        .into_iter()
        .map(|(name, r)| {
            let m = errors[r].iter().cloned().fold(0.0, f64::max);
            (name, m)
        })
        .collect();
    Ok(GradientCheck {
        max_relative_error: errors.iter().cloned().fold(0.0, f64::max),
        per_group,
        n_params: n,
    })
}

/// One labelled utterance bound to a model.
pub(crate) struct ExampleObjective<'a> {
    pub model: EncoderModel,
    pub features: &'a FeatureMatrix,
    pub label: usize,
}

impl Objective for ExampleObjective<'_> {
    fn params(&self) -> &[f64] {
        self.model.params()
    }

    fn params_mut(&mut self) -> &mut [f64] {
        self.model.params_mut()
    }

    fn loss(&self) -> f64 {
        self.model
            .loss(self.features, self.label)
            .expect("validated example")
    }

    fn gradient(&self) -> Vec<f64> {
        self.model
            .loss_and_gradient(self.features, self.label)
            .expect("validated example")
            .1
    }

    fn groups(&self) -> Vec<(String, Range<usize>)> {
        self.model
            .tensors()
            .into_iter()
            .map(|t| {
                let r = t.range();
                (t.name, r)
            })
            .collect()
    }
}

impl EncoderModel {
    /// Finite-difference check of the full model on one labelled utterance.
    pub fn gradient_check(&self, features: &FeatureMatrix, label: usize) -> Result<GradientCheck> {
        self.loss(features, label)?;
        let mut obj = ExampleObjective {
            model: self.clone(),
            features,
            label,
        };
        gradient_check(&mut obj)
    }
}
