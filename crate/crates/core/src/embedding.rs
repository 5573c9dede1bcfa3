use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A speaker embedding (d-vector) for one utterance or a cluster mean.
///
/// `normalized` records whether the vector was produced with unit L2 norm.
/// Cluster means and translated embeddings keep the flag cleared so that
/// vector arithmetic on them stays linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub values: Vec<f64>,
    pub normalized: bool,
}

impl Embedding {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "embedding coordinate {i} is not finite"
            )));
        }
        Ok(Self {
            values,
            normalized: false,
        })
    }

    /// Scales `values` to unit norm. Fails on the zero vector.
    pub fn unit(values: Vec<f64>) -> Result<Self> {
        let mut e = Self::new(values)?;
        let n = norm(&e.values);
        if n == 0.0 {
            return Err(Error::InvalidInput("cannot normalize zero vector".into()));
        }
        e.values.iter_mut().for_each(|v| *v /= n);
        e.normalized = true;
        Ok(e)
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn to_unit(&self) -> Result<Self> {
        Self::unit(self.values.clone())
    }
}

impl AsRef<[f64]> for Embedding {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    squared_distance(a, b).sqrt()
}

pub(crate) fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_has_norm_one() {
        let e = Embedding::unit(vec![3.0, 4.0]).unwrap();
        assert!((e.norm() - 1.0).abs() < 1e-15);
        assert!(e.normalized);
    }

    #[test]
    fn rejects_non_finite() {
        assert!(Embedding::new(vec![1.0, f64::NAN]).is_err());
        assert!(Embedding::unit(vec![0.0, 0.0]).is_err());
    }
}
