use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::common_dim;
use crate::embedding::dot;
use crate::error::{Error, Result};

/// Principal components of a centered data set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `k` orthonormal rows, each `dim` long.
    pub components: Vec<Vec<f64>>,
    /// Fraction of total variance per component, non-increasing.
    pub explained_variance_ratio: Vec<f64>,
    pub singular_values: Vec<f64>,
}

impl PcaModel {
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        crate::embedding::check_dim(self.mean.len(), x.len())?;
        let centered: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        Ok(self.components.iter().map(|c| dot(c, &centered)).collect())
    }

    pub fn reconstruct(&self, z: &[f64]) -> Result<Vec<f64>> {
        crate::embedding::check_dim(self.components.len(), z.len())?;
        let mut x = self.mean.clone();
        for (c, &w) in self.components.iter().zip(z) {
            x.iter_mut().zip(c).for_each(|(a, b)| *a += w * b);
        }
        Ok(x)
    }
}

/// Fits the top-`k` principal axes of the centered data and returns
/// the model with the projected coordinates of every row.
///
/// Each component's sign is fixed so that its largest-magnitude entry is
/// positive.
pub fn pca_fit<V: AsRef<[f64]>>(data: &[V], k: usize) -> Result<(PcaModel, Vec<Vec<f64>>)> {
    let n = data.len();
    if n < 2 {
        return Err(Error::InvalidInput("PCA needs at least two points".into()));
    }
    let dim = common_dim(data)?;
    let max = (n - 1).min(dim);
    if k == 0 || k > max {
        return Err(Error::RankExceeded { requested: k, max });
    }
    let mut mean = vec![0.0; dim];
    for r in data {
        mean.iter_mut().zip(r.as_ref()).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered = DMatrix::from_fn(n, dim, |i, j| data[i].as_ref()[j] - mean[j]);
    // eigen-decomposition of the scatter matrix; nalgebra's SVD can stall on
    // rank-deficient wide inputs
    let scatter = centered.tr_mul(&centered);
    let eig = scatter.symmetric_eigen();
    let sv: Vec<f64> = eig.eigenvalues.iter().map(|l| l.max(0.0).sqrt()).collect();
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    let total: f64 = centered.iter().map(|v| v * v).sum();
    if total == 0.0 {
        return Err(Error::InvalidInput("data has zero variance".into()));
    }

    let mut components = Vec::with_capacity(k);
    let mut ratios = Vec::with_capacity(k);
    let mut singular_values = Vec::with_capacity(k);
    for &idx in order.iter().take(k) {
        let mut c: Vec<f64> = eig.eigenvectors.column(idx).iter().copied().collect();
        let pivot = c
            .iter()
            .copied()
            .max_by(|a, b| a.abs().total_cmp(&b.abs()))
            .unwrap_or(0.0);
        if pivot < 0.0 {
            c.iter_mut().for_each(|v| *v = -*v);
        }
        components.push(c);
        ratios.push(sv[idx] * sv[idx] / total);
        singular_values.push(sv[idx]);
    }
    let model = PcaModel {
        mean,
        components,
        explained_variance_ratio: ratios,
        singular_values,
    };
    let projected = data
        .iter()
        .map(|r| model.project(r.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    Ok((model, projected))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn collinear_points_have_single_component() {
        let dir = [0.6, -0.8, 0.0];
        let pts: Vec<Vec<f64>> = (0..10)
            .map(|i| dir.iter().map(|d| 1.0 + d * i as f64 * 0.37).collect())
            .collect();
        let (m, proj) = pca_fit(&pts, 1).unwrap();
        assert!((m.explained_variance_ratio[0] - 1.0).abs() < 1e-9);
        // largest-magnitude entry (-0.8) becomes positive
        assert!((m.components[0][1] - 0.8).abs() < 1e-12);
        assert!((m.components[0][0] + 0.6).abs() < 1e-12);
        assert_eq!(proj.len(), 10);
    }

    #[test]
    fn rank_guard() {
        let pts = vec![
            vec![0.0, 1.0, 2.0],
            vec![1.0, 0.0, 2.0],
            vec![2.0, 2.0, 0.0],
        ];
        assert!(matches!(
            pca_fit(&pts, 3),
            Err(Error::RankExceeded {
                requested: 3,
                max: 2
            })
        ));
        assert!(pca_fit(&pts, 2).is_ok());
        assert!(matches!(pca_fit(&pts, 0), Err(Error::RankExceeded { .. })));
    }

    fn matrix() -> impl Strategy<Value = Vec<Vec<f64>>> {
        (2usize..12, 1usize..6).prop_flat_map(|(n, d)| {
            prop::collection::vec(prop::collection::vec(-10.0f64..10.0, d), n)
        })
    }

    proptest! {
        #[test]
        fn invariants(data in matrix()) {
            let n = data.len();
            let d = data[0].len();
            let k = (n - 1).min(d);
            let spread = data.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
            let var: f64 = {
                let (model, _) = match pca_fit(&data, k) { Ok(x) => x, Err(_) => return Ok(()) };
                model.singular_values.iter().map(|s| s * s).sum()
            };
            prop_assume!(var > 1e-6);
            let (model, proj) = pca_fit(&data, k).unwrap();
            for (i, a) in model.components.iter().enumerate() {
                for (j, b) in model.components.iter().enumerate() {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((dot(a, b) - expect).abs() < 1e-8);
                }
            }
            let r = &model.explained_variance_ratio;
            prop_assert!(r.windows(2).all(|w| w[0] >= w[1]));
            prop_assert!(r.iter().all(|v| (0.0..=1.0 + 1e-12).contains(v)));
            prop_assert!(r.iter().sum::<f64>() <= 1.0 + 1e-9);
            let origin = model.project(&model.mean).unwrap();
            prop_assert!(origin.iter().all(|v| v.abs() < 1e-12 * spread.max(1.0)));
            // full-rank reconstruction is exact up to rounding
            for (x, z) in data.iter().zip(&proj) {
                let back = model.reconstruct(z).unwrap();
                for (a, b) in x.iter().zip(&back) {
                    prop_assert!((a - b).abs() <= 1e-6 * spread.max(1.0));
                }
            }
        }
    }
}
