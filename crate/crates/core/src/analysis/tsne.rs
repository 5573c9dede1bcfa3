//! Exact t-SNE (symmetric SNE with a Student-t output kernel).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::common_dim;
use crate::embedding::squared_distance;
use crate::error::{Error, Result};

const PERPLEXITY_TOL: f64 = 1e-10;
const MAX_BISECTIONS: usize = 200;
const MAX_STEP_HALVINGS: usize = 20;
const P_FLOOR: f64 = 1e-12;
const JITTER: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub exaggeration: f64,
    pub exaggeration_iterations: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub final_momentum: f64,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iterations: 1000,
            exaggeration: 12.0,
            exaggeration_iterations: 250,
            learning_rate: 200.0,
            momentum: 0.5,
            final_momentum: 0.8,
            seed: 0,
        }
    }
}

impl TsneConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if n < 10 {
            return Err(Error::InvalidInput(format!(
                "t-SNE needs at least 10 points, got {n}"
            )));
        }
        let max = (n as f64 - 1.0) / 3.0;
        if !(self.perplexity > 0.0 && self.perplexity < max) {
            return Err(Error::InvalidConfig(format!(
                "perplexity {} must lie in (0, {max:.3}) for {n} points",
                self.perplexity
            )));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("iterations must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.exaggeration > 0.0) {
            return Err(Error::InvalidConfig(
                "learning rate and exaggeration must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsneResult {
    pub coords: Vec<[f64; 2]>,
    /// KL(P || Q) after each iteration, always against the unexaggerated P.
    pub kl_trace: Vec<f64>,
    /// Achieved perplexity of each row's conditional distribution.
    pub row_perplexities: Vec<f64>,
    /// Number of duplicate points that were jittered apart.
    pub jittered: usize,
    pub final_learning_rate: f64,
}

/// Embeds `data` in two dimensions.
///
/// After the early-exaggeration phase a step that would raise the KL
/// divergence is rejected, the velocity is reset and the step size halved,
/// so the KL trace is non-increasing from then on.
pub fn tsne<V: AsRef<[f64]>>(data: &[V], config: &TsneConfig) -> Result<TsneResult> {
    let n = data.len();
    config.validate(n)?;
    common_dim(data)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut points: Vec<Vec<f64>> = data.iter().map(|r| r.as_ref().to_vec()).collect();
    let jittered = separate_duplicates(&mut points, &mut rng);
    if jittered > 0 {
        log::warn!("t-SNE: jittered {jittered} duplicate points by {JITTER}");
    }

    let dist = pairwise(&points);
    let (cond, row_perplexities) = conditional_p(&dist, n, config.perplexity);
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                p[i * n + j] =
                    ((cond[i * n + j] + cond[j * n + i]) / (2.0 * n as f64)).max(P_FLOOR);
            }
        }
    }

    let p_log_p: Vec<f64> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i)
                .map(|j| p[i * n + j] * p[i * n + j].ln())
                .sum()
        })
        .collect();
    let p_row: Vec<f64> = (0..n).map(|i| p[i * n..(i + 1) * n].iter().sum()).collect();
    let target = Target {
        p: &p,
        p_log_p: &p_log_p,
        p_row: &p_row,
    };

    let init = Normal::new(0.0, 1e-4).expect("valid normal");
    let mut y: Vec<[f64; 2]> = (0..n)
        .map(|_| [init.sample(&mut rng), init.sample(&mut rng)])
        .collect();
    center(&mut y);
    let mut velocity = vec![[0.0; 2]; n];
    let mut gains = vec![[1.0; 2]; n];
    let mut lr = config.learning_rate;
    let mut kl_trace = Vec::with_capacity(config.iterations);
    let mut current = target.evaluate(&y);

    for t in 0..config.iterations {
        let early = t < config.exaggeration_iterations;
        let exag = if early { config.exaggeration } else { 1.0 };
        let momentum = if early {
            config.momentum
        } else {
            config.final_momentum
        };
        let grad = current.gradient(exag);
        for ((g, v), gain) in grad.iter().zip(&velocity).zip(gains.iter_mut()) {
            for d in 0..2 {
                gain[d] = if (g[d] > 0.0) != (v[d] > 0.0) {
                    gain[d] + 0.2
                } else {
                    f64::max(gain[d] * 0.8, 0.01)
                };
            }
        }
        let propose = |vel: &[[f64; 2]], lr: f64, mom: f64| {
            let mut v_new = vel.to_vec();
            let mut y_new = y.clone();
            for i in 0..n {
                for d in 0..2 {
                    v_new[i][d] = mom * vel[i][d] - lr * gains[i][d] * grad[i][d];
                    y_new[i][d] += v_new[i][d];
                }
            }
            center(&mut y_new);
            (y_new, v_new)
        };

        if early {
            (y, velocity) = propose(&velocity, lr, momentum);
            current = target.evaluate(&y);
            kl_trace.push(current.kl);
            continue;
        }
        let (mut y_new, mut v_new) = propose(&velocity, lr, momentum);
        let mut next = target.evaluate(&y_new);
        let mut halvings = 0;
        while next.kl > current.kl && halvings < MAX_STEP_HALVINGS {
            lr *= 0.5;
            halvings += 1;
            let zero = vec![[0.0; 2]; n];
            (y_new, v_new) = propose(&zero, lr, 0.0);
            next = target.evaluate(&y_new);
        }
        if next.kl <= current.kl {
            y = y_new;
            velocity = v_new;
            current = next;
        } else {
            velocity = vec![[0.0; 2]; n];
        }
        kl_trace.push(current.kl);
    }

    Ok(TsneResult {
        coords: y,
        kl_trace,
        row_perplexities,
        jittered,
        final_learning_rate: lr,
    })
}

/// Nudges every point that coincides with an earlier one; returns how many
/// points moved.
fn separate_duplicates(points: &mut [Vec<f64>], rng: &mut ChaCha8Rng) -> usize {
    let noise = Normal::new(0.0, JITTER).expect("valid normal");
    let mut moved = 0;
    for i in 1..points.len() {
        loop {
            let clash = (0..i).any(|j| squared_distance(&points[i], &points[j]) == 0.0);
            if !clash {
                break;
            }
            for v in points[i].iter_mut() {
                *v += noise.sample(rng);
            }
            moved += 1;
        }
    }
    moved
}

fn pairwise(points: &[Vec<f64>]) -> Vec<f64> {
    let n = points.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| squared_distance(&points[i], &points[j]))
                .collect()
        })
        .collect();
    rows.concat()
}

/// Row-wise Gaussian conditionals with precisions bisected so each row's
/// entropy matches `ln(perplexity)`.
fn conditional_p(dist: &[f64], n: usize, perplexity: f64) -> (Vec<f64>, Vec<f64>) {
    let target = perplexity.ln();
    let rows: Vec<(Vec<f64>, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let row = &dist[i * n..(i + 1) * n];
            let d_min = row
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &d)| d)
                .fold(f64::INFINITY, f64::min);
            let mean: f64 = row.iter().sum::<f64>() / (n - 1) as f64;
            let mut beta = 1.0 / (mean - d_min).max(f64::MIN_POSITIVE);
            let (mut lo, mut hi) = (0.0, f64::INFINITY);
            let mut probs = vec![0.0; n];
            let mut h = 0.0;
            for _ in 0..MAX_BISECTIONS {
                h = row_entropy(row, i, d_min, beta, &mut probs);
                let diff = h - target;
                if diff.abs() < PERPLEXITY_TOL {
                    break;
                }
                if diff > 0.0 {
                    lo = beta;
                    beta = if hi.is_finite() {
                        0.5 * (beta + hi)
                    } else {
                        beta * 2.0
                    };
                } else {
                    hi = beta;
                    beta = 0.5 * (beta + lo);
                }
            }
            (probs, h.exp())
        })
        .collect();
    let mut cond = Vec::with_capacity(n * n);
    let mut perps = Vec::with_capacity(n);
    for (p, perp) in rows {
        cond.extend(p);
        perps.push(perp);
    }
    (cond, perps)
}

/// Fills `probs` with the normalized conditional and returns its entropy.
fn row_entropy(row: &[f64], i: usize, d_min: f64, beta: f64, probs: &mut [f64]) -> f64 {
    let mut sum = 0.0;
    let mut weighted = 0.0;
    for (j, (&d, p)) in row.iter().zip(probs.iter_mut()).enumerate() {
        if j == i {
            *p = 0.0;
            continue;
        }
        let shifted = d - d_min;
        *p = (-beta * shifted).exp();
        sum += *p;
        weighted += shifted * *p;
    }
    probs.iter_mut().for_each(|p| *p /= sum);
    sum.ln() + beta * weighted / sum
}

/// Joint affinities with per-row constants of the KL sum.
struct Target<'a> {
    p: &'a [f64],
    p_log_p: &'a [f64],
    p_row: &'a [f64],
}

/// KL(P || Q) at one layout, with the attractive and repulsive halves of
/// the gradient kept apart so any exaggeration can be applied later.
struct Evaluation {
    kl: f64,
    attract: Vec<[f64; 2]>,
    repulse: Vec<[f64; 2]>,
}

impl Evaluation {
    fn gradient(&self, exaggeration: f64) -> Vec<[f64; 2]> {
        self.attract
            .iter()
            .zip(&self.repulse)
            .map(|(a, r)| {
                [
                    4.0 * (exaggeration * a[0] - r[0]),
                    4.0 * (exaggeration * a[1] - r[1]),
                ]
            })
            .collect()
    }
}

impl Target<'_> {
    fn evaluate(&self, y: &[[f64; 2]]) -> Evaluation {
        let n = y.len();
        let kernel = |i: usize, j: usize| {
            let dx = y[i][0] - y[j][0];
            let dy = y[i][1] - y[j][1];
            1.0 + dx * dx + dy * dy
        };
        let row_z: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|i| (0..n).filter(|&j| j != i).map(|j| 1.0 / kernel(i, j)).sum())
            .collect();
        let z: f64 = row_z.iter().sum();
        let ln_z = z.ln();
        // KL = sum p ln p + sum p ln(1 + d^2) + (sum p) ln z, row by row
        let rows: Vec<(f64, [f64; 2], [f64; 2])> = (0..n)
            .into_par_iter()
            .map(|i| {
                let p = &self.p[i * n..(i + 1) * n];
                let mut log_sum = 0.0;
                let mut a = [0.0; 2];
                let mut r = [0.0; 2];
                for j in (0..n).filter(|&j| j != i) {
                    let k = kernel(i, j);
                    let w = 1.0 / k;
                    log_sum += p[j] * k.ln();
                    let pa = p[j] * w;
                    let qr = w * w / z;
                    let dx = y[i][0] - y[j][0];
                    let dy = y[i][1] - y[j][1];
                    a[0] += pa * dx;
                    a[1] += pa * dy;
                    r[0] += qr * dx;
                    r[1] += qr * dy;
                }
                (self.p_log_p[i] + log_sum + self.p_row[i] * ln_z, a, r)
            })
            .collect();
        Evaluation {
            kl: rows.iter().map(|(k, _, _)| k).sum(),
            attract: rows.iter().map(|(_, a, _)| *a).collect(),
            repulse: rows.iter().map(|(_, _, r)| *r).collect(),
        }
    }
}

fn center(y: &mut [[f64; 2]]) {
    let n = y.len() as f64;
    let mx = y.iter().map(|p| p[0]).sum::<f64>() / n;
    let my = y.iter().map(|p| p[1]).sum::<f64>() / n;
    for p in y.iter_mut() {
        p[0] -= mx;
        p[1] -= my;
    }
}
