use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{distance, dot, norm, squared_distance};
use crate::error::{Error, Result};

/// `a·b / (|a||b|)`, clamped to [-1, 1].
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    crate::embedding::check_dim(a.len(), b.len())?;
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::UndefinedSimilarity);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Mean silhouette over all points (Euclidean). Points in singleton
/// clusters contribute 0.
pub fn silhouette_score<V: AsRef<[f64]> + Sync, L: Ord + Sync>(
    points: &[V],
    labels: &[L],
) -> Result<f64> {
    if points.len() != labels.len() {
        return Err(Error::InvalidInput(
            "points and labels differ in length".into(),
        ));
    }
    let mut ids: BTreeMap<&L, usize> = BTreeMap::new();
    for l in labels {
        let next = ids.len();
        ids.entry(l).or_insert(next);
    }
    if ids.len() < 2 {
        return Err(Error::InvalidInput(
            "silhouette needs at least two clusters".into(),
        ));
    }
    let k = ids.len();
    let lab: Vec<usize> = labels.iter().map(|l| ids[l]).collect();
    let mut sizes = vec![0usize; k];
    lab.iter().for_each(|&c| sizes[c] += 1);
    let scores: Vec<f64> = (0..points.len())
        .into_par_iter()
        .map(|i| {
            let mut sums = vec![0.0; k];
            for (j, p) in points.iter().enumerate() {
                if j != i {
                    sums[lab[j]] += distance(points[i].as_ref(), p.as_ref());
                }
            }
            let own = lab[i];
            if sizes[own] < 2 {
                return 0.0;
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..k)
                .filter(|&c| c != own && sizes[c] > 0)
                .map(|c| sums[c] / sizes[c] as f64)
                .fold(f64::INFINITY, f64::min);
            let m = a.max(b);
            if m == 0.0 {
                0.0
            } else {
                (b - a) / m
            }
        })
        .collect();
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Per-label centroids, keyed and ordered by label.
pub fn centroids<V: AsRef<[f64]>, L: Ord + Clone>(
    points: &[V],
    labels: &[L],
) -> BTreeMap<L, Vec<f64>> {
    let mut acc: BTreeMap<L, (Vec<f64>, usize)> = BTreeMap::new();
    for (p, l) in points.iter().zip(labels) {
        let p = p.as_ref();
        let e = acc
            .entry(l.clone())
            .or_insert_with(|| (vec![0.0; p.len()], 0));
        e.0.iter_mut().zip(p).for_each(|(a, b)| *a += b);
        e.1 += 1;
    }
    acc.into_iter()
        .map(|(l, (mut s, n))| {
            s.iter_mut().for_each(|v| *v /= n as f64);
            (l, s)
        })
        .collect()
}

/// Fraction of points whose nearest label centroid is their own label's.
pub fn nearest_centroid_purity<V: AsRef<[f64]>, L: Ord + Clone>(points: &[V], labels: &[L]) -> f64 {
    let cents = centroids(points, labels);
    let hits = points
        .iter()
        .zip(labels)
        .filter(|(p, l)| {
            let best = cents
                .iter()
                .min_by(|a, b| {
                    squared_distance(p.as_ref(), a.1).total_cmp(&squared_distance(p.as_ref(), b.1))
                })
                .map(|(k, _)| k);
            best == Some(*l)
        })
        .count();
    hits as f64 / points.len().max(1) as f64
}

/// For each labelled point, the index of its nearest other point.
fn nearest_other(points: &[&[f64]]) -> Vec<usize> {
    (0..points.len())
        .map(|i| {
            (0..points.len())
                .filter(|&j| j != i)
                .min_by(|&a, &b| {
                    squared_distance(points[i], points[a])
                        .total_cmp(&squared_distance(points[i], points[b]))
                })
                .unwrap_or(i)
        })
        .collect()
}

/// Pairs `(i, j)`, `i < j`, that are each other's nearest neighbour.
pub fn mutual_nearest_pairs(points: &[&[f64]]) -> Vec<(usize, usize)> {
    let nn = nearest_other(points);
    (0..points.len())
        .filter(|&i| nn[i] > i && nn[nn[i]] == i)
        .map(|i| (i, nn[i]))
        .collect()
}

/// How a set of per-voice clusters groups by speaker, where a voice is one
/// speaker in one language.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoicePairing {
    /// Nearest-centroid purity of the points against speaker centroids.
    pub speaker_purity: f64,
    /// Voice-centroid pairs that are each other's nearest neighbour.
    pub mutual_pairs: Vec<(String, String)>,
    /// Speakers with more than one voice whose voices are not all mutually
    /// nearest within the speaker.
    pub unpaired_speakers: Vec<String>,
}

/// Scores `points` labelled by speaker and by voice. A speaker counts as
/// paired when it has exactly two voices forming a mutual-nearest pair.
pub fn voice_pairing<V: AsRef<[f64]>>(
    points: &[V],
    speakers: &[String],
    voices: &[String],
) -> Result<VoicePairing> {
    if points.len() != speakers.len() || points.len() != voices.len() {
        return Err(Error::InvalidInput(
            "points, speakers and voices differ in length".into(),
        ));
    }
    let mut owner: BTreeMap<&String, &String> = BTreeMap::new();
    for (v, s) in voices.iter().zip(speakers) {
        if *owner.entry(v).or_insert(s) != s {
            return Err(Error::InvalidInput(format!("voice {v} has two speakers")));
        }
    }
    let cents = centroids(points, voices);
    let names: Vec<&String> = cents.keys().collect();
    let rows: Vec<&[f64]> = cents.values().map(Vec::as_slice).collect();
    let mutual: Vec<(String, String)> = mutual_nearest_pairs(&rows)
        .into_iter()
        .map(|(i, j)| (names[i].clone(), names[j].clone()))
        .collect();
    let mut per_speaker: BTreeMap<&String, Vec<&String>> = BTreeMap::new();
    for (v, s) in &owner {
        per_speaker.entry(s).or_default().push(v);
    }
    let unpaired = per_speaker
        .into_iter()
        .filter(|(_, vs)| vs.len() > 1)
        .filter(|(_, vs)| {
            vs.len() != 2
                || !mutual
                    .iter()
                    .any(|(a, b)| (a == vs[0] && b == vs[1]) || (a == vs[1] && b == vs[0]))
        })
        .map(|(s, _)| s.clone())
        .collect();
    Ok(VoicePairing {
        speaker_purity: nearest_centroid_purity(points, speakers),
        mutual_pairs: mutual,
        unpaired_speakers: unpaired,
    })
}
