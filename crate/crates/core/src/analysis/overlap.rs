//! Short- versus long-utterance overlap between a speaker's language clusters.

use serde::{Deserialize, Serialize};

use super::lda::{lda_fit, LdaConfig};
use crate::embedding::distance;
use crate::error::{Error, Result};
use crate::store::{Store, UtteranceRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub n: usize,
    /// Mean distance from each utterance to its own language mean.
    pub mean_dist_own: f64,
    /// Mean distance from each utterance to the other language mean.
    pub mean_dist_other: f64,
    /// Held-out LDA accuracy on this group alone; absent when the group
    /// cannot support a two-class fit.
    pub lda_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub speaker_id: String,
    pub languages: [String; 2],
    pub word_threshold: u32,
    pub all: Option<GroupMetrics>,
    /// Utterances with fewer than `word_threshold` words.
    pub short: Option<GroupMetrics>,
    pub long: Option<GroupMetrics>,
}

/// Splits one bilingual speaker's utterances by word count and compares how
/// well the two language clusters separate in each group.
///
/// Language means are taken over all of the speaker's utterances.
pub fn overlap_by_length(
    store: &Store,
    speaker: &str,
    word_threshold: u32,
    config: &LdaConfig,
) -> Result<OverlapReport> {
    let records: Vec<&UtteranceRecord> = store
        .records()
        .iter()
        .filter(|r| r.speaker_id == speaker)
        .collect();
    let mut languages: Vec<&str> = records.iter().map(|r| r.language.as_str()).collect();
    languages.sort_unstable();
    languages.dedup();
    match languages.len() {
        2 => {}
        0 | 1 => {
            return Err(Error::NotBilingual {
                speaker: speaker.to_string(),
                language: "(a second language)".into(),
            })
        }
        k => {
            return Err(Error::InvalidInput(format!(
                "speaker {speaker} has {k} languages; overlap needs exactly two"
            )))
        }
    }
    let mut rows: Vec<(&[f64], usize, u32)> = Vec::with_capacity(records.len());
    for r in &records {
        let e = r
            .embedding
            .as_ref()
            .ok_or_else(|| Error::MissingEmbedding(r.utterance_id.clone()))?;
        rows.push((
            e.as_slice(),
            usize::from(r.language == languages[1]),
            r.n_words,
        ));
    }
    let dim = rows[0].0.len();
    let mut means = [vec![0.0; dim], vec![0.0; dim]];
    let mut counts = [0usize; 2];
    for (x, c, _) in &rows {
        crate::embedding::check_dim(dim, x.len())?;
        counts[*c] += 1;
        means[*c].iter_mut().zip(*x).for_each(|(m, v)| *m += v);
    }
    for c in 0..2 {
        means[c].iter_mut().for_each(|m| *m /= counts[c] as f64);
    }

    let metrics = |keep: &dyn Fn(u32) -> bool| -> Option<GroupMetrics> {
        let group: Vec<&(&[f64], usize, u32)> = rows.iter().filter(|r| keep(r.2)).collect();
        if group.is_empty() {
            return None;
        }
        let n = group.len() as f64;
        let own = group
            .iter()
            .map(|(x, c, _)| distance(x, &means[*c]))
            .sum::<f64>()
            / n;
        let other = group
            .iter()
            .map(|(x, c, _)| distance(x, &means[1 - *c]))
            .sum::<f64>()
            / n;
        let data: Vec<&[f64]> = group.iter().map(|r| r.0).collect();
        let labels: Vec<usize> = group.iter().map(|r| r.1).collect();
        let lda_accuracy = lda_fit(&data, &labels, config)
            .ok()
            .and_then(|m| m.test_accuracy);
        Some(GroupMetrics {
            n: group.len(),
            mean_dist_own: own,
            mean_dist_other: other,
            lda_accuracy,
        })
    };

    Ok(OverlapReport {
        speaker_id: speaker.to_string(),
        languages: [languages[0].to_string(), languages[1].to_string()],
        word_threshold,
        all: metrics(&|_| true),
        short: metrics(&|w| w < word_threshold),
        long: metrics(&|w| w >= word_threshold),
    })
}
