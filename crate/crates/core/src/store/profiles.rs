use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Store, UtteranceRecord};
use crate::analysis::cosine_similarity;
use crate::embedding::Embedding;
use crate::encoder::mean_embedding;
use crate::error::{Error, Result};

/// One speaker's cluster in one language.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageCluster {
    pub language: String,
    pub locale: String,
    pub mean: Embedding,
    pub count: usize,
    /// Mean cosine similarity of member embeddings to the cluster mean;
    /// absent when the mean is the zero vector.
    pub mean_cosine_to_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerProfile {
    pub speaker_id: String,
    /// Sorted by language tag.
    pub entries: Vec<LanguageCluster>,
}

impl SpeakerProfile {
    pub fn cluster(&self, language: &str) -> Option<&LanguageCluster> {
        self.entries.iter().find(|e| e.language == language)
    }

    pub fn languages(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.language.as_str())
    }

    pub fn is_bilingual(&self) -> bool {
        self.entries.len() >= 2
    }
}

/// Groups embedded records by `(speaker, language)` and averages each group.
///
/// Members are averaged in utterance-id order, so the result does not depend
/// on record order.
pub fn build_profiles(store: &Store) -> Result<Vec<SpeakerProfile>> {
    let mut groups: BTreeMap<(&str, &str), Vec<&UtteranceRecord>> = BTreeMap::new();
    for r in store.records() {
        if r.embedding.is_none() {
            return Err(Error::MissingEmbedding(r.utterance_id.clone()));
        }
        groups
            .entry((r.speaker_id.as_str(), r.language.as_str()))
            .or_default()
            .push(r);
    }
    let mut profiles: Vec<SpeakerProfile> = Vec::new();
    for ((speaker, language), mut members) in groups {
        members.sort_by(|a, b| a.utterance_id.cmp(&b.utterance_id));
        let embeddings: Vec<&Embedding> = members
            .iter()
            .map(|r| r.embedding.as_ref().expect("checked above"))
            .collect();
        let mean = mean_embedding(embeddings.iter().copied())?;
        let cosines: Option<Vec<f64>> = embeddings
            .iter()
            .map(|e| cosine_similarity(&e.values, &mean.values).ok())
            .collect();
        let cluster = LanguageCluster {
            language: language.to_string(),
            locale: members[0].locale.clone(),
            count: members.len(),
            mean_cosine_to_mean: cosines.map(|c| c.iter().sum::<f64>() / c.len() as f64),
            mean,
        };
        match profiles.last_mut() {
            Some(p) if p.speaker_id == speaker => p.entries.push(cluster),
            _ => profiles.push(SpeakerProfile {
                speaker_id: speaker.to_string(),
                entries: vec![cluster],
            }),
        }
    }
    Ok(profiles)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(id: &str, spk: &str, lang: &str, v: Vec<f64>) -> UtteranceRecord {
        UtteranceRecord::new(id, spk, lang, "US", 5).with_embedding(Embedding::new(v).unwrap())
    }

    #[test]
    fn single_record_profile() {
        let s = Store::from_records([rec("a", "x", "en", vec![0.3, 0.4])]).unwrap();
        let p = build_profiles(&s).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].entries[0].mean.values, vec![0.3, 0.4]);
        assert_eq!(p[0].entries[0].count, 1);
        assert!((p[0].entries[0].mean_cosine_to_mean.unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn grouping_by_language() {
        let s = Store::from_records([
            rec("a", "ref", "en", vec![1.0, 0.0]),
            rec("b", "ref", "es", vec![0.0, 1.0]),
            rec("c", "m", "en", vec![1.0, 1.0]),
            rec("d", "ref", "en", vec![3.0, 0.0]),
        ])
        .unwrap();
        let p = build_profiles(&s).unwrap();
        assert_eq!(p.len(), 2);
        let m = &p[0];
        assert_eq!(m.speaker_id, "m");
        assert_eq!(m.entries.len(), 1);
        let r = &p[1];
        assert!(r.is_bilingual());
        assert_eq!(r.languages().collect::<Vec<_>>(), vec!["en", "es"]);
        assert_eq!(r.cluster("en").unwrap().mean.values, vec![2.0, 0.0]);
        assert_eq!(r.cluster("en").unwrap().count, 2);
    }

    #[test]
    fn missing_embedding_is_reported() {
        let s = Store::from_records([UtteranceRecord::new("q", "x", "en", "US", 3)]).unwrap();
        assert!(matches!(build_profiles(&s), Err(Error::MissingEmbedding(id)) if id == "q"));
    }

    proptest! {
        #[test]
        fn order_invariant_and_counts_sum(
            vals in prop::collection::vec((0usize..3, 0usize..2, -1.0f64..1.0, -1.0f64..1.0), 1..40),
            seed in any::<u64>(),
        ) {
            let records: Vec<_> = vals
                .iter()
                .enumerate()
                .map(|(i, (s, l, a, b))| {
                    rec(&format!("u{i:03}"), &format!("s{s}"), ["en", "es"][*l], vec![*a, *b])
                })
                .collect();
            let mut shuffled = records.clone();
            use rand::{seq::SliceRandom, SeedableRng};
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let p1 = build_profiles(&Store::from_records(records).unwrap()).unwrap();
            let p2 = build_profiles(&Store::from_records(shuffled).unwrap()).unwrap();
            prop_assert_eq!(&p1, &p2);
            let total: usize = p1.iter().flat_map(|p| &p.entries).map(|e| e.count).sum();
            prop_assert_eq!(total, vals.len());
        }
    }
}
