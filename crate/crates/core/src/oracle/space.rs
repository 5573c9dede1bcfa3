use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::embedding::{dot, norm, Embedding};
use crate::error::{Error, Result};
use crate::store::{Store, UtteranceRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageSlot {
    pub language: String,
    pub locale: String,
    pub utterances: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSpeaker {
    pub speaker_id: String,
    #[serde(default)]
    pub gender: Option<String>,
    /// One slot per spoken language; two or more makes the speaker bilingual.
    pub languages: Vec<LanguageSlot>,
}

impl OracleSpeaker {
    fn new(id: &str, gender: &str, slots: &[(&str, &str, usize)]) -> Self {
        Self {
            speaker_id: id.into(),
            gender: Some(gender.into()),
            languages: slots
                .iter()
                .map(|&(language, locale, utterances)| LanguageSlot {
                    language: language.into(),
                    locale: locale.into(),
                    utterances,
                })
                .collect(),
        }
    }
}

/// Generative description of a bilingual embedding space.
///
/// Each utterance embedding is `base_s + alpha(n_words) * o_L + noise`, with
/// `alpha(n) = min(1, n / attenuation_words)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpaceSpec {
    pub dim: usize,
    /// Language tags; offsets are drawn in this order.
    pub languages: Vec<String>,
    pub speakers: Vec<OracleSpeaker>,
    /// Expected norm of a speaker base vector (per-coordinate standard
    /// deviation is `speaker_spread / sqrt(dim)`).
    pub speaker_spread: f64,
    /// Distance between any two language offsets.
    pub language_separation: f64,
    /// Per-coordinate standard deviation of utterance noise.
    pub utterance_noise: f64,
    pub attenuation_words: f64,
    pub min_words: u32,
    pub max_words: u32,
    pub seed: u64,
}

impl Default for SpaceSpec {
    /// One English/Spanish bilingual reference speaker with 8350 utterances
    /// per language and six monolingual speakers with 400 each.
    fn default() -> Self {
        let separation = 0.5;
        Self {
            dim: 128,
            languages: vec!["en".into(), "es".into()],
            speakers: vec![
                OracleSpeaker::new("ref", "M", &[("en", "US", 8350), ("es", "MX", 8350)]),
                OracleSpeaker::new("spk1", "F", &[("en", "US", 400)]),
                OracleSpeaker::new("spk3", "F", &[("es", "MX", 400)]),
                OracleSpeaker::new("spk4", "M", &[("en", "AU", 400)]),
                OracleSpeaker::new("spk5", "F", &[("en", "AU", 400)]),
                OracleSpeaker::new("spk6", "M", &[("es", "ES", 400)]),
                OracleSpeaker::new("spk7", "F", &[("es", "ES", 400)]),
            ],
            speaker_spread: 1.0,
            language_separation: separation,
            // half the separation sits three noise deviations from the midpoint
            utterance_noise: separation / 6.0,
            attenuation_words: 5.0,
            min_words: 3,
            max_words: 15,
            seed: 0,
        }
    }
}

impl SpaceSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.dim < 2 {
            return bad(format!("dim {} must be at least 2", self.dim));
        }
        if self.languages.len() < 2 {
            return bad("at least two languages are required".into());
        }
        if self.languages.len() > self.dim {
            return bad("more languages than dimensions".into());
        }
        let mut langs = self.languages.clone();
        langs.sort();
        langs.dedup();
        if langs.len() != self.languages.len() {
            return bad("language tags must be distinct".into());
        }
        if self.speakers.is_empty() {
            return bad("no speakers".into());
        }
        let mut ids: Vec<&str> = self
            .speakers
            .iter()
            .map(|s| s.speaker_id.as_str())
            .collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != self.speakers.len() {
            return bad("speaker ids must be distinct".into());
        }
        for s in &self.speakers {
            if s.speaker_id.is_empty() || s.languages.is_empty() {
                return bad(format!("speaker '{}' has no languages", s.speaker_id));
            }
            for slot in &s.languages {
                if !self.languages.contains(&slot.language) {
                    return bad(format!(
                        "speaker {} uses undeclared language {}",
                        s.speaker_id, slot.language
                    ));
                }
            }
        }
        if !(self.speaker_spread > 0.0 && self.speaker_spread.is_finite()) {
            return bad("speaker_spread must be positive".into());
        }
        if !(self.language_separation >= 0.0 && self.language_separation.is_finite()) {
            return bad("language_separation must be non-negative".into());
        }
        // zero noise is accepted as the noise-free limit
        if !(self.utterance_noise >= 0.0 && self.utterance_noise.is_finite()) {
            return bad("utterance_noise must be non-negative".into());
        }
        if !(self.attenuation_words > 0.0) {
            return bad("attenuation_words must be positive".into());
        }
        if self.min_words == 0 || self.min_words > self.max_words {
            return bad(format!(
                "word range {}..={} is invalid",
                self.min_words, self.max_words
            ));
        }
        Ok(())
    }

    pub fn attenuation(&self, n_words: u32) -> f64 {
        (n_words as f64 / self.attenuation_words).min(1.0)
    }
}

/// The parameters a space was generated from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceTruth {
    pub spec: SpaceSpec,
    pub offsets: BTreeMap<String, Vec<f64>>,
    pub bases: BTreeMap<String, Vec<f64>>,
}

impl SpaceTruth {
    /// Noise-free long-utterance centre of a (speaker, language) cluster.
    pub fn cluster_center(&self, speaker: &str, language: &str) -> Option<Vec<f64>> {
        let b = self.bases.get(speaker)?;
        let o = self.offsets.get(language)?;
        Some(b.iter().zip(o).map(|(b, o)| b + o).collect())
    }

    /// `o_b - o_a`.
    pub fn offset_difference(&self, a: &str, b: &str) -> Option<Vec<f64>> {
        let oa = self.offsets.get(a)?;
        let ob = self.offsets.get(b)?;
        Some(ob.iter().zip(oa).map(|(b, a)| b - a).collect())
    }
}

/// Orthonormal directions via Gram-Schmidt on Gaussian draws.
fn orthonormal(k: usize, dim: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(k);
    while out.len() < k {
        let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        for u in &out {
            let p = dot(&v, u);
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= p * b);
        }
        let n = norm(&v);
        if n > 1e-8 {
            v.iter_mut().for_each(|a| *a /= n);
            out.push(v);
        }
    }
    out
}

/// Samples a store from `spec`; bit-identical for equal specs.
pub fn gen_space(spec: &SpaceSpec) -> Result<(Store, SpaceTruth)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dim = spec.dim;
    // pairwise distance between offsets is exactly the separation
    let scale = spec.language_separation / 2f64.sqrt();
    let offsets: BTreeMap<String, Vec<f64>> = spec
        .languages
        .iter()
        .cloned()
        .zip(orthonormal(spec.languages.len(), dim, &mut rng))
        .map(|(l, u)| (l, u.into_iter().map(|v| v * scale).collect()))
        .collect();
    let base_sd = spec.speaker_spread / (dim as f64).sqrt();
    let mut bases = BTreeMap::new();
    for s in &spec.speakers {
        let b: Vec<f64> = (0..dim)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                base_sd * z
            })
            .collect();
        bases.insert(s.speaker_id.clone(), b);
    }

    let mut store = Store::new();
    for s in &spec.speakers {
        let base = &bases[&s.speaker_id];
        for slot in &s.languages {
            let offset = &offsets[&slot.language];
            for i in 0..slot.utterances {
                let n_words = rng.random_range(spec.min_words..=spec.max_words);
                let alpha = spec.attenuation(n_words);
                let mut values: Vec<f64> = base
                    .iter()
                    .zip(offset)
                    .map(|(b, o)| b + alpha * o)
                    .collect();
                if spec.utterance_noise > 0.0 {
                    for v in values.iter_mut() {
                        *v += {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            spec.utterance_noise * z
                        };
                    }
                }
                let mut rec = UtteranceRecord::new(
                    format!("{}-{}-{:05}", s.speaker_id, slot.language, i),
                    &s.speaker_id,
                    &slot.language,
                    &slot.locale,
                    n_words,
                )
                .with_embedding(Embedding::new(values)?);
                rec.gender = s.gender.clone();
                store.push(rec)?;
            }
        }
    }
    store.provenance = serde_json::to_value(spec)?;
    Ok((
        store,
        SpaceTruth {
            spec: spec.clone(),
            offsets,
            bases,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SpaceSpec {
        SpaceSpec {
            dim: 8,
            speakers: vec![
                OracleSpeaker::new("ref", "M", &[("en", "US", 20), ("es", "MX", 20)]),
                OracleSpeaker::new("m", "F", &[("en", "US", 10)]),
            ],
            ..Default::default()
        }
    }

    #[test]
    fn deterministic() {
        let (a, ta) = gen_space(&small()).unwrap();
        let (b, tb) = gen_space(&small()).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        let (c, _) = gen_space(&SpaceSpec { seed: 1, ..small() }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn offsets_are_separated() {
        let (_, t) = gen_space(&small()).unwrap();
        let d = t.offset_difference("en", "es").unwrap();
        assert!((norm(&d) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn noise_free_long_utterances_sit_on_centers() {
        let spec = SpaceSpec {
            utterance_noise: 0.0,
            min_words: 5,
            ..small()
        };
        let (s, t) = gen_space(&spec).unwrap();
        for r in s.records() {
            let c = t.cluster_center(&r.speaker_id, &r.language).unwrap();
            assert_eq!(r.embedding.as_ref().unwrap().values, c);
        }
    }

    #[test]
    fn word_counts_in_range() {
        let (s, _) = gen_space(&small()).unwrap();
        assert!(s.records().iter().all(|r| (3..=15).contains(&r.n_words)));
        assert_eq!(s.len(), 50);
    }

    #[test]
    fn invalid_specs() {
        for spec in [
            SpaceSpec { dim: 1, ..small() },
            SpaceSpec {
                languages: vec!["en".into(), "en".into()],
                ..small()
            },
            SpaceSpec {
                speaker_spread: 0.0,
                ..small()
            },
            SpaceSpec {
                utterance_noise: -1.0,
                ..small()
            },
            SpaceSpec {
                min_words: 9,
                max_words: 3,
                ..small()
            },
        ] {
            assert!(matches!(gen_space(&spec), Err(Error::InvalidConfig(_))));
        }
    }
}
