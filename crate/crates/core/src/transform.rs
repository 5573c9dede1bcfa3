//! Cross-lingual shift of speaker embeddings.
//!
//! A bilingual reference speaker supplies two language cluster means
//! `mu_A` and `mu_B`. The delta `mu_B - mu_A` moves any voice from language
//! A toward language B, scaled by an accent factor `epsilon`:
//! `x_B = x_A + epsilon * delta`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::analysis::{cosine_similarity, lda_predict, LdaModel};
use crate::embedding::{check_dim, distance, Embedding};
use crate::error::{Error, Result};
use crate::store::container::{Container, StreamTag};
use crate::store::{build_profiles, SpeakerProfile, Store};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslationDelta {
    pub source_language: String,
    pub target_language: String,
    /// `mu_target - mu_source` of the reference speaker.
    pub delta: Vec<f64>,
    pub reference_speaker_id: String,
    /// Utterance counts behind the source and target means.
    pub derived_counts: [usize; 2],
}

impl TranslationDelta {
    pub fn dim(&self) -> usize {
        self.delta.len()
    }

    /// The delta for the opposite direction.
    pub fn reversed(&self) -> Self {
        Self {
            source_language: self.target_language.clone(),
            target_language: self.source_language.clone(),
            delta: self.delta.iter().map(|v| -v).collect(),
            reference_speaker_id: self.reference_speaker_id.clone(),
            derived_counts: [self.derived_counts[1], self.derived_counts[0]],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccentSetting {
    pub epsilon: f64,
    /// Permits epsilon outside `[0, 1]`.
    #[serde(default)]
    pub allow_extrapolation: bool,
}

impl AccentSetting {
    pub fn new(epsilon: f64) -> Result<Self> {
        let s = Self {
            epsilon,
            allow_extrapolation: false,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn extrapolating(epsilon: f64) -> Result<Self> {
        let s = Self {
            epsilon,
            allow_extrapolation: true,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.epsilon.is_finite() {
            return Err(Error::EpsilonOutOfRange(self.epsilon));
        }
        if !self.allow_extrapolation && !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::EpsilonOutOfRange(self.epsilon));
        }
        Ok(())
    }
}

impl Default for AccentSetting {
    fn default() -> Self {
        Self {
            epsilon: 1.0,
            allow_extrapolation: false,
        }
    }
}

/// Delta from `lang_a` to `lang_b` out of a bilingual reference profile.
pub fn compute_delta(
    profile: &SpeakerProfile,
    lang_a: &str,
    lang_b: &str,
) -> Result<TranslationDelta> {
    if lang_a == lang_b {
        return Err(Error::InvalidInput(format!(
            "source and target language are both {lang_a}"
        )));
    }
    let cluster = |lang: &str| {
        profile.cluster(lang).ok_or_else(|| Error::NotBilingual {
            speaker: profile.speaker_id.clone(),
            language: lang.to_string(),
        })
    };
    let a = cluster(lang_a)?;
    let b = cluster(lang_b)?;
    check_dim(a.mean.dim(), b.mean.dim())?;
    Ok(TranslationDelta {
        source_language: lang_a.to_string(),
        target_language: lang_b.to_string(),
        delta: b
            .mean
            .values
            .iter()
            .zip(&a.mean.values)
            .map(|(b, a)| b - a)
            .collect(),
        reference_speaker_id: profile.speaker_id.clone(),
        derived_counts: [a.count, b.count],
    })
}

/// Convenience wrapper: builds the reference speaker's profile from a store.
pub fn compute_delta_from_store(
    store: &Store,
    reference: &str,
    lang_a: &str,
    lang_b: &str,
) -> Result<TranslationDelta> {
    let refs = store.filter(|r| r.speaker_id == reference);
    let profile = build_profiles(&refs)?
        .into_iter()
        .next()
        .ok_or_else(|| Error::NotBilingual {
            speaker: reference.to_string(),
            language: lang_a.to_string(),
        })?;
    compute_delta(&profile, lang_a, lang_b)
}

/// `x + epsilon * delta`. With `epsilon == 0` the input is returned unchanged.
pub fn translate(
    x: &Embedding,
    delta: &TranslationDelta,
    accent: &AccentSetting,
) -> Result<Embedding> {
    accent.validate()?;
    check_dim(delta.dim(), x.dim())?;
    if accent.epsilon == 0.0 {
        return Ok(x.clone());
    }
    let values = x
        .values
        .iter()
        .zip(&delta.delta)
        .map(|(v, d)| v + accent.epsilon * d)
        .collect();
    Ok(Embedding {
        values,
        normalized: false,
    })
}

/// One translation per epsilon, in the given order.
pub fn accent_sweep(
    x: &Embedding,
    delta: &TranslationDelta,
    epsilons: &[f64],
    allow_extrapolation: bool,
) -> Result<Vec<Embedding>> {
    epsilons
        .iter()
        .map(|&epsilon| {
            translate(
                x,
                delta,
                &AccentSetting {
                    epsilon,
                    allow_extrapolation,
                },
            )
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerTransfer {
    pub speaker_id: String,
    pub from_language: String,
    pub to_language: String,
    pub translated_mean: Vec<f64>,
    pub lda_label: String,
    pub lda_score: f64,
    pub on_target: bool,
    /// Cosine similarity between the native and translated means.
    pub cosine_to_original: f64,
    /// Speaker whose nearest native cluster mean is closest to the
    /// translated mean.
    pub nearest_speaker: String,
    /// Rank of the speaker's own native clusters among all speakers
    /// (1 = nearest).
    pub own_rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub source_language: String,
    pub target_language: String,
    pub reference_speaker_id: String,
    pub epsilon: f64,
    pub speakers: Vec<SpeakerTransfer>,
    pub fraction_on_target: f64,
    pub fraction_own_nearest: f64,
}

/// Translates every monolingual speaker's mean toward the other language of
/// the delta and checks the result against the LDA and against identity.
///
/// Speakers native to the delta's source language move by `+epsilon*delta`,
/// speakers native to its target language by `-epsilon*delta`.
pub fn transfer_report(
    store: &Store,
    delta: &TranslationDelta,
    lda: &LdaModel,
    accent: &AccentSetting,
) -> Result<TransferReport> {
    accent.validate()?;
    let profiles = build_profiles(store)?;
    let reverse = delta.reversed();
    let mut speakers = Vec::new();
    for p in &profiles {
        if p.entries.len() != 1 {
            continue;
        }
        let native = &p.entries[0];
        let d = if native.language == delta.source_language {
            delta
        } else if native.language == delta.target_language {
            &reverse
        } else {
            continue;
        };
        let moved = translate(&native.mean, d, accent)?;
        let (label, score) = lda_predict(lda, &moved.values)?;
        let lda_label = lda.class_name(label).to_string();

        let mut ranked: Vec<(f64, &str)> = profiles
            .iter()
            .map(|q| {
                let nearest = q
                    .entries
                    .iter()
                    .map(|e| distance(&e.mean.values, &moved.values))
                    .fold(f64::INFINITY, f64::min);
                (nearest, q.speaker_id.as_str())
            })
            .collect();
        ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(b.1)));
        let own_rank = 1 + ranked
            .iter()
            .position(|(_, s)| *s == p.speaker_id)
            .expect("speaker is among profiles");

        speakers.push(SpeakerTransfer {
            speaker_id: p.speaker_id.clone(),
            from_language: native.language.clone(),
            to_language: d.target_language.clone(),
            cosine_to_original: cosine_similarity(&native.mean.values, &moved.values)?,
            on_target: lda_label == d.target_language,
            lda_label,
            lda_score: score,
            nearest_speaker: ranked[0].1.to_string(),
            own_rank,
            translated_mean: moved.values,
        });
    }
    let n = speakers.len().max(1) as f64;
    Ok(TransferReport {
        source_language: delta.source_language.clone(),
        target_language: delta.target_language.clone(),
        reference_speaker_id: delta.reference_speaker_id.clone(),
        epsilon: accent.epsilon,
        fraction_on_target: speakers.iter().filter(|s| s.on_target).count() as f64 / n,
        fraction_own_nearest: speakers.iter().filter(|s| s.own_rank == 1).count() as f64 / n,
        speakers,
    })
}

/// A labelled point in a cross-lingual voice set.
#[derive(Debug, Clone, PartialEq)]
pub struct VoicePoint {
    pub speaker_id: String,
    pub language: String,
    pub translated: bool,
    pub embedding: Embedding,
}

impl VoicePoint {
    /// `speaker:language`
    pub fn voice(&self) -> String {
        format!("{}:{}", self.speaker_id, self.language)
    }
}

/// Every utterance of the listed speakers, natively and shifted into the
/// other language of the delta. Bilingual speakers contribute their native
/// utterances in both languages and are not shifted.
pub fn cross_lingual_voices(
    store: &Store,
    delta: &TranslationDelta,
    speakers: &[&str],
    accent: &AccentSetting,
    per_voice: Option<usize>,
) -> Result<Vec<VoicePoint>> {
    let reverse = delta.reversed();
    let mut out = Vec::new();
    for &spk in speakers {
        let own = store.filter(|r| r.speaker_id == spk);
        if own.is_empty() {
            return Err(Error::InvalidInput(format!(
                "no utterances for speaker {spk}"
            )));
        }
        let bilingual = own.languages().len() > 1;
        let mut taken: std::collections::BTreeMap<String, usize> = Default::default();
        for r in own.records() {
            let e = r
                .embedding
                .as_ref()
                .ok_or_else(|| Error::MissingEmbedding(r.utterance_id.clone()))?;
            let d = if r.language == delta.source_language {
                delta
            } else if r.language == delta.target_language {
                &reverse
            } else {
                continue;
            };
            let count = taken.entry(r.language.clone()).or_default();
            if per_voice.is_some_and(|k| *count >= k) {
                continue;
            }
            *count += 1;
            out.push(VoicePoint {
                speaker_id: spk.to_string(),
                language: r.language.clone(),
                translated: false,
                embedding: e.clone(),
            });
            if !bilingual {
                out.push(VoicePoint {
                    speaker_id: spk.to_string(),
                    language: d.target_language.clone(),
                    translated: true,
                    embedding: translate(e, d, accent)?,
                });
            }
        }
    }
    Ok(out)
}

pub fn delta_to_container(delta: &TranslationDelta, provenance: Value) -> Container {
    Container {
        tag: StreamTag::Delta,
        dims: vec![delta.dim() as u32],
        count: 1,
        payload: delta.delta.clone(),
        provenance,
        lines: vec![json!({
            "source_language": delta.source_language,
            "target_language": delta.target_language,
            "reference_speaker_id": delta.reference_speaker_id,
            "derived_counts": delta.derived_counts,
        })],
    }
}

pub fn delta_from_container(c: &Container) -> Result<TranslationDelta> {
    c.expect_tag(StreamTag::Delta)?;
    if c.count != 1 || c.lines.len() != 1 {
        return Err(Error::CorruptPayload(
            "delta stream must hold one vector".into(),
        ));
    }
    let meta = &c.lines[0];
    let text = |k: &str| {
        meta[k]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| Error::CorruptPayload(format!("delta metadata lacks {k}")))
    };
    let counts: [usize; 2] = serde_json::from_value(meta["derived_counts"].clone())
        .map_err(|e| Error::CorruptPayload(format!("derived_counts: {e}")))?;
    Ok(TranslationDelta {
        source_language: text("source_language")?,
        target_language: text("target_language")?,
        delta: c.payload.clone(),
        reference_speaker_id: text("reference_speaker_id")?,
        derived_counts: counts,
    })
}

pub fn save_delta(
    delta: &TranslationDelta,
    provenance: Value,
    path: impl AsRef<Path>,
) -> Result<()> {
    delta_to_container(delta, provenance).write(path)
}

pub fn load_delta(path: impl AsRef<Path>) -> Result<TranslationDelta> {
    delta_from_container(&Container::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::UtteranceRecord;

    fn profile(a: Vec<f64>, b: Vec<f64>) -> SpeakerProfile {
        let s = Store::from_records([
            UtteranceRecord::new("1", "ref", "en", "US", 5)
                .with_embedding(Embedding::new(a).unwrap()),
            UtteranceRecord::new("2", "ref", "es", "MX", 5)
                .with_embedding(Embedding::new(b).unwrap()),
        ])
        .unwrap();
        build_profiles(&s).unwrap().remove(0)
    }

    #[test]
    fn equal_means_give_zero_delta() {
        let p = profile(vec![0.3, -0.2], vec![0.3, -0.2]);
        let d = compute_delta(&p, "en", "es").unwrap();
        assert_eq!(d.delta, vec![0.0, 0.0]);
        assert_eq!(d.derived_counts, [1, 1]);
    }

    #[test]
    fn antisymmetric_and_self_consistent() {
        let p = profile(vec![0.1, 0.7, -2.0], vec![1.3, -0.4, 0.25]);
        let ab = compute_delta(&p, "en", "es").unwrap();
        let ba = compute_delta(&p, "es", "en").unwrap();
        for (x, y) in ab.delta.iter().zip(&ba.delta) {
            assert_eq!(*x, -*y);
        }
        let mu_a = &p.cluster("en").unwrap().mean;
        let mu_b = &p.cluster("es").unwrap().mean;
        let t = translate(mu_a, &ab, &AccentSetting::default()).unwrap();
        for (x, y) in t.values.iter().zip(&mu_b.values) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn missing_language() {
        let p = profile(vec![0.1], vec![0.2]);
        assert!(matches!(
            compute_delta(&p, "en", "fr"),
            Err(Error::NotBilingual { language, .. }) if language == "fr"
        ));
    }

    #[test]
    fn epsilon_guard_and_zero_identity() {
        let p = profile(vec![0.1, 0.2], vec![0.5, -0.2]);
        let d = compute_delta(&p, "en", "es").unwrap();
        let x = Embedding::new(vec![-0.0, 3.5]).unwrap();
        assert!(matches!(
            AccentSetting::new(1.5),
            Err(Error::EpsilonOutOfRange(_))
        ));
        let y = translate(&x, &d, &AccentSetting::new(0.0).unwrap()).unwrap();
        assert_eq!(y.values[0].to_bits(), x.values[0].to_bits());
        assert!(translate(&x, &d, &AccentSetting::extrapolating(1.5).unwrap()).is_ok());
        let bad = AccentSetting {
            epsilon: -0.1,
            allow_extrapolation: false,
        };
        assert!(translate(&x, &d, &bad).is_err());
        let short = Embedding::new(vec![1.0]).unwrap();
        assert!(matches!(
            translate(&short, &d, &AccentSetting::default()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn sweep_shapes() {
        let p = profile(vec![0.1, 0.2], vec![0.5, -0.2]);
        let d = compute_delta(&p, "en", "es").unwrap();
        let x = Embedding::new(vec![1.0, 1.0]).unwrap();
        assert!(accent_sweep(&x, &d, &[], false).unwrap().is_empty());
        let out = accent_sweep(&x, &d, &[0.0, 0.5, 1.0], false).unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(out[0], x);
    }

    #[test]
    fn delta_container_roundtrip() {
        let p = profile(vec![0.1, 0.2], vec![0.5, -0.2]);
        let d = compute_delta(&p, "en", "es").unwrap();
        let c = delta_to_container(&d, json!({"seed": 1}));
        let back = delta_from_container(&Container::decode(&c.encode().unwrap()).unwrap()).unwrap();
        assert_eq!(back, d);
    }
}
