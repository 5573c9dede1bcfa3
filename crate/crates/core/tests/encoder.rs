use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xlvoice::encoder::{
    batch_gradient, gradient_check, load_model, save_model, train, EncoderConfig, EncoderModel,
    Objective, Pooling, MAX_CHECK_PARAMS,
};
use xlvoice::features::{mfcc, FeatureMatrix, MfccConfig};
use xlvoice::oracle::{gen_audio, AudioSpec};
use xlvoice::{analysis::cosine_similarity, Error};

/// Gradient-check tolerance from the acceptance criterion.
const GRAD_TOL: f64 = 1e-4;

fn features(frames: usize, width: usize, seed: u64) -> FeatureMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..frames * width)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    FeatureMatrix::new(data, frames, width, 100.0).unwrap()
}

fn small(layers: usize, pooling: Pooling) -> EncoderConfig {
    EncoderConfig {
        input_dim: 5,
        n_recurrent_layers: layers,
        recurrent_units: 7,
        embedding_dim: 6,
        n_speakers: 4,
        pooling,
        seed: 11,
        ..Default::default()
    }
}

/// Restricts a model objective to one named tensor so each layer type is
/// checked in isolation.
struct TensorObjective<'a> {
    model: EncoderModel,
    range: Range<usize>,
    slice: Vec<f64>,
    x: &'a FeatureMatrix,
    label: usize,
}

impl<'a> TensorObjective<'a> {
    fn new(model: &EncoderModel, name: &str, x: &'a FeatureMatrix, label: usize) -> Self {
        let t = model
            .tensors()
            .into_iter()
            .find(|t| t.name == name)
            .unwrap();
        let range = t.range();
        Self {
            slice: model.params()[range.clone()].to_vec(),
            model: model.clone(),
            range,
            x,
            label,
        }
    }

    fn full(&self) -> EncoderModel {
        let mut p = self.model.params().to_vec();
        p[self.range.clone()].copy_from_slice(&self.slice);
        EncoderModel::from_parts(self.model.config().clone(), p).unwrap()
    }
}

impl Objective for TensorObjective<'_> {
    fn params(&self) -> &[f64] {
        &self.slice
    }
    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.slice
    }
    fn loss(&self) -> f64 {
        self.full().loss(self.x, self.label).unwrap()
    }
    fn gradient(&self) -> Vec<f64> {
        let (_, g) = self.full().loss_and_gradient(self.x, self.label).unwrap();
        g[self.range.clone()].to_vec()
    }
}

#[test]
fn full_model_gradient_check() {
    for pooling in [Pooling::Mean, Pooling::Last] {
        for layers in [1, 2] {
            let model = EncoderModel::new(small(layers, pooling)).unwrap();
            assert!(model.n_params() <= MAX_CHECK_PARAMS);
            let x = features(9, 5, layers as u64);
            let r = model.gradient_check(&x, 2).unwrap();
            assert!(
                r.max_relative_error < GRAD_TOL,
                "{pooling:?}/{layers}: {:?}",
                r.per_group
            );
            assert_eq!(r.per_group.len(), 3 * layers + 4);
        }
    }
}

#[test]
fn per_layer_gradient_checks() {
    let model = EncoderModel::new(small(2, Pooling::Mean)).unwrap();
    let x = features(6, 5, 3);
    for t in model.tensors() {
        let mut obj = TensorObjective::new(&model, &t.name, &x, 1);
        let r = gradient_check(&mut obj).unwrap();
        assert!(
            r.max_relative_error < GRAD_TOL,
            "{}: {}",
            t.name,
            r.max_relative_error
        );
    }
}

#[test]
fn empty_and_oversized_models_are_refused() {
    struct Nothing;
    impl Objective for Nothing {
        fn params(&self) -> &[f64] {
            &[]
        }
        fn params_mut(&mut self) -> &mut [f64] {
            &mut []
        }
        fn loss(&self) -> f64 {
            0.0
        }
        fn gradient(&self) -> Vec<f64> {
            vec![]
        }
    }
    assert!(matches!(
        gradient_check(&mut Nothing),
        Err(Error::EmptyModel)
    ));
    let big = EncoderModel::new(EncoderConfig::default()).unwrap();
    let x = features(3, 20, 0);
    assert!(matches!(
        big.gradient_check(&x, 0),
        Err(Error::ModelTooLarge { .. })
    ));
}

#[test]
fn classifier_bias_shift_leaves_loss_unchanged() {
    // softmax is invariant to adding a constant to every logit
    let model = EncoderModel::new(small(1, Pooling::Mean)).unwrap();
    let x = features(5, 5, 8);
    let r = model
        .tensors()
        .into_iter()
        .find(|t| t.name == "classifier.bias")
        .unwrap()
        .range();
    let mut p = model.params().to_vec();
    p[r.clone()].iter_mut().for_each(|b| *b += 3.25);
    let shifted = EncoderModel::from_parts(model.config().clone(), p).unwrap();
    let a = model.loss(&x, 1).unwrap();
    let b = shifted.loss(&x, 1).unwrap();
    assert!((a - b).abs() < 1e-12);
    let (_, g) = model.loss_and_gradient(&x, 1).unwrap();
    assert!(g[r].iter().sum::<f64>().abs() < 1e-12);
}

#[test]
fn batch_gradient_is_permutation_invariant() {
    let model = EncoderModel::new(small(2, Pooling::Mean)).unwrap();
    let xs: Vec<FeatureMatrix> = (0..6).map(|i| features(4 + i, 5, 100 + i as u64)).collect();
    let batch: Vec<(&FeatureMatrix, usize)> =
        xs.iter().enumerate().map(|(i, x)| (x, i % 4)).collect();
    let mut rev = batch.clone();
    rev.reverse();
    let (la, ga) = batch_gradient(&model, &batch).unwrap();
    let (lb, gb) = batch_gradient(&model, &rev).unwrap();
    assert!((la - lb).abs() < 1e-10);
    for (a, b) in ga.iter().zip(&gb) {
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn feature_width_mismatch() {
    let model = EncoderModel::new(small(1, Pooling::Mean)).unwrap();
    assert!(matches!(
        model.embed(&features(4, 3, 0)),
        Err(Error::FeatureDimensionMismatch {
            expected: 5,
            actual: 3
        })
    ));
}

fn audio_dataset(spec: &AudioSpec) -> Vec<(FeatureMatrix, usize)> {
    let (clips, _) = gen_audio(spec).unwrap();
    clips
        .iter()
        .map(|c| {
            (
                mfcc(&c.clip, &MfccConfig::default()).unwrap(),
                c.speaker_index,
            )
        })
        .collect()
}

fn quick_config(n_speakers: usize, steps: usize) -> EncoderConfig {
    EncoderConfig {
        input_dim: 20,
        n_recurrent_layers: 1,
        recurrent_units: 24,
        embedding_dim: 16,
        n_speakers,
        learning_rate: 5e-3,
        batch_size: 8,
        max_steps: steps,
        seed: 3,
        pooling: Pooling::Mean,
    }
}

#[test]
fn training_is_deterministic_and_learns() {
    let spec = AudioSpec {
        n_speakers: 3,
        utterances_per_speaker: 6,
        min_duration_s: 0.25,
        max_duration_s: 0.35,
        seed: 5,
        ..Default::default()
    };
    let data = audio_dataset(&spec);
    let cfg = quick_config(3, 60);
    let a = train(&data, &cfg).unwrap();
    let b = train(&data, &cfg).unwrap();
    assert_eq!(a.model.params(), b.model.params());
    assert_eq!(a.losses, b.losses);
    let head: f64 = a.losses[..10].iter().sum::<f64>() / 10.0;
    let tail: f64 = a.losses[50..].iter().sum::<f64>() / 10.0;
    assert!(tail < head, "{head} -> {tail}");
    assert!(tail < (3f64).ln());
}

#[test]
fn trained_embeddings_group_by_speaker() {
    let spec = AudioSpec {
        n_speakers: 4,
        utterances_per_speaker: 12,
        min_duration_s: 0.3,
        max_duration_s: 0.4,
        seed: 9,
        ..Default::default()
    };
    let data = audio_dataset(&spec);
    let (train_set, held): (Vec<_>, Vec<_>) =
        data.into_iter().enumerate().partition(|(i, _)| i % 12 < 9);
    let train_set: Vec<_> = train_set.into_iter().map(|(_, d)| d).collect();
    let out = train(&train_set, &quick_config(4, 150)).unwrap();
    let embs: Vec<(Vec<f64>, usize)> = held
        .iter()
        .map(|(_, (f, s))| (out.model.embed(f).unwrap().values, *s))
        .collect();
    let (mut within, mut across) = (Vec::new(), Vec::new());
    for i in 0..embs.len() {
        for j in i + 1..embs.len() {
            let c = cosine_similarity(&embs[i].0, &embs[j].0).unwrap();
            if embs[i].1 == embs[j].1 {
                within.push(c);
            } else {
                across.push(c);
            }
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!(
        mean(&within) - mean(&across) > 0.3,
        "{} vs {}",
        mean(&within),
        mean(&across)
    );
}

#[test]
fn checkpoint_roundtrip_preserves_embeddings() {
    let model = EncoderModel::new(small(2, Pooling::Last)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.dvec");
    save_model(&path, &model, serde_json::json!({"seed": 11})).unwrap();
    let back = load_model(&path).unwrap();
    assert_eq!(back.config(), model.config());
    let x = features(7, 5, 2);
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(
        bits(&back.embed(&x).unwrap().values),
        bits(&model.embed(&x).unwrap().values)
    );
}
