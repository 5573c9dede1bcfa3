use proptest::prelude::*;
use xlvoice::analysis::{lda_fit_languages, lda_predict, LdaConfig};
use xlvoice::embedding::Embedding;
use xlvoice::oracle::{gen_space, SpaceSpec};
use xlvoice::store::{build_profiles, Store, UtteranceRecord};
use xlvoice::transform::{
    accent_sweep, compute_delta, compute_delta_from_store, transfer_report, translate,
    AccentSetting, TranslationDelta,
};

fn oracle() -> Store {
    gen_space(&SpaceSpec::default()).unwrap().0
}

fn full() -> AccentSetting {
    AccentSetting::default()
}

#[test]
fn reference_self_consistency() {
    let store = oracle();
    let profiles = build_profiles(&store).unwrap();
    let r = profiles.iter().find(|p| p.speaker_id == "ref").unwrap();
    let ab = compute_delta(r, "en", "es").unwrap();
    let ba = compute_delta(r, "es", "en").unwrap();
    let mu_a = &r.cluster("en").unwrap().mean;
    let mu_b = &r.cluster("es").unwrap().mean;
    let t = translate(mu_a, &ab, &full()).unwrap();
    let err = t
        .values
        .iter()
        .zip(&mu_b.values)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(err < 1e-12, "{err}");
    let back = translate(&t, &ba, &full()).unwrap();
    let err = back
        .values
        .iter()
        .zip(&mu_a.values)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(err < 1e-12, "{err}");
    assert!(ab.delta.iter().zip(&ba.delta).all(|(a, b)| *a == -*b));
}

#[test]
fn full_transfer_reaches_target_language() {
    let store = oracle();
    let delta = compute_delta_from_store(&store, "ref", "en", "es").unwrap();
    let lda = lda_fit_languages(&store, "ref", "en", "es", &LdaConfig::default()).unwrap();
    let report = transfer_report(&store, &delta, &lda, &full()).unwrap();
    assert_eq!(report.speakers.len(), 6);
    assert_eq!(report.fraction_on_target, 1.0);
    assert_eq!(report.fraction_own_nearest, 1.0);
    for s in &report.speakers {
        assert_ne!(s.from_language, s.to_language);
        assert_eq!(s.lda_label, s.to_language);
    }
}

#[test]
fn zero_delta_keeps_means() {
    let store = oracle();
    let mut delta = compute_delta_from_store(&store, "ref", "en", "es").unwrap();
    delta.delta.iter_mut().for_each(|v| *v = 0.0);
    let lda = lda_fit_languages(&store, "ref", "en", "es", &LdaConfig::default()).unwrap();
    let report = transfer_report(&store, &delta, &lda, &full()).unwrap();
    let profiles = build_profiles(&store).unwrap();
    for s in &report.speakers {
        assert!((s.cosine_to_original - 1.0).abs() < 1e-12);
        let p = profiles
            .iter()
            .find(|p| p.speaker_id == s.speaker_id)
            .unwrap();
        assert_eq!(s.translated_mean, p.entries[0].mean.values);
    }
}

#[test]
fn half_accent_score_lies_between() {
    let store = oracle();
    let delta = compute_delta_from_store(&store, "ref", "en", "es").unwrap();
    let lda = lda_fit_languages(&store, "ref", "en", "es", &LdaConfig::default()).unwrap();
    let profiles = build_profiles(&store).unwrap();
    let spk = profiles.iter().find(|p| p.speaker_id == "spk1").unwrap();
    let outs = accent_sweep(&spk.entries[0].mean, &delta, &[0.0, 0.5, 1.0], false).unwrap();
    let s: Vec<f64> = outs
        .iter()
        .map(|e| lda_predict(&lda, &e.values).unwrap().1)
        .collect();
    assert!(s[0] < s[1] && s[1] < s[2], "{s:?}");
    let residual = (s[2] - s[0]) - 2.0 * (s[1] - s[0]);
    assert!(residual.abs() < 1e-10);
}

#[test]
fn delta_ignores_order_and_duplication() {
    let store = oracle().filter(|r| r.speaker_id == "ref");
    let d0 = compute_delta_from_store(&store, "ref", "en", "es").unwrap();
    let mut reversed = store.records().to_vec();
    reversed.reverse();
    let d1 = compute_delta_from_store(&Store::from_records(reversed).unwrap(), "ref", "en", "es")
        .unwrap();
    assert_eq!(d0.delta, d1.delta);
    let doubled = store.records().iter().cloned().chain(
        store
            .records()
            .iter()
            .filter(|r| r.language == "es")
            .map(|r| UtteranceRecord {
                utterance_id: format!("{}-dup", r.utterance_id),
                ..r.clone()
            }),
    );
    let d2 = compute_delta_from_store(&Store::from_records(doubled).unwrap(), "ref", "en", "es")
        .unwrap();
    for (a, b) in d0.delta.iter().zip(&d2.delta) {
        assert!((a - b).abs() < 1e-12);
    }
}

fn delta_of(v: Vec<f64>) -> TranslationDelta {
    TranslationDelta {
        source_language: "en".into(),
        target_language: "es".into(),
        delta: v,
        reference_speaker_id: "ref".into(),
        derived_counts: [1, 1],
    }
}

fn pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..16).prop_flat_map(|d| {
        (
            prop::collection::vec(-10.0f64..10.0, d),
            prop::collection::vec(-10.0f64..10.0, d),
        )
    })
}

proptest! {
    #[test]
    fn round_trip_via_reverse((x, d) in pair(), eps in 0.0f64..=1.0) {
        let delta = delta_of(d);
        let acc = AccentSetting::new(eps).unwrap();
        let e = Embedding::new(x.clone()).unwrap();
        let there = translate(&e, &delta, &acc).unwrap();
        let back = translate(&there, &delta.reversed(), &acc).unwrap();
        for (a, b) in back.values.iter().zip(&x) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs().max(10.0)));
        }
    }

    #[test]
    fn affine_in_epsilon((x, d) in pair(), e1 in -2.0f64..2.0, e2 in -2.0f64..2.0) {
        let delta = delta_of(d.clone());
        let e = Embedding::new(x).unwrap();
        let o1 = translate(&e, &delta, &AccentSetting::extrapolating(e1).unwrap()).unwrap();
        let o2 = translate(&e, &delta, &AccentSetting::extrapolating(e2).unwrap()).unwrap();
        for ((a, b), dv) in o1.values.iter().zip(&o2.values).zip(&d) {
            prop_assert!(((a - b) - (e1 - e2) * dv).abs() <= 1e-12 * 64.0);
        }
    }

    #[test]
    fn zero_epsilon_is_bit_identity((x, d) in pair()) {
        let e = Embedding::new(x).unwrap();
        let out = translate(&e, &delta_of(d), &AccentSetting::new(0.0).unwrap()).unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&out.values), bits(&e.values));
    }
}
