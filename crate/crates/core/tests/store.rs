use proptest::prelude::*;
use serde_json::json;
use xlvoice::embedding::Embedding;
use xlvoice::features::FeatureMatrix;
use xlvoice::oracle::{gen_space, LanguageSlot, OracleSpeaker, SpaceSpec};
use xlvoice::store::{
    build_profiles, decode_embeddings, encode_embeddings, ingest_manifest, load_embeddings,
    load_features, save_embeddings, save_features, FeatureSet, Store, UtteranceRecord,
    TABLE1_MANIFEST,
};
use xlvoice::Error;

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

fn small_oracle() -> Store {
    let spec = SpaceSpec {
        dim: 16,
        speakers: vec![
            OracleSpeaker {
                speaker_id: "ref".into(),
                gender: Some("M".into()),
                languages: vec![
                    LanguageSlot {
                        language: "en".into(),
                        locale: "US".into(),
                        utterances: 30,
                    },
                    LanguageSlot {
                        language: "es".into(),
                        locale: "MX".into(),
                        utterances: 30,
                    },
                ],
            },
            OracleSpeaker {
                speaker_id: "spk1".into(),
                gender: None,
                languages: vec![LanguageSlot {
                    language: "en".into(),
                    locale: "AU".into(),
                    utterances: 10,
                }],
            },
        ],
        ..Default::default()
    };
    gen_space(&spec).unwrap().0
}

#[test]
fn voice_table_fixture_parses() {
    let s = Store::parse_manifest(TABLE1_MANIFEST).unwrap();
    assert_eq!(s.len(), 8);
    assert_eq!(s.speakers().len(), 7);
    assert_eq!(s.languages(), vec!["en".to_string(), "es".to_string()]);
    let refs: Vec<_> = s
        .records()
        .iter()
        .filter(|r| r.speaker_id == "ref")
        .collect();
    assert_eq!(refs.len(), 2);
}

#[test]
fn dvec_roundtrip_is_bit_exact() {
    let s = small_oracle();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e.dvec");
    save_embeddings(&s, &path).unwrap();
    let back = load_embeddings(&path).unwrap();
    assert_eq!(back.provenance, s.provenance);
    for (a, b) in s.records().iter().zip(back.records()) {
        assert_eq!(a.utterance_id, b.utterance_id);
        assert_eq!(
            bits(&a.embedding.as_ref().unwrap().values),
            bits(&b.embedding.as_ref().unwrap().values)
        );
    }
    let again = encode_embeddings(&back).unwrap();
    assert_eq!(again, std::fs::read(&path).unwrap());
}

#[test]
fn manifest_roundtrip_is_bit_exact() {
    let s = small_oracle();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.jsonl");
    s.write_manifest(&path, true).unwrap();
    let back = ingest_manifest(&path).unwrap();
    for (a, b) in s.records().iter().zip(back.records()) {
        assert_eq!(a, b);
    }
}

#[test]
fn truncated_files_fail_loudly() {
    let bytes = encode_embeddings(&small_oracle()).unwrap();
    for cut in [3, 20, bytes.len() / 2, bytes.len() - 1] {
        match decode_embeddings(&bytes[..cut]) {
            Err(Error::UnsupportedContainer(_)) | Err(Error::CorruptPayload(_)) => {}
            other => panic!("cut {cut}: {other:?}"),
        }
    }
}

#[test]
fn manifest_errors_carry_line_numbers() {
    let text = "{\"utterance_id\":\"a\",\"speaker_id\":\"s\",\"language\":\"en\",\"n_words\":3}\n\n{\"utterance_id\":\"b\"}\n";
    match Store::parse_manifest(text) {
        Err(Error::Manifest { line, .. }) => assert_eq!(line, 3),
        other => panic!("{other:?}"),
    }
    let dup = "{\"utterance_id\":\"a\",\"speaker_id\":\"s\",\"language\":\"en\",\"n_words\":3}\n"
        .repeat(2);
    assert!(matches!(
        Store::parse_manifest(&dup),
        Err(Error::DuplicateId(_))
    ));
}

#[test]
fn features_roundtrip() {
    let rec = |id: &str| UtteranceRecord::new(id, "s", "en", "US", 4);
    let set = FeatureSet {
        items: vec![
            (
                rec("a"),
                FeatureMatrix::new(vec![0.5, -1.0, 2.0, 1e-300, 7.0, 8.0], 3, 2, 100.0).unwrap(),
            ),
            (
                rec("b"),
                FeatureMatrix::new(vec![1.0, 2.0], 1, 2, 100.0).unwrap(),
            ),
        ],
        provenance: json!({"seed": 3}),
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.dvec");
    save_features(&set, &path).unwrap();
    let back = load_features(&path).unwrap();
    assert_eq!(back, set);
    assert!(matches!(
        load_embeddings(&path),
        Err(Error::UnsupportedContainer(_))
    ));
}

#[test]
fn csv_export_has_header_and_columns() {
    let s = small_oracle();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e.csv");
    s.export_csv(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# "));
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header.len(), 5 + 16);
    assert_eq!(header[5], "e0");
    assert_eq!(lines.count(), s.len());
}

#[test]
fn profile_counts_sum_to_records() {
    let s = small_oracle();
    let p = build_profiles(&s).unwrap();
    let total: usize = p.iter().flat_map(|p| &p.entries).map(|e| e.count).sum();
    assert_eq!(total, s.len());
}

proptest! {
    #[test]
    fn arbitrary_embeddings_roundtrip(rows in prop::collection::vec(prop::collection::vec(-1e6f64..1e6, 4), 0..20)) {
        let store = Store::from_records(rows.iter().enumerate().map(|(i, v)| {
            UtteranceRecord::new(format!("u{i}"), "s", "en", "US", 3)
                .with_embedding(Embedding::new(v.clone()).unwrap())
        }))
        .unwrap();
        let back = decode_embeddings(&encode_embeddings(&store).unwrap()).unwrap();
        prop_assert_eq!(back.records(), store.records());
    }
}
