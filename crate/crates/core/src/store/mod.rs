//! Utterance metadata, embeddings and feature matrices on disk.
//!
//! Manifests are JSON lines, one [`UtteranceRecord`] per line; blank lines
//! and lines starting with `#` are skipped. Tensors go into the DVEC
//! [`container`].

pub mod container;
mod profiles;

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::embedding::Embedding;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use container::{write_atomic, Container, StreamTag};

pub use profiles::{build_profiles, LanguageCluster, SpeakerProfile};

/// The seven-speaker English/Spanish voice table: one row per voice, the
/// bilingual reference speaker appearing once per language.
pub const TABLE1_MANIFEST: &str = include_str!("../../fixtures/table1.jsonl");

#[derive(Debug, Clone, PartialEq)]
pub struct UtteranceRecord {
    pub utterance_id: String,
    pub speaker_id: String,
    pub language: String,
    pub locale: String,
    pub n_words: u32,
    pub gender: Option<String>,
    pub embedding: Option<Embedding>,
    pub source: Option<String>,
}

/// Wire form of a record: the embedding is a bare number array.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordLine {
    utterance_id: String,
    speaker_id: String,
    language: String,
    #[serde(default)]
    locale: String,
    n_words: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gender: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    embedding: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    normalized: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source: Option<String>,
}

impl UtteranceRecord {
    pub fn new(
        utterance_id: impl Into<String>,
        speaker_id: impl Into<String>,
        language: impl Into<String>,
        locale: impl Into<String>,
        n_words: u32,
    ) -> Self {
        Self {
            utterance_id: utterance_id.into(),
            speaker_id: speaker_id.into(),
            language: language.into(),
            locale: locale.into(),
            n_words,
            gender: None,
            embedding: None,
            source: None,
        }
    }

    pub fn with_embedding(mut self, e: Embedding) -> Self {
        self.embedding = Some(e);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(format!("{}: {m}", self.utterance_id)));
        if self.utterance_id.is_empty() {
            return Err(Error::InvalidInput("empty utterance_id".into()));
        }
        if self.speaker_id.is_empty() {
            return bad("empty speaker_id");
        }
        if self.language.is_empty() {
            return bad("empty language");
        }
        if self.n_words == 0 {
            return bad("n_words must be at least 1");
        }
        if let Some(e) = &self.embedding {
            if e.values.iter().any(|v| !v.is_finite()) {
                return bad("non-finite embedding");
            }
        }
        Ok(())
    }

    fn to_line(&self, with_embedding: bool) -> RecordLine {
        let emb = self.embedding.as_ref().filter(|_| with_embedding);
        RecordLine {
            utterance_id: self.utterance_id.clone(),
            speaker_id: self.speaker_id.clone(),
            language: self.language.clone(),
            locale: self.locale.clone(),
            n_words: self.n_words,
            gender: self.gender.clone(),
            embedding: emb.map(|e| e.values.clone()),
            normalized: emb.is_some_and(|e| e.normalized),
            source: self.source.clone(),
        }
    }

    fn from_line(l: RecordLine) -> Self {
        Self {
            utterance_id: l.utterance_id,
            speaker_id: l.speaker_id,
            language: l.language,
            locale: l.locale,
            n_words: l.n_words,
            gender: l.gender,
            embedding: l.embedding.map(|values| Embedding {
                values,
                normalized: l.normalized,
            }),
            source: l.source,
        }
    }

    /// Manifest line (JSON object) for this record.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_line(true))?)
    }
}

/// Records with unique utterance ids, plus the run provenance they came from.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Store {
    records: Vec<UtteranceRecord>,
    ids: HashSet<String>,
    pub provenance: Value,
}

impl Store {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_records(records: impl IntoIterator<Item = UtteranceRecord>) -> Result<Self> {
        let mut s = Self::new();
        for r in records {
            s.push(r)?;
        }
        Ok(s)
    }

    pub fn push(&mut self, record: UtteranceRecord) -> Result<()> {
        record.validate()?;
        if !self.ids.insert(record.utterance_id.clone()) {
            return Err(Error::DuplicateId(record.utterance_id));
        }
        self.records.push(record);
        Ok(())
    }

    pub fn records(&self) -> &[UtteranceRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<UtteranceRecord> {
        self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, utterance_id: &str) -> Option<&UtteranceRecord> {
        self.records.iter().find(|r| r.utterance_id == utterance_id)
    }

    /// Distinct speaker ids, sorted.
    pub fn speakers(&self) -> Vec<String> {
        let mut s: Vec<String> = self.records.iter().map(|r| r.speaker_id.clone()).collect();
        s.sort();
        s.dedup();
        s
    }

    /// Distinct languages, sorted.
    pub fn languages(&self) -> Vec<String> {
        let mut s: Vec<String> = self.records.iter().map(|r| r.language.clone()).collect();
        s.sort();
        s.dedup();
        s
    }

    /// Sub-store of records passing `keep`, provenance preserved.
    pub fn filter(&self, mut keep: impl FnMut(&UtteranceRecord) -> bool) -> Store {
        let records: Vec<_> = self.records.iter().filter(|r| keep(r)).cloned().collect();
        Store {
            ids: records.iter().map(|r| r.utterance_id.clone()).collect(),
            records,
            provenance: self.provenance.clone(),
        }
    }

    pub fn embedding_dim(&self) -> Option<usize> {
        self.records
            .iter()
            .find_map(|r| r.embedding.as_ref().map(Embedding::dim))
    }

    pub fn parse_manifest(text: &str) -> Result<Self> {
        let mut store = Self::new();
        for (i, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let line_no = i + 1;
            let parsed: RecordLine =
                serde_json::from_str(trimmed).map_err(|e| Error::Manifest {
                    line: line_no,
                    message: e.to_string(),
                })?;
            match store.push(UtteranceRecord::from_line(parsed)) {
                Err(Error::InvalidInput(message)) => {
                    return Err(Error::Manifest {
                        line: line_no,
                        message,
                    })
                }
                other => other?,
            }
        }
        Ok(store)
    }

    /// Serializes records as manifest lines, preceded by a `#` comment holding
    /// the provenance when there is one.
    pub fn to_manifest(&self, with_embeddings: bool) -> Result<String> {
        let mut out = String::new();
        if !self.provenance.is_null() {
            writeln!(out, "# {}", serde_json::to_string(&self.provenance)?).expect("string write");
        }
        for r in &self.records {
            out.push_str(&serde_json::to_string(&r.to_line(with_embeddings))?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn write_manifest(&self, path: impl AsRef<Path>, with_embeddings: bool) -> Result<()> {
        write_atomic(path.as_ref(), self.to_manifest(with_embeddings)?.as_bytes())
    }

    /// Writes a plotting CSV: metadata columns then `e0..e{dim-1}`.
    pub fn export_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let dim = self.embedding_dim().unwrap_or(0);
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<String> = [
            "utterance_id",
            "speaker_id",
            "language",
            "locale",
            "n_words",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        header.extend((0..dim).map(|i| format!("e{i}")));
        w.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![
                r.utterance_id.clone(),
                r.speaker_id.clone(),
                r.language.clone(),
                r.locale.clone(),
                r.n_words.to_string(),
            ];
            match &r.embedding {
                Some(e) => row.extend(e.values.iter().map(|v| v.to_string())),
                None => row.extend(std::iter::repeat_n(String::new(), dim)),
            }
            w.write_record(&row)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::InvalidInput(format!("csv buffer: {e}")))?;
        write_atomic(path.as_ref(), &with_comment(&self.provenance, bytes))
    }

    fn to_container(&self) -> Result<Container> {
        let dim = self.embedding_dim().unwrap_or(0);
        let mut payload = Vec::new();
        let mut lines = Vec::with_capacity(self.records.len());
        let mut row = 0u64;
        for r in &self.records {
            let mut line = serde_json::to_value(r.to_line(false))?;
            if let Some(e) = &r.embedding {
                crate::embedding::check_dim(dim, e.dim())?;
                payload.extend_from_slice(&e.values);
                line["row"] = json!(row);
                line["normalized"] = json!(e.normalized);
                row += 1;
            }
            lines.push(line);
        }
        Ok(Container {
            tag: StreamTag::Embedding,
            dims: vec![dim as u32],
            count: row,
            payload,
            provenance: self.provenance.clone(),
            lines,
        })
    }

    fn from_container(c: Container) -> Result<Self> {
        c.expect_tag(StreamTag::Embedding)?;
        let dim = c.row_len();
        let mut store = Store {
            provenance: c.provenance,
            ..Default::default()
        };
        let mut next_row = 0u64;
        for (i, mut line) in c.lines.into_iter().enumerate() {
            let row = line
                .as_object_mut()
                .and_then(|o| o.remove("row"))
                .map(|v| v.as_u64().ok_or(()))
                .transpose()
                .map_err(|_| Error::CorruptPayload(format!("record {i}: bad row index")))?;
            let mut parsed: RecordLine = serde_json::from_value(line)
                .map_err(|e| Error::CorruptPayload(format!("record {i}: {e}")))?;
            if let Some(r) = row {
                if r != next_row || r >= c.count {
                    return Err(Error::CorruptPayload(format!(
                        "record {i}: row {r} out of order"
                    )));
                }
                let start = r as usize * dim;
                parsed.embedding = Some(c.payload[start..start + dim].to_vec());
                next_row += 1;
            }
            store
                .push(UtteranceRecord::from_line(parsed))
                .map_err(|e| Error::CorruptPayload(e.to_string()))?;
        }
        if next_row != c.count {
            return Err(Error::CorruptPayload(format!(
                "{} embedding rows, {next_row} referenced",
                c.count
            )));
        }
        Ok(store)
    }
}

/// Prefixes CSV bytes with a `# <provenance>` comment line when provenance is set.
pub(crate) fn with_comment(provenance: &Value, csv: Vec<u8>) -> Vec<u8> {
    if provenance.is_null() {
        return csv;
    }
    let mut out = format!("# {provenance}\n").into_bytes();
    out.extend(csv);
    out
}

pub fn ingest_manifest(path: impl AsRef<Path>) -> Result<Store> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Store::parse_manifest(&text)
}

pub fn save_embeddings(store: &Store, path: impl AsRef<Path>) -> Result<()> {
    store.to_container()?.write(path)
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<Store> {
    Store::from_container(Container::read(path)?)
}

pub fn encode_embeddings(store: &Store) -> Result<Vec<u8>> {
    store.to_container()?.encode()
}

pub fn decode_embeddings(bytes: &[u8]) -> Result<Store> {
    Store::from_container(Container::decode(bytes)?)
}

/// Feature matrices with their utterance metadata, one container per set.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub items: Vec<(UtteranceRecord, FeatureMatrix)>,
    pub provenance: Value,
}

pub fn save_features(set: &FeatureSet, path: impl AsRef<Path>) -> Result<()> {
    let width = set.items.first().map_or(0, |(_, f)| f.n_coeffs);
    let mut payload = Vec::new();
    let mut lines = Vec::new();
    let mut rows = 0u64;
    for (rec, f) in &set.items {
        crate::embedding::check_dim(width, f.n_coeffs)?;
        payload.extend_from_slice(&f.data);
        rows += f.n_frames as u64;
        lines.push(json!({
            "record": serde_json::to_value(rec.to_line(false))?,
            "n_frames": f.n_frames,
            "frame_rate": f.frame_rate,
        }));
    }
    Container {
        tag: StreamTag::Feature,
        dims: vec![width as u32],
        count: rows,
        payload,
        provenance: set.provenance.clone(),
        lines,
    }
    .write(path)
}

pub fn load_features(path: impl AsRef<Path>) -> Result<FeatureSet> {
    let c = Container::read(path)?;
    c.expect_tag(StreamTag::Feature)?;
    let width = c.row_len();
    let mut at = 0usize;
    let mut items = Vec::with_capacity(c.lines.len());
    let mut ids = HashSet::new();
    for (i, line) in c.lines.iter().enumerate() {
        let corrupt = |m: String| Error::CorruptPayload(format!("matrix {i}: {m}"));
        let record: RecordLine =
            serde_json::from_value(line["record"].clone()).map_err(|e| corrupt(e.to_string()))?;
        let n_frames = line["n_frames"]
            .as_u64()
            .ok_or_else(|| corrupt("missing n_frames".into()))? as usize;
        let frame_rate = line["frame_rate"]
            .as_f64()
            .ok_or_else(|| corrupt("missing frame_rate".into()))?;
        let end = at + n_frames * width;
        if end > c.payload.len() {
            return Err(corrupt("frames exceed payload".into()));
        }
        let f = FeatureMatrix::new(c.payload[at..end].to_vec(), n_frames, width, frame_rate)
            .map_err(|e| corrupt(e.to_string()))?;
        at = end;
        let record = UtteranceRecord::from_line(record);
        if !ids.insert(record.utterance_id.clone()) {
            return Err(Error::DuplicateId(record.utterance_id));
        }
        items.push((record, f));
    }
    if at != c.payload.len() {
        return Err(Error::CorruptPayload("unreferenced feature frames".into()));
    }
    Ok(FeatureSet {
        items,
        provenance: c.provenance,
    })
}
