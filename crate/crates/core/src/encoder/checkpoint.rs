use std::path::Path;

use serde_json::{json, Value};

use super::{EncoderConfig, EncoderModel, TensorInfo};
use crate::error::{Error, Result};
use crate::store::container::{Container, StreamTag};

/// Writes a model checkpoint: the flat parameter vector as the payload, the
/// config on the first metadata line and one line per named tensor.
pub fn save_model(path: impl AsRef<Path>, model: &EncoderModel, provenance: Value) -> Result<()> {
    to_container(model, provenance)?.write(path)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<EncoderModel> {
    from_container(&Container::read(path)?)
}

pub(crate) fn to_container(model: &EncoderModel, provenance: Value) -> Result<Container> {
    let mut lines = vec![json!({ "config": serde_json::to_value(model.config())? })];
    for t in model.tensors() {
        lines.push(serde_json::to_value(&t)?);
    }
    Ok(Container {
        tag: StreamTag::Model,
        dims: vec![1],
        count: model.n_params() as u64,
        payload: model.params().to_vec(),
        provenance,
        lines,
    })
}

pub(crate) fn from_container(c: &Container) -> Result<EncoderModel> {
    c.expect_tag(StreamTag::Model)?;
    let config_value = c
        .lines
        .first()
        .and_then(|l| l.get("config"))
        .ok_or_else(|| Error::CorruptPayload("model checkpoint lacks config".into()))?;
    let config: EncoderConfig = serde_json::from_value(config_value.clone())
        .map_err(|e| Error::CorruptPayload(format!("model config: {e}")))?;
    let model = EncoderModel::from_parts(config, c.payload.clone())
        .map_err(|e| Error::CorruptPayload(e.to_string()))?;
    let stored: Vec<TensorInfo> = c.lines[1..]
        .iter()
        .map(|l| serde_json::from_value(l.clone()))
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::CorruptPayload(format!("tensor table: {e}")))?;
    if stored != model.tensors() {
        return Err(Error::CorruptPayload(
            "tensor table does not match config".into(),
        ));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_roundtrip() {
        let cfg = EncoderConfig {
            input_dim: 5,
            n_recurrent_layers: 2,
            recurrent_units: 6,
            embedding_dim: 4,
            n_speakers: 3,
            seed: 9,
            ..Default::default()
        };
        let m = EncoderModel::new(cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.dvec");
        save_model(&p, &m, json!({"seed": 9})).unwrap();
        let back = load_model(&p).unwrap();
        assert_eq!(back, m);
        let bytes = std::fs::read(&p).unwrap();
        assert!(load_model_bytes(&bytes[..bytes.len() - 3]).is_err());
    }

    fn load_model_bytes(b: &[u8]) -> Result<EncoderModel> {
        from_container(&Container::decode(b)?)
    }
}
