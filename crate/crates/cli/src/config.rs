//! Layering of a JSON config file under command-line flags.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

/// Starts from the config file's object (if any), overwrites every key whose
/// flag was given, and deserializes the result. Unknown keys are an error.
pub fn resolve<T: Serialize + DeserializeOwned>(file: Option<&Path>, flags: &T) -> Result<T> {
    let mut merged = match file {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            let v: Value = serde_json::from_str(&text)
                .with_context(|| format!("parsing config {}", path.display()))?;
            if !v.is_object() {
                bail!("config {} is not a JSON object", path.display());
            }
            v
        }
        None => Value::Object(Default::default()),
    };
    if let Value::Object(given) = serde_json::to_value(flags)? {
        for (k, v) in given {
            if !v.is_null() {
                merged[k] = v;
            }
        }
    }
    serde_json::from_value(merged).context("invalid configuration")
}
