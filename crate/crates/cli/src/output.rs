//! Output writers. Every artifact carries a `run` record: tool version,
//! subcommand and the fully resolved configuration (seed included).

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::{json, Map, Value};
use xlvoice::analysis::LdaModel;
use xlvoice::store::container::write_atomic;
use xlvoice::store::{load_embeddings, Store};

pub struct Run {
    pub command: &'static str,
    pub config: Value,
}

impl Run {
    pub fn new(command: &'static str, config: &impl Serialize) -> Result<Self> {
        Ok(Self {
            command,
            config: serde_json::to_value(config)?,
        })
    }

    pub fn provenance(&self) -> Value {
        json!({
            "tool": "xlvoice",
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command,
            "config": self.config,
        })
    }

    /// Pretty JSON object with a leading `run` key merged into `body`.
    pub fn write_json(&self, path: &Path, body: Value) -> Result<()> {
        let mut obj = Map::new();
        obj.insert("run".into(), self.provenance());
        match body {
            Value::Object(m) => obj.extend(m),
            other => {
                obj.insert("result".into(), other);
            }
        }
        let mut text = serde_json::to_string_pretty(&Value::Object(obj))?;
        text.push('\n');
        write_atomic(path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))
    }

    /// CSV preceded by a `#` comment line holding the run record.
    pub fn write_csv<R>(&self, path: &Path, header: &[String], rows: R) -> Result<()>
    where
        R: IntoIterator<Item = Vec<String>>,
    {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for row in rows {
            w.write_record(&row)?;
        }
        let mut bytes = format!("# {}\n", serde_json::to_string(&self.provenance())?).into_bytes();
        bytes.extend(w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?);
        write_atomic(path, &bytes).with_context(|| format!("writing {}", path.display()))
    }
}

pub fn num(x: f64) -> String {
    x.to_string()
}

pub fn req<T: Clone>(v: &Option<T>, flag: &str) -> Result<T> {
    match v {
        Some(v) => Ok(v.clone()),
        None => bail!("missing required --{flag}"),
    }
}

pub fn load_store(path: &Path) -> Result<Store> {
    load_embeddings(path).with_context(|| format!("loading {}", path.display()))
}

/// Reads the `model` field of a JSON file written by `lda`.
pub fn load_lda(path: &Path) -> Result<LdaModel> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let v: Value = serde_json::from_str(&text)?;
    serde_json::from_value(v["model"].clone())
        .with_context(|| format!("{} holds no LDA model", path.display()))
}

/// Refuses to let an output overwrite one of the inputs.
pub fn guard(outputs: &[&Path], inputs: &[&Path]) -> Result<()> {
    let canon = |p: &Path| -> Option<PathBuf> {
        let parent = p.parent().filter(|q| !q.as_os_str().is_empty());
        let dir = parent.unwrap_or(Path::new(".")).canonicalize().ok()?;
        Some(dir.join(p.file_name()?))
    };
    for o in outputs {
        for i in inputs {
            if canon(o).is_some() && canon(o) == canon(i) {
                bail!("output {} would overwrite an input", o.display());
            }
        }
    }
    Ok(())
}

pub fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}
