//! "DVEC" binary container shared by embeddings, feature matrices, model
//! checkpoints and translation deltas.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic "DVEC" | u32 version | u32 stream tag | u32 n_dims | u32 dims[n_dims]
//! | u64 count | count * prod(dims) f64 payload
//! | u64 metadata offset | metadata: UTF-8 JSON lines
//! ```
//!
//! The first metadata line is the container header,
//! `{"lines": <n>, "provenance": <run config or null>}`; the remaining `n`
//! lines are stream-specific.

use std::io::Write;
use std::path::Path;

use serde_json::Value;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"DVEC";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u32)]
pub enum StreamTag {
    Embedding = 1,
    Feature = 2,
    Model = 3,
    Delta = 4,
}

impl StreamTag {
    fn from_u32(v: u32) -> Option<Self> {
        match v {
            1 => Some(Self::Embedding),
            2 => Some(Self::Feature),
            3 => Some(Self::Model),
            4 => Some(Self::Delta),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub tag: StreamTag,
    pub dims: Vec<u32>,
    pub count: u64,
    pub payload: Vec<f64>,
    pub provenance: Value,
    pub lines: Vec<Value>,
}

impl Container {
    pub fn row_len(&self) -> usize {
        self.dims.iter().map(|&d| d as usize).product()
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        if self.payload.len() as u64 != self.count * self.row_len() as u64 {
            return Err(Error::InvalidInput(format!(
                "payload has {} values, header declares {} x {}",
                self.payload.len(),
                self.count,
                self.row_len()
            )));
        }
        let mut out = Vec::with_capacity(32 + self.payload.len() * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.tag as u32).to_le_bytes());
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for d in &self.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        out.extend_from_slice(&self.count.to_le_bytes());
        for v in &self.payload {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let meta_offset = out.len() as u64 + 8;
        out.extend_from_slice(&meta_offset.to_le_bytes());
        let head = serde_json::json!({"lines": self.lines.len(), "provenance": self.provenance});
        for line in std::iter::once(&head).chain(&self.lines) {
            serde_json::to_writer(&mut out, line)?;
            out.push(b'\n');
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, at: 0 };
        let unsupported = |m: &str| Error::UnsupportedContainer(m.to_string());
        if r.take(4).map_err(|_| unsupported("truncated header"))? != MAGIC {
            return Err(unsupported("bad magic"));
        }
        let version = r.u32().map_err(|_| unsupported("truncated header"))?;
        if version != VERSION {
            return Err(Error::UnsupportedContainer(format!("version {version}")));
        }
        let tag_raw = r.u32().map_err(|_| unsupported("truncated header"))?;
        let tag = StreamTag::from_u32(tag_raw)
            .ok_or_else(|| Error::UnsupportedContainer(format!("stream tag {tag_raw}")))?;
        let n_dims = r.u32().map_err(|_| unsupported("truncated header"))? as usize;
        if n_dims > 8 {
            return Err(Error::UnsupportedContainer(format!("{n_dims} dimensions")));
        }
        let dims = (0..n_dims)
            .map(|_| r.u32())
            .collect::<Result<Vec<_>>>()
            .map_err(|_| unsupported("truncated header"))?;
        let count = r.u64().map_err(|_| unsupported("truncated header"))?;

        let row: u64 = dims.iter().map(|&d| d as u64).product();
        let n_values = count
            .checked_mul(row)
            .filter(|n| {
                n.checked_mul(8)
                    .is_some_and(|b| b <= (bytes.len() - r.at) as u64)
            })
            .ok_or_else(|| Error::CorruptPayload("payload shorter than declared".into()))?
            as usize;
        let payload = r
            .take(n_values * 8)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let meta_offset = r.u64()?;
        if meta_offset != r.at as u64 {
            return Err(Error::CorruptPayload(format!(
                "metadata offset {meta_offset} does not match position {}",
                r.at
            )));
        }
        let text = std::str::from_utf8(&bytes[r.at..])
            .map_err(|_| Error::CorruptPayload("metadata is not UTF-8".into()))?;
        let mut values = text
            .lines()
            .map(serde_json::from_str::<Value>)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::CorruptPayload(format!("metadata: {e}")))?;
        if values.is_empty() || !text.ends_with('\n') {
            return Err(Error::CorruptPayload("metadata block truncated".into()));
        }
        let mut head = values.remove(0);
        let declared = head.get("lines").and_then(Value::as_u64);
        if declared != Some(values.len() as u64) {
            return Err(Error::CorruptPayload(format!(
                "metadata declares {declared:?} lines, found {}",
                values.len()
            )));
        }
        let provenance = head
            .get_mut("provenance")
            .map(Value::take)
            .unwrap_or(Value::Null);
        Ok(Self {
            tag,
            dims,
            count,
            payload,
            provenance,
            lines: values,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), &self.encode()?)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }

    pub fn expect_tag(&self, tag: StreamTag) -> Result<()> {
        if self.tag != tag {
            return Err(Error::UnsupportedContainer(format!(
                "expected {tag:?} stream, found {:?}",
                self.tag
            )));
        }
        Ok(())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .at
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::CorruptPayload("unexpected end of file".into()))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}
