//! Versioned binary archive: a JSON header followed by raw little-endian
//! `f64` tensors.
//!
//! Layout: `MNAVCKPT`, format version (u32), header length (u64), header
//! JSON, then each tensor's values in header order.

use serde::{Deserialize, Serialize};
use std::io::{self, Read, Write};

const MAGIC: &[u8; 8] = b"MNAVCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ArchiveError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a checkpoint file")]
    BadMagic,
    #[error("unsupported checkpoint format version {0}")]
    Version(u32),
    #[error("malformed checkpoint header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("missing tensor '{0}'")]
    MissingTensor(String),
    #[error("checkpoint field '{0}' is invalid: {1}")]
    Field(String, String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    meta: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Archive {
    pub meta: serde_json::Value,
    pub tensors: Vec<(String, Vec<f64>)>,
}

impl Archive {
    pub fn new(meta: serde_json::Value) -> Self {
        Self { meta, tensors: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, values: Vec<f64>) {
        self.tensors.push((name.into(), values));
    }

    pub fn tensor(&self, name: &str) -> Result<&[f64], ArchiveError> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
            .ok_or_else(|| ArchiveError::MissingTensor(name.to_string()))
    }

    pub fn meta_field<T: serde::de::DeserializeOwned>(&self, key: &str) -> Result<T, ArchiveError> {
        let v = self.meta.get(key).ok_or_else(|| ArchiveError::Field(key.into(), "missing".into()))?;
        serde_json::from_value(v.clone()).map_err(|e| ArchiveError::Field(key.into(), e.to_string()))
    }

    pub fn write<W: Write>(&self, out: &mut W) -> Result<(), ArchiveError> {
        let header = Header {
            meta: self.meta.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|(n, v)| TensorEntry {
                    name: n.clone(),
                    len: v.len(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header)?;
        out.write_all(MAGIC)?;
        out.write_all(&FORMAT_VERSION.to_le_bytes())?;
        out.write_all(&(json.len() as u64).to_le_bytes())?;
        out.write_all(&json)?;
        for (_, values) in &self.tensors {
            let mut buf = Vec::with_capacity(values.len() * 8);
            for v in values {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            out.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read<R: Read>(input: &mut R) -> Result<Self, ArchiveError> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(ArchiveError::BadMagic);
        }
        let mut word = [0u8; 4];
        input.read_exact(&mut word)?;
        let version = u32::from_le_bytes(word);
        if version != FORMAT_VERSION {
            return Err(ArchiveError::Version(version));
        }
        let mut len = [0u8; 8];
        input.read_exact(&mut len)?;
        let mut json = vec![0u8; u64::from_le_bytes(len) as usize];
        input.read_exact(&mut json)?;
        let header: Header = serde_json::from_slice(&json)?;
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for entry in header.tensors {
            let mut raw = vec![0u8; entry.len * 8];
            input.read_exact(&mut raw)?;
            let values = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            tensors.push((entry.name, values));
        }
        Ok(Self {
            meta: header.meta,
            tensors,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_exact() {
        let mut a = Archive::new(serde_json::json!({"steps": 3, "hash": "ab"}));
        a.push("w", vec![0.1, -2.5e-300, f64::MAX, 0.0]);
        a.push("empty", vec![]);
        let mut buf = Vec::new();
        a.write(&mut buf).unwrap();
        let b = Archive::read(&mut buf.as_slice()).unwrap();
        assert_eq!(a, b);
        assert_eq!(b.meta_field::<u64>("steps").unwrap(), 3);
    }

    #[test]
    fn rejects_foreign_files() {
        let mut data: &[u8] = b"PK\x03\x04 not a checkpoint";
        assert!(matches!(Archive::read(&mut data), Err(ArchiveError::BadMagic)));
    }
}
