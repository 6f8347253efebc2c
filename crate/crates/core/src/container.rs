//! Binary tensor container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        4 bytes   ("HSTR" for traces, "HSMM" for model artifacts)
//! version      u32
//! header_len   u64
//! header       header_len bytes of JSON
//! payload      concatenated row-major tensors
//! ```
//!
//! The header lists every tensor with its element type, shape and byte offset
//! (relative to the start of the payload) plus the declared payload length,
//! and carries a free-form `attributes` document for the owner of the file.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

pub const CONTAINER_VERSION: u32 = 1;
const PREAMBLE_LEN: usize = 4 + 4 + 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F32,
    F64,
}

impl DType {
    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl TensorData {
    pub fn dtype(&self) -> DType {
        match self {
            TensorData::F32(_) => DType::F32,
            TensorData::F64(_) => DType::F64,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn write_le(&self, out: &mut Vec<u8>) {
        match self {
            TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
    }

    fn read_le(dtype: DType, bytes: &[u8]) -> Self {
        match dtype {
            DType::F32 => TensorData::F32(
                bytes
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            DType::F64 => TensorData::F64(
                bytes
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: TensorData,
}

impl NamedTensor {
    pub fn f32(name: impl Into<String>, shape: Vec<usize>, data: Vec<f32>) -> Self {
        Self {
            name: name.into(),
            shape,
            data: TensorData::F32(data),
        }
    }

    pub fn f64(name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            shape,
            data: TensorData::F64(data),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub dtype: DType,
    pub shape: Vec<usize>,
    pub offset: u64,
    pub length: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    attributes: Value,
    payload_length: u64,
    tensors: Vec<TensorEntry>,
}

/// In-memory form of one container file.
#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub magic: [u8; 4],
    pub attributes: Value,
    pub tensors: Vec<NamedTensor>,
}

impl Container {
    pub fn new(magic: [u8; 4], attributes: Value) -> Self {
        Self {
            magic,
            attributes,
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, tensor: NamedTensor) {
        self.tensors.push(tensor);
    }

    pub fn tensor(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut entries = Vec::with_capacity(self.tensors.len());
        let mut offset = 0u64;
        for t in &self.tensors {
            let numel: usize = t.shape.iter().product();
            if numel != t.data.len() {
                return Err(Error::Shape(format!(
                    "tensor {} declares shape {:?} but holds {} elements",
                    t.name,
                    t.shape,
                    t.data.len()
                )));
            }
            let length = (numel * t.data.dtype().size()) as u64;
            entries.push(TensorEntry {
                name: t.name.clone(),
                dtype: t.data.dtype(),
                shape: t.shape.clone(),
                offset,
                length,
            });
            offset += length;
        }
        let header = Header {
            attributes: self.attributes.clone(),
            payload_length: offset,
            tensors: entries,
        };
        let header_bytes = serde_json::to_vec(&header)?;

        let mut out = Vec::with_capacity(PREAMBLE_LEN + header_bytes.len() + offset as usize);
        out.extend_from_slice(&self.magic);
        out.extend_from_slice(&CONTAINER_VERSION.to_le_bytes());
        out.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
        out.extend_from_slice(&header_bytes);
        for t in &self.tensors {
            t.data.write_le(&mut out);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], expected_magic: [u8; 4]) -> Result<Self> {
        if bytes.len() < 4 {
            return Err(Error::Truncated(format!("{} bytes, no magic", bytes.len())));
        }
        let magic: [u8; 4] = bytes[..4].try_into().unwrap();
        if magic != expected_magic {
            return Err(Error::BadMagic {
                expected: expected_magic,
                found: magic,
            });
        }
        if bytes.len() < PREAMBLE_LEN {
            return Err(Error::Truncated("preamble shorter than 16 bytes".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != CONTAINER_VERSION {
            return Err(Error::VersionMismatch {
                expected: CONTAINER_VERSION,
                found: version,
            });
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
        let header_end = (PREAMBLE_LEN as u64)
            .checked_add(header_len)
            .filter(|&end| end <= bytes.len() as u64)
            .ok_or_else(|| {
                Error::Truncated(format!(
                    "header declares {header_len} bytes, file has {}",
                    bytes.len() - PREAMBLE_LEN
                ))
            })? as usize;
        let header: Header = serde_json::from_slice(&bytes[PREAMBLE_LEN..header_end])
            .map_err(|e| Error::Header(e.to_string()))?;

        let payload = &bytes[header_end..];
        if (payload.len() as u64) < header.payload_length {
            return Err(Error::Truncated(format!(
                "header declares {} payload bytes, file has {}",
                header.payload_length,
                payload.len()
            )));
        }
        if (payload.len() as u64) > header.payload_length {
            return Err(Error::Layout(format!(
                "{} trailing bytes after declared payload",
                payload.len() as u64 - header.payload_length
            )));
        }

        let mut cursor = 0u64;
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for entry in header.tensors {
            if entry.offset < cursor {
                return Err(Error::Layout(format!(
                    "tensor {} at offset {} overlaps or precedes the previous tensor (ends at {cursor})",
                    entry.name, entry.offset
                )));
            }
            let numel: u64 = entry.shape.iter().map(|&d| d as u64).product();
            if numel * entry.dtype.size() as u64 != entry.length {
                return Err(Error::Layout(format!(
                    "tensor {} shape {:?} needs {} bytes, header declares {}",
                    entry.name,
                    entry.shape,
                    numel * entry.dtype.size() as u64,
                    entry.length
                )));
            }
            let end = entry.offset + entry.length;
            if end > header.payload_length {
                return Err(Error::Layout(format!(
                    "tensor {} ends at {end}, beyond payload length {}",
                    entry.name, header.payload_length
                )));
            }
            let data = TensorData::read_le(entry.dtype, &payload[entry.offset as usize..end as usize]);
            tensors.push(NamedTensor {
                name: entry.name,
                shape: entry.shape,
                data,
            });
            cursor = end;
        }

        Ok(Container {
            magic,
            attributes: header.attributes,
            tensors,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path, expected_magic: [u8; 4]) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, expected_magic)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MAGIC: [u8; 4] = *b"TEST";

    fn sample() -> Container {
        let mut c = Container::new(MAGIC, serde_json::json!({"k": "v"}));
        c.push(NamedTensor::f32("a", vec![2, 2], vec![1.0, -2.0, 3.5, f32::MIN_POSITIVE]));
        c.push(NamedTensor::f64("b", vec![3], vec![0.1, 0.2, 0.3]));
        c
    }

    #[test]
    fn round_trip() {
        let c = sample();
        let bytes = c.to_bytes().unwrap();
        assert_eq!(&bytes[..4], b"TEST");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), CONTAINER_VERSION);
        let back = Container::from_bytes(&bytes, MAGIC).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn bad_magic() {
        let mut bytes = sample().to_bytes().unwrap();
        bytes[..4].copy_from_slice(b"XXXX");
        assert!(matches!(Container::from_bytes(&bytes, MAGIC), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn version_mismatch() {
        let mut bytes = sample().to_bytes().unwrap();
        bytes[4..8].copy_from_slice(&7u32.to_le_bytes());
        assert!(matches!(
            Container::from_bytes(&bytes, MAGIC),
            Err(Error::VersionMismatch { found: 7, .. })
        ));
    }

    #[test]
    fn truncated_payload() {
        let bytes = sample().to_bytes().unwrap();
        let cut = &bytes[..bytes.len() - 5];
        assert!(matches!(Container::from_bytes(cut, MAGIC), Err(Error::Truncated(_))));
    }

    #[test]
    fn declared_100_bytes_with_50_present() {
        let mut c = Container::new(MAGIC, Value::Null);
        c.push(NamedTensor::f32("x", vec![25], vec![0.5; 25]));
        let mut bytes = c.to_bytes().unwrap();
        bytes.truncate(bytes.len() - 50);
        let err = Container::from_bytes(&bytes, MAGIC).unwrap_err();
        assert!(matches!(err, Error::Truncated(ref m) if m.contains("100")), "{err}");
    }

    #[test]
    fn overlapping_offsets_rejected() {
        let c = sample();
        let bytes = c.to_bytes().unwrap();
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let mut header: Header = serde_json::from_slice(&bytes[16..16 + header_len]).unwrap();
        header.tensors[1].offset = 8;
        let new_header = serde_json::to_vec(&header).unwrap();
        let mut forged = Vec::new();
        forged.extend_from_slice(&bytes[..8]);
        forged.extend_from_slice(&(new_header.len() as u64).to_le_bytes());
        forged.extend_from_slice(&new_header);
        forged.extend_from_slice(&bytes[16 + header_len..]);
        assert!(matches!(Container::from_bytes(&forged, MAGIC), Err(Error::Layout(_))));
    }

    #[test]
    fn shape_mismatch_on_write() {
        let mut c = Container::new(MAGIC, Value::Null);
        c.push(NamedTensor::f32("x", vec![3], vec![0.5; 2]));
        assert!(matches!(c.to_bytes(), Err(Error::Shape(_))));
    }
}
