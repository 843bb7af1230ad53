//! Tensor container: a text manifest followed by a raw little-endian payload.
//!
//! ```text
//! MDSLAB-TENSOR
//! version = 1
//! dtype = c64
//! shape = [4, 256, 128, 2, 4]
//! axes = [frame, fast_time, chirp, tx, rx]
//! byte_order = little
//! attr.label = 2
//! payload_offset = 0000000192
//! end
//! <newline padding up to payload_offset>
//! <payload, row-major>
//! ```
//!
//! `c64` is interleaved 32-bit float real/imaginary pairs. The payload offset
//! is written with a fixed width so the manifest size does not depend on it.

use std::path::Path;

use num_complex::Complex32;
use thiserror::Error;

use super::kv::{Document, Reader, Value};

pub const MAGIC: &str = "MDSLAB-TENSOR";
pub const VERSION: u32 = 1;
const OFFSET_WIDTH: usize = 10;
const ALIGN: usize = 64;

#[derive(Debug, Error, PartialEq)]
pub enum ContainerError {
    #[error("not a tensor container (missing `{MAGIC}` header)")]
    BadMagic,
    #[error("unsupported container version {found} (expected {VERSION})")]
    VersionMismatch { found: u32 },
    #[error("malformed manifest: {0}")]
    Manifest(String),
    #[error("truncated container: needed {needed} bytes, found {found}")]
    Truncated { needed: usize, found: usize },
    #[error("payload is {found} bytes but the manifest implies {expected}")]
    SizeMismatch { expected: usize, found: usize },
}

impl ContainerError {
    /// Stable numeric code per failure kind.
    pub fn code(&self) -> u8 {
        match self {
            ContainerError::BadMagic => 10,
            ContainerError::VersionMismatch { .. } => 11,
            ContainerError::Manifest(_) => 12,
            ContainerError::Truncated { .. } => 13,
            ContainerError::SizeMismatch { .. } => 14,
        }
    }
}

fn manifest(msg: impl Into<String>) -> ContainerError {
    ContainerError::Manifest(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    C64,
    F32,
    F64,
    I64,
}

impl DType {
    pub fn name(self) -> &'static str {
        match self {
            DType::C64 => "c64",
            DType::F32 => "f32",
            DType::F64 => "f64",
            DType::I64 => "i64",
        }
    }

    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::C64 | DType::F64 | DType::I64 => 8,
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "c64" => Some(DType::C64),
            "f32" => Some(DType::F32),
            "f64" => Some(DType::F64),
            "i64" => Some(DType::I64),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    C64(Vec<Complex32>),
    F32(Vec<f32>),
    F64(Vec<f64>),
    I64(Vec<i64>),
}

impl TensorData {
    pub fn dtype(&self) -> DType {
        match self {
            TensorData::C64(_) => DType::C64,
            TensorData::F32(_) => DType::F32,
            TensorData::F64(_) => DType::F64,
            TensorData::I64(_) => DType::I64,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TensorData::C64(v) => v.len(),
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
            TensorData::I64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn encode(&self, out: &mut Vec<u8>) {
        match self {
            TensorData::C64(v) => v.iter().for_each(|c| {
                out.extend_from_slice(&c.re.to_le_bytes());
                out.extend_from_slice(&c.im.to_le_bytes());
            }),
            TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::I64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
    }

    fn decode(dtype: DType, bytes: &[u8]) -> Self {
        let f32_at = |c: &[u8]| f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
        match dtype {
            DType::C64 => TensorData::C64(
                bytes
                    .chunks_exact(8)
                    .map(|c| Complex32::new(f32_at(&c[..4]), f32_at(&c[4..])))
                    .collect(),
            ),
            DType::F32 => TensorData::F32(bytes.chunks_exact(4).map(f32_at).collect()),
            DType::F64 => TensorData::F64(
                bytes
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            DType::I64 => TensorData::I64(
                bytes
                    .chunks_exact(8)
                    .map(|c| i64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorContainer {
    pub shape: Vec<usize>,
    pub axes: Vec<String>,
    /// Free-form metadata, written as `attr.<key> = <value>` manifest lines.
    pub attrs: Vec<(String, String)>,
    pub data: TensorData,
}

fn element_count(shape: &[usize]) -> Option<usize> {
    shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d))
}

fn valid_token(s: &str) -> bool {
    !s.is_empty()
        && s.bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'.' || b == b'-')
}

fn valid_attr_value(s: &str) -> bool {
    !s.is_empty()
        && s == s.trim()
        && !s
            .chars()
            .any(|c| matches!(c, '[' | ']' | ',' | '=' | '#') || c.is_control())
}

impl TensorContainer {
    pub fn new(shape: Vec<usize>, axes: Vec<&str>, data: TensorData) -> Result<Self, ContainerError> {
        let t = Self {
            shape,
            axes: axes.into_iter().map(str::to_string).collect(),
            attrs: Vec::new(),
            data,
        };
        t.check()?;
        Ok(t)
    }

    pub fn with_attr(mut self, key: &str, value: impl ToString) -> Self {
        self.attrs.push((key.to_string(), value.to_string()));
        self
    }

    pub fn attr(&self, key: &str) -> Option<&str> {
        self.attrs
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn dtype(&self) -> DType {
        self.data.dtype()
    }

    fn check(&self) -> Result<(), ContainerError> {
        let n = element_count(&self.shape).ok_or_else(|| manifest("shape overflows"))?;
        if n != self.data.len() {
            return Err(ContainerError::SizeMismatch {
                expected: n * self.dtype().size(),
                found: self.data.len() * self.dtype().size(),
            });
        }
        if self.axes.len() != self.shape.len() {
            return Err(manifest(format!(
                "{} axis names for a rank-{} tensor",
                self.axes.len(),
                self.shape.len()
            )));
        }
        if let Some(a) = self.axes.iter().find(|a| !valid_token(a)) {
            return Err(manifest(format!("invalid axis name `{a}`")));
        }
        for (k, v) in &self.attrs {
            if !valid_token(k) || !valid_attr_value(v) {
                return Err(manifest(format!("invalid attribute `{k} = {v}`")));
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, ContainerError> {
        self.check()?;
        let mut head = format!(
            "{MAGIC}\nversion = {VERSION}\ndtype = {}\nshape = [{}]\naxes = [{}]\nbyte_order = little\n",
            self.dtype().name(),
            self.shape
                .iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join(", "),
            self.axes.join(", ")
        );
        for (k, v) in &self.attrs {
            head.push_str(&format!("attr.{k} = {v}\n"));
        }
        let fixed = head.len() + "payload_offset = \nend\n".len() + OFFSET_WIDTH;
        let offset = fixed.div_ceil(ALIGN) * ALIGN;
        head.push_str(&format!("payload_offset = {offset:0OFFSET_WIDTH$}\nend\n"));
        let mut out = head.into_bytes();
        out.resize(offset, b'\n');
        out.reserve(self.data.len() * self.dtype().size());
        self.data.encode(&mut out);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ContainerError> {
        let magic = format!("{MAGIC}\n");
        if bytes.len() < magic.len() {
            if magic.as_bytes().starts_with(bytes) {
                return Err(ContainerError::Truncated {
                    needed: magic.len(),
                    found: bytes.len(),
                });
            }
            return Err(ContainerError::BadMagic);
        }
        if &bytes[..magic.len()] != magic.as_bytes() {
            return Err(ContainerError::BadMagic);
        }
        let body = &bytes[magic.len()..];
        let end = find_end(body).ok_or(ContainerError::Truncated {
            needed: bytes.len() + 1,
            found: bytes.len(),
        })?;
        let manifest_end = magic.len() + end;
        let text = std::str::from_utf8(&body[..end - "end\n".len()])
            .map_err(|_| manifest("manifest is not UTF-8"))?;
        let doc = Document::parse(text).map_err(|e| manifest(e.to_string()))?;

        let mut r = Reader::new(&doc);
        let version: u32 = r
            .require("version")
            .map_err(|e| manifest(e.to_string()))?;
        if version != VERSION {
            return Err(ContainerError::VersionMismatch { found: version });
        }
        let dtype_name: String = r.require("dtype").map_err(|e| manifest(e.to_string()))?;
        let dtype = DType::parse(&dtype_name)
            .ok_or_else(|| manifest(format!("unknown dtype `{dtype_name}`")))?;
        let shape: Vec<usize> = r
            .list("shape")
            .map_err(|e| manifest(e.to_string()))?
            .ok_or_else(|| manifest("missing shape"))?;
        let axes: Vec<String> = r
            .list("axes")
            .map_err(|e| manifest(e.to_string()))?
            .ok_or_else(|| manifest("missing axes"))?;
        let order: String = r
            .require("byte_order")
            .map_err(|e| manifest(e.to_string()))?;
        if order != "little" {
            return Err(manifest(format!("unsupported byte order `{order}`")));
        }
        let offset: usize = r
            .require("payload_offset")
            .map_err(|e| manifest(e.to_string()))?;
        let mut attrs = Vec::new();
        for e in doc.entries() {
            if let Some(k) = e.key.strip_prefix("attr.") {
                match &e.value {
                    Value::Scalar(v) => attrs.push((k.to_string(), v.clone())),
                    Value::List(_) => return Err(manifest(format!("attribute `{k}` is a list"))),
                }
                let _: Option<String> = r.scalar(&e.key).ok().flatten();
            }
        }
        r.finish().map_err(|e| manifest(e.to_string()))?;

        if offset < manifest_end {
            return Err(manifest("payload offset points inside the manifest"));
        }
        if bytes.len() < offset {
            return Err(ContainerError::Truncated {
                needed: offset,
                found: bytes.len(),
            });
        }
        if bytes[manifest_end..offset].iter().any(|&b| b != b'\n') {
            return Err(manifest("non-padding bytes between manifest and payload"));
        }
        let count = element_count(&shape).ok_or_else(|| manifest("shape overflows"))?;
        let expected = count
            .checked_mul(dtype.size())
            .ok_or_else(|| manifest("shape overflows"))?;
        let payload = &bytes[offset..];
        if payload.len() != expected {
            return Err(ContainerError::SizeMismatch {
                expected,
                found: payload.len(),
            });
        }
        let t = Self {
            shape,
            axes,
            attrs,
            data: TensorData::decode(dtype, payload),
        };
        t.check()?;
        Ok(t)
    }

    pub fn write(&self, path: &Path) -> crate::Result<()> {
        super::write_atomic(path, &self.to_bytes()?)
    }

    pub fn read(path: &Path) -> crate::Result<Self> {
        let bytes = std::fs::read(path)?;
        Ok(Self::from_bytes(&bytes)?)
    }

    pub fn expect(&self, dtype: DType, rank: usize) -> Result<(), ContainerError> {
        if self.dtype() != dtype || self.shape.len() != rank {
            return Err(manifest(format!(
                "expected a rank-{rank} {} tensor, found rank-{} {}",
                dtype.name(),
                self.shape.len(),
                self.dtype().name()
            )));
        }
        Ok(())
    }
}

/// Offset just past the `end\n` line, relative to `body`.
fn find_end(body: &[u8]) -> Option<usize> {
    let mut start = 0;
    while start < body.len() {
        let nl = body[start..].iter().position(|&b| b == b'\n')? + start;
        if &body[start..nl] == b"end" {
            return Some(nl + 1);
        }
        start = nl + 1;
    }
    None
}
