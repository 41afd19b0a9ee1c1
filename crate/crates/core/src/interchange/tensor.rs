//! `.cwt` single-tensor files.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{container, FormatError};
use crate::bits;

pub const TENSOR_MAGIC: &[u8; 8] = b"CIMPCWT\0";
pub const TENSOR_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DType {
    Float32,
    Uint8,
    Int8,
    /// One bit per element, packed LSB-first.
    Bit,
}

impl DType {
    pub fn as_str(self) -> &'static str {
        match self {
            DType::Float32 => "float32",
            DType::Uint8 => "uint8",
            DType::Int8 => "int8",
            DType::Bit => "bit",
        }
    }

    /// Payload size in bytes for `numel` elements.
    pub fn payload_len(self, numel: usize) -> usize {
        match self {
            DType::Float32 => numel * 4,
            DType::Uint8 | DType::Int8 => numel,
            DType::Bit => numel.div_ceil(8),
        }
    }
}

impl fmt::Display for DType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DType {
    type Err = FormatError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "float32" => Ok(DType::Float32),
            "uint8" => Ok(DType::Uint8),
            "int8" => Ok(DType::Int8),
            "bit" => Ok(DType::Bit),
            other => Err(FormatError::UnknownDtype(other.to_string())),
        }
    }
}

impl Serialize for DType {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for DType {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A named, shaped, row-major tensor with a raw little-endian payload.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorRecord {
    pub name: String,
    pub dtype: DType,
    pub shape: Vec<usize>,
    pub data: Vec<u8>,
}

#[derive(Serialize, Deserialize)]
struct TensorHeader {
    name: String,
    dtype: String,
    shape: Vec<usize>,
}

impl TensorRecord {
    pub fn new(name: impl Into<String>, dtype: DType, shape: Vec<usize>, data: Vec<u8>) -> Result<Self, FormatError> {
        let record = Self { name: name.into(), dtype, shape, data };
        record.check()?;
        Ok(record)
    }

    pub fn from_f32(name: impl Into<String>, shape: Vec<usize>, values: &[f32]) -> Result<Self, FormatError> {
        let data = values.iter().flat_map(|v| v.to_le_bytes()).collect();
        Self::new(name, DType::Float32, shape, data)
    }

    pub fn from_u8(name: impl Into<String>, shape: Vec<usize>, values: &[u8]) -> Result<Self, FormatError> {
        Self::new(name, DType::Uint8, shape, values.to_vec())
    }

    pub fn from_i8(name: impl Into<String>, shape: Vec<usize>, values: &[i8]) -> Result<Self, FormatError> {
        Self::new(name, DType::Int8, shape, values.iter().map(|&v| v as u8).collect())
    }

    pub fn from_bits(name: impl Into<String>, shape: Vec<usize>, bits: &[bool]) -> Result<Self, FormatError> {
        Self::new(name, DType::Bit, shape, bits::pack_lsb_first(bits))
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    fn invalid(&self, reason: impl Into<String>) -> FormatError {
        FormatError::InvalidTensor { name: self.name.clone(), reason: reason.into() }
    }

    fn check(&self) -> Result<(), FormatError> {
        if self.shape.is_empty() || self.shape.len() > 4 {
            return Err(self.invalid(format!("rank {} outside 1..=4", self.shape.len())));
        }
        if self.shape.contains(&0) {
            return Err(self.invalid(format!("shape {:?} has a zero dimension", self.shape)));
        }
        let expected = self.dtype.payload_len(self.numel());
        if self.data.len() != expected {
            return Err(self.invalid(format!(
                "payload is {} bytes, shape {:?} of {} needs {expected}",
                self.data.len(),
                self.shape,
                self.dtype
            )));
        }
        if self.dtype == DType::Bit {
            let n = self.numel();
            if !n.is_multiple_of(8) && self.data[n / 8] >> (n % 8) != 0 {
                return Err(self.invalid("bit padding is not zero"));
            }
        }
        Ok(())
    }

    /// Element values widened to `f32`; bit tensors yield 0.0 / 1.0.
    pub fn to_f32(&self) -> Vec<f32> {
        match self.dtype {
            DType::Float32 => self
                .data
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect(),
            DType::Uint8 => self.data.iter().map(|&v| v as f32).collect(),
            DType::Int8 => self.data.iter().map(|&v| v as i8 as f32).collect(),
            DType::Bit => self.bits().into_iter().map(|b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }

    pub fn bits(&self) -> Vec<bool> {
        match self.dtype {
            DType::Bit => bits::unpack_lsb_first(&self.data, self.numel()),
            _ => self.to_f32().into_iter().map(|v| v != 0.0).collect(),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let header = TensorHeader {
            name: self.name.clone(),
            dtype: self.dtype.as_str().to_string(),
            shape: self.shape.clone(),
        };
        container::encode(TENSOR_MAGIC, TENSOR_VERSION, &header, &self.data)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, FormatError> {
        let (header, payload): (TensorHeader, _) = container::decode(bytes, TENSOR_MAGIC, TENSOR_VERSION)?;
        let dtype: DType = header.dtype.parse()?;
        if header.shape.is_empty() || header.shape.len() > 4 || header.shape.contains(&0) {
            return Err(FormatError::MalformedHeader(format!("invalid shape {:?}", header.shape)));
        }
        let numel = header
            .shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| FormatError::MalformedHeader(format!("shape {:?} overflows", header.shape)))?;
        let needed = dtype.payload_len(numel);
        if payload.len() < needed {
            return Err(FormatError::Truncated { needed, found: payload.len() });
        }
        if payload.len() > needed {
            return Err(FormatError::MalformedHeader(format!(
                "{} trailing bytes after payload",
                payload.len() - needed
            )));
        }
        Self::new(header.name, dtype, header.shape, payload.to_vec())
    }
}

pub fn write_tensor(record: &TensorRecord, path: impl AsRef<Path>) -> Result<(), FormatError> {
    std::fs::write(path, record.encode())?;
    Ok(())
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<TensorRecord, FormatError> {
    TensorRecord::decode(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_tensor_layout() {
        let t = TensorRecord::from_f32("w", vec![2, 2], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(t.data.len(), 16);
        let bytes = t.encode();
        assert_eq!(&bytes[..8], TENSOR_MAGIC);
        assert_eq!(bytes.len() - 16, 20 + u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize);
        assert_eq!(&bytes[bytes.len() - 16..bytes.len() - 12], &1.0f32.to_le_bytes());
        assert_eq!(TensorRecord::decode(&bytes).unwrap(), t);
    }

    #[test]
    fn bit_tensor_padding() {
        let bits = [true; 9];
        let t = TensorRecord::from_bits("b", vec![9], &bits).unwrap();
        assert_eq!(t.data, vec![0xff, 0x01]);
        assert_eq!(t.bits(), bits.to_vec());
        let bad = TensorRecord::new("b", DType::Bit, vec![9], vec![0xff, 0x03]);
        assert!(matches!(bad, Err(FormatError::InvalidTensor { .. })));
    }

    #[test]
    fn rank_limits() {
        assert!(TensorRecord::from_f32("x", vec![], &[]).is_err());
        assert!(TensorRecord::from_f32("x", vec![1, 1, 1, 1, 1], &[0.0]).is_err());
        assert!(TensorRecord::from_f32("x", vec![1, 1, 1, 1], &[0.0]).is_ok());
    }

    #[test]
    fn decode_errors() {
        let t = TensorRecord::from_u8("u", vec![3], &[1, 2, 3]).unwrap();
        let bytes = t.encode();
        assert!(matches!(
            TensorRecord::decode(&bytes[..bytes.len() - 1]),
            Err(FormatError::Truncated { needed: 3, found: 2 })
        ));
        assert!(matches!(TensorRecord::decode(b"NOTATENSORFILE"), Err(FormatError::BadMagic { .. })));

        let mut header = serde_json::json!({"name": "u", "dtype": "float16", "shape": [3]}).to_string().into_bytes();
        let mut raw = TENSOR_MAGIC.to_vec();
        raw.extend_from_slice(&TENSOR_VERSION.to_le_bytes());
        raw.extend_from_slice(&(header.len() as u64).to_le_bytes());
        raw.append(&mut header);
        raw.extend_from_slice(&[0; 6]);
        assert!(matches!(TensorRecord::decode(&raw), Err(FormatError::UnknownDtype(d)) if d == "float16"));

        let mut garbled = bytes.clone();
        garbled[20] = b'!';
        assert!(matches!(TensorRecord::decode(&garbled), Err(FormatError::MalformedHeader(_))));

        let mut future = bytes;
        future[8] = 9;
        assert!(matches!(TensorRecord::decode(&future), Err(FormatError::VersionMismatch { found: 9, .. })));
    }

    #[test]
    fn signed_values_widen() {
        let t = TensorRecord::from_i8("i", vec![2], &[-3, 5]).unwrap();
        assert_eq!(t.to_f32(), vec![-3.0, 5.0]);
    }
}
