//! On-disk formats.
//!
//! Every binary file shares one framing:
//!
//! ```text
//! magic      8 bytes   (b"CIMPCWT\0" tensor, b"CIMPOOL\0" compressed model)
//! version    u32 LE
//! header_len u64 LE
//! header     header_len bytes of UTF-8 JSON
//! payload    raw little-endian data, layout described by the header
//! ```
//!
//! A `.cmodel` is a directory holding `manifest.json` and one `.cwt` per
//! tensor under `tensors/`.

mod container;
pub mod compressed;
pub mod manifest;
pub mod tensor;

use thiserror::Error;

pub use compressed::{read_compressed, write_compressed, CompressedModelFile, ExemptLayer, LayerPayload};
pub use manifest::{
    infer_shapes, read_manifest, validate_manifest, FeatureShape, LayerKind, LayerSpec, ModelBundle, ModelManifest,
    TensorInfo, Violation,
};
pub use tensor::{read_tensor, write_tensor, DType, TensorRecord};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },
    #[error("unsupported format version {found} (this build reads version {expected})")]
    VersionMismatch { expected: u32, found: u32 },
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("truncated file: needed {needed} bytes, found {found}")]
    Truncated { needed: usize, found: usize },
    #[error("unknown dtype `{0}`")]
    UnknownDtype(String),
    #[error("invalid tensor `{name}`: {reason}")]
    InvalidTensor { name: String, reason: String },
    #[error("invalid compressed model: {0}")]
    InvalidCompressed(String),
    #[error("manifest validation failed: {}", join_violations(.0))]
    Validation(Vec<Violation>),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}
