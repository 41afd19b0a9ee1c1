//! `.cpool` compressed models.
//!
//! The JSON header echoes the manifest (with the pool configuration actually
//! used) and describes each conv/dense layer; the payload concatenates the
//! per-layer blocks at the recorded byte offsets.
//!
//! A compressed block is a bitstream, LSB-first, holding for every packed
//! vector its group-local index (`index_bits` wide) followed by its kept error
//! bits (1 ↦ +1), padded to a byte boundary, then the float32 bias if any.
//! An exempt block is the raw float32 weights followed by the bias.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{container, FormatError, LayerKind, ModelManifest};
use crate::bits::{BitReader, BitWriter};
use crate::weightpool::{CompressedLayer, ErrorPlane, LayerGeometry, PoolConfig, ScaleSet, Sparsity};

pub const COMPRESSED_MAGIC: &[u8; 8] = b"CIMPOOL\0";
pub const COMPRESSED_VERSION: u32 = 1;

/// A layer stored as plain float32 and executed digitally.
#[derive(Clone, Debug, PartialEq)]
pub struct ExemptLayer {
    pub name: String,
    /// `(c_out, c_in, kh, kw)` order.
    pub weights: Vec<f32>,
    pub bias: Option<Vec<f32>>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LayerPayload {
    Compressed(CompressedLayer),
    Exempt(ExemptLayer),
}

impl LayerPayload {
    pub fn name(&self) -> &str {
        match self {
            LayerPayload::Compressed(c) => &c.name,
            LayerPayload::Exempt(e) => &e.name,
        }
    }

    pub fn bias(&self) -> Option<&[f32]> {
        match self {
            LayerPayload::Compressed(c) => c.bias.as_deref(),
            LayerPayload::Exempt(e) => e.bias.as_deref(),
        }
    }
}

/// One payload per conv/dense layer, in manifest order.
#[derive(Clone, Debug, PartialEq)]
pub struct CompressedModelFile {
    pub manifest: ModelManifest,
    pub layers: Vec<LayerPayload>,
}

impl CompressedModelFile {
    pub fn pool_config(&self) -> &PoolConfig {
        &self.manifest.pool_config
    }

    pub fn pool_seed(&self) -> u64 {
        self.manifest.pool_config.seed
    }

    pub fn sparsity(&self) -> Sparsity {
        self.manifest.pool_config.sparsity
    }

    pub fn group_size(&self) -> usize {
        self.manifest.pool_config.group_size
    }

    pub fn layer(&self, name: &str) -> Option<&LayerPayload> {
        self.layers.iter().find(|l| l.name() == name)
    }

    pub fn encode(&self) -> Result<Vec<u8>, FormatError> {
        check_consistency(self)?;
        let mut payload = Vec::new();
        let mut layers = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let offset = payload.len() as u64;
            let header = match layer {
                LayerPayload::Compressed(cl) => {
                    let index_bits = crate::bits::index_bits(cl.group_size);
                    let kept = cl.kept_per_vector();
                    let mut w = BitWriter::with_capacity_bits(cl.n_vectors() * (index_bits as usize + kept));
                    for v in 0..cl.n_vectors() {
                        w.push_bits(cl.indices[v] as u64, index_bits);
                        for j in 0..kept {
                            w.push(cl.error_plane.is_positive(v, j));
                        }
                    }
                    let payload_bits = w.len_bits() as u64;
                    payload.extend(w.finish());
                    push_f32s(&mut payload, cl.bias.as_deref().unwrap_or_default());
                    LayerHeader {
                        name: cl.name.clone(),
                        storage: Storage::Compressed,
                        offset,
                        length: payload.len() as u64 - offset,
                        has_bias: cl.bias.is_some(),
                        compressed: Some(CompressedHeader {
                            geometry: cl.geometry,
                            n_vectors: cl.n_vectors(),
                            index_bits,
                            kept_per_vector: kept,
                            bits_per_vector: index_bits as usize + kept,
                            payload_bits,
                            sparsity: cl.sparsity,
                            group_size: cl.group_size,
                            pool_size: cl.pool_size,
                            scales: ScaleHeader::from(cl.scales),
                        }),
                    }
                }
                LayerPayload::Exempt(ex) => {
                    push_f32s(&mut payload, &ex.weights);
                    push_f32s(&mut payload, ex.bias.as_deref().unwrap_or_default());
                    LayerHeader {
                        name: ex.name.clone(),
                        storage: Storage::Exempt,
                        offset,
                        length: payload.len() as u64 - offset,
                        has_bias: ex.bias.is_some(),
                        compressed: None,
                    }
                }
            };
            layers.push(header);
        }
        let c = self.pool_config();
        let header = FileHeader {
            pool_seed: c.seed,
            sparsity: c.sparsity,
            group_size: c.group_size,
            manifest: self.manifest.clone(),
            layers,
        };
        Ok(container::encode(COMPRESSED_MAGIC, COMPRESSED_VERSION, &header, &payload))
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, FormatError> {
        let (header, payload): (FileHeader, _) = container::decode(bytes, COMPRESSED_MAGIC, COMPRESSED_VERSION)?;
        let bad = |m: String| FormatError::InvalidCompressed(m);
        let c = &header.manifest.pool_config;
        if header.pool_seed != c.seed || header.sparsity != c.sparsity || header.group_size != c.group_size {
            return Err(bad("global pool_seed/sparsity/group_size disagree with the manifest".into()));
        }
        let violations = super::validate_manifest(&header.manifest);
        if !violations.is_empty() {
            return Err(FormatError::Validation(violations));
        }
        let mut layers = Vec::with_capacity(header.layers.len());
        let mut end = 0u64;
        for lh in &header.layers {
            let spec = header
                .manifest
                .layer(&lh.name)
                .filter(|s| s.kind.has_weights())
                .ok_or_else(|| bad(format!("layer `{}` is not a conv/dense layer of the manifest", lh.name)))?;
            if lh.offset != end {
                return Err(bad(format!("layer `{}` starts at byte {}, expected {end}", lh.name, lh.offset)));
            }
            end = lh.offset.checked_add(lh.length).ok_or_else(|| bad("layer length overflows".into()))?;
            if end > payload.len() as u64 {
                return Err(FormatError::Truncated { needed: end as usize, found: payload.len() });
            }
            let block = &payload[lh.offset as usize..end as usize];
            let bias_len = if lh.has_bias { spec.c_out * 4 } else { 0 };
            let split_bias = |body_len: usize| -> Result<Option<Vec<f32>>, FormatError> {
                if block.len() != body_len + bias_len {
                    return Err(bad(format!(
                        "layer `{}` block is {} bytes, expected {}",
                        lh.name,
                        block.len(),
                        body_len + bias_len
                    )));
                }
                Ok(lh.has_bias.then(|| read_f32s(&block[body_len..])))
            };
            let layer = match (lh.storage, &lh.compressed) {
                (Storage::Exempt, None) => {
                    let n = spec.weight_count();
                    let bias = split_bias(n * 4)?;
                    LayerPayload::Exempt(ExemptLayer { name: lh.name.clone(), weights: read_f32s(&block[..n * 4]), bias })
                }
                (Storage::Compressed, Some(ch)) => {
                    let geometry = LayerGeometry::from_spec(spec, c.vector_size);
                    let index_bits = crate::bits::index_bits(ch.group_size);
                    let kept = ch.sparsity.kept_count(geometry.vector_size);
                    if ch.geometry != geometry
                        || ch.n_vectors != geometry.n_vectors()
                        || ch.sparsity != c.sparsity
                        || ch.group_size != c.group_size
                        || ch.pool_size != c.pool_size
                        || ch.index_bits != index_bits
                        || ch.kept_per_vector != kept
                        || ch.bits_per_vector != index_bits as usize + kept
                        || ch.payload_bits != (ch.n_vectors * ch.bits_per_vector) as u64
                    {
                        return Err(bad(format!("layer `{}` header is inconsistent with its manifest entry", lh.name)));
                    }
                    let body_len = (ch.payload_bits as usize).div_ceil(8);
                    let bias = split_bias(body_len)?;
                    let mut r = BitReader::new(&block[..body_len]);
                    let mut indices = Vec::with_capacity(ch.n_vectors);
                    let mut plane = ErrorPlane::new(ch.n_vectors, kept);
                    for v in 0..ch.n_vectors {
                        let idx = r.read_bits(index_bits).expect("length checked");
                        if idx as usize >= ch.group_size {
                            return Err(bad(format!(
                                "layer `{}` vector {v}: index {idx} >= group_size {}",
                                lh.name, ch.group_size
                            )));
                        }
                        indices.push(idx as u16);
                        for j in 0..kept {
                            plane.set(v, j, r.read_bit().expect("length checked"));
                        }
                    }
                    LayerPayload::Compressed(CompressedLayer {
                        name: lh.name.clone(),
                        geometry,
                        pool_size: ch.pool_size,
                        group_size: ch.group_size,
                        sparsity: ch.sparsity,
                        indices,
                        error_plane: plane,
                        scales: ch.scales.to_scales().map_err(|m| bad(format!("layer `{}`: {m}", lh.name)))?,
                        bias,
                    })
                }
                _ => return Err(bad(format!("layer `{}` storage does not match its header fields", lh.name))),
            };
            layers.push(layer);
        }
        if end != payload.len() as u64 {
            return Err(bad(format!("{} trailing payload bytes", payload.len() as u64 - end)));
        }
        let file = CompressedModelFile { manifest: header.manifest, layers };
        check_consistency(&file)?;
        Ok(file)
    }
}

fn check_consistency(file: &CompressedModelFile) -> Result<(), FormatError> {
    let bad = |m: String| Err(FormatError::InvalidCompressed(m));
    let weighted: Vec<&str> = file
        .manifest
        .layers
        .iter()
        .filter(|l| matches!(l.kind, LayerKind::Conv2d | LayerKind::Dense))
        .map(|l| l.name.as_str())
        .collect();
    let stored: Vec<&str> = file.layers.iter().map(|l| l.name()).collect();
    if weighted != stored {
        return bad(format!("stored layers {stored:?} do not match manifest conv/dense layers {weighted:?}"));
    }
    for layer in &file.layers {
        let spec = file.manifest.layer(layer.name()).expect("matched above");
        if let Some(b) = layer.bias() {
            if b.len() != spec.c_out || spec.bias.is_none() {
                return bad(format!("layer `{}` bias does not match the manifest", spec.name));
            }
        } else if spec.bias.is_some() {
            return bad(format!("layer `{}` is missing its bias", spec.name));
        }
        match layer {
            LayerPayload::Exempt(ex) if ex.weights.len() != spec.weight_count() => {
                return bad(format!("exempt layer `{}` holds {} weights", ex.name, ex.weights.len()));
            }
            LayerPayload::Compressed(cl) => {
                if cl.indices.len() != cl.geometry.n_vectors() || cl.error_plane.n_vectors != cl.indices.len() {
                    return bad(format!("layer `{}` index/error plane counts disagree", cl.name));
                }
                if cl.kept_per_vector() != cl.sparsity.kept_count(cl.geometry.vector_size) {
                    return bad(format!("layer `{}` kept count does not match sparsity", cl.name));
                }
                if let Some(&i) = cl.indices.iter().find(|&&i| i as usize >= cl.group_size) {
                    return bad(format!("layer `{}`: index {i} >= group_size {}", cl.name, cl.group_size));
                }
            }
            _ => {}
        }
    }
    Ok(())
}

fn push_f32s(out: &mut Vec<u8>, values: &[f32]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn read_f32s(bytes: &[u8]) -> Vec<f32> {
    bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect()
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileHeader {
    pool_seed: u64,
    sparsity: Sparsity,
    group_size: usize,
    manifest: ModelManifest,
    layers: Vec<LayerHeader>,
}

#[derive(Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Storage {
    Compressed,
    Exempt,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerHeader {
    name: String,
    storage: Storage,
    offset: u64,
    length: u64,
    has_bias: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    compressed: Option<CompressedHeader>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CompressedHeader {
    geometry: LayerGeometry,
    n_vectors: usize,
    index_bits: u32,
    kept_per_vector: usize,
    bits_per_vector: usize,
    payload_bits: u64,
    sparsity: Sparsity,
    group_size: usize,
    pool_size: usize,
    scales: ScaleHeader,
}

/// float32 scales written through f64 so the JSON text round-trips exactly.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScaleHeader {
    mav_w: f64,
    mav_e: f64,
    s: f64,
}

impl From<ScaleSet> for ScaleHeader {
    fn from(s: ScaleSet) -> Self {
        Self { mav_w: s.mav_w as f64, mav_e: s.mav_e as f64, s: s.s as f64 }
    }
}

impl ScaleHeader {
    fn to_scales(&self) -> Result<ScaleSet, String> {
        let narrow = |x: f64, what: &str| {
            let y = x as f32;
            if y as f64 == x {
                Ok(y)
            } else {
                Err(format!("scale {what} = {x} is not a float32 value"))
            }
        };
        Ok(ScaleSet { mav_w: narrow(self.mav_w, "mav_w")?, mav_e: narrow(self.mav_e, "mav_e")?, s: narrow(self.s, "s")? })
    }
}

pub fn write_compressed(model: &CompressedModelFile, path: impl AsRef<Path>) -> Result<(), FormatError> {
    std::fs::write(path, model.encode()?)?;
    Ok(())
}

pub fn read_compressed(path: impl AsRef<Path>) -> Result<CompressedModelFile, FormatError> {
    CompressedModelFile::decode(&std::fs::read(path)?)
}

/// Index-plus-error payload bits per layer; `None` for exempt layers.
pub fn layer_payload_bits(model: &CompressedModelFile) -> Vec<(String, Option<u64>)> {
    model
        .layers
        .iter()
        .map(|l| match l {
            LayerPayload::Compressed(cl) => {
                let bpv = crate::bits::index_bits(cl.group_size) as usize + cl.kept_per_vector();
                (cl.name.clone(), Some((cl.n_vectors() * bpv) as u64))
            }
            LayerPayload::Exempt(e) => (e.name.clone(), None),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interchange::{LayerSpec, ModelBundle, TensorRecord};
    use crate::weightpool::compress_model;

    fn bundle(c_in: usize, c_out: usize) -> ModelBundle {
        use rand::Rng;
        let mut rng = crate::rng::seeded(11);
        let w: Vec<f32> = (0..c_in * c_out).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f32> = (0..c_out).map(|i| i as f32).collect();
        let manifest = ModelManifest::new(vec![c_in], vec![LayerSpec::dense("fc", c_in, c_out).with_bias()]);
        ModelBundle::new(
            manifest,
            vec![
                TensorRecord::from_f32("fc.weight", vec![c_out, c_in], &w).unwrap(),
                TensorRecord::from_f32("fc.bias", vec![c_out], &b).unwrap(),
            ],
        )
    }

    #[test]
    fn hundred_vectors_at_seven_eighths() {
        let config = PoolConfig { sparsity: Sparsity::SevenEighths, ..Default::default() };
        let file = compress_model(&bundle(128, 100), &config).unwrap();
        assert_eq!(layer_payload_bits(&file), vec![("fc".to_string(), Some(2100))]);
        let bytes = file.encode().unwrap();
        let back = CompressedModelFile::decode(&bytes).unwrap();
        assert_eq!(back, file);
        let (header, payload): (FileHeader, _) = container::decode(&bytes, COMPRESSED_MAGIC, COMPRESSED_VERSION).unwrap();
        assert_eq!(header.layers[0].compressed.as_ref().unwrap().payload_bits, 2100);
        assert_eq!(payload.len(), 2100usize.div_ceil(8) + 100 * 4);
    }

    #[test]
    fn empty_model_round_trips() {
        let file = CompressedModelFile { manifest: ModelManifest::new(vec![4], vec![]), layers: vec![] };
        let bytes = file.encode().unwrap();
        assert_eq!(CompressedModelFile::decode(&bytes).unwrap(), file);
    }

    #[test]
    fn out_of_range_index_is_rejected() {
        let config = PoolConfig { pool_size: 96, group_size: 24, ..Default::default() };
        let file = compress_model(&bundle(128, 96), &config).unwrap();
        let mut bytes = file.encode().unwrap();
        let payload_start = bytes.len() - (96usize * (5 + 64)).div_ceil(8) - 96 * 4;
        bytes[payload_start] |= 0b1_1111;
        let err = CompressedModelFile::decode(&bytes).unwrap_err();
        assert!(err.to_string().contains("index 31 >= group_size 24"), "{err}");

        let mut bad = file.clone();
        let LayerPayload::Compressed(cl) = &mut bad.layers[0] else { panic!() };
        cl.indices[0] = 30;
        assert!(bad.encode().is_err());
    }

    #[test]
    fn version_mismatch() {
        let file = compress_model(&bundle(128, 8), &PoolConfig::default()).unwrap();
        let mut bytes = file.encode().unwrap();
        bytes[8] = 2;
        assert!(matches!(CompressedModelFile::decode(&bytes), Err(FormatError::VersionMismatch { found: 2, .. })));
    }

    #[test]
    fn truncation_is_detected() {
        let file = compress_model(&bundle(128, 8), &PoolConfig::default()).unwrap();
        let bytes = file.encode().unwrap();
        assert!(CompressedModelFile::decode(&bytes[..bytes.len() - 3]).is_err());
    }
}
