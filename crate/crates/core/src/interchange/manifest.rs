//! `.cmodel` manifests: layer graph, tensor table and pool configuration.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::tensor::{read_tensor, write_tensor, DType, TensorRecord};
use super::FormatError;
use crate::weightpool::PoolConfig;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TENSOR_DIR: &str = "tensors";
/// Name by which layers refer to the network input.
pub const NETWORK_INPUT: &str = "input";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv2d,
    Dense,
    /// Elementwise sum of exactly two earlier activations.
    Add,
    MaxPool,
    /// Average pooling; zero padding counts toward the divisor.
    AvgPool,
    GlobalAvgPool,
}

impl LayerKind {
    pub fn has_weights(self) -> bool {
        matches!(self, LayerKind::Conv2d | LayerKind::Dense)
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            LayerKind::Conv2d => "conv2d",
            LayerKind::Dense => "dense",
            LayerKind::Add => "add",
            LayerKind::MaxPool => "max_pool",
            LayerKind::AvgPool => "avg_pool",
            LayerKind::GlobalAvgPool => "global_avg_pool",
        };
        f.write_str(s)
    }
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    pub c_in: usize,
    pub c_out: usize,
    #[serde(default = "one")]
    pub kernel_h: usize,
    #[serde(default = "one")]
    pub kernel_w: usize,
    #[serde(default = "one")]
    pub stride: usize,
    #[serde(default)]
    pub padding: usize,
    /// Producers of this layer's input; empty means the previous layer
    /// (or the network input for the first layer).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inputs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias: Option<String>,
    #[serde(default)]
    pub relu: bool,
}

impl LayerSpec {
    fn base(name: &str, kind: LayerKind, c_in: usize, c_out: usize) -> Self {
        Self {
            name: name.to_string(),
            kind,
            c_in,
            c_out,
            kernel_h: 1,
            kernel_w: 1,
            stride: 1,
            padding: 0,
            inputs: Vec::new(),
            weight: None,
            bias: None,
            relu: false,
        }
    }

    /// Square-kernel convolution with weight tensor `<name>.weight`.
    pub fn conv2d(name: &str, c_in: usize, c_out: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        Self {
            kernel_h: kernel,
            kernel_w: kernel,
            stride,
            padding,
            weight: Some(format!("{name}.weight")),
            ..Self::base(name, LayerKind::Conv2d, c_in, c_out)
        }
    }

    pub fn dense(name: &str, c_in: usize, c_out: usize) -> Self {
        Self {
            weight: Some(format!("{name}.weight")),
            ..Self::base(name, LayerKind::Dense, c_in, c_out)
        }
    }

    pub fn add(name: &str, a: &str, b: &str, channels: usize) -> Self {
        Self {
            inputs: vec![a.to_string(), b.to_string()],
            ..Self::base(name, LayerKind::Add, channels, channels)
        }
    }

    pub fn max_pool(name: &str, channels: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        Self {
            kernel_h: kernel,
            kernel_w: kernel,
            stride,
            padding,
            ..Self::base(name, LayerKind::MaxPool, channels, channels)
        }
    }

    pub fn avg_pool(name: &str, channels: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        Self {
            kind: LayerKind::AvgPool,
            ..Self::max_pool(name, channels, kernel, stride, padding)
        }
    }

    pub fn global_avg_pool(name: &str, channels: usize) -> Self {
        Self::base(name, LayerKind::GlobalAvgPool, channels, channels)
    }

    pub fn with_bias(mut self) -> Self {
        self.bias = Some(format!("{}.bias", self.name));
        self
    }

    pub fn with_relu(mut self) -> Self {
        self.relu = true;
        self
    }

    pub fn with_input(mut self, producer: &str) -> Self {
        self.inputs = vec![producer.to_string()];
        self
    }

    /// Expected weight tensor shape for conv/dense layers.
    pub fn weight_shape(&self) -> Option<Vec<usize>> {
        match self.kind {
            LayerKind::Conv2d => Some(vec![self.c_out, self.c_in, self.kernel_h, self.kernel_w]),
            LayerKind::Dense => Some(vec![self.c_out, self.c_in]),
            _ => None,
        }
    }

    pub fn weight_count(&self) -> usize {
        self.weight_shape().map_or(0, |s| s.iter().product())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub dtype: DType,
    pub shape: Vec<usize>,
}

impl From<&TensorRecord> for TensorInfo {
    fn from(t: &TensorRecord) -> Self {
        Self { name: t.name.clone(), dtype: t.dtype, shape: t.shape.clone() }
    }
}

fn default_activation_bits() -> u32 {
    8
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    /// `[features]` or `[channels, height, width]`.
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
    #[serde(default)]
    pub pool_config: PoolConfig,
    #[serde(default = "default_activation_bits")]
    pub activation_bits: u32,
    #[serde(default)]
    pub tensors: Vec<TensorInfo>,
}

impl ModelManifest {
    pub fn new(input_shape: Vec<usize>, layers: Vec<LayerSpec>) -> Self {
        Self {
            input_shape,
            layers,
            pool_config: PoolConfig::default(),
            activation_bits: default_activation_bits(),
            tensors: Vec::new(),
        }
    }

    pub fn pool_seed(&self) -> u64 {
        self.pool_config.seed
    }

    pub fn tensor_info(&self, name: &str) -> Option<&TensorInfo> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn layer(&self, name: &str) -> Option<&LayerSpec> {
        self.layers.iter().find(|l| l.name == name)
    }

    /// Weight plus bias element count over all conv/dense layers.
    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| l.kind.has_weights())
            .map(|l| l.weight_count() + if l.bias.is_some() { l.c_out } else { 0 })
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum Violation {
    #[error("duplicate layer name `{0}`")]
    DuplicateLayerName(String),
    #[error("duplicate tensor name `{0}`")]
    DuplicateTensor(String),
    #[error("tensor name `{0}` is not usable as a file name")]
    BadTensorName(String),
    #[error("layer `{layer}` has no weight tensor")]
    MissingWeight { layer: String },
    #[error("layer `{layer}` references missing tensor `{tensor}`")]
    MissingTensor { layer: String, tensor: String },
    #[error("shape mismatch in layer `{layer}`: tensor `{tensor}` is {found:?}, expected {expected:?}")]
    ShapeMismatch { layer: String, tensor: String, expected: Vec<usize>, found: Vec<usize> },
    #[error("tensor `{tensor}` has dtype {found}, expected float32")]
    WrongDtype { tensor: String, found: DType },
    #[error("layer `{layer}`: {reason}")]
    InvalidLayer { layer: String, reason: String },
    #[error("layer `{layer}` reads unknown or later layer `{input}`")]
    UnknownInput { layer: String, input: String },
    #[error("channel mismatch in layer `{layer}`: input provides {found}, layer expects {expected}")]
    ChannelMismatch { layer: String, expected: usize, found: usize },
    #[error("activation_bits {0} outside 1..=16")]
    ActivationBits(u32),
    #[error("input_shape {0:?} must be [features] or [channels, height, width] with positive sizes")]
    InvalidInputShape(Vec<usize>),
    #[error("invalid pool_config: {0}")]
    PoolConfig(String),
    #[error("tensor file for `{tensor}`: {reason}")]
    TensorFile { tensor: String, reason: String },
}

/// Activation shape as (channels, height, width); dense activations are
/// `(features, 1, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureShape {
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl FeatureShape {
    pub fn new(c: usize, h: usize, w: usize) -> Self {
        Self { c, h, w }
    }

    pub fn from_dims(dims: &[usize]) -> Option<Self> {
        match *dims {
            [c] if c > 0 => Some(Self::new(c, 1, 1)),
            [c, h, w] if c > 0 && h > 0 && w > 0 => Some(Self::new(c, h, w)),
            _ => None,
        }
    }

    pub fn numel(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn dims(&self) -> Vec<usize> {
        if self.h == 1 && self.w == 1 {
            vec![self.c]
        } else {
            vec![self.c, self.h, self.w]
        }
    }
}

fn window_out(size: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = size + 2 * padding;
    (stride > 0 && padded >= kernel).then(|| (padded - kernel) / stride + 1)
}

/// Resolves each layer's producers to indices; `None` is the network input.
pub(crate) fn resolve_inputs(m: &ModelManifest) -> Result<Vec<Vec<Option<usize>>>, Vec<Violation>> {
    let mut seen: HashMap<&str, usize> = HashMap::new();
    let mut out = Vec::with_capacity(m.layers.len());
    let mut violations = Vec::new();
    for (i, layer) in m.layers.iter().enumerate() {
        let producers = if layer.inputs.is_empty() {
            vec![i.checked_sub(1)]
        } else {
            layer
                .inputs
                .iter()
                .map(|name| {
                    if name == NETWORK_INPUT {
                        Some(None)
                    } else if let Some(&j) = seen.get(name.as_str()) {
                        Some(Some(j))
                    } else {
                        violations.push(Violation::UnknownInput { layer: layer.name.clone(), input: name.clone() });
                        None
                    }
                })
                .collect::<Option<Vec<_>>>()
                .unwrap_or_default()
        };
        out.push(producers);
        seen.entry(layer.name.as_str()).or_insert(i);
    }
    if violations.is_empty() {
        Ok(out)
    } else {
        Err(violations)
    }
}

/// Output activation shape of every layer.
pub fn infer_shapes(m: &ModelManifest) -> Result<Vec<FeatureShape>, Vec<Violation>> {
    let input = FeatureShape::from_dims(&m.input_shape)
        .ok_or_else(|| vec![Violation::InvalidInputShape(m.input_shape.clone())])?;
    let producers = resolve_inputs(m)?;
    let mut shapes: Vec<FeatureShape> = Vec::with_capacity(m.layers.len());
    let mut violations = Vec::new();
    for (layer, prods) in m.layers.iter().zip(&producers) {
        let ins: Vec<FeatureShape> = prods.iter().map(|p| p.map_or(input, |j| shapes[j])).collect();
        let bad = |reason: String| Violation::InvalidLayer { layer: layer.name.clone(), reason };
        let shape = match (layer.kind, ins.as_slice()) {
            (LayerKind::Add, [a, b]) => {
                if a != b {
                    violations.push(bad(format!("add operands differ in shape: {a:?} vs {b:?}")));
                } else if a.c != layer.c_in {
                    violations.push(Violation::ChannelMismatch {
                        layer: layer.name.clone(),
                        expected: layer.c_in,
                        found: a.c,
                    });
                }
                *a
            }
            (LayerKind::Add, other) => {
                violations.push(bad(format!("add needs exactly 2 inputs, got {}", other.len())));
                FeatureShape::new(layer.c_out, 1, 1)
            }
            (_, [x]) => {
                let x = *x;
                let expect_c = if layer.kind == LayerKind::Dense { x.numel() } else { x.c };
                if expect_c != layer.c_in {
                    violations.push(Violation::ChannelMismatch {
                        layer: layer.name.clone(),
                        expected: layer.c_in,
                        found: expect_c,
                    });
                }
                match layer.kind {
                    LayerKind::Dense => FeatureShape::new(layer.c_out, 1, 1),
                    LayerKind::GlobalAvgPool => FeatureShape::new(x.c, 1, 1),
                    _ => {
                        let h = window_out(x.h, layer.kernel_h, layer.stride, layer.padding);
                        let w = window_out(x.w, layer.kernel_w, layer.stride, layer.padding);
                        match (h, w) {
                            (Some(h), Some(w)) => FeatureShape::new(layer.c_out, h, w),
                            _ => {
                                violations.push(bad(format!(
                                    "window {}x{} stride {} padding {} does not fit input {}x{}",
                                    layer.kernel_h, layer.kernel_w, layer.stride, layer.padding, x.h, x.w
                                )));
                                FeatureShape::new(layer.c_out, 1, 1)
                            }
                        }
                    }
                }
            }
            (_, other) => {
                violations.push(bad(format!("{} takes exactly 1 input, got {}", layer.kind, other.len())));
                FeatureShape::new(layer.c_out, 1, 1)
            }
        };
        shapes.push(shape);
    }
    if violations.is_empty() {
        Ok(shapes)
    } else {
        Err(violations)
    }
}

fn file_safe(name: &str) -> bool {
    !name.is_empty() && !name.starts_with('.') && !name.contains(['/', '\\', '\0'])
}

/// Every invariant violation in `m`; empty means the manifest is valid.
pub fn validate_manifest(m: &ModelManifest) -> Vec<Violation> {
    let mut v = Vec::new();
    if !(1..=16).contains(&m.activation_bits) {
        v.push(Violation::ActivationBits(m.activation_bits));
    }
    if let Err(e) = m.pool_config.validate() {
        v.push(Violation::PoolConfig(e.to_string()));
    }

    let mut tensor_names = HashSet::new();
    for t in &m.tensors {
        if !tensor_names.insert(t.name.as_str()) {
            v.push(Violation::DuplicateTensor(t.name.clone()));
        }
        if !file_safe(&t.name) {
            v.push(Violation::BadTensorName(t.name.clone()));
        }
    }

    let mut layer_names = HashSet::new();
    let mut structural_ok = true;
    for layer in &m.layers {
        if !layer_names.insert(layer.name.as_str()) || layer.name == NETWORK_INPUT {
            v.push(Violation::DuplicateLayerName(layer.name.clone()));
            structural_ok = false;
        }
        let bad = |reason: &str| Violation::InvalidLayer { layer: layer.name.clone(), reason: reason.to_string() };
        if layer.c_in == 0 || layer.c_out == 0 {
            v.push(bad("channel counts must be positive"));
            structural_ok = false;
        }
        if layer.kernel_h == 0 || layer.kernel_w == 0 || layer.stride == 0 {
            v.push(bad("kernel sizes and stride must be positive"));
            structural_ok = false;
        }
        match layer.kind {
            LayerKind::Dense if layer.kernel_h != 1 || layer.kernel_w != 1 || layer.padding != 0 => {
                v.push(bad("dense layers take kernel 1x1 and no padding"));
            }
            LayerKind::Add | LayerKind::MaxPool | LayerKind::AvgPool | LayerKind::GlobalAvgPool
                if layer.c_in != layer.c_out =>
            {
                v.push(bad("c_in and c_out must match for parameter-free layers"));
            }
            _ => {}
        }
        if layer.kind.has_weights() {
            match &layer.weight {
                None => v.push(Violation::MissingWeight { layer: layer.name.clone() }),
                Some(name) => check_tensor(m, layer, name, layer.weight_shape().unwrap(), &mut v),
            }
            if let Some(bias) = &layer.bias {
                check_tensor(m, layer, bias, vec![layer.c_out], &mut v);
            }
        }
    }

    if structural_ok {
        if let Err(mut shape_violations) = infer_shapes(m) {
            v.append(&mut shape_violations);
        }
    }
    v
}

fn check_tensor(m: &ModelManifest, layer: &LayerSpec, name: &str, expected: Vec<usize>, v: &mut Vec<Violation>) {
    match m.tensor_info(name) {
        None => v.push(Violation::MissingTensor { layer: layer.name.clone(), tensor: name.to_string() }),
        Some(info) => {
            if info.shape != expected {
                v.push(Violation::ShapeMismatch {
                    layer: layer.name.clone(),
                    tensor: name.to_string(),
                    expected,
                    found: info.shape.clone(),
                });
            }
            if info.dtype != DType::Float32 {
                v.push(Violation::WrongDtype { tensor: name.to_string(), found: info.dtype });
            }
        }
    }
}

fn manifest_location(path: &Path) -> (PathBuf, PathBuf) {
    if path.is_dir() {
        (path.to_path_buf(), path.join(MANIFEST_FILE))
    } else {
        (path.parent().map(Path::to_path_buf).unwrap_or_default(), path.to_path_buf())
    }
}

pub fn tensor_path(model_dir: &Path, tensor: &str) -> PathBuf {
    model_dir.join(TENSOR_DIR).join(format!("{tensor}.cwt"))
}

/// Reads a `.cmodel` directory (or its `manifest.json`) and rejects it unless
/// the manifest validates and every listed tensor file matches its entry.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<ModelManifest, FormatError> {
    let (dir, file) = manifest_location(path.as_ref());
    let text = std::fs::read(&file)?;
    let manifest: ModelManifest =
        serde_json::from_slice(&text).map_err(|e| FormatError::MalformedHeader(e.to_string()))?;
    let mut violations = validate_manifest(&manifest);
    for info in &manifest.tensors {
        if !file_safe(&info.name) {
            continue;
        }
        let reason = match read_tensor(tensor_path(&dir, &info.name)) {
            Err(e) => Some(e.to_string()),
            Ok(t) if TensorInfo::from(&t) != *info => Some(format!(
                "file holds `{}` {} {:?}, manifest lists {} {:?}",
                t.name, t.dtype, t.shape, info.dtype, info.shape
            )),
            Ok(_) => None,
        };
        if let Some(reason) = reason {
            violations.push(Violation::TensorFile { tensor: info.name.clone(), reason });
        }
    }
    if violations.is_empty() {
        Ok(manifest)
    } else {
        Err(FormatError::Validation(violations))
    }
}

/// A manifest together with its tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelBundle {
    pub manifest: ModelManifest,
    pub tensors: BTreeMap<String, TensorRecord>,
}

impl ModelBundle {
    /// Builds a bundle, listing `tensors` in the manifest's tensor table.
    pub fn new(mut manifest: ModelManifest, tensors: Vec<TensorRecord>) -> Self {
        manifest.tensors = tensors.iter().map(TensorInfo::from).collect();
        let tensors = tensors.into_iter().map(|t| (t.name.clone(), t)).collect();
        Self { manifest, tensors }
    }

    pub fn tensor(&self, name: &str) -> Option<&TensorRecord> {
        self.tensors.get(name)
    }

    pub fn validate(&self) -> Vec<Violation> {
        validate_manifest(&self.manifest)
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), FormatError> {
        let dir = dir.as_ref();
        let violations = self.validate();
        if !violations.is_empty() {
            return Err(FormatError::Validation(violations));
        }
        std::fs::create_dir_all(dir.join(TENSOR_DIR))?;
        for info in &self.manifest.tensors {
            write_tensor(&self.tensors[&info.name], tensor_path(dir, &info.name))?;
        }
        let json = serde_json::to_vec_pretty(&self.manifest).expect("manifest serializes");
        std::fs::write(dir.join(MANIFEST_FILE), json)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, FormatError> {
        let (dir, _) = manifest_location(path.as_ref());
        let manifest = read_manifest(path)?;
        let mut tensors = BTreeMap::new();
        for info in &manifest.tensors {
            tensors.insert(info.name.clone(), read_tensor(tensor_path(&dir, &info.name))?);
        }
        Ok(Self { manifest, tensors })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zeros(name: &str, shape: Vec<usize>) -> TensorRecord {
        let n = shape.iter().product::<usize>();
        TensorRecord::from_f32(name, shape, &vec![0.0; n]).unwrap()
    }

    fn two_layer() -> ModelBundle {
        let layers = vec![
            LayerSpec::conv2d("conv", 64, 128, 3, 1, 1).with_relu(),
            LayerSpec::dense("fc", 128 * 4 * 4, 10).with_bias(),
        ];
        ModelBundle::new(
            ModelManifest::new(vec![64, 4, 4], layers),
            vec![zeros("conv.weight", vec![128, 64, 3, 3]), zeros("fc.weight", vec![10, 2048]), zeros("fc.bias", vec![10])],
        )
    }

    #[test]
    fn well_formed_manifest_has_no_violations() {
        assert_eq!(two_layer().validate(), vec![]);
        let shapes = infer_shapes(&two_layer().manifest).unwrap();
        assert_eq!(shapes, vec![FeatureShape::new(128, 4, 4), FeatureShape::new(10, 1, 1)]);
    }

    #[test]
    fn duplicate_layer_name() {
        let mut b = two_layer();
        b.manifest.layers[1].name = "conv".into();
        let v = b.validate();
        assert!(v.contains(&Violation::DuplicateLayerName("conv".into())), "{v:?}");
        assert!(v[0].to_string().contains("duplicate layer name"));
    }

    #[test]
    fn conv_shape_mismatch() {
        let mut b = two_layer();
        b.tensors.insert("conv.weight".into(), zeros("conv.weight", vec![128, 32, 3, 3]));
        b.manifest.tensors[0].shape = vec![128, 32, 3, 3];
        let v = b.validate();
        assert_eq!(
            v,
            vec![Violation::ShapeMismatch {
                layer: "conv".into(),
                tensor: "conv.weight".into(),
                expected: vec![128, 64, 3, 3],
                found: vec![128, 32, 3, 3],
            }]
        );
    }

    #[test]
    fn missing_tensor_and_bad_input() {
        let mut b = two_layer();
        b.manifest.tensors.retain(|t| t.name != "fc.bias");
        b.manifest.layers[0].inputs = vec!["fc".into()];
        let v = b.validate();
        assert!(v.contains(&Violation::MissingTensor { layer: "fc".into(), tensor: "fc.bias".into() }));
        assert!(v.contains(&Violation::UnknownInput { layer: "conv".into(), input: "fc".into() }));
    }

    #[test]
    fn channel_and_bits_checks() {
        let mut b = two_layer();
        b.manifest.input_shape = vec![32, 4, 4];
        b.manifest.activation_bits = 17;
        let v = b.validate();
        assert!(v.contains(&Violation::ActivationBits(17)));
        assert!(v.contains(&Violation::ChannelMismatch { layer: "conv".into(), expected: 64, found: 32 }));
    }

    #[test]
    fn save_load_roundtrip_and_file_checks() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.cmodel");
        let b = two_layer();
        b.save(&path).unwrap();
        assert_eq!(ModelBundle::load(&path).unwrap(), b);
        assert_eq!(read_manifest(path.join(MANIFEST_FILE)).unwrap(), b.manifest);

        std::fs::remove_file(tensor_path(&path, "fc.bias")).unwrap();
        match read_manifest(&path) {
            Err(FormatError::Validation(v)) => {
                assert!(matches!(&v[0], Violation::TensorFile { tensor, .. } if tensor == "fc.bias"))
            }
            other => panic!("expected validation failure, got {other:?}"),
        }
    }

    #[test]
    fn resnet_style_branches() {
        let layers = vec![
            LayerSpec::conv2d("a", 8, 16, 3, 2, 1).with_relu(),
            LayerSpec::conv2d("b", 16, 16, 3, 1, 1),
            LayerSpec::conv2d("down", 8, 16, 1, 2, 0).with_input(NETWORK_INPUT),
            LayerSpec::add("sum", "b", "down", 16).with_relu(),
            LayerSpec::global_avg_pool("gap", 16),
        ];
        let tensors = vec![
            zeros("a.weight", vec![16, 8, 3, 3]),
            zeros("b.weight", vec![16, 16, 3, 3]),
            zeros("down.weight", vec![16, 8, 1, 1]),
        ];
        let b = ModelBundle::new(ModelManifest::new(vec![8, 8, 8], layers), tensors);
        assert_eq!(b.validate(), vec![]);
        let shapes = infer_shapes(&b.manifest).unwrap();
        assert_eq!(shapes[3], FeatureShape::new(16, 4, 4));
        assert_eq!(shapes[4], FeatureShape::new(16, 1, 1));
    }
}
