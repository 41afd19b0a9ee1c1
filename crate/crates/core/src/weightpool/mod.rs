//! Weight-pool compression.
//!
//! A layer's weights are cut into channel-direction vectors of length `V`
//! (zero padded), each vector is mapped to a distinct row of a shared random
//! ±1 pool (`P` rows, split into groups so each filter only picks inside its
//! own group), and the residual is kept as a 1-bit, structurally pruned error
//! plane. Per layer three scalars restore magnitudes:
//!
//! ```text
//! W_rc[v][k] = mav_w * pool[row(v)][k] + (k kept ? s * mav_e * plane[v][k] : 0)
//! ```

mod assign;
mod compress;
mod error_term;
mod pack;
mod pool;
mod reconstruct;
mod stats;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use assign::{assign_tile, assignment_cost};
pub use compress::{compress_layer, compress_model, CompressedLayer};
pub use error_term::{compute_error, quantize_and_prune_error, ErrorPlane, ErrorTerm};
pub use pack::{pack_layer, LayerGeometry, PackedLayer, TileKey, VectorOrigin};
pub use pool::{generate_pool, WeightPool};
pub use reconstruct::{reconstruct, reconstruct_weights};
pub use stats::{compression_stats, CompressionStats};

use crate::interchange::FormatError;

#[derive(Debug, Error)]
pub enum CompressError {
    #[error("invalid pool config: {0}")]
    InvalidConfig(String),
    #[error("unsupported sparsity {0} (supported: 0, 0.5, 0.75, 0.875, 1)")]
    UnsupportedSparsity(f64),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("tile holds {found} vectors but the pool has {expected} rows")]
    TileSize { expected: usize, found: usize },
    #[error("invalid model: {0}")]
    InvalidModel(#[from] FormatError),
    #[error("layer `{layer}`: {source}")]
    Layer {
        layer: String,
        #[source]
        source: Box<CompressError>,
    },
}

impl CompressError {
    pub(crate) fn in_layer(self, layer: &str) -> Self {
        CompressError::Layer { layer: layer.to_string(), source: Box::new(self) }
    }
}

/// Fraction of error-term positions pruned away. Kept positions are the
/// channels `k` with `k % stride == 0`, so no mask is ever stored.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub enum Sparsity {
    /// Keep every position.
    Dense,
    /// Keep every second position.
    #[default]
    Half,
    /// Keep every fourth position.
    ThreeQuarters,
    /// Keep every eighth position.
    SevenEighths,
    /// No error term at all (index-only).
    Full,
}

impl Sparsity {
    pub const ALL: [Sparsity; 5] =
        [Sparsity::Dense, Sparsity::Half, Sparsity::ThreeQuarters, Sparsity::SevenEighths, Sparsity::Full];

    pub fn fraction(self) -> f64 {
        match self {
            Sparsity::Dense => 0.0,
            Sparsity::Half => 0.5,
            Sparsity::ThreeQuarters => 0.75,
            Sparsity::SevenEighths => 0.875,
            Sparsity::Full => 1.0,
        }
    }

    pub fn from_fraction(value: f64) -> Result<Self, CompressError> {
        Self::ALL
            .into_iter()
            .find(|s| s.fraction() == value)
            .ok_or(CompressError::UnsupportedSparsity(value))
    }

    /// Distance between kept channels; `None` when nothing is kept.
    pub fn keep_stride(self) -> Option<usize> {
        match self {
            Sparsity::Dense => Some(1),
            Sparsity::Half => Some(2),
            Sparsity::ThreeQuarters => Some(4),
            Sparsity::SevenEighths => Some(8),
            Sparsity::Full => None,
        }
    }

    pub fn is_kept(self, channel: usize) -> bool {
        self.keep_stride().is_some_and(|s| channel.is_multiple_of(s))
    }

    /// Kept positions per vector of length `vector_size`.
    pub fn kept_count(self, vector_size: usize) -> usize {
        self.keep_stride().map_or(0, |s| vector_size.div_ceil(s))
    }
}

impl TryFrom<f64> for Sparsity {
    type Error = CompressError;

    fn try_from(value: f64) -> Result<Self, Self::Error> {
        Self::from_fraction(value)
    }
}

impl From<Sparsity> for f64 {
    fn from(s: Sparsity) -> f64 {
        s.fraction()
    }
}

impl fmt::Display for Sparsity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.fraction())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoolConfig {
    pub vector_size: usize,
    pub pool_size: usize,
    pub group_size: usize,
    pub seed: u64,
    pub sparsity: Sparsity,
    /// Extra multiplier on the error term (`S`).
    pub error_scale: f32,
    /// Layers kept as raw float32 and executed digitally.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub exempt_layers: Vec<String>,
}

impl Default for PoolConfig {
    fn default() -> Self {
        Self {
            vector_size: 128,
            pool_size: 128,
            group_size: 32,
            seed: 0,
            sparsity: Sparsity::Half,
            error_scale: 1.0,
            exempt_layers: Vec::new(),
        }
    }
}

impl PoolConfig {
    pub fn validate(&self) -> Result<(), CompressError> {
        let bad = |m: String| Err(CompressError::InvalidConfig(m));
        if self.vector_size == 0 || self.pool_size == 0 || self.group_size == 0 {
            return bad("vector_size, pool_size and group_size must be positive".into());
        }
        if !self.pool_size.is_multiple_of(self.group_size) {
            return bad(format!("pool_size {} is not a multiple of group_size {}", self.pool_size, self.group_size));
        }
        if let Some(stride) = self.sparsity.keep_stride() {
            if !self.vector_size.is_multiple_of(stride) {
                return bad(format!(
                    "sparsity {} leaves a fractional number of kept positions for vector_size {}",
                    self.sparsity, self.vector_size
                ));
            }
        }
        if !(self.error_scale.is_finite() && self.error_scale > 0.0) {
            return bad(format!("error_scale must be positive, got {}", self.error_scale));
        }
        Ok(())
    }

    pub fn num_groups(&self) -> usize {
        self.pool_size / self.group_size
    }

    /// Width of a group-local pool index.
    pub fn index_bits(&self) -> u32 {
        crate::bits::index_bits(self.group_size)
    }

    pub fn is_exempt(&self, layer: &str) -> bool {
        self.exempt_layers.iter().any(|l| l == layer)
    }
}

/// Per-layer magnitudes restoring the binary pool and error planes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleSet {
    /// Mean |w| over the layer's real weights.
    pub mav_w: f32,
    /// Mean |E| over the layer's real error elements, before pruning.
    pub mav_e: f32,
    pub s: f32,
}

impl ScaleSet {
    pub fn pool_scale(&self) -> f64 {
        self.mav_w as f64
    }

    /// Magnitude of one stored error bit: `s * mav_e`.
    pub fn error_magnitude(&self) -> f64 {
        self.s as f64 * self.mav_e as f64
    }
}

/// Mean absolute value; zero for an empty input.
pub fn mean_abs<'a>(values: impl IntoIterator<Item = &'a f64>) -> f64 {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v.abs(), n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}
