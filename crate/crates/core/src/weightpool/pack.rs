//! Z-dimension (channel-direction) packing of conv/dense weights.

use serde::{Deserialize, Serialize};

use super::CompressError;
use crate::interchange::{DType, LayerSpec, TensorRecord};

/// Shape bookkeeping shared by packed and compressed layers.
///
/// Vector order is (spatial position, filter, channel tile) with the channel
/// index running fastest inside each vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerGeometry {
    pub c_in: usize,
    pub c_out: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub vector_size: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct VectorOrigin {
    pub filter: usize,
    pub ky: usize,
    pub kx: usize,
    pub channel_tile: usize,
}

/// One weight-stationary array load: up to `pool_size` filters at one kernel
/// position and one block of `vector_size` input channels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TileKey {
    pub ky: usize,
    pub kx: usize,
    pub channel_tile: usize,
    pub filter_tile: usize,
}

impl LayerGeometry {
    pub fn from_spec(spec: &LayerSpec, vector_size: usize) -> Self {
        Self {
            c_in: spec.c_in,
            c_out: spec.c_out,
            kernel_h: spec.kernel_h,
            kernel_w: spec.kernel_w,
            vector_size,
        }
    }

    pub fn positions(&self) -> usize {
        self.kernel_h * self.kernel_w
    }

    pub fn channel_tiles(&self) -> usize {
        self.c_in.div_ceil(self.vector_size)
    }

    pub fn filter_tiles(&self, pool_size: usize) -> usize {
        self.c_out.div_ceil(pool_size)
    }

    pub fn n_vectors(&self) -> usize {
        self.positions() * self.c_out * self.channel_tiles()
    }

    pub fn weight_count(&self) -> usize {
        self.c_in * self.c_out * self.positions()
    }

    pub fn vector_index(&self, ky: usize, kx: usize, filter: usize, channel_tile: usize) -> usize {
        let pos = ky * self.kernel_w + kx;
        (pos * self.c_out + filter) * self.channel_tiles() + channel_tile
    }

    pub fn origin(&self, v: usize) -> VectorOrigin {
        let ct = self.channel_tiles();
        let channel_tile = v % ct;
        let filter = (v / ct) % self.c_out;
        let pos = v / (ct * self.c_out);
        VectorOrigin { filter, ky: pos / self.kernel_w, kx: pos % self.kernel_w, channel_tile }
    }

    /// Real (non-padding) channels in a channel tile.
    pub fn valid_len(&self, channel_tile: usize) -> usize {
        (self.c_in - channel_tile * self.vector_size).min(self.vector_size)
    }

    /// Offset of `W[filter][channel][ky][kx]` in `(c_out, c_in, kh, kw)` order.
    pub fn weight_offset(&self, filter: usize, channel: usize, ky: usize, kx: usize) -> usize {
        ((filter * self.c_in + channel) * self.kernel_h + ky) * self.kernel_w + kx
    }

    /// Tiles in schedule order: kernel position, then channel tile, then
    /// filter tile.
    pub fn tiles(&self, pool_size: usize) -> Vec<TileKey> {
        let mut out = Vec::new();
        for ky in 0..self.kernel_h {
            for kx in 0..self.kernel_w {
                for channel_tile in 0..self.channel_tiles() {
                    for filter_tile in 0..self.filter_tiles(pool_size) {
                        out.push(TileKey { ky, kx, channel_tile, filter_tile });
                    }
                }
            }
        }
        out
    }

    /// Vector ids occupying each of the `pool_size` slots of a tile; `None`
    /// marks padding slots past the last filter.
    pub fn tile_vectors(&self, key: TileKey, pool_size: usize) -> Vec<Option<usize>> {
        (0..pool_size)
            .map(|slot| {
                let filter = key.filter_tile * pool_size + slot;
                (filter < self.c_out).then(|| self.vector_index(key.ky, key.kx, filter, key.channel_tile))
            })
            .collect()
    }

    /// Position of vector `v` inside its tile, which fixes its pool group.
    pub fn tile_slot(&self, v: usize, pool_size: usize) -> usize {
        self.origin(v).filter % pool_size
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PackedLayer {
    pub geometry: LayerGeometry,
    /// `n_vectors × vector_size`, row-major.
    pub vectors: Vec<f64>,
}

impl PackedLayer {
    pub fn n_vectors(&self) -> usize {
        self.geometry.n_vectors()
    }

    pub fn vector(&self, v: usize) -> &[f64] {
        let n = self.geometry.vector_size;
        &self.vectors[v * n..(v + 1) * n]
    }

    /// Mean |w| over the real weights (padding excluded).
    pub fn mean_abs_weight(&self) -> f64 {
        let sum: f64 = self.vectors.iter().map(|w| w.abs()).sum();
        sum / self.geometry.weight_count() as f64
    }
}

pub fn pack_layer(layer: &LayerSpec, weights: &TensorRecord, vector_size: usize) -> Result<PackedLayer, CompressError> {
    let expected = layer.weight_shape().ok_or_else(|| {
        CompressError::ShapeMismatch(format!("{} layer `{}` has no weights to pack", layer.kind, layer.name))
    })?;
    if weights.shape != expected || weights.dtype != DType::Float32 {
        return Err(CompressError::ShapeMismatch(format!(
            "tensor `{}` is {} {:?}, layer `{}` needs float32 {:?}",
            weights.name, weights.dtype, weights.shape, layer.name, expected
        )));
    }
    if vector_size == 0 {
        return Err(CompressError::InvalidConfig("vector_size must be positive".into()));
    }
    let geometry = LayerGeometry::from_spec(layer, vector_size);
    let values = weights.to_f32();
    let mut vectors = vec![0.0f64; geometry.n_vectors() * vector_size];
    for (v, chunk) in vectors.chunks_exact_mut(vector_size).enumerate() {
        let o = geometry.origin(v);
        let base = o.channel_tile * vector_size;
        for (k, slot) in chunk.iter_mut().take(geometry.valid_len(o.channel_tile)).enumerate() {
            *slot = values[geometry.weight_offset(o.filter, base + k, o.ky, o.kx)] as f64;
        }
    }
    Ok(PackedLayer { geometry, vectors })
}
