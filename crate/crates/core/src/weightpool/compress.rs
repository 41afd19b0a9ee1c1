use rayon::prelude::*;

use super::error_term::pool_row;
use super::{
    assign_tile, compute_error, generate_pool, pack_layer, quantize_and_prune_error, CompressError, ErrorPlane,
    LayerGeometry, PoolConfig, ScaleSet, Sparsity, WeightPool,
};
use crate::interchange::{CompressedModelFile, ExemptLayer, LayerPayload, LayerSpec, ModelBundle, TensorRecord};

#[derive(Clone, Debug, PartialEq)]
pub struct CompressedLayer {
    pub name: String,
    pub geometry: LayerGeometry,
    pub pool_size: usize,
    pub group_size: usize,
    pub sparsity: Sparsity,
    /// Group-local pool index per packed vector.
    pub indices: Vec<u16>,
    pub error_plane: ErrorPlane,
    pub scales: ScaleSet,
    pub bias: Option<Vec<f32>>,
}

impl CompressedLayer {
    pub fn n_vectors(&self) -> usize {
        self.indices.len()
    }

    /// Absolute pool row assigned to vector `v`.
    pub fn pool_row(&self, v: usize) -> usize {
        pool_row(self.geometry.tile_slot(v, self.pool_size), self.indices[v], self.group_size)
    }

    pub fn kept_per_vector(&self) -> usize {
        self.error_plane.kept_per_vector
    }
}

/// Packs, assigns tile by tile, and quantizes the residual of one layer.
pub fn compress_layer(
    spec: &LayerSpec,
    weights: &TensorRecord,
    bias: Option<&TensorRecord>,
    pool: &WeightPool,
    config: &PoolConfig,
) -> Result<CompressedLayer, CompressError> {
    let run = || {
        let packed = pack_layer(spec, weights, config.vector_size)?;
        let g = packed.geometry;
        let mut scales = ScaleSet { mav_w: packed.mean_abs_weight() as f32, mav_e: 0.0, s: config.error_scale };

        let zero = vec![0.0; config.vector_size];
        let per_tile: Vec<(Vec<Option<usize>>, Vec<u16>)> = g
            .tiles(config.pool_size)
            .into_par_iter()
            .map(|key| {
                let slots = g.tile_vectors(key, config.pool_size);
                let vectors: Vec<&[f64]> =
                    slots.iter().map(|s| s.map_or(zero.as_slice(), |v| packed.vector(v))).collect();
                assign_tile(&vectors, pool, &scales).map(|idx| (slots, idx))
            })
            .collect::<Result<_, _>>()?;
        let mut indices = vec![0u16; g.n_vectors()];
        for (slots, idx) in per_tile {
            for (slot, i) in slots.into_iter().zip(idx) {
                if let Some(v) = slot {
                    indices[v] = i;
                }
            }
        }

        let error = compute_error(&packed, pool, &indices, &scales);
        let (error_plane, mav_e) = quantize_and_prune_error(&error, config.sparsity)?;
        scales.mav_e = mav_e as f32;
        Ok(CompressedLayer {
            name: spec.name.clone(),
            geometry: g,
            pool_size: config.pool_size,
            group_size: config.group_size,
            sparsity: config.sparsity,
            indices,
            error_plane,
            scales,
            bias: bias.map(|b| b.to_f32()),
        })
    };
    run().map_err(|e: CompressError| e.in_layer(&spec.name))
}

/// Compresses every conv/dense layer of a validated model. `config` replaces
/// the manifest's pool configuration in the echoed manifest.
pub fn compress_model(bundle: &ModelBundle, config: &PoolConfig) -> Result<CompressedModelFile, CompressError> {
    config.validate()?;
    let mut manifest = bundle.manifest.clone();
    manifest.pool_config = config.clone();
    let violations = crate::interchange::validate_manifest(&manifest);
    if !violations.is_empty() {
        return Err(crate::interchange::FormatError::Validation(violations).into());
    }
    if let Some(name) = config.exempt_layers.iter().find(|n| manifest.layer(n).is_none_or(|l| !l.kind.has_weights())) {
        return Err(CompressError::InvalidConfig(format!("exempt layer `{name}` is not a conv/dense layer")));
    }

    let pool = generate_pool(config);
    let tensor = |name: &Option<String>| -> Result<Option<&TensorRecord>, CompressError> {
        match name {
            None => Ok(None),
            Some(n) => bundle
                .tensor(n)
                .map(Some)
                .ok_or_else(|| CompressError::ShapeMismatch(format!("tensor `{n}` missing from bundle"))),
        }
    };
    let layers = manifest
        .layers
        .par_iter()
        .filter(|l| l.kind.has_weights())
        .map(|spec| {
            let weights = tensor(&spec.weight).map_err(|e| e.in_layer(&spec.name))?.expect("validated");
            let bias = tensor(&spec.bias).map_err(|e| e.in_layer(&spec.name))?;
            if config.is_exempt(&spec.name) {
                Ok(LayerPayload::Exempt(ExemptLayer {
                    name: spec.name.clone(),
                    weights: weights.to_f32(),
                    bias: bias.map(|b| b.to_f32()),
                }))
            } else {
                compress_layer(spec, weights, bias, &pool, config).map(LayerPayload::Compressed)
            }
        })
        .collect::<Result<Vec<_>, CompressError>>()?;
    Ok(CompressedModelFile { manifest, layers })
}
