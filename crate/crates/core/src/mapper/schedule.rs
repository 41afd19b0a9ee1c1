use super::ExecError;
use crate::interchange::{CompressedModelFile, LayerPayload};
use crate::scheduler::PermutationMap;
use crate::weightpool::{CompressedLayer, LayerGeometry, TileKey};

/// One weight-stationary array configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct Tile {
    pub key: TileKey,
    /// Pool column feeding each filter slot of this tile.
    pub map: PermutationMap,
    /// Packed vector of each filter slot; `None` past the last filter.
    pub vectors: Vec<Option<usize>>,
    /// Rows carrying real input channels; rows from here up to `V` are fed 0.
    pub active_rows: usize,
    /// Error array contents, `error_rows × P` row-major over ±1.
    pub error_cells: Vec<i8>,
    pub error_rows: usize,
}

impl Tile {
    /// Pool-array rows fed with zero because they lie past `c_in`.
    pub fn zero_fed_rows(&self, vector_size: usize) -> std::ops::Range<usize> {
        self.active_rows..vector_size
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerSchedule {
    pub layer: String,
    pub geometry: LayerGeometry,
    pub tiles: Vec<Tile>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TileSchedule {
    pub layers: Vec<LayerSchedule>,
}

impl TileSchedule {
    pub fn layer(&self, name: &str) -> Option<&LayerSchedule> {
        self.layers.iter().find(|l| l.layer == name)
    }

    pub fn tile_count(&self) -> usize {
        self.layers.iter().map(|l| l.tiles.len()).sum()
    }
}

/// Tiles of every compressed layer in weight-stationary order. Exempt layers
/// run digitally and get no tiles.
pub fn build_schedule(model: &CompressedModelFile) -> Result<TileSchedule, ExecError> {
    let layers = model
        .layers
        .iter()
        .filter_map(|l| match l {
            LayerPayload::Compressed(cl) => Some(build_layer(cl)),
            LayerPayload::Exempt(_) => None,
        })
        .collect::<Result<_, _>>()?;
    Ok(TileSchedule { layers })
}

pub(crate) fn build_layer(cl: &CompressedLayer) -> Result<LayerSchedule, ExecError> {
    let g = cl.geometry;
    let (p, gs) = (cl.pool_size, cl.group_size);
    if let Some(&index) = cl.indices.iter().find(|&&i| i as usize >= gs) {
        return Err(ExecError::IndexRange { layer: cl.name.clone(), index, group_size: gs });
    }
    let kept = cl.kept_per_vector();
    let tiles = g
        .tiles(p)
        .into_iter()
        .map(|key| {
            let vectors = g.tile_vectors(key, p);
            let mut col_of_filter = vec![usize::MAX; p];
            let mut used = vec![false; p];
            for (slot, v) in vectors.iter().enumerate() {
                if let Some(v) = *v {
                    let row = cl.pool_row(v);
                    if used[row] {
                        return Err(ExecError::Shape {
                            layer: cl.name.clone(),
                            reason: format!("pool row {row} assigned twice in tile {key:?}"),
                        });
                    }
                    used[row] = true;
                    col_of_filter[slot] = row;
                }
            }
            // padding slots take the lowest free rows of their group
            for (slot, v) in vectors.iter().enumerate() {
                if v.is_none() {
                    let group = slot / gs;
                    let row = (group * gs..(group + 1) * gs).find(|&r| !used[r]).expect("group has a free row");
                    used[row] = true;
                    col_of_filter[slot] = row;
                }
            }
            let map = PermutationMap::new(col_of_filter, p / gs)?;
            let mut error_cells = Vec::with_capacity(kept * p);
            for j in 0..kept {
                for v in &vectors {
                    error_cells.push(v.map_or(1, |v| cl.error_plane.sign(v, j)));
                }
            }
            Ok(Tile { key, map, active_rows: g.valid_len(key.channel_tile), vectors, error_cells, error_rows: kept })
        })
        .collect::<Result<_, ExecError>>()?;
    Ok(LayerSchedule { layer: cl.name.clone(), geometry: g, tiles })
}
