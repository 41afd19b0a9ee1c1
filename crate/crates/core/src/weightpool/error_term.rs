//! Residual between original weights and their scaled pool rows, and its
//! 1-bit, structurally pruned form.

use super::{mean_abs, CompressError, PackedLayer, ScaleSet, Sparsity, WeightPool};

/// Real-valued residual `E`, one length-`V` row per packed vector.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorTerm {
    pub vector_size: usize,
    pub values: Vec<f64>,
    /// Leading real (non-padding) elements of each vector.
    pub valid_len: Vec<usize>,
}

impl ErrorTerm {
    /// Treats every element as real.
    pub fn from_values(vector_size: usize, values: Vec<f64>) -> Self {
        let n = values.len() / vector_size;
        Self { vector_size, values, valid_len: vec![vector_size; n] }
    }

    pub fn n_vectors(&self) -> usize {
        self.valid_len.len()
    }

    pub fn vector(&self, v: usize) -> &[f64] {
        &self.values[v * self.vector_size..(v + 1) * self.vector_size]
    }

    /// Mean |E| over real elements only.
    pub fn mean_abs(&self) -> f64 {
        mean_abs(
            self.valid_len
                .iter()
                .enumerate()
                .flat_map(|(v, &n)| self.values[v * self.vector_size..v * self.vector_size + n].iter()),
        )
    }
}

/// Sign bits at kept positions, `kept_per_vector` per vector, bit 1 ↦ +1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ErrorPlane {
    pub n_vectors: usize,
    pub kept_per_vector: usize,
    words: Vec<u64>,
}

impl ErrorPlane {
    pub fn new(n_vectors: usize, kept_per_vector: usize) -> Self {
        Self { n_vectors, kept_per_vector, words: vec![0; (n_vectors * kept_per_vector).div_ceil(64)] }
    }

    pub fn len_bits(&self) -> usize {
        self.n_vectors * self.kept_per_vector
    }

    /// Bit `j` of vector `v`, where `j` counts kept positions only.
    pub fn is_positive(&self, v: usize, j: usize) -> bool {
        let i = v * self.kept_per_vector + j;
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    pub fn sign(&self, v: usize, j: usize) -> i8 {
        if self.is_positive(v, j) {
            1
        } else {
            -1
        }
    }

    pub fn set(&mut self, v: usize, j: usize, positive: bool) {
        let i = v * self.kept_per_vector + j;
        if positive {
            self.words[i / 64] |= 1 << (i % 64);
        } else {
            self.words[i / 64] &= !(1 << (i % 64));
        }
    }
}

/// `E[v] = W[v] - mav_w * pool[row(v)]` at every position, padding included.
/// `indices` are group-local; the group comes from the vector's tile slot.
pub fn compute_error(packed: &PackedLayer, pool: &WeightPool, indices: &[u16], scales: &ScaleSet) -> ErrorTerm {
    let g = packed.geometry;
    let n = g.vector_size;
    let mut values = Vec::with_capacity(packed.vectors.len());
    let mut valid_len = Vec::with_capacity(packed.n_vectors());
    for (v, &idx) in indices.iter().enumerate() {
        let row = pool_row(g.tile_slot(v, pool.pool_size()), idx, pool.group_size());
        let w = packed.vector(v);
        values.extend((0..n).map(|k| w[k] - scales.pool_scale() * pool.sign(row, k) as f64));
        valid_len.push(g.valid_len(g.origin(v).channel_tile));
    }
    ErrorTerm { vector_size: n, values, valid_len }
}

pub(crate) fn pool_row(slot: usize, index: u16, group_size: usize) -> usize {
    (slot / group_size) * group_size + index as usize
}

/// Keeps the sign of `E` at positions `k % stride == 0` and returns the plane
/// with `mav_e`, the mean |E| over real elements before pruning.
pub fn quantize_and_prune_error(e: &ErrorTerm, sparsity: Sparsity) -> Result<(ErrorPlane, f64), CompressError> {
    if let Some(stride) = sparsity.keep_stride() {
        if !e.vector_size.is_multiple_of(stride) {
            return Err(CompressError::UnsupportedSparsity(sparsity.fraction()));
        }
    }
    let kept = sparsity.kept_count(e.vector_size);
    let mut plane = ErrorPlane::new(e.n_vectors(), kept);
    if let Some(stride) = sparsity.keep_stride() {
        for v in 0..e.n_vectors() {
            for (j, &x) in e.vector(v).iter().step_by(stride).enumerate() {
                plane.set(v, j, x >= 0.0);
            }
        }
    }
    Ok((plane, e.mean_abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_quantization() {
        let e = ErrorTerm::from_values(4, vec![0.3, -0.1, 0.2, -0.4]);
        let (plane, mav_e) = quantize_and_prune_error(&e, Sparsity::Dense).unwrap();
        assert!((mav_e - 0.25).abs() < 1e-12);
        let signs: Vec<i8> = (0..4).map(|j| plane.sign(0, j)).collect();
        assert_eq!(signs, vec![1, -1, 1, -1]);
    }

    #[test]
    fn kept_positions_follow_stride() {
        let e = ErrorTerm::from_values(8, vec![-1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0]);
        let (half, _) = quantize_and_prune_error(&e, Sparsity::Half).unwrap();
        assert_eq!(half.kept_per_vector, 4);
        assert!((0..4).all(|j| half.sign(0, j) == -1));
        let (quarter, _) = quantize_and_prune_error(&e, Sparsity::ThreeQuarters).unwrap();
        assert_eq!(quarter.kept_per_vector, 2);
        let (none, mav) = quantize_and_prune_error(&e, Sparsity::Full).unwrap();
        assert_eq!(none.len_bits(), 0);
        assert_eq!(mav, 1.0);
    }

    #[test]
    fn zero_residual_is_positive() {
        let e = ErrorTerm::from_values(2, vec![0.0, -0.0]);
        let (plane, _) = quantize_and_prune_error(&e, Sparsity::Dense).unwrap();
        assert_eq!((plane.sign(0, 0), plane.sign(0, 1)), (1, 1));
    }

    #[test]
    fn stride_must_divide_vector() {
        let e = ErrorTerm::from_values(4, vec![0.0; 4]);
        assert!(quantize_and_prune_error(&e, Sparsity::SevenEighths).is_err());
    }

    #[test]
    fn padding_excluded_from_mav() {
        let e = ErrorTerm { vector_size: 4, values: vec![1.0, 1.0, 9.0, 9.0], valid_len: vec![2] };
        assert_eq!(e.mean_abs(), 1.0);
    }
}
