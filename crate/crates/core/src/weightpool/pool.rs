use std::ops::Range;

use rand::RngCore;

use super::PoolConfig;
use crate::rng;

/// `pool_size` × `vector_size` matrix over {−1, +1}, bit 1 ↦ +1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WeightPool {
    vector_size: usize,
    pool_size: usize,
    group_size: usize,
    words_per_row: usize,
    bits: Vec<u64>,
}

/// Draws every cell from a SplitMix64 stream seeded with `config.seed`: rows
/// in order, `ceil(V/64)` words per row, cell `k` is bit `k % 64` of word
/// `k / 64`. Unused high bits of the last word are discarded.
pub fn generate_pool(config: &PoolConfig) -> WeightPool {
    let words_per_row = config.vector_size.div_ceil(64);
    let mut rng = rng::seeded(config.seed);
    let mut bits = Vec::with_capacity(words_per_row * config.pool_size);
    for _ in 0..config.pool_size {
        for w in 0..words_per_row {
            let mut word = rng.next_u64();
            let used = config.vector_size - w * 64;
            if used < 64 {
                word &= (1u64 << used) - 1;
            }
            bits.push(word);
        }
    }
    WeightPool {
        vector_size: config.vector_size,
        pool_size: config.pool_size,
        group_size: config.group_size,
        words_per_row,
        bits,
    }
}

impl WeightPool {
    pub fn vector_size(&self) -> usize {
        self.vector_size
    }

    pub fn pool_size(&self) -> usize {
        self.pool_size
    }

    pub fn group_size(&self) -> usize {
        self.group_size
    }

    pub fn num_groups(&self) -> usize {
        self.pool_size / self.group_size
    }

    pub fn group_rows(&self, group: usize) -> Range<usize> {
        group * self.group_size..(group + 1) * self.group_size
    }

    pub fn is_positive(&self, row: usize, k: usize) -> bool {
        (self.bits[row * self.words_per_row + k / 64] >> (k % 64)) & 1 == 1
    }

    pub fn sign(&self, row: usize, k: usize) -> i8 {
        if self.is_positive(row, k) {
            1
        } else {
            -1
        }
    }

    pub fn row(&self, row: usize) -> Vec<i8> {
        (0..self.vector_size).map(|k| self.sign(row, k)).collect()
    }

    /// `scale * row`, as used by the distance and error computations.
    pub fn scaled_row(&self, row: usize, scale: f64) -> Vec<f64> {
        (0..self.vector_size).map(|k| scale * self.sign(row, k) as f64).collect()
    }

    pub fn positive_fraction(&self) -> f64 {
        let ones: u32 = self.bits.iter().map(|w| w.count_ones()).sum();
        ones as f64 / (self.vector_size * self.pool_size) as f64
    }

    /// Cell layout for the pool CIM array: `vector_size` rows (input
    /// channels) × `pool_size` columns (pool vectors), row-major.
    pub fn array_cells(&self) -> Vec<i8> {
        let mut cells = Vec::with_capacity(self.vector_size * self.pool_size);
        for k in 0..self.vector_size {
            for row in 0..self.pool_size {
                cells.push(self.sign(row, k));
            }
        }
        cells
    }
}
