use serde::Serialize;

use super::PoolConfig;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CompressionStats {
    pub index_bits: u32,
    pub error_bits: usize,
    pub bits_per_vector: usize,
    /// Stored bits of an 8-bit baseline over stored CIMPool bits.
    pub compression_ratio_vs_8bit: f64,
}

pub fn compression_stats(config: &PoolConfig) -> CompressionStats {
    let index_bits = config.index_bits();
    let error_bits = config.sparsity.kept_count(config.vector_size);
    let bits_per_vector = index_bits as usize + error_bits;
    CompressionStats {
        index_bits,
        error_bits,
        bits_per_vector,
        compression_ratio_vs_8bit: (8 * config.vector_size) as f64 / bits_per_vector as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weightpool::Sparsity;

    #[test]
    fn table() {
        let expect = [
            (Sparsity::Dense, 133),
            (Sparsity::Half, 69),
            (Sparsity::ThreeQuarters, 37),
            (Sparsity::SevenEighths, 21),
            (Sparsity::Full, 5),
        ];
        for (sparsity, bits) in expect {
            let s = compression_stats(&PoolConfig { sparsity, ..Default::default() });
            assert_eq!(s.bits_per_vector, bits);
            assert_eq!(s.compression_ratio_vs_8bit, 1024.0 / bits as f64);
        }
    }
}
