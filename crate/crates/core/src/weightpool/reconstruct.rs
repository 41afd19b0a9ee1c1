use super::{CompressedLayer, WeightPool};

/// Packed reconstruction: `n_vectors × V`, padding positions included.
pub fn reconstruct(cl: &CompressedLayer, pool: &WeightPool) -> Vec<f64> {
    let n = cl.geometry.vector_size;
    let stride = cl.sparsity.keep_stride();
    let a = cl.scales.pool_scale();
    let b = cl.scales.error_magnitude();
    let mut out = Vec::with_capacity(cl.indices.len() * n);
    for v in 0..cl.indices.len() {
        let row = cl.pool_row(v);
        for k in 0..n {
            let mut w = a * pool.sign(row, k) as f64;
            if let Some(s) = stride {
                if k % s == 0 {
                    w += b * cl.error_plane.sign(v, k / s) as f64;
                }
            }
            out.push(w);
        }
    }
    out
}

/// Reconstruction in the original tensor layout (`(c_out, c_in, kh, kw)`).
pub fn reconstruct_weights(cl: &CompressedLayer, pool: &WeightPool) -> Vec<f64> {
    let g = cl.geometry;
    let packed = reconstruct(cl, pool);
    let mut out = vec![0.0; g.weight_count()];
    for v in 0..g.n_vectors() {
        let o = g.origin(v);
        for k in 0..g.valid_len(o.channel_tile) {
            out[g.weight_offset(o.filter, o.channel_tile * g.vector_size + k, o.ky, o.kx)] = packed[v * g.vector_size + k];
        }
    }
    out
}

