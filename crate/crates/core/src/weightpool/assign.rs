//! Greedy non-repeating assignment of a tile's vectors to pool rows.

use super::{CompressError, ScaleSet, WeightPool};

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Assigns the `pool_size` vectors of one tile. Vector `i` may only use rows
/// of group `i / group_size`; inside a group, vectors are visited in order and
/// each takes the unused row closest (squared Euclidean) to it after scaling
/// the row by `mav_w`. Ties go to the lowest row. Returns group-local indices.
pub fn assign_tile(vectors: &[&[f64]], pool: &WeightPool, scales: &ScaleSet) -> Result<Vec<u16>, CompressError> {
    if vectors.len() != pool.pool_size() {
        return Err(CompressError::TileSize { expected: pool.pool_size(), found: vectors.len() });
    }
    if let Some(v) = vectors.iter().find(|v| v.len() != pool.vector_size()) {
        return Err(CompressError::ShapeMismatch(format!(
            "vector of length {} in a pool of vector size {}",
            v.len(),
            pool.vector_size()
        )));
    }
    let gs = pool.group_size();
    let mut out = Vec::with_capacity(vectors.len());
    for (g, group) in vectors.chunks(gs).enumerate() {
        let rows: Vec<Vec<f64>> = pool.group_rows(g).map(|r| pool.scaled_row(r, scales.pool_scale())).collect();
        let mut used = vec![false; gs];
        for v in group {
            let mut best: Option<(usize, f64)> = None;
            for (j, row) in rows.iter().enumerate() {
                if used[j] {
                    continue;
                }
                let d = squared_distance(v, row);
                if best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((j, d));
                }
            }
            let (j, _) = best.expect("a group never has more vectors than rows");
            used[j] = true;
            out.push(j as u16);
        }
    }
    Ok(out)
}

/// Total squared distance of an assignment (group-local indices).
pub fn assignment_cost(vectors: &[&[f64]], pool: &WeightPool, scales: &ScaleSet, indices: &[u16]) -> f64 {
    let gs = pool.group_size();
    vectors
        .iter()
        .zip(indices)
        .enumerate()
        .map(|(i, (v, &idx))| {
            let row = (i / gs) * gs + idx as usize;
            squared_distance(v, &pool.scaled_row(row, scales.pool_scale()))
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weightpool::{generate_pool, PoolConfig};

    fn scales(mav_w: f32) -> ScaleSet {
        ScaleSet { mav_w, mav_e: 0.0, s: 1.0 }
    }

    /// Finds a 2-row, 2-element pool with rows [+1,+1] and [+1,-1].
    fn two_row_pool() -> (WeightPool, [usize; 2]) {
        for seed in 0..1000 {
            let pool = generate_pool(&PoolConfig { vector_size: 2, pool_size: 2, group_size: 2, seed, ..Default::default() });
            if pool.row(0) == vec![1, 1] && pool.row(1) == vec![1, -1] {
                return (pool, [0, 1]);
            }
            if pool.row(1) == vec![1, 1] && pool.row(0) == vec![1, -1] {
                return (pool, [1, 0]);
            }
        }
        panic!("no seed produced the fixture pool");
    }

    #[test]
    fn second_vector_is_forced_to_remaining_row() {
        let (pool, [p0, p1]) = two_row_pool();
        let w0 = [0.9, 0.8];
        let w1 = [1.0, 0.7];
        let idx = assign_tile(&[&w0, &w1], &pool, &scales(1.0)).unwrap();
        assert_eq!(idx, vec![p0 as u16, p1 as u16]);
    }

    #[test]
    fn identical_vectors_still_biject() {
        let pool = generate_pool(&PoolConfig::default());
        let v = vec![0.25; 128];
        let vectors: Vec<&[f64]> = (0..128).map(|_| v.as_slice()).collect();
        let idx = assign_tile(&vectors, &pool, &scales(0.25)).unwrap();
        for group in idx.chunks(32) {
            let mut sorted = group.to_vec();
            sorted.sort();
            assert_eq!(sorted, (0..32).collect::<Vec<u16>>());
        }
    }

    #[test]
    fn ties_pick_lowest_row() {
        let pool = generate_pool(&PoolConfig::default());
        let zero = vec![0.0; 128];
        let vectors: Vec<&[f64]> = (0..128).map(|_| zero.as_slice()).collect();
        let idx = assign_tile(&vectors, &pool, &scales(1.0)).unwrap();
        let expected: Vec<u16> = (0..4).flat_map(|_| 0..32).collect();
        assert_eq!(idx, expected);
    }

    #[test]
    fn wrong_tile_size() {
        let pool = generate_pool(&PoolConfig::default());
        let v = vec![0.0; 128];
        let err = assign_tile(&[v.as_slice()], &pool, &scales(1.0)).unwrap_err();
        assert!(matches!(err, CompressError::TileSize { expected: 128, found: 1 }));
    }
}
