//! Independent oracles and generators shared by the integration tests.
#![allow(dead_code)]

use cimpool::fixtures::with_random_weights;
use cimpool::interchange::{LayerKind, LayerSpec, ModelBundle, ModelManifest};
use rand::Rng;
use rand_xoshiro::rand_core::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

pub fn rng(seed: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

/// Minimum-cost perfect matching of a square cost matrix (Kuhn-Munkres with
/// potentials). Returns `row -> column` and the optimal total.
pub fn hungarian(cost: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let n = cost.len();
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[p[j] - 1] = j - 1;
    }
    let total = (0..n).map(|i| cost[i][assignment[i]]).sum();
    (assignment, total)
}

/// Brute-force minimum over all permutations, for small `n`.
pub fn brute_force_assignment(cost: &[Vec<f64>]) -> f64 {
    fn go(cost: &[Vec<f64>], row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
        if row == cost.len() {
            *best = best.min(acc);
            return;
        }
        for j in 0..cost.len() {
            if !used[j] {
                used[j] = true;
                go(cost, row + 1, used, acc + cost[row][j], best);
                used[j] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    go(cost, 0, &mut vec![false; cost.len()], 0.0, &mut best);
    best
}

/// Direct nested-loop convolution over a `(c, h, w)` input with
/// `(c_out, c_in, kh, kw)` weights and zero padding.
#[allow(clippy::too_many_arguments)]
pub fn naive_conv(
    input: &[f64],
    (c_in, h, w): (usize, usize, usize),
    weights: &[f64],
    bias: Option<&[f32]>,
    c_out: usize,
    k: usize,
    stride: usize,
    pad: usize,
) -> Vec<f64> {
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (w + 2 * pad - k) / stride + 1;
    let mut out = vec![0.0; c_out * oh * ow];
    for f in 0..c_out {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = bias.map_or(0.0, |b| b[f] as f64);
                for c in 0..c_in {
                    for ky in 0..k {
                        for kx in 0..k {
                            let iy = (oy * stride + ky) as isize - pad as isize;
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                continue;
                            }
                            let x = input[(c * h + iy as usize) * w + ix as usize];
                            acc += x * weights[((f * c_in + c) * k + ky) * k + kx];
                        }
                    }
                }
                out[(f * oh + oy) * ow + ox] = acc;
            }
        }
    }
    out
}

pub fn naive_dense(input: &[f64], weights: &[f64], bias: Option<&[f32]>, c_out: usize) -> Vec<f64> {
    let c_in = input.len();
    (0..c_out)
        .map(|f| {
            let dot: f64 = (0..c_in).map(|c| input[c] * weights[f * c_in + c]).sum();
            dot + bias.map_or(0.0, |b| b[f] as f64)
        })
        .collect()
}

/// Quantizes a non-negative input the way the executor does: step
/// `max / (2^bits − 1)`, round to nearest.
pub fn quantize_input(input: &[f32], bits: u32) -> Vec<f64> {
    let max = input.iter().fold(0.0f64, |m, &v| m.max(v as f64));
    let step = if max > 0.0 { max / ((1u64 << bits) - 1) as f64 } else { 1.0 };
    input.iter().map(|&v| (v as f64 / step).round() * step).collect()
}

#[derive(Clone, Debug)]
pub struct RandomLayer {
    pub bundle: ModelBundle,
    pub spec: LayerSpec,
    /// `(c, h, w)` of the input.
    pub input_shape: (usize, usize, usize),
}

/// One conv or dense layer with dimensions up to `max_dim`.
pub fn random_layer(seed: u64, max_dim: usize) -> RandomLayer {
    let mut r = rng(seed);
    let c_in = r.gen_range(1..=max_dim);
    let c_out = r.gen_range(1..=max_dim);
    let (spec, shape) = if r.gen_bool(0.3) {
        let mut s = LayerSpec::dense("layer", c_in, c_out);
        if r.gen_bool(0.5) {
            s = s.with_bias();
        }
        (s, (c_in, 1, 1))
    } else {
        let k = [1, 3][r.gen_range(0..2)];
        let stride = r.gen_range(1..=2);
        let pad = if k == 3 { r.gen_range(0..=1) } else { 0 };
        let hw = r.gen_range(k.max(2)..=5);
        let mut s = LayerSpec::conv2d("layer", c_in, c_out, k, stride, pad);
        if r.gen_bool(0.5) {
            s = s.with_bias();
        }
        (s, (c_in, hw, hw))
    };
    let dims = if spec.kind == LayerKind::Dense { vec![shape.0] } else { vec![shape.0, shape.1, shape.2] };
    let manifest = ModelManifest::new(dims, vec![spec.clone()]);
    RandomLayer { bundle: with_random_weights(manifest, seed ^ 0x5eed), spec, input_shape: shape }
}

/// A network with 3 to 5 weighted layers: relu convs (optionally with a
/// residual branch and a pool), then global pooling and a dense classifier.
pub fn random_network(seed: u64) -> ModelBundle {
    let mut r = rng(seed);
    let c0 = r.gen_range(1..=64);
    let hw = r.gen_range(4..=8);
    let n_conv = r.gen_range(2..=3);
    let mut layers = Vec::new();
    let mut c = c0;
    for i in 0..n_conv {
        let c_out = r.gen_range(8..=192);
        let k = [1, 3][r.gen_range(0..2)];
        let mut s = LayerSpec::conv2d(&format!("conv{i}"), c, c_out, k, 1, k / 2).with_relu();
        if r.gen_bool(0.5) {
            s = s.with_bias();
        }
        layers.push(s);
        c = c_out;
    }
    if r.gen_bool(0.5) {
        let last = layers.last().unwrap().name.clone();
        layers.push(LayerSpec::conv2d("branch", c, c, 3, 1, 1).with_relu().with_input(&last));
        layers.push(LayerSpec::add("res", "branch", &last, c).with_relu());
    }
    if r.gen_bool(0.5) {
        layers.push(LayerSpec::max_pool("pool", c, 2, 2, 0));
    }
    layers.push(LayerSpec::global_avg_pool("gap", c));
    layers.push(LayerSpec::dense("fc", c, r.gen_range(2..=20)).with_bias());
    with_random_weights(ModelManifest::new(vec![c0, hw, hw], layers), seed ^ 0xabcd)
}
