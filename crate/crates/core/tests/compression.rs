mod common;

use cimpool::fixtures::with_random_weights;
use cimpool::interchange::{LayerPayload, LayerSpec, ModelManifest};
use cimpool::weightpool::{
    compress_model, compression_stats, compute_error, generate_pool, pack_layer, reconstruct_weights, CompressedLayer,
};
use cimpool::{ModelBundle, PoolConfig, Sparsity};
use common::random_layer;

fn only_layer(bundle: &ModelBundle, config: &PoolConfig) -> CompressedLayer {
    match compress_model(bundle, config).unwrap().layers.remove(0) {
        LayerPayload::Compressed(cl) => cl,
        LayerPayload::Exempt(_) => panic!("expected a compressed layer"),
    }
}

fn original(bundle: &ModelBundle) -> Vec<f64> {
    let name = bundle.manifest.layers[0].weight.clone().unwrap();
    bundle.tensor(&name).unwrap().to_f32().into_iter().map(f64::from).collect()
}

fn sq_residual(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[test]
fn stats_match_closed_form() {
    for s in Sparsity::ALL {
        for gs in [8usize, 16, 32, 64, 128] {
            let config = PoolConfig { sparsity: s, group_size: gs, ..Default::default() };
            let stats = compression_stats(&config);
            let index = (gs as f64).log2().ceil() as usize;
            let kept = (128.0 * (1.0 - s.fraction())).round() as usize;
            assert_eq!(stats.bits_per_vector, index + kept);
            assert!((stats.compression_ratio_vs_8bit - 1024.0 / (index + kept) as f64).abs() < 1e-12);
        }
    }
}

#[test]
fn mse_identity_dense_error() {
    for seed in 0..50u64 {
        let layer = random_layer(seed, 300);
        let config = PoolConfig { sparsity: Sparsity::Dense, seed, ..Default::default() };
        let cl = only_layer(&layer.bundle, &config);
        let pool = generate_pool(&config);
        let w = original(&layer.bundle);
        let mut pool_only = cl.clone();
        pool_only.scales.mav_e = 0.0;
        let before = sq_residual(&w, &reconstruct_weights(&pool_only, &pool));
        let after = sq_residual(&w, &reconstruct_weights(&cl, &pool));
        let n = w.len() as f64;
        let expected = n * (cl.scales.mav_e as f64).powi(2);
        let rel = ((before - after) - expected).abs() / expected;
        assert!(rel < 1e-5, "seed {seed}: reduction {} vs {expected} (rel {rel})", before - after);
    }
}

#[test]
fn residual_mse_is_monotone_in_sparsity() {
    // every channel tile needs at least 8 real channels for the strides to differ
    let mut seed = 500u64;
    let mut checked = 0;
    while checked < 10 {
        seed += 1;
        let layer = random_layer(seed, 256);
        if layer.spec.c_in < 16 {
            continue;
        }
        checked += 1;
        let w = original(&layer.bundle);
        let mse: Vec<f64> = [Sparsity::SevenEighths, Sparsity::ThreeQuarters, Sparsity::Half, Sparsity::Dense]
            .into_iter()
            .map(|sparsity| {
                let config = PoolConfig { sparsity, seed, ..Default::default() };
                let cl = only_layer(&layer.bundle, &config);
                sq_residual(&w, &reconstruct_weights(&cl, &generate_pool(&config))) / w.len() as f64
            })
            .collect();
        assert!(mse.windows(2).all(|p| p[0] > p[1]), "seed {seed}: {mse:?}");
    }
}

#[test]
fn reconstruction_identity_holds_before_quantization() {
    let layer = random_layer(77, 200);
    let config = PoolConfig::default();
    let cl = only_layer(&layer.bundle, &config);
    let pool = generate_pool(&config);
    let packed = pack_layer(&layer.spec, layer.bundle.tensor(layer.spec.weight.as_deref().unwrap()).unwrap(), 128).unwrap();
    let e = compute_error(&packed, &pool, &cl.indices, &cl.scales);
    for v in 0..packed.n_vectors() {
        let row = pool.row(cl.pool_row(v));
        for (k, &x) in packed.vector(v).iter().enumerate() {
            let rebuilt = cl.scales.mav_w as f64 * row[k] as f64 + e.vector(v)[k];
            assert!((rebuilt - x).abs() < 1e-6);
        }
    }
}

#[test]
fn zero_padding_is_neutral() {
    // c_in = 64 leaves half of every vector as padding
    let manifest = ModelManifest::new(vec![64, 4, 4], vec![LayerSpec::conv2d("c", 64, 128, 3, 1, 1)]);
    let bundle = with_random_weights(manifest, 21);
    let config = PoolConfig { sparsity: Sparsity::Dense, ..Default::default() };
    let cl = only_layer(&bundle, &config);
    let w = original(&bundle);

    let mav_w = w.iter().map(|x| x.abs()).sum::<f64>() / w.len() as f64;
    assert!((cl.scales.mav_w as f64 - mav_w).abs() <= 1e-6 * mav_w);

    // mav_e over the real weights only
    let pool = generate_pool(&config);
    let mut pool_only = cl.clone();
    pool_only.scales.mav_e = 0.0;
    let approx = reconstruct_weights(&pool_only, &pool);
    let mav_e = w.iter().zip(&approx).map(|(a, b)| (a - b).abs()).sum::<f64>() / w.len() as f64;
    assert!((cl.scales.mav_e as f64 - mav_e).abs() <= 1e-6 * mav_e);

    // the padded channels never enter the reconstructed weights
    assert_eq!(reconstruct_weights(&cl, &pool).len(), 64 * 128 * 9);

    let sched = cimpool::mapper::build_schedule(&compress_model(&bundle, &config).unwrap()).unwrap();
    for tile in &sched.layers[0].tiles {
        assert_eq!(tile.zero_fed_rows(128), 64..128);
    }
}

#[test]
fn scale_s_multiplies_error_contribution() {
    let layer = random_layer(3, 128);
    let pool = generate_pool(&PoolConfig::default());
    let a = only_layer(&layer.bundle, &PoolConfig::default());
    let b = only_layer(&layer.bundle, &PoolConfig { error_scale: 2.0, ..Default::default() });
    assert_eq!(a.indices, b.indices);
    assert_eq!(a.error_plane, b.error_plane);
    let mut pool_only = a.clone();
    pool_only.scales.mav_e = 0.0;
    let base = reconstruct_weights(&pool_only, &pool);
    let ra = reconstruct_weights(&a, &pool);
    let rb = reconstruct_weights(&b, &pool);
    for i in 0..base.len() {
        assert!(((rb[i] - base[i]) - 2.0 * (ra[i] - base[i])).abs() < 1e-9);
    }
}
