//! Deterministic desk-scale models and inputs, plus full-size ResNet
//! manifests for analytic cost estimates.

use rand::Rng;

use crate::interchange::{LayerKind, LayerSpec, ModelBundle, ModelManifest, TensorRecord};
use crate::rng;

/// `128 → 256 (relu) → 10` multilayer perceptron.
pub fn toy_mlp_manifest() -> ModelManifest {
    ModelManifest::new(
        vec![128],
        vec![
            LayerSpec::dense("fc1", 128, 256).with_bias().with_relu(),
            LayerSpec::dense("fc2", 256, 10).with_bias(),
        ],
    )
}

/// Small residual CNN on `64×8×8` inputs. The first conv has 64 input
/// channels, so half of every pool-array row block is zero-fed.
pub fn tiny_cnn_manifest() -> ModelManifest {
    ModelManifest::new(
        vec![64, 8, 8],
        vec![
            LayerSpec::conv2d("conv1", 64, 128, 3, 1, 1).with_relu(),
            LayerSpec::conv2d("conv2", 128, 256, 3, 2, 1).with_relu(),
            LayerSpec::conv2d("conv3", 256, 256, 3, 1, 1).with_relu(),
            LayerSpec::conv2d("conv4", 256, 256, 3, 1, 1),
            LayerSpec::add("res", "conv4", "conv2", 256).with_relu(),
            LayerSpec::global_avg_pool("gap", 256),
            LayerSpec::dense("fc", 256, 10).with_bias(),
        ],
    )
}

/// ResNet-18 or ResNet-34 (basic blocks) for `hw × hw` RGB inputs.
pub fn resnet_manifest(depth: usize, classes: usize, hw: usize) -> Option<ModelManifest> {
    let blocks: [usize; 4] = match depth {
        18 => [2, 2, 2, 2],
        34 => [3, 4, 6, 3],
        _ => return None,
    };
    let mut layers = vec![
        LayerSpec::conv2d("conv1", 3, 64, 7, 2, 3).with_relu(),
        LayerSpec::max_pool("maxpool", 64, 3, 2, 1),
    ];
    let mut prev = "maxpool".to_string();
    let mut c_in = 64;
    for (stage, &n) in blocks.iter().enumerate() {
        let c_out = 64 << stage;
        for b in 0..n {
            let stride = if stage > 0 && b == 0 { 2 } else { 1 };
            let p = format!("layer{}.{}", stage + 1, b);
            layers.push(LayerSpec::conv2d(&format!("{p}.conv1"), c_in, c_out, 3, stride, 1).with_relu().with_input(&prev));
            layers.push(LayerSpec::conv2d(&format!("{p}.conv2"), c_out, c_out, 3, 1, 1));
            let shortcut = if stride != 1 || c_in != c_out {
                let name = format!("{p}.downsample");
                layers.push(LayerSpec::conv2d(&name, c_in, c_out, 1, stride, 0).with_input(&prev));
                name
            } else {
                prev.clone()
            };
            let add = format!("{p}.add");
            layers.push(LayerSpec::add(&add, &format!("{p}.conv2"), &shortcut, c_out).with_relu());
            prev = add;
            c_in = c_out;
        }
    }
    layers.push(LayerSpec::global_avg_pool("avgpool", 512).with_input(&prev));
    layers.push(LayerSpec::dense("fc", 512, classes).with_bias());
    Some(ModelManifest::new(vec![3, hw, hw], layers))
}

/// Fills every conv/dense layer with uniform weights in `±sqrt(3 / fan_in)`
/// and small uniform biases.
pub fn with_random_weights(manifest: ModelManifest, seed: u64) -> ModelBundle {
    let mut tensors = Vec::new();
    for (i, layer) in manifest.layers.iter().enumerate() {
        if !matches!(layer.kind, LayerKind::Conv2d | LayerKind::Dense) {
            continue;
        }
        let mut r = rng::split(seed, i as u64);
        let shape = layer.weight_shape().expect("weighted layer");
        let fan_in = (layer.c_in * layer.kernel_h * layer.kernel_w) as f32;
        let bound = (3.0 / fan_in).sqrt();
        let w: Vec<f32> = (0..layer.weight_count()).map(|_| r.gen_range(-bound..bound)).collect();
        tensors.push(TensorRecord::from_f32(layer.weight.clone().expect("weighted layer"), shape, &w).expect("valid shape"));
        if let Some(bias) = &layer.bias {
            let b: Vec<f32> = (0..layer.c_out).map(|_| r.gen_range(-0.05..0.05)).collect();
            tensors.push(TensorRecord::from_f32(bias.clone(), vec![layer.c_out], &b).expect("valid shape"));
        }
    }
    ModelBundle::new(manifest, tensors)
}

/// Non-negative input in `[0, 1)`.
pub fn random_input(numel: usize, seed: u64) -> Vec<f32> {
    let mut r = rng::seeded(seed);
    (0..numel).map(|_| r.gen_range(0.0..1.0)).collect()
}

pub fn toy_mlp(seed: u64) -> ModelBundle {
    with_random_weights(toy_mlp_manifest(), seed)
}

pub fn tiny_cnn(seed: u64) -> ModelBundle {
    with_random_weights(tiny_cnn_manifest(), seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interchange::infer_shapes;

    #[test]
    fn fixtures_validate() {
        assert!(toy_mlp(0).validate().is_empty());
        assert!(tiny_cnn(0).validate().is_empty());
        for depth in [18, 34] {
            let m = resnet_manifest(depth, 1000, 224).unwrap();
            let v = crate::interchange::validate_manifest(&m);
            // weights are not materialised, only shape checks apply
            assert!(v.iter().all(|v| matches!(v, crate::interchange::Violation::MissingTensor { .. })), "{v:?}");
            assert!(infer_shapes(&m).is_ok());
        }
        assert!(resnet_manifest(50, 10, 32).is_none());
    }

    #[test]
    fn resnet_parameter_counts() {
        // torchvision reference counts, minus batch-norm parameters
        let r18 = resnet_manifest(18, 1000, 224).unwrap();
        let convs_fc: usize = r18.layers.iter().map(|l| l.weight_count()).sum();
        assert_eq!(convs_fc, 11_678_912);
        let r34 = resnet_manifest(34, 1000, 224).unwrap();
        assert_eq!(r34.layers.iter().map(|l| l.weight_count()).sum::<usize>(), 21_779_648);
    }

    #[test]
    fn seeds_change_weights_not_shapes() {
        let (a, b) = (tiny_cnn(1), tiny_cnn(2));
        assert_eq!(a.manifest, b.manifest);
        assert_ne!(a.tensors, b.tensors);
        assert_eq!(tiny_cnn(1), a);
    }
}
