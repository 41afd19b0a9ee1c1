//! Float implementations: the dense oracle for conv/dense layers and the
//! digital path for adds and pooling.

use super::ExecError;
use crate::interchange::{FeatureShape, LayerKind, LayerSpec};

fn shape_err(spec: &LayerSpec, reason: String) -> ExecError {
    ExecError::Shape { layer: spec.name.clone(), reason }
}

pub(crate) fn out_extent(size: usize, kernel: usize, stride: usize, padding: usize) -> usize {
    (size + 2 * padding - kernel) / stride + 1
}

/// Direct convolution (or matmul for dense) of a float activation with
/// weights in `(c_out, c_in, kh, kw)` order.
pub fn run_layer_reference(
    spec: &LayerSpec,
    in_shape: FeatureShape,
    input: &[f64],
    weights: &[f64],
    bias: Option<&[f32]>,
) -> Result<Vec<f64>, ExecError> {
    if input.len() != in_shape.numel() {
        return Err(shape_err(spec, format!("input has {} values for shape {:?}", input.len(), in_shape)));
    }
    if weights.len() != spec.weight_count() {
        return Err(shape_err(spec, format!("{} weights, expected {}", weights.len(), spec.weight_count())));
    }
    if bias.is_some_and(|b| b.len() != spec.c_out) {
        return Err(shape_err(spec, "bias length differs from c_out".into()));
    }
    let bias_of = |f: usize| bias.map_or(0.0, |b| b[f] as f64);
    match spec.kind {
        LayerKind::Dense => {
            if in_shape.numel() != spec.c_in {
                return Err(shape_err(spec, format!("dense input has {} features", in_shape.numel())));
            }
            Ok((0..spec.c_out)
                .map(|f| {
                    let row = &weights[f * spec.c_in..(f + 1) * spec.c_in];
                    row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + bias_of(f)
                })
                .collect())
        }
        LayerKind::Conv2d => {
            if in_shape.c != spec.c_in {
                return Err(shape_err(spec, format!("input has {} channels", in_shape.c)));
            }
            let (kh, kw, s, p) = (spec.kernel_h, spec.kernel_w, spec.stride, spec.padding);
            let oh = out_extent(in_shape.h, kh, s, p);
            let ow = out_extent(in_shape.w, kw, s, p);
            let mut out = vec![0.0; spec.c_out * oh * ow];
            for f in 0..spec.c_out {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = bias_of(f);
                        for c in 0..spec.c_in {
                            for ky in 0..kh {
                                let iy = (oy * s + ky) as isize - p as isize;
                                if iy < 0 || iy >= in_shape.h as isize {
                                    continue;
                                }
                                for kx in 0..kw {
                                    let ix = (ox * s + kx) as isize - p as isize;
                                    if ix < 0 || ix >= in_shape.w as isize {
                                        continue;
                                    }
                                    let x = input[(c * in_shape.h + iy as usize) * in_shape.w + ix as usize];
                                    acc += x * weights[((f * spec.c_in + c) * kh + ky) * kw + kx];
                                }
                            }
                        }
                        out[(f * oh + oy) * ow + ox] = acc;
                    }
                }
            }
            Ok(out)
        }
        kind => Err(ExecError::Unsupported { layer: spec.name.clone(), reason: format!("{kind} has no weights") }),
    }
}

/// Add and pooling layers, evaluated on dequantized floats. Average pooling
/// counts zero padding in its divisor.
pub fn run_digital_layer(spec: &LayerSpec, inputs: &[(&[f64], FeatureShape)]) -> Result<Vec<f64>, ExecError> {
    match (spec.kind, inputs) {
        (LayerKind::Add, [(a, sa), (b, sb)]) => {
            if sa != sb || a.len() != b.len() {
                return Err(shape_err(spec, format!("add operands {sa:?} and {sb:?} differ")));
            }
            Ok(a.iter().zip(*b).map(|(x, y)| x + y).collect())
        }
        (LayerKind::GlobalAvgPool, [(x, s)]) => {
            let hw = s.h * s.w;
            Ok((0..s.c).map(|c| x[c * hw..(c + 1) * hw].iter().sum::<f64>() / hw as f64).collect())
        }
        (LayerKind::MaxPool | LayerKind::AvgPool, [(x, s)]) => {
            let (k_h, k_w, st, p) = (spec.kernel_h, spec.kernel_w, spec.stride, spec.padding);
            let oh = out_extent(s.h, k_h, st, p);
            let ow = out_extent(s.w, k_w, st, p);
            let mut out = Vec::with_capacity(s.c * oh * ow);
            for c in 0..s.c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut max = f64::NEG_INFINITY;
                        let mut sum = 0.0;
                        for ky in 0..k_h {
                            for kx in 0..k_w {
                                let iy = (oy * st + ky) as isize - p as isize;
                                let ix = (ox * st + kx) as isize - p as isize;
                                if iy >= 0 && ix >= 0 && (iy as usize) < s.h && (ix as usize) < s.w {
                                    let v = x[(c * s.h + iy as usize) * s.w + ix as usize];
                                    max = max.max(v);
                                    sum += v;
                                }
                            }
                        }
                        out.push(match spec.kind {
                            LayerKind::MaxPool if max.is_finite() => max,
                            LayerKind::MaxPool => 0.0,
                            _ => sum / (k_h * k_w) as f64,
                        });
                    }
                }
            }
            Ok(out)
        }
        (kind, _) => Err(ExecError::Unsupported {
            layer: spec.name.clone(),
            reason: format!("{kind} with {} inputs is not a digital layer", inputs.len()),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_pointwise_conv() {
        let spec = LayerSpec::conv2d("c", 3, 3, 1, 1, 0);
        let mut w = vec![0.0; 9];
        for i in 0..3 {
            w[i * 3 + i] = 1.0;
        }
        let x: Vec<f64> = (0..3 * 4 * 4).map(|i| i as f64).collect();
        assert_eq!(run_layer_reference(&spec, FeatureShape::new(3, 4, 4), &x, &w, None).unwrap(), x);
    }

    #[test]
    fn zero_dense() {
        let spec = LayerSpec::dense("d", 4, 2);
        let out = run_layer_reference(&spec, FeatureShape::new(4, 1, 1), &[1.0, 2.0, 3.0, 4.0], &[0.0; 8], None).unwrap();
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn pools() {
        let s = FeatureShape::new(1, 2, 2);
        let x = [1.0, 2.0, 3.0, 4.0];
        let max = LayerSpec::max_pool("m", 1, 2, 2, 0);
        assert_eq!(run_digital_layer(&max, &[(&x, s)]).unwrap(), vec![4.0]);
        let avg = LayerSpec::avg_pool("a", 1, 3, 1, 1);
        assert_eq!(run_digital_layer(&avg, &[(&x, s)]).unwrap(), vec![10.0 / 9.0; 4]);
        let gap = LayerSpec::global_avg_pool("g", 1);
        assert_eq!(run_digital_layer(&gap, &[(&x, s)]).unwrap(), vec![2.5]);
        let add = LayerSpec::add("s", "a", "b", 1);
        assert_eq!(run_digital_layer(&add, &[(&x, s), (&x, s)]).unwrap(), vec![2.0, 4.0, 6.0, 8.0]);
    }
}
