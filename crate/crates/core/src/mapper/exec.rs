use std::collections::HashMap;

use super::reference::out_extent;
use super::schedule::build_layer;
use super::{
    act_bytes, run_digital_layer, run_layer_reference, ExecError, ExecMode, ExecOptions, ExecutionTrace, LayerSchedule,
    LayerTrace,
};
use crate::cim_array::{AdcModel, AdcMode, BitSerialConfig, CimArray};
use crate::interchange::manifest::resolve_inputs;
use crate::interchange::{infer_shapes, CompressedModelFile, FeatureShape, FormatError, LayerKind, LayerPayload, LayerSpec};
use crate::scheduler::{PermutationUnit, SchedulerConfig};
use crate::weightpool::{generate_pool, reconstruct_weights, CompressedLayer, WeightPool};

/// The two arrays, the ADC and the permutation unit configuration.
#[derive(Clone, Debug)]
pub struct CimDatapath {
    pub pool_array: CimArray,
    pub error_array: CimArray,
    pub adc: AdcModel,
    pub bit_serial: BitSerialConfig,
    pub scheduler: SchedulerConfig,
    pub permute: bool,
}

impl CimDatapath {
    /// Builds the datapath and loads the pool array (its only load).
    pub fn new(pool: &WeightPool, act_bits: u32, adc: AdcModel, permute: bool) -> Result<Self, ExecError> {
        let bit_serial = BitSerialConfig { act_bits };
        bit_serial.validate()?;
        adc.validate()?;
        let (v, p) = (pool.vector_size(), pool.pool_size());
        let mut pool_array = CimArray::new(v, p);
        pool_array.load_weights(&pool.array_cells(), v)?;
        let scheduler =
            SchedulerConfig { pool_width: p, act_bits: act_bits as usize, groups: pool.num_groups(), out_bytes: 1 };
        if permute {
            crate::scheduler::buffer_geometry(&scheduler)?;
        }
        Ok(Self { pool_array, error_array: CimArray::new(v, p), adc, bit_serial, scheduler, permute })
    }
}

/// Runs one compressed conv/dense layer on the datapath.
///
/// `input` holds unsigned `A`-bit codes of an activation with step
/// `in_scale`. Per output element the result is
/// `in_scale · (mav_w · Σ pool dots + s · mav_e · Σ error dots) + bias`,
/// with both sums kept in checked 32-bit integers.
#[allow(clippy::too_many_arguments)]
pub fn run_layer_cim(
    dp: &mut CimDatapath,
    schedule: &LayerSchedule,
    cl: &CompressedLayer,
    spec: &LayerSpec,
    in_shape: FeatureShape,
    input: &[u32],
    in_scale: f64,
    trace: &mut ExecutionTrace,
) -> Result<Vec<f64>, ExecError> {
    let g = cl.geometry;
    let (v_len, p) = (g.vector_size, cl.pool_size);
    let shape_err = |reason: String| ExecError::Shape { layer: spec.name.clone(), reason };
    if input.len() != in_shape.numel() {
        return Err(shape_err(format!("input has {} values for shape {in_shape:?}", input.len())));
    }
    if dp.pool_array.rows() != v_len || dp.pool_array.cols() != p {
        return Err(shape_err("datapath pool geometry differs from the layer".into()));
    }
    let x_shape = if spec.kind == LayerKind::Dense { FeatureShape::new(in_shape.numel(), 1, 1) } else { in_shape };
    if x_shape.c != g.c_in {
        return Err(shape_err(format!("input provides {} channels, layer takes {}", x_shape.c, g.c_in)));
    }
    let (oh, ow) = (
        out_extent(x_shape.h, spec.kernel_h, spec.stride, spec.padding),
        out_extent(x_shape.w, spec.kernel_w, spec.stride, spec.padding),
    );
    let npos = oh * ow;
    let a = dp.bit_serial.act_bits as u64;
    let stride = cl.sparsity.keep_stride().unwrap_or(1);

    let mut acc_pool = vec![0i32; g.c_out * npos];
    let mut acc_err = vec![0i32; g.c_out * npos];
    let overflow = || ExecError::Overflow { layer: spec.name.clone() };
    let add = |acc: &mut [i32], filter: usize, pos: usize, value: i64| -> Result<(), ExecError> {
        let slot = &mut acc[filter * npos + pos];
        *slot = i32::try_from(value).ok().and_then(|v| slot.checked_add(v)).ok_or_else(overflow)?;
        Ok(())
    };

    let mut unit = if dp.permute { Some(PermutationUnit::<i64>::new(dp.scheduler)?) } else { None };
    let drain = |out: Vec<(usize, Vec<i64>)>, acc: &mut [i32]| -> Result<(), ExecError> {
        for (tag, values) in out {
            let (t, pos) = (tag / npos, tag % npos);
            let base = schedule.tiles[t].key.filter_tile * p;
            for (slot, &val) in values.iter().enumerate().take(g.c_out.saturating_sub(base).min(p)) {
                add(acc, base + slot, pos, val)?;
            }
        }
        Ok(())
    };

    let mut x = vec![0u32; v_len];
    let mut layer_vectors = 0u64;
    for (t, tile) in schedule.tiles.iter().enumerate() {
        dp.error_array.load_weights(&tile.error_cells, tile.error_rows)?;
        trace.error_reloads += 1;
        if let Some(unit) = unit.as_mut() {
            unit.begin_tile(tile.map.clone())?;
        }
        let key = tile.key;
        let base = key.filter_tile * p;
        let c0 = key.channel_tile * v_len;
        let mut e_in = vec![0u32; tile.error_rows];
        for oy in 0..oh {
            for ox in 0..ow {
                let pos = oy * ow + ox;
                let iy = (oy * spec.stride + key.ky) as isize - spec.padding as isize;
                let ix = (ox * spec.stride + key.kx) as isize - spec.padding as isize;
                x.fill(0);
                if iy >= 0 && ix >= 0 && (iy as usize) < x_shape.h && (ix as usize) < x_shape.w {
                    let hw = x_shape.h * x_shape.w;
                    let off = iy as usize * x_shape.w + ix as usize;
                    for (k, xk) in x.iter_mut().take(tile.active_rows).enumerate() {
                        *xk = input[(c0 + k) * hw + off];
                    }
                }
                for (j, e) in e_in.iter_mut().enumerate() {
                    *e = x[j * stride];
                }
                let pool_out = dp.pool_array.bit_serial_matvec(&dp.adc, &dp.bit_serial, &x)?;
                let err_out = dp.error_array.bit_serial_matvec(&dp.adc, &dp.bit_serial, &e_in)?;
                for (slot, v) in tile.vectors.iter().enumerate() {
                    if v.is_some() {
                        add(&mut acc_err, base + slot, pos, err_out[slot])?;
                    }
                }
                match unit.as_mut() {
                    Some(unit) => {
                        unit.push(t * npos + pos, pool_out)?;
                        drain(unit.take_output(), &mut acc_pool)?;
                    }
                    None => drain(vec![(t * npos + pos, pool_out)], &mut acc_pool)?,
                }
                layer_vectors += 1;
                trace.act_bytes_read += tile.active_rows as u64 * act_bytes(dp.bit_serial.act_bits);
                trace.pool_array_macs += (v_len * p) as u64;
                trace.error_array_macs += (tile.error_rows * p) as u64;
            }
        }
    }
    let cycles = match unit.as_mut() {
        Some(unit) => {
            let rest = unit.finish();
            drain(rest, &mut acc_pool)?;
            trace.scheduler.merge(unit.stats());
            unit.stats().cycles
        }
        None => layer_vectors * a,
    };
    trace.bit_serial_cycles += cycles;
    trace.input_vectors += layer_vectors;
    trace.tiles += schedule.tiles.len() as u64;
    if let Some(l) = trace.layers.last_mut().filter(|l| l.name == spec.name) {
        l.tiles = schedule.tiles.len() as u64;
        l.input_vectors = layer_vectors;
        l.bit_serial_cycles = cycles;
    }

    let (wp, we) = (cl.scales.pool_scale(), cl.scales.error_magnitude());
    Ok((0..g.c_out * npos)
        .map(|i| {
            let b = cl.bias.as_ref().map_or(0.0, |b| b[i / npos] as f64);
            in_scale * (wp * acc_pool[i] as f64 + we * acc_err[i] as f64) + b
        })
        .collect())
}

/// Requantization step chosen for one layer output.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LayerScale {
    pub name: String,
    pub scale: f64,
    pub signed: bool,
}

impl LayerScale {
    fn quantize(&self, bits: u32, x: f64) -> i32 {
        let (lo, hi) = if self.signed {
            let m = (1i64 << (bits - 1)) - 1;
            (-m, m)
        } else {
            (0, (1i64 << bits) - 1)
        };
        ((x / self.scale).round() as i64).clamp(lo, hi) as i32
    }
}

fn choose_scale(name: &str, values: &[f64], signed: bool, bits: u32) -> LayerScale {
    let max = values.iter().fold(0.0f64, |m, v| m.max(if signed { v.abs() } else { *v }));
    let levels = if signed { (1u64 << (bits - 1)) - 1 } else { (1u64 << bits) - 1 };
    let scale = if max > 0.0 { max / levels as f64 } else { 1.0 };
    LayerScale { name: name.to_string(), scale, signed }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkOutput {
    pub output: Vec<f64>,
    pub shape: FeatureShape,
    /// Calibrated step of the final layer; the unit for oracle comparisons.
    pub output_lsb: f64,
    pub scales: Vec<LayerScale>,
    /// Dequantized output of every layer, if requested.
    pub activations: Vec<Vec<f64>>,
    pub trace: ExecutionTrace,
}

struct Prepared<'a> {
    model: &'a CompressedModelFile,
    shapes: Vec<FeatureShape>,
    producers: Vec<Vec<Option<usize>>>,
    payloads: HashMap<&'a str, &'a LayerPayload>,
    /// Float weights used by reference and digital evaluation.
    weights: HashMap<&'a str, Vec<f64>>,
    input_shape: FeatureShape,
    bits: u32,
}

fn prepare<'a>(model: &'a CompressedModelFile, pool: &WeightPool) -> Result<Prepared<'a>, ExecError> {
    let m = &model.manifest;
    let shapes = infer_shapes(m).map_err(FormatError::Validation)?;
    let producers = resolve_inputs(m).map_err(FormatError::Validation)?;
    let input_shape = FeatureShape::from_dims(&m.input_shape)
        .ok_or_else(|| FormatError::InvalidCompressed(format!("bad input shape {:?}", m.input_shape)))?;
    let payloads: HashMap<&str, &LayerPayload> = model.layers.iter().map(|l| (l.name(), l)).collect();
    for spec in &m.layers {
        if spec.kind.has_weights() && !payloads.contains_key(spec.name.as_str()) {
            return Err(FormatError::InvalidCompressed(format!("no payload for layer `{}`", spec.name)).into());
        }
    }
    let weights = model
        .layers
        .iter()
        .map(|l| {
            let w = match l {
                LayerPayload::Compressed(cl) => reconstruct_weights(cl, pool),
                LayerPayload::Exempt(e) => e.weights.iter().map(|&w| w as f64).collect(),
            };
            (l.name(), w)
        })
        .collect();
    Ok(Prepared { model, shapes, producers, payloads, weights, input_shape, bits: m.activation_bits })
}

pub(super) fn unsigned_output(spec: &LayerSpec, inputs_signed: &[bool]) -> bool {
    spec.relu || (!spec.kind.has_weights() && inputs_signed.iter().all(|s| !s))
}

fn check_input(input: &[f32], shape: FeatureShape) -> Result<(), ExecError> {
    if input.len() != shape.numel() {
        return Err(ExecError::Shape {
            layer: crate::interchange::manifest::NETWORK_INPUT.into(),
            reason: format!("{} values for input shape {:?}", input.len(), shape.dims()),
        });
    }
    if let Some((index, &value)) = input.iter().enumerate().find(|(_, v)| v.is_nan() || **v < 0.0) {
        return Err(ExecError::NegativeInput { index, value });
    }
    Ok(())
}

/// Float forward pass on reconstructed weights that fixes every layer's
/// requantization step from the maximum it reaches on `input`.
pub fn calibrate(model: &CompressedModelFile, input: &[f32]) -> Result<Vec<LayerScale>, ExecError> {
    let pool = generate_pool(model.pool_config());
    calibrate_prepared(&prepare(model, &pool)?, input)
}

fn calibrate_prepared(p: &Prepared, input: &[f32]) -> Result<Vec<LayerScale>, ExecError> {
    check_input(input, p.input_shape)?;
    let x: Vec<f64> = input.iter().map(|&v| v as f64).collect();
    let mut acts: Vec<Vec<f64>> = Vec::with_capacity(p.shapes.len());
    let mut signed: Vec<bool> = Vec::with_capacity(p.shapes.len());
    let mut scales = Vec::with_capacity(p.shapes.len());
    for (i, spec) in p.model.manifest.layers.iter().enumerate() {
        let ins: Vec<(&[f64], FeatureShape, bool)> = p.producers[i]
            .iter()
            .map(|pr| pr.map_or((x.as_slice(), p.input_shape, false), |j| (acts[j].as_slice(), p.shapes[j], signed[j])))
            .collect();
        let mut y = if spec.kind.has_weights() {
            let (xin, shape, _) = ins[0];
            run_layer_reference(spec, shape, xin, &p.weights[spec.name.as_str()], p.payloads[spec.name.as_str()].bias())?
        } else {
            let args: Vec<(&[f64], FeatureShape)> = ins.iter().map(|(v, s, _)| (*v, *s)).collect();
            run_digital_layer(spec, &args)?
        };
        if spec.relu {
            y.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        let is_signed = !unsigned_output(spec, &ins.iter().map(|t| t.2).collect::<Vec<_>>());
        scales.push(choose_scale(&spec.name, &y, is_signed, p.bits));
        signed.push(is_signed);
        acts.push(y);
    }
    Ok(scales)
}

/// Calibrates, then runs the network in `options.mode`. Every layer output
/// except the last is requantized to `activation_bits` with its calibrated
/// step; the last stays float.
pub fn run_network(model: &CompressedModelFile, input: &[f32], options: &ExecOptions) -> Result<NetworkOutput, ExecError> {
    let pool = generate_pool(model.pool_config());
    let p = prepare(model, &pool)?;
    let scales = calibrate_prepared(&p, input)?;
    let bits = p.bits;
    let m = &model.manifest;

    let mut trace = ExecutionTrace {
        mode: options.mode,
        act_bits: bits,
        sparsity: model.sparsity().fraction(),
        n_params: m.layers.iter().map(|l| l.weight_count() as u64).sum(),
        dram_weight_bytes: model.layers.iter().map(stored_bytes).sum(),
        ..Default::default()
    };
    let adc = AdcModel {
        bits: options.adc_bits,
        mode: if options.mode == ExecMode::CimSaturating { AdcMode::Saturating } else { AdcMode::Ideal },
    };
    let any_compressed = model.layers.iter().any(|l| matches!(l, LayerPayload::Compressed(_)));
    let mut dp = if options.mode.is_cim() && any_compressed {
        trace.pool_loads = 1;
        Some(CimDatapath::new(&pool, bits, adc, options.permute)?)
    } else {
        None
    };

    let input_scale = choose_scale("input", &input.iter().map(|&v| v as f64).collect::<Vec<_>>(), false, bits);
    let q_in: Vec<i32> = input.iter().map(|&v| input_scale.quantize(bits, v as f64)).collect();
    let deq_in: Vec<f64> = q_in.iter().map(|&q| q as f64 * input_scale.scale).collect();

    // per layer: integer codes (empty for the final float output) and dequantized values
    let mut codes: Vec<Vec<i32>> = Vec::with_capacity(m.layers.len());
    let mut deq: Vec<Vec<f64>> = Vec::with_capacity(m.layers.len());
    let ab = act_bytes(bits);
    let last = m.layers.len().saturating_sub(1);
    for (i, spec) in m.layers.iter().enumerate() {
        let ins: Vec<(&[i32], &[f64], FeatureShape, &LayerScale)> = p.producers[i]
            .iter()
            .map(|pr| match pr {
                None => (q_in.as_slice(), deq_in.as_slice(), p.input_shape, &input_scale),
                Some(j) => (codes[*j].as_slice(), deq[*j].as_slice(), p.shapes[*j], &scales[*j]),
            })
            .collect();
        let out_shape = p.shapes[i];
        trace.layers.push(LayerTrace {
            name: spec.name.clone(),
            kind: spec.kind.to_string(),
            output_lsb: scales[i].scale,
            signed_output: scales[i].signed,
            ..Default::default()
        });
        let mut y = if spec.kind.has_weights() {
            let (q, xd, shape, sc) = ins[0];
            let payload = p.payloads[spec.name.as_str()];
            let macs = (spec.weight_count() * out_shape.h * out_shape.w) as u64;
            match (payload, dp.as_mut()) {
                (LayerPayload::Compressed(cl), Some(dp)) => {
                    if sc.signed {
                        return Err(ExecError::SignedInput { layer: spec.name.clone() });
                    }
                    let schedule = build_layer(cl)?;
                    let q: Vec<u32> = q.iter().map(|&v| v as u32).collect();
                    trace.logical_macs += macs;
                    trace.layers[i].logical_macs = macs;
                    run_layer_cim(dp, &schedule, cl, spec, shape, &q, sc.scale, &mut trace)?
                }
                (LayerPayload::Compressed(_), None) => {
                    if sc.signed {
                        return Err(ExecError::SignedInput { layer: spec.name.clone() });
                    }
                    trace.logical_macs += macs;
                    trace.layers[i].logical_macs = macs;
                    trace.act_bytes_read += shape.numel() as u64 * ab;
                    run_layer_reference(spec, shape, xd, &p.weights[spec.name.as_str()], payload.bias())?
                }
                (LayerPayload::Exempt(_), _) => {
                    trace.digital_ops += macs;
                    trace.act_bytes_read += shape.numel() as u64 * ab;
                    run_layer_reference(spec, shape, xd, &p.weights[spec.name.as_str()], payload.bias())?
                }
            }
        } else {
            let args: Vec<(&[f64], FeatureShape)> = ins.iter().map(|t| (t.1, t.2)).collect();
            trace.act_bytes_read += args.iter().map(|a| a.0.len() as u64).sum::<u64>() * ab;
            trace.digital_ops += args.iter().map(|a| a.0.len() as u64).sum::<u64>();
            run_digital_layer(spec, &args)?
        };
        if spec.relu {
            y.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        trace.act_bytes_written += y.len() as u64 * ab;
        if i == last {
            codes.push(Vec::new());
            deq.push(y);
        } else {
            let q: Vec<i32> = y.iter().map(|&v| scales[i].quantize(bits, v)).collect();
            deq.push(q.iter().map(|&v| v as f64 * scales[i].scale).collect());
            codes.push(q);
        }
    }

    let (output, shape, output_lsb) = match deq.last() {
        Some(out) => (out.clone(), p.shapes[last], scales[last].scale),
        None => (deq_in.clone(), p.input_shape, input_scale.scale),
    };
    Ok(NetworkOutput {
        output,
        shape,
        output_lsb,
        scales,
        activations: if options.record_activations { deq } else { Vec::new() },
        trace,
    })
}

/// DRAM bytes of one stored layer: packed index/error stream plus float32
/// bias, or raw float32 for exempt layers.
pub(crate) fn stored_bytes(layer: &LayerPayload) -> u64 {
    match layer {
        LayerPayload::Compressed(cl) => {
            let bpv = crate::bits::index_bits(cl.group_size) as usize + cl.kept_per_vector();
            ((cl.n_vectors() * bpv).div_ceil(8) + cl.bias.as_ref().map_or(0, |b| 4 * b.len())) as u64
        }
        LayerPayload::Exempt(e) => (4 * (e.weights.len() + e.bias.as_ref().map_or(0, Vec::len))) as u64,
    }
}
