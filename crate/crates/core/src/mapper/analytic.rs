//! Closed-form execution counters, for models too large to simulate.

use super::exec::unsigned_output;
use super::{act_bytes, ExecError, ExecMode, ExecutionTrace, LayerTrace};
use crate::interchange::manifest::resolve_inputs;
use crate::interchange::{infer_shapes, FeatureShape, FormatError, ModelManifest};
use crate::scheduler::{analytic_layer_cycles, buffer_geometry, SchedulerConfig};
use crate::weightpool::LayerGeometry;

/// The counters a `cim_ideal` run of `manifest` (compressed with its
/// `pool_config`) would produce, computed without executing anything.
pub fn analytic_trace(manifest: &ModelManifest) -> Result<ExecutionTrace, ExecError> {
    let c = &manifest.pool_config;
    let bits = manifest.activation_bits;
    let shapes = infer_shapes(manifest).map_err(FormatError::Validation)?;
    let producers = resolve_inputs(manifest).map_err(FormatError::Validation)?;
    let input_shape = FeatureShape::from_dims(&manifest.input_shape)
        .ok_or_else(|| FormatError::Validation(vec![crate::interchange::Violation::InvalidInputShape(manifest.input_shape.clone())]))?;
    let sched = SchedulerConfig { pool_width: c.pool_size, act_bits: bits as usize, groups: c.num_groups(), out_bytes: 1 };
    let geo = buffer_geometry(&sched)?;
    let vpb = geo.vectors_per_bank;
    let period = sched.window_cycles();
    let kept = c.sparsity.kept_count(c.vector_size);
    let bpv = c.index_bits() as usize + kept;
    let ab = act_bytes(bits);

    let mut t = ExecutionTrace {
        mode: ExecMode::CimIdeal,
        act_bits: bits,
        sparsity: c.sparsity.fraction(),
        ..Default::default()
    };
    t.scheduler.buffer_bytes = geo.total_bytes;
    t.scheduler.act_bits = bits as u64;
    t.scheduler.vectors_per_bank = vpb as u64;

    let mut any_compressed = false;
    let mut signed: Vec<bool> = Vec::with_capacity(manifest.layers.len());
    for (i, spec) in manifest.layers.iter().enumerate() {
        let out = shapes[i];
        let ins: Vec<FeatureShape> = producers[i].iter().map(|p| p.map_or(input_shape, |j| shapes[j])).collect();
        let in_signed: Vec<bool> = producers[i].iter().map(|p| p.is_some_and(|j| signed[j])).collect();
        let is_signed = !unsigned_output(spec, &in_signed);
        signed.push(is_signed);
        let mut lt = LayerTrace {
            name: spec.name.clone(),
            kind: spec.kind.to_string(),
            signed_output: is_signed,
            ..Default::default()
        };
        t.act_bytes_written += out.numel() as u64 * ab;
        if !spec.kind.has_weights() {
            let n: u64 = ins.iter().map(|s| s.numel() as u64).sum();
            t.digital_ops += n;
            t.act_bytes_read += n * ab;
            t.layers.push(lt);
            continue;
        }
        let npos = out.h * out.w;
        let macs = (spec.weight_count() * npos) as u64;
        t.n_params += spec.weight_count() as u64;
        let bias_bytes = if spec.bias.is_some() { 4 * spec.c_out as u64 } else { 0 };
        if c.is_exempt(&spec.name) {
            t.digital_ops += macs;
            t.act_bytes_read += ins[0].numel() as u64 * ab;
            t.dram_weight_bytes += 4 * spec.weight_count() as u64 + bias_bytes;
            t.layers.push(lt);
            continue;
        }
        any_compressed = true;
        let g = LayerGeometry::from_spec(spec, c.vector_size);
        let tiles = g.tiles(c.pool_size).len();
        let vectors = (tiles * npos) as u64;
        let windows = npos.div_ceil(vpb) as u64;
        let cycles = analytic_layer_cycles(&sched, tiles, npos)?;

        t.dram_weight_bytes += (g.n_vectors() * bpv).div_ceil(8) as u64 + bias_bytes;
        t.logical_macs += macs;
        t.tiles += tiles as u64;
        t.error_reloads += tiles as u64;
        t.input_vectors += vectors;
        t.pool_array_macs += vectors * (c.vector_size * c.pool_size) as u64;
        t.error_array_macs += vectors * (kept * c.pool_size) as u64;
        t.bit_serial_cycles += cycles;
        // every tile streams all output positions; each kernel position and
        // filter block reads all real channels once per position
        t.act_bytes_read += (g.positions() * g.filter_tiles(c.pool_size) * g.c_in * npos) as u64 * ab;

        let s = &mut t.scheduler;
        s.cycles += cycles;
        s.vectors_in += vectors;
        s.vectors_out += vectors;
        s.bank_swaps += tiles as u64 * windows;
        s.fills += tiles as u64 * windows;
        s.index_reloads += tiles as u64;
        s.selector_reads += vectors * c.pool_size as u64;
        let partial = npos % vpb;
        if partial != 0 {
            s.flushes += tiles as u64;
            s.flush_idle_cycles += tiles as u64 * (period - (partial as u64 * bits as u64));
        }

        lt.tiles = tiles as u64;
        lt.input_vectors = vectors;
        lt.logical_macs = macs;
        lt.bit_serial_cycles = cycles;
        t.layers.push(lt);
    }
    t.pool_loads = u64::from(any_compressed);
    Ok(t)
}
