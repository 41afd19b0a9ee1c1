//! Mapping compressed layers onto the two-array datapath and running whole
//! networks.
//!
//! Every conv/dense layer is lowered to weight-stationary tiles (one kernel
//! position × one 128-channel block × one block of `P` filters). The pool
//! array is loaded once per run; the error array is reloaded per tile. Pool
//! array outputs leave in pool-column order and go through the permutation
//! unit before accumulation; error array columns are already in filter order.

mod analytic;
mod exec;
mod reference;
mod schedule;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use analytic::analytic_trace;
pub use exec::{calibrate, run_layer_cim, run_network, CimDatapath, LayerScale, NetworkOutput};
pub use reference::{run_digital_layer, run_layer_reference};
pub use schedule::{build_schedule, LayerSchedule, Tile, TileSchedule};

use crate::cim_array::ArrayError;
use crate::interchange::FormatError;
use crate::scheduler::{CycleStats, SchedulerError};

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("unsupported layer `{layer}`: {reason}")]
    Unsupported { layer: String, reason: String },
    #[error("layer `{layer}`: {reason}")]
    Shape { layer: String, reason: String },
    #[error("layer `{layer}`: accumulator overflow")]
    Overflow { layer: String },
    #[error("layer `{layer}` consumes a signed activation, CIM inputs must be unsigned")]
    SignedInput { layer: String },
    #[error("network input contains negative value {value} at {index}")]
    NegativeInput { index: usize, value: f32 },
    #[error("layer `{layer}`: index {index} is outside group size {group_size}")]
    IndexRange { layer: String, index: u16, group_size: usize },
    #[error(transparent)]
    Array(#[from] ArrayError),
    #[error(transparent)]
    Scheduler(#[from] SchedulerError),
    #[error(transparent)]
    Format(#[from] FormatError),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecMode {
    /// Two-array datapath with an ideal ADC.
    #[default]
    CimIdeal,
    /// Two-array datapath with a clamping ADC.
    CimSaturating,
    /// Float convolution with reconstructed weights, same requantization.
    Reference,
}

impl ExecMode {
    pub fn is_cim(self) -> bool {
        !matches!(self, ExecMode::Reference)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecOptions {
    pub mode: ExecMode,
    pub adc_bits: u32,
    /// Route pool-array outputs through the permutation unit. Disabling it
    /// exists only to show that the permutation is needed.
    pub permute: bool,
    /// Keep every layer's dequantized output in the result.
    pub record_activations: bool,
}

impl Default for ExecOptions {
    fn default() -> Self {
        Self { mode: ExecMode::CimIdeal, adc_bits: 8, permute: true, record_activations: false }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LayerTrace {
    pub name: String,
    pub kind: String,
    pub tiles: u64,
    pub input_vectors: u64,
    pub logical_macs: u64,
    pub bit_serial_cycles: u64,
    /// Quantization step of this layer's output.
    pub output_lsb: f64,
    pub signed_output: bool,
}

/// Event counters of one inference; consumed by the cost model.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub mode: ExecMode,
    pub act_bits: u32,
    pub sparsity: f64,
    /// Array cell-MACs: every loaded row times every column per input vector.
    pub pool_array_macs: u64,
    pub error_array_macs: u64,
    /// Multiply-accumulates of the original layers (weights × outputs).
    pub logical_macs: u64,
    /// Elementwise work of digital layers (adds, pools, exempt layers).
    pub digital_ops: u64,
    pub pool_loads: u64,
    pub error_reloads: u64,
    pub tiles: u64,
    pub input_vectors: u64,
    pub bit_serial_cycles: u64,
    pub scheduler: CycleStats,
    pub act_bytes_read: u64,
    pub act_bytes_written: u64,
    /// Compressed weights, indices, error bits and biases, fetched once.
    pub dram_weight_bytes: u64,
    /// Conv/dense weight count of the model.
    pub n_params: u64,
    #[serde(default)]
    pub layers: Vec<LayerTrace>,
}

impl ExecutionTrace {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data")
    }
}

/// Bytes per stored activation element.
pub(crate) fn act_bytes(bits: u32) -> u64 {
    bits.div_ceil(8) as u64
}
