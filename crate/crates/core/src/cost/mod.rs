//! Energy, area and latency estimates.
//!
//! All constants are calibration inputs (see [`Calibration`]); the models
//! themselves are linear:
//!
//! * DRAM: every weight is fetched once, `n_params · bits_per_weight · e_dram`.
//! * CIM: `MACs · active bit-columns · e_cim`, where a CIMPool MAC drives one
//!   pool column plus `(1 − σ)` of an error column.
//! * SRAM: activation bytes read and written, or an explicit override.
//! * Area: weight SRAM bits times area per bit, plus fixed activation SRAM
//!   and CIM array areas.

mod calibration;
mod table;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use calibration::{anchor_macs, Calibration, CalibrationAnchors};
pub use table::render_table;

use crate::mapper::ExecutionTrace;
use crate::weightpool::{compression_stats, PoolConfig, Sparsity};

#[derive(Debug, Error, PartialEq)]
pub enum CostError {
    #[error("unknown scheme `{0}` (expected 8bit, 4bit or cimpool-<sparsity>)")]
    UnknownScheme(String),
    #[error("budget {budget} mm² does not cover the fixed areas ({fixed} mm²)")]
    BudgetTooSmall { budget: f64, fixed: f64 },
    #[error("invalid cost config: {0}")]
    InvalidConfig(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    pub e_dram_pj_per_bit: f64,
    pub e_cim_pj_per_bitcol_mac: f64,
    pub e_sram_rd_pj_per_byte: f64,
    pub e_sram_wr_pj_per_byte: f64,
    pub area_mm2_per_sram_bit: f64,
    /// Both CIMPool arrays together.
    pub cim_array_area_mm2: f64,
    /// Array area of the quantized baselines.
    pub baseline_cim_array_area_mm2: f64,
    pub act_sram_area_mm2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clock_period_ns: Option<f64>,
}

impl Default for CostConfig {
    fn default() -> Self {
        Calibration::default().config
    }
}

impl CostConfig {
    pub fn validate(&self) -> Result<(), CostError> {
        let fields = [
            ("e_dram_pj_per_bit", self.e_dram_pj_per_bit),
            ("e_cim_pj_per_bitcol_mac", self.e_cim_pj_per_bitcol_mac),
            ("e_sram_rd_pj_per_byte", self.e_sram_rd_pj_per_byte),
            ("e_sram_wr_pj_per_byte", self.e_sram_wr_pj_per_byte),
            ("area_mm2_per_sram_bit", self.area_mm2_per_sram_bit),
            ("cim_array_area_mm2", self.cim_array_area_mm2),
            ("baseline_cim_array_area_mm2", self.baseline_cim_array_area_mm2),
            ("act_sram_area_mm2", self.act_sram_area_mm2),
            ("clock_period_ns", self.clock_period_ns.unwrap_or(1.0)),
        ];
        match fields.iter().find(|(_, v)| !(v.is_finite() && *v > 0.0)) {
            Some((name, v)) => Err(CostError::InvalidConfig(format!("{name} must be positive, got {v}"))),
            None => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SchemeKind {
    Quantized { bits: u32 },
    Cimpool { sparsity: Sparsity },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeSpec {
    pub name: String,
    pub kind: SchemeKind,
    pub effective_bits_per_weight: f64,
    pub active_bitcols: f64,
}

impl SchemeSpec {
    pub fn quantized(bits: u32) -> Self {
        Self {
            name: format!("{bits}-bit"),
            kind: SchemeKind::Quantized { bits },
            effective_bits_per_weight: bits as f64,
            active_bitcols: bits as f64,
        }
    }

    /// CIMPool with the default 128-wide vectors and 5-bit indices.
    pub fn cimpool(sparsity: Sparsity) -> Self {
        Self::cimpool_with(&PoolConfig { sparsity, ..Default::default() })
    }

    pub fn cimpool_with(config: &PoolConfig) -> Self {
        let stats = compression_stats(config);
        Self {
            name: format!("CIMPool {}", config.sparsity),
            kind: SchemeKind::Cimpool { sparsity: config.sparsity },
            effective_bits_per_weight: stats.bits_per_vector as f64 / config.vector_size as f64,
            active_bitcols: 1.0 + (1.0 - config.sparsity.fraction()),
        }
    }

    pub fn is_cimpool(&self) -> bool {
        matches!(self.kind, SchemeKind::Cimpool { .. })
    }

    pub fn cim_array_area(&self, config: &CostConfig) -> f64 {
        if self.is_cimpool() {
            config.cim_array_area_mm2
        } else {
            config.baseline_cim_array_area_mm2
        }
    }
}

impl FromStr for SchemeSpec {
    type Err = CostError;

    /// Accepts `8bit`, `8-bit`, `4bit`, `cimpool-0.5`, `cimpool0.875`, ...
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        let unknown = || CostError::UnknownScheme(s.to_string());
        if let Some(rest) = lower.strip_prefix("cimpool") {
            let frac: f64 = rest.trim_start_matches(['-', '_', ' ']).parse().map_err(|_| unknown())?;
            return Sparsity::from_fraction(frac).map(Self::cimpool).map_err(|_| unknown());
        }
        let digits = lower.trim_end_matches("bit").trim_end_matches('-');
        match digits.parse::<u32>() {
            Ok(bits) if (1..=16).contains(&bits) => Ok(Self::quantized(bits)),
            _ => Err(unknown()),
        }
    }
}

impl fmt::Display for SchemeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

const PJ_PER_UJ: f64 = 1e6;

pub fn dram_energy_uj(n_params: f64, scheme: &SchemeSpec, config: &CostConfig) -> f64 {
    n_params * scheme.effective_bits_per_weight * config.e_dram_pj_per_bit / PJ_PER_UJ
}

pub fn cim_energy_uj(trace: &ExecutionTrace, scheme: &SchemeSpec, config: &CostConfig) -> f64 {
    cim_energy_for_macs(trace.logical_macs as f64, scheme, config)
}

pub fn cim_energy_for_macs(macs: f64, scheme: &SchemeSpec, config: &CostConfig) -> f64 {
    macs * scheme.active_bitcols * config.e_cim_pj_per_bitcol_mac / PJ_PER_UJ
}

pub fn sram_energy_uj(trace: &ExecutionTrace, config: &CostConfig) -> f64 {
    (trace.act_bytes_read as f64 * config.e_sram_rd_pj_per_byte
        + trace.act_bytes_written as f64 * config.e_sram_wr_pj_per_byte)
        / PJ_PER_UJ
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AreaReport {
    pub cim_array_mm2: f64,
    pub activation_sram_mm2: f64,
    pub weight_sram_mm2: f64,
    pub total_mm2: f64,
}

pub fn area_report(n_params: f64, scheme: &SchemeSpec, config: &CostConfig) -> AreaReport {
    let weight = n_params * scheme.effective_bits_per_weight * config.area_mm2_per_sram_bit;
    let cim = scheme.cim_array_area(config);
    AreaReport {
        cim_array_mm2: cim,
        activation_sram_mm2: config.act_sram_area_mm2,
        weight_sram_mm2: weight,
        total_mm2: weight + cim + config.act_sram_area_mm2,
    }
}

/// Largest parameter count whose weight SRAM fits in what `budget_mm2`
/// leaves after activation SRAM and CIM arrays.
pub fn max_params_for_budget(budget_mm2: f64, scheme: &SchemeSpec, config: &CostConfig) -> Result<f64, CostError> {
    let fixed = config.act_sram_area_mm2 + scheme.cim_array_area(config);
    if budget_mm2 <= fixed {
        return Err(CostError::BudgetTooSmall { budget: budget_mm2, fixed });
    }
    Ok((budget_mm2 - fixed) / config.area_mm2_per_sram_bit / scheme.effective_bits_per_weight)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    /// One input cycle (`A` bit-serial cycles) per streamed input vector.
    pub compute_cycles: u64,
    /// Scheduler fill, flush and drain time on top of compute.
    pub overhead_cycles: u64,
    pub total_cycles: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seconds: Option<f64>,
}

pub fn latency(trace: &ExecutionTrace, config: &CostConfig) -> LatencyReport {
    let compute = trace.input_vectors * trace.act_bits as u64;
    let total = trace.bit_serial_cycles.max(compute);
    LatencyReport {
        compute_cycles: compute,
        overhead_cycles: total - compute,
        total_cycles: total,
        seconds: config.clock_period_ns.map(|ns| total as f64 * ns * 1e-9),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub scheme: SchemeSpec,
    pub n_params: f64,
    pub cim_energy_uj: f64,
    pub sram_energy_uj: f64,
    pub dram_energy_uj: f64,
    pub total_energy_uj: f64,
    pub area: AreaReport,
    pub latency: LatencyReport,
}

pub fn total_report(
    trace: &ExecutionTrace,
    n_params: f64,
    scheme: &SchemeSpec,
    config: &CostConfig,
    sram_override_uj: Option<f64>,
) -> CostReport {
    let cim = cim_energy_uj(trace, scheme, config);
    let sram = sram_override_uj.unwrap_or_else(|| sram_energy_uj(trace, config));
    let dram = dram_energy_uj(n_params, scheme, config);
    CostReport {
        scheme: scheme.clone(),
        n_params,
        cim_energy_uj: cim,
        sram_energy_uj: sram,
        dram_energy_uj: dram,
        total_energy_uj: cim + sram + dram,
        area: area_report(n_params, scheme, config),
        latency: latency(trace, config),
    }
}
