use serde::{Deserialize, Serialize};

use super::{CostConfig, CostError};
use crate::fixtures::resnet_manifest;
use crate::mapper::analytic_trace;

const DEFAULT_CALIBRATION: &str = include_str!("../../data/default_calibration.json");

/// Published totals the per-unit constants are backed out of.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationAnchors {
    pub e_dram_pj_per_bit: f64,
    /// DRAM energy of the reference model stored at `dram_anchor_bits`.
    pub dram_anchor_uj: f64,
    pub dram_anchor_bits: u32,
    /// CIM energy of the anchor network at 8-bit precision.
    pub cim_anchor_uj: f64,
    pub cim_anchor_depth: usize,
    pub cim_anchor_classes: usize,
    pub cim_anchor_resolution: usize,
    /// Weight SRAM of the reference model at `sram_anchor_bits`.
    pub weight_sram_anchor_mm2: f64,
    pub sram_anchor_bits: u32,
    pub e_sram_rd_pj_per_byte: f64,
    pub e_sram_wr_pj_per_byte: f64,
    pub cim_array_area_mm2: f64,
    pub baseline_cim_array_area_mm2: f64,
    pub act_sram_area_mm2: f64,
}

impl CalibrationAnchors {
    /// Parameter count implied by the DRAM anchor.
    pub fn reference_params(&self) -> f64 {
        self.dram_anchor_uj * 1e6 / (self.dram_anchor_bits as f64 * self.e_dram_pj_per_bit)
    }
}

/// Anchors plus the constants derived from them; this is the on-disk format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Calibration {
    pub anchors: CalibrationAnchors,
    pub config: CostConfig,
}

impl Default for Calibration {
    fn default() -> Self {
        serde_json::from_str(DEFAULT_CALIBRATION).expect("shipped calibration parses")
    }
}

/// Logical MACs of one inference of a ResNet anchor network.
pub fn anchor_macs(depth: usize, classes: usize, hw: usize) -> Result<u64, CostError> {
    let manifest = resnet_manifest(depth, classes, hw)
        .ok_or_else(|| CostError::InvalidConfig(format!("no ResNet-{depth} anchor")))?;
    analytic_trace(&manifest)
        .map(|t| t.logical_macs)
        .map_err(|e| CostError::InvalidConfig(e.to_string()))
}

impl Calibration {
    pub fn from_anchors(anchors: CalibrationAnchors) -> Result<Self, CostError> {
        let n_ref = anchors.reference_params();
        let macs = anchor_macs(anchors.cim_anchor_depth, anchors.cim_anchor_classes, anchors.cim_anchor_resolution)?;
        let config = CostConfig {
            e_dram_pj_per_bit: anchors.e_dram_pj_per_bit,
            e_cim_pj_per_bitcol_mac: anchors.cim_anchor_uj * 1e6 / (macs as f64 * 8.0),
            e_sram_rd_pj_per_byte: anchors.e_sram_rd_pj_per_byte,
            e_sram_wr_pj_per_byte: anchors.e_sram_wr_pj_per_byte,
            area_mm2_per_sram_bit: anchors.weight_sram_anchor_mm2 / (n_ref * anchors.sram_anchor_bits as f64),
            cim_array_area_mm2: anchors.cim_array_area_mm2,
            baseline_cim_array_area_mm2: anchors.baseline_cim_array_area_mm2,
            act_sram_area_mm2: anchors.act_sram_area_mm2,
            clock_period_ns: None,
        };
        config.validate()?;
        Ok(Self { anchors, config })
    }

    pub fn from_json(text: &str) -> Result<Self, CostError> {
        let c: Self = serde_json::from_str(text).map_err(|e| CostError::InvalidConfig(e.to_string()))?;
        c.config.validate()?;
        Ok(c)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_file_matches_anchors() {
        let shipped = Calibration::default();
        let derived = Calibration::from_anchors(shipped.anchors.clone()).unwrap();
        let (a, b) = (&shipped.config, &derived.config);
        let close = |x: f64, y: f64| ((x - y) / y).abs() < 1e-12;
        assert!(close(a.e_cim_pj_per_bitcol_mac, b.e_cim_pj_per_bitcol_mac));
        assert!(close(a.area_mm2_per_sram_bit, b.area_mm2_per_sram_bit));
        assert_eq!(a.e_dram_pj_per_bit, b.e_dram_pj_per_bit);
    }

    #[test]
    fn reference_params() {
        let a = Calibration::default().anchors;
        assert!((a.reference_params() - 10_993_750.0).abs() < 1e-6);
    }
}
