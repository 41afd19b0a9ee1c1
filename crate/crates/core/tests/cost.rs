use cimpool::cost::{
    anchor_macs, area_report, cim_energy_for_macs, dram_energy_uj, latency, max_params_for_budget, total_report,
    Calibration, CostConfig, SchemeSpec,
};
use cimpool::fixtures::resnet_manifest;
use cimpool::mapper::{analytic_trace, ExecutionTrace};
use cimpool::Sparsity;

fn within(x: f64, target: f64, rel: f64) -> bool {
    ((x - target) / target).abs() <= rel
}

#[test]
fn anchor_macs_match_hand_count() {
    // per-layer weights × output positions for a 256² ResNet-18
    let mut macs = 3 * 64 * 49 * 128 * 128;
    let stages = [(64usize, 64usize), (128, 32), (256, 16), (512, 8)];
    for (i, &(c, hw)) in stages.iter().enumerate() {
        let c_prev = if i == 0 { 64 } else { c / 2 };
        let pos = hw * hw;
        macs += c_prev * c * 9 * pos + 3 * c * c * 9 * pos;
        if i > 0 {
            macs += c_prev * c * pos;
        }
    }
    macs += 512 * 101;
    assert_eq!(anchor_macs(18, 101, 256).unwrap(), macs as u64);
}

#[test]
fn dram_energies() {
    let c = CostConfig::default();
    let n = Calibration::default().anchors.reference_params();
    assert!(within(dram_energy_uj(n, &SchemeSpec::quantized(8), &c), 351.8, 1e-12));
    assert!(within(dram_energy_uj(n, &SchemeSpec::quantized(4), &c), 175.9, 0.01));
    assert!(within(dram_energy_uj(n, &SchemeSpec::cimpool(Sparsity::Half), &c), 23.8, 0.01));
    assert!(within(dram_energy_uj(n, &SchemeSpec::cimpool(Sparsity::SevenEighths), &c), 7.2, 0.01));
    assert_eq!(dram_energy_uj(0.0, &SchemeSpec::quantized(8), &c), 0.0);
}

#[test]
fn cim_energies_from_anchor() {
    let c = CostConfig::default();
    let macs = anchor_macs(18, 101, 256).unwrap() as f64;
    let e = |s: &str| cim_energy_for_macs(macs, &s.parse().unwrap(), &c);
    assert!(within(e("8bit"), 1813.6, 1e-12));
    assert!(within(e("4bit"), 906.8, 1e-12));
    assert!(within(e("cimpool-0.5"), 343.5, 0.02));
    assert!(within(e("cimpool-0.875"), 259.1, 0.02));
}

#[test]
fn total_energy_ratios_with_sram_overrides() {
    let c = CostConfig::default();
    let trace = analytic_trace(&resnet_manifest(18, 100, 128).unwrap()).unwrap();
    let n = Calibration::default().anchors.reference_params();
    let total = |s: &str, sram: f64| total_report(&trace, n, &s.parse().unwrap(), &c, Some(sram)).total_energy_uj;
    let q4 = total("4bit", 23.8);
    assert!(within(q4 / total("cimpool-0.5", 23.1), 3.24, 0.02));
    assert!(within(q4 / total("cimpool-0.875", 23.1), 4.55, 0.02));
}

#[test]
fn area_and_capacity() {
    let c = CostConfig::default();
    let n = Calibration::default().anchors.reference_params();
    let half = SchemeSpec::cimpool(Sparsity::Half);
    let eighth = SchemeSpec::cimpool(Sparsity::SevenEighths);
    assert!(within(area_report(n, &SchemeSpec::quantized(4), &c).weight_sram_mm2, 9.9, 1e-12));
    assert!(within(area_report(n, &half, &c).weight_sram_mm2, 1.4, 0.05));
    assert!(within(area_report(n, &eighth, &c).weight_sram_mm2, 0.4, 0.10));
    assert!(within(max_params_for_budget(100.0, &half, &c).unwrap(), 790.3e6, 0.01));
    assert!(within(max_params_for_budget(100.0, &eighth, &c).unwrap(), 2605.9e6, 0.005));
    assert!(within(max_params_for_budget(100.0, &SchemeSpec::quantized(4), &c).unwrap(), 106.8e6, 0.01));
    let zero = area_report(0.0, &half, &c);
    assert_eq!(zero.total_mm2, 3.6 + c.cim_array_area_mm2);
}

#[test]
fn latency_compute_term_is_linear_in_positions() {
    let c = CostConfig::default();
    let small = analytic_trace(&resnet_manifest(18, 10, 32).unwrap()).unwrap();
    let large = analytic_trace(&resnet_manifest(18, 10, 64).unwrap()).unwrap();
    let (a, b) = (latency(&small, &c), latency(&large, &c));
    assert!(b.compute_cycles >= 4 * a.compute_cycles - 8 * 64);
    assert_eq!(a.total_cycles, small.bit_serial_cycles);
    let mut doubled = small.clone();
    doubled.input_vectors *= 2;
    assert_eq!(latency(&doubled, &c).compute_cycles, 2 * a.compute_cycles);
    assert_eq!(latency(&ExecutionTrace::default(), &c).total_cycles, 0);
}

#[test]
fn config_json_round_trip() {
    let cal = Calibration::default();
    assert_eq!(Calibration::from_json(&cal.to_json()).unwrap(), cal);
    assert!(Calibration::from_json("{}").is_err());
    let mut bad = cal.clone();
    bad.config.e_dram_pj_per_bit = -1.0;
    assert!(Calibration::from_json(&bad.to_json()).is_err());
}
