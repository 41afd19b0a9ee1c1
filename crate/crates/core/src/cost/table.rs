use super::CostReport;

/// Fixed-width text table, one row per report.
pub fn render_table(reports: &[CostReport]) -> String {
    let header = [
        "scheme", "params", "CIM uJ", "SRAM uJ", "DRAM uJ", "total uJ", "weight mm2", "area mm2", "cycles",
    ];
    let rows: Vec<[String; 9]> = reports
        .iter()
        .map(|r| {
            [
                r.scheme.name.clone(),
                format!("{:.0}", r.n_params),
                format!("{:.1}", r.cim_energy_uj),
                format!("{:.1}", r.sram_energy_uj),
                format!("{:.1}", r.dram_energy_uj),
                format!("{:.1}", r.total_energy_uj),
                format!("{:.3}", r.area.weight_sram_mm2),
                format!("{:.3}", r.area.total_mm2),
                r.latency.total_cycles.to_string(),
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let mut line = |cells: &[&str]| {
        let parts: Vec<String> = cells
            .iter()
            .zip(widths)
            .enumerate()
            .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        out.push_str(parts.join("  ").trim_end());
        out.push('\n');
    };
    line(&header);
    for row in &rows {
        line(&row.iter().map(String::as_str).collect::<Vec<_>>());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::{total_report, CostConfig, SchemeSpec};
    use crate::mapper::ExecutionTrace;

    #[test]
    fn aligned_columns() {
        let c = CostConfig::default();
        let t = ExecutionTrace::default();
        let reports = [
            total_report(&t, 11e6, &SchemeSpec::quantized(8), &c, Some(30.4)),
            total_report(&t, 11e6, &SchemeSpec::quantized(4), &c, Some(23.8)),
        ];
        let s = render_table(&reports);
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("8-bit"));
        assert_eq!(lines[1].len(), lines[2].len());
    }
}
