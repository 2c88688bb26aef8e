//! CSV layout of operating characteristics.
//!
//! Columns: `scenario, design, n_max, replicates, seed, true_optimal_dose,
//! sel_1 .. sel_m, pcs, no_od, no_pat_dlt, no_clin_dlt, no_mtd, duration_weeks`.
//! Percentages carry one decimal and means two.

use std::io::Write;

use procrm_core::OperatingCharacteristics;

use crate::CliError;

pub fn pct(x: f64) -> String {
    format!("{x:.1}")
}

pub fn mean(x: f64) -> String {
    format!("{x:.2}")
}

pub fn oc_header(dose_count: usize) -> Vec<String> {
    let mut h: Vec<String> = ["scenario", "design", "n_max", "replicates", "seed", "true_optimal_dose"]
        .map(String::from)
        .to_vec();
    h.extend((1..=dose_count).map(|j| format!("sel_{j}")));
    h.extend(
        ["pcs", "no_od", "no_pat_dlt", "no_clin_dlt", "no_mtd", "duration_weeks"].map(String::from),
    );
    h
}

pub fn oc_record(oc: &OperatingCharacteristics) -> Vec<String> {
    let mut r = vec![
        oc.scenario.clone(),
        oc.design.slug().to_string(),
        oc.n_max.to_string(),
        oc.n_replicates.to_string(),
        oc.seed.to_string(),
        oc.true_optimal_dose.map(|d| d.get().to_string()).unwrap_or_default(),
    ];
    r.extend(oc.selection_pct.iter().map(|&p| pct(p)));
    r.extend([
        pct(oc.pcs),
        mean(oc.mean_overdose_patients),
        mean(oc.mean_pat_dlt),
        mean(oc.mean_clin_dlt),
        mean(oc.mean_mtd_patients),
        mean(oc.mean_duration_weeks),
    ]);
    r
}

pub fn sensitivity_header() -> Vec<String> {
    ["scenario", "design", "n_max", "axis", "value", "pcs"].map(String::from).to_vec()
}

pub fn write_csv<W: Write>(out: W, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| CliError::Runtime(format!("writing csv: {e}"));
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(row).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Runtime(format!("writing csv: {e}")))
}
