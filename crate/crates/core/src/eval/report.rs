//! Report emission: JSON with full counts and fingerprints, CSV rows for
//! spreadsheet use, and the wide grid CSV laid out like the window-parameter
//! table (rows per window size, DR/CD/PDA triplets per ratio, floored cells
//! starred).

use serde::{Deserialize, Serialize};

use super::{GridSearchResult, MetricsReport, ScenarioConfig};

/// A scenario evaluation bundled with its configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub config: ScenarioConfig,
    pub metrics: MetricsReport,
}

impl EvalRecord {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("record serializes")
    }
}

pub const CSV_HEADER: &str = "config,CA,T-ASR,U-ASR,DR,CD,PDA";

/// One CSV row; DR prints as `undefined` when its conditioning set was
/// empty.
pub fn csv_row(name: &str, report: &MetricsReport) -> String {
    let dr = report
        .dr
        .map_or_else(|| "undefined".to_string(), |dr| format!("{dr:.6}"));
    format!(
        "{name},{:.6},{:.6},{:.6},{dr},{:.6},{:.6}",
        report.ca, report.t_asr, report.u_asr, report.cd, report.pda
    )
}

/// Whole report CSV: header plus one row per named report.
pub fn reports_to_csv(rows: &[(String, &MetricsReport)]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for (name, report) in rows {
        out.push_str(&csv_row(name, report));
        out.push('\n');
    }
    out
}

/// Wide grid CSV: one row per window size, `DR/CD/PDA` columns per ratio.
/// Cells whose window count was floored from a fractional ratio product are
/// marked with a trailing `*`.
pub fn grid_to_csv(result: &GridSearchResult, window_sizes: &[usize], ratios: &[f64]) -> String {
    let mut out = String::from("w");
    for ratio in ratios {
        out.push_str(&format!(",DR(ratio={ratio}),CD(ratio={ratio}),PDA(ratio={ratio})"));
    }
    out.push('\n');
    for &w in window_sizes {
        out.push_str(&w.to_string());
        for &ratio in ratios {
            let cell = result
                .cells
                .iter()
                .find(|c| c.window_size == w && c.ratio == ratio)
                .expect("grid contains every (w, ratio) pair");
            let star = if cell.floored { "*" } else { "" };
            let dr = cell
                .report
                .dr
                .map_or_else(|| "undefined".to_string(), |dr| format!("{dr:.4}"));
            out.push_str(&format!(
                ",{dr}{star},{:.4}{star},{:.4}{star}",
                cell.report.cd, cell.report.pda
            ));
        }
        out.push('\n');
    }
    out
}
