//! JSON and CSV report files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{CohortSummary, SegmentationReport, REPORT_SCHEMA};

pub const CSV_HEADER: &str = "slice,dice_mf,dice_rf,dice_combined";

/// The CSV written next to a JSON report: same stem, `.csv` extension.
pub fn csv_path_for(json_path: &Path) -> PathBuf {
    json_path.with_extension("csv")
}

pub fn report_csv(report: &SegmentationReport) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    let cell = |v: Option<f64>| v.map_or(String::new(), |d| format!("{d:.6}"));
    for s in &report.per_slice {
        let _ = writeln!(
            out,
            "{},{},{},{:.6}",
            s.slice,
            cell(s.dice_mf),
            cell(s.dice_rf),
            s.dice_combined
        );
    }
    out
}

/// Writes `path` as pretty JSON plus the companion CSV.
pub fn write_report(report: &SegmentationReport, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_string_pretty(report)? + "\n")?;
    fs::write(csv_path_for(path), report_csv(report))?;
    Ok(())
}

pub fn read_report(path: &Path) -> Result<SegmentationReport> {
    let report: SegmentationReport = serde_json::from_slice(&fs::read(path)?)?;
    if report.schema != REPORT_SCHEMA {
        return Err(Error::Validation {
            path: path.to_path_buf(),
            message: format!("unknown report schema {:?}", report.schema),
        });
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentsReport {
    pub schema: String,
    pub runs: Vec<SegmentationReport>,
    pub summary: CohortSummary,
}

pub fn write_experiments(runs: Vec<SegmentationReport>, summary: CohortSummary, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let doc = ExperimentsReport {
        schema: REPORT_SCHEMA.to_string(),
        runs,
        summary,
    };
    fs::write(path, serde_json::to_string_pretty(&doc)? + "\n")?;
    Ok(())
}
