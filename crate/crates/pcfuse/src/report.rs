//! JSON and CSV metric reports.

use std::path::Path;

use pcfuse_core::metrics::{FrameMetrics, MetricReport};
use serde::{Deserialize, Serialize};

use crate::error::{write_file, Error, Result};

pub const REPORT_SCHEMA: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
}

/// What a report file contains besides the metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub schema: u32,
    /// Mask provider, uncertainty provider, ablation and similar settings.
    pub settings: serde_json::Map<String, serde_json::Value>,
    /// Metrics of the fused output.
    pub output: MetricReport,
    /// Metrics of the raw input depth, when requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<MetricReport>,
}

impl ReportDocument {
    pub fn new(output: MetricReport) -> Self {
        ReportDocument { schema: REPORT_SCHEMA, settings: Default::default(), output, input: None }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        write_file(path, self.to_json().as_bytes())
    }
}

const COLUMNS: [&str; 13] =
    ["frame", "rae", "rms", "l1", "delta_bad_1", "delta_bad_2", "delta_bad_3", "opw", "rtc", "rtc_gated", "sc", "tcc", "tcm"];

fn cell(x: Option<f64>) -> String {
    x.map(|v| format!("{v:?}")).unwrap_or_default()
}

fn frame_row(f: &FrameMetrics) -> Vec<String> {
    let d = f.delta_bad.map(|b| b.map(Some)).unwrap_or([None; 3]);
    let mut row = vec![f.frame.to_string()];
    row.extend([f.rae, f.rms, f.l1, d[0], d[1], d[2], f.opw, f.rtc, f.rtc_gated, f.sc, f.tcc, f.tcm].map(cell));
    row
}

fn summary_row(r: &MetricReport) -> Vec<String> {
    let d = r.delta_bad.map(|b| b.map(Some)).unwrap_or([None; 3]);
    let mut row = vec!["summary".to_string()];
    // The l1 column of the summary row carries SD(L1).
    row.extend([r.rae, r.rms, r.sd_l1, d[0], d[1], d[2], r.opw, r.rtc, r.rtc_gated, r.sc, r.tcc, r.tcm].map(cell));
    row
}

/// One row per frame plus a `summary` row; empty cells are metrics that were
/// not computed. Temporal cells of frame `t` describe the pair `(t, t+1)`.
pub fn encode_csv(report: &MetricReport) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(COLUMNS)?;
    for f in &report.per_frame {
        w.write_record(frame_row(f))?;
    }
    w.write_record(summary_row(report))?;
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn write_csv(path: &Path, report: &MetricReport) -> Result<()> {
    let text = encode_csv(report).map_err(|e| Error::Csv { path: path.to_path_buf(), source: e })?;
    write_file(path, text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use pcfuse_core::metrics::{evaluate, MetricConfig, SequenceView};
    use pcfuse_core::Grid;

    fn report() -> MetricReport {
        let g = vec![Grid::filled(3, 3, 2.0), Grid::filled(3, 3, 2.5)];
        let view = SequenceView { ground_truth: Some(&g), ..SequenceView::new(&g) };
        evaluate(&view, &MetricConfig::default()).unwrap()
    }

    #[test]
    fn json_carries_schema() {
        let doc = ReportDocument::new(report());
        let v: serde_json::Value = serde_json::from_str(&doc.to_json()).unwrap();
        assert_eq!(v["schema"], 1);
        assert_eq!(v["output"]["rae"], 0.0);
        let back: ReportDocument = serde_json::from_str(&doc.to_json()).unwrap();
        assert_eq!(back, doc);
    }

    #[test]
    fn csv_has_frame_rows_and_summary() {
        let text = encode_csv(&report()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].starts_with("frame,rae,"));
        assert!(lines[1].starts_with("0,0.0,0.0,0.0,"));
        assert!(lines[3].starts_with("summary,0.0,0.0,0.0,"));
    }
}
