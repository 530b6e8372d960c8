use std::path::Path;

use serde::{Deserialize, Serialize};

use super::evaluate::{month_reports, DocumentReport};
use super::metrics::MetricsReport;
use super::{EvalConfig, WindowMode};
use crate::bridge::BosPolicy;
use crate::error::{Error, Result};
use crate::io_util::{read, write_atomic};
use crate::month::YearMonth;

/// One line of an evaluation report: a month aggregate, or a single
/// document when `doc_id` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    pub dataset: String,
    pub year_month: Option<YearMonth>,
    pub mode: WindowMode,
    #[serde(rename = "C")]
    pub context: usize,
    #[serde(rename = "S")]
    pub step: usize,
    #[serde(rename = "L")]
    pub total_bits: f64,
    pub n_tokens: u64,
    pub n_chars: u64,
    pub n_bytes: u64,
    pub bpt: f64,
    pub bpc: f64,
    pub bpb: f64,
    pub rate: f64,
    pub payload_bytes: Option<u64>,
    pub bos_policy: BosPolicy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doc_id: Option<String>,
}

impl ReportRow {
    pub fn new(
        model: &str,
        dataset: &str,
        year_month: Option<YearMonth>,
        cfg: &EvalConfig,
        m: &MetricsReport,
        bos_policy: BosPolicy,
    ) -> Self {
        ReportRow {
            model: model.to_owned(),
            dataset: dataset.to_owned(),
            year_month,
            mode: cfg.mode,
            context: cfg.context,
            step: cfg.effective_step(),
            total_bits: m.total_bits,
            n_tokens: m.n_tokens,
            n_chars: m.n_chars,
            n_bytes: m.n_bytes,
            bpt: m.bpt,
            bpc: m.bpc,
            bpb: m.bpb,
            rate: m.rate,
            payload_bytes: m.payload_bytes,
            bos_policy,
            doc_id: None,
        }
    }

    pub fn with_doc(mut self, doc_id: &str) -> Self {
        self.doc_id = Some(doc_id.to_owned());
        self
    }

    pub fn metrics(&self) -> MetricsReport {
        MetricsReport {
            total_bits: self.total_bits,
            n_tokens: self.n_tokens,
            n_chars: self.n_chars,
            n_bytes: self.n_bytes,
            bpt: self.bpt,
            bpc: self.bpc,
            bpb: self.bpb,
            rate: self.rate,
            payload_bytes: self.payload_bytes,
        }
    }
}

/// Rows of one run: one per document, then one per month pooled by size.
pub fn run_rows(
    model: &str,
    dataset: &str,
    cfg: &EvalConfig,
    reports: &[DocumentReport],
) -> Result<(Vec<ReportRow>, Vec<ReportRow>)> {
    let docs = reports
        .iter()
        .map(|r| ReportRow::new(model, dataset, r.year_month, cfg, &r.metrics, r.bos_policy).with_doc(&r.doc_id))
        .collect();
    let bos = reports.first().map(|r| r.bos_policy).unwrap_or_default();
    let months = month_reports(reports)?
        .into_iter()
        .map(|(ym, m)| ReportRow::new(model, dataset, ym, cfg, &m, bos))
        .collect();
    Ok((docs, months))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowFormat {
    Csv,
    JsonLines,
}

impl RowFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => Ok(RowFormat::Csv),
            Some("jsonl") | Some("json") => Ok(RowFormat::JsonLines),
            _ => Err(Error::InvalidConfig(format!(
                "cannot tell the row format of {}; use .csv or .jsonl",
                path.display()
            ))),
        }
    }
}

pub fn rows_to_bytes(rows: &[ReportRow], format: RowFormat) -> Result<Vec<u8>> {
    match format {
        RowFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in rows {
                w.serialize(r)?;
            }
            w.into_inner().map_err(|e| Error::io("flushing CSV", e.into_error()))
        }
        RowFormat::JsonLines => {
            let mut out = Vec::new();
            for r in rows {
                serde_json::to_writer(&mut out, r)?;
                out.push(b'\n');
            }
            Ok(out)
        }
    }
}

pub fn rows_from_bytes(bytes: &[u8], format: RowFormat) -> Result<Vec<ReportRow>> {
    match format {
        RowFormat::Csv => csv::Reader::from_reader(bytes)
            .deserialize()
            .map(|r| r.map_err(Error::from))
            .collect(),
        RowFormat::JsonLines => bytes
            .split(|&b| b == b'\n')
            .filter(|l| !l.iter().all(u8::is_ascii_whitespace))
            .map(|l| serde_json::from_slice(l).map_err(Error::from))
            .collect(),
    }
}

/// Writes rows atomically, in the format named by the file extension.
pub fn write_rows(path: &Path, rows: &[ReportRow]) -> Result<()> {
    let bytes = rows_to_bytes(rows, RowFormat::from_path(path)?)?;
    write_atomic(path, &bytes)
}

pub fn read_rows(path: &Path) -> Result<Vec<ReportRow>> {
    rows_from_bytes(&read(path)?, RowFormat::from_path(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(ym: &str, doc: Option<&str>) -> ReportRow {
        let m = MetricsReport::new(1234.5, 100, 120, 130, Some(150)).unwrap();
        let r = ReportRow::new("uniform", "demo", Some(ym.parse().unwrap()), &EvalConfig::sliding(2048, 512), &m, BosPolicy::None);
        match doc {
            Some(d) => r.with_doc(d),
            None => r,
        }
    }

    #[test]
    fn csv_header_is_stable() {
        let bytes = rows_to_bytes(&[row("2023-01", None)], RowFormat::Csv).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "model,dataset,year_month,mode,C,S,L,n_tokens,n_chars,n_bytes,bpt,bpc,bpb,rate,payload_bytes,bos_policy"
        );
        assert!(text.lines().nth(1).unwrap().starts_with("uniform,demo,2023-01,sliding,2048,512,1234.5,"));
    }

    #[test]
    fn round_trips_both_formats() {
        let dir = tempfile::tempdir().unwrap();
        let mut rows = vec![row("2023-01", None), row("2023-02", None)];
        rows[1].payload_bytes = None;
        rows[1].year_month = None;
        for name in ["r.csv", "r.jsonl"] {
            let p = dir.path().join(name);
            write_rows(&p, &rows).unwrap();
            assert_eq!(read_rows(&p).unwrap(), rows);
        }
        let docs = vec![row("2023-01", Some("2023-01/a")), row("2023-01", Some("2023-01/b"))];
        let p = dir.path().join("d.csv");
        write_rows(&p, &docs).unwrap();
        assert_eq!(read_rows(&p).unwrap(), docs);
        assert!(write_rows(&dir.path().join("r.txt"), &rows).is_err());
    }

    #[test]
    fn float_columns_survive_exactly() {
        let mut r = row("2023-01", None);
        r.bpb = 0.1 + 0.2;
        let back = rows_from_bytes(&rows_to_bytes(&[r.clone()], RowFormat::Csv).unwrap(), RowFormat::Csv).unwrap();
        assert_eq!(back[0].bpb.to_bits(), r.bpb.to_bits());
    }
}
