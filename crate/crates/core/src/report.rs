//! Machine-readable output: a JSON envelope and flat CSV rows.

use std::io::Write;

use serde::Serialize;
use serde_json::{json, Value};

use crate::error::Result;
use crate::sim::McSummary;

/// `{command, config, results, seed, version}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub command: String,
    pub config: Value,
    pub results: Value,
    pub seed: u64,
    pub version: String,
}

impl Report {
    pub fn new<C: Serialize, R: Serialize>(command: &str, config: &C, results: &R, seed: u64) -> Result<Self> {
        Ok(Report {
            command: command.to_string(),
            config: serde_json::to_value(config)?,
            results: serde_json::to_value(results)?,
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// One labelled Monte Carlo summary, e.g. a table cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub example: String,
    pub m: usize,
    pub pi1: f64,
    pub procedure: String,
    #[serde(flatten)]
    pub summary: McSummary,
}

impl SummaryRow {
    pub fn to_json(&self) -> Value {
        json!({
            "example": self.example,
            "m": self.m,
            "pi1": self.pi1,
            "procedure": self.procedure,
            "asn": self.summary.asn,
            "fdr_hat_pct": self.summary.fdr_hat_pct,
            "fnr_hat_pct": self.summary.fnr_hat_pct,
            "se_asn": self.summary.se_asn,
            "se_fdr_pct": self.summary.se_fdr_pct,
            "se_fnr_pct": self.summary.se_fnr_pct,
            "savings_pct": self.summary.savings_pct,
        })
    }
}

pub const CSV_HEADER: [&str; 14] = [
    "example",
    "m",
    "pi1",
    "procedure",
    "asn",
    "se_asn",
    "fdr_hat_pct",
    "se_fdr_pct",
    "fnr_hat_pct",
    "se_fnr_pct",
    "runs",
    "truncated",
    "exhausted",
    "savings_pct",
];

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        let s = &r.summary;
        w.write_record([
            r.example.clone(),
            r.m.to_string(),
            r.pi1.to_string(),
            r.procedure.clone(),
            format!("{:.4}", s.asn),
            format!("{:.4}", s.se_asn),
            format!("{:.4}", s.fdr_hat_pct),
            format!("{:.4}", s.se_fdr_pct),
            format!("{:.4}", s.fnr_hat_pct),
            format!("{:.4}", s.se_fnr_pct),
            s.runs.to_string(),
            s.truncated.to_string(),
            s.exhausted.to_string(),
            s.savings_pct.map(|v| format!("{v:.4}")).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
