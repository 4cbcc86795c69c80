//! Session reports: tab-separated, one record per session, fixed columns.
//!
//! Columns: `session sender receiver raw_count sifted_count qber verdict seed`.
//!
//! `qber` is the disclosed-sample estimate with six decimals. A session that
//! failed has verdict `error` and empty count columns.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::Bb84SessionResult;

pub const REPORT_COLUMNS: [&str; 8] = [
    "session",
    "sender",
    "receiver",
    "raw_count",
    "sifted_count",
    "qber",
    "verdict",
    "seed",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub session: String,
    pub sender: String,
    pub receiver: String,
    pub raw_count: Option<usize>,
    pub sifted_count: Option<usize>,
    pub qber: Option<String>,
    pub verdict: String,
    pub seed: u64,
}

impl ReportRecord {
    pub fn from_result(r: &Bb84SessionResult) -> Self {
        ReportRecord {
            session: r.session_id.clone(),
            sender: r.sender.clone(),
            receiver: r.receiver.clone(),
            raw_count: Some(r.raw_count),
            sifted_count: Some(r.sifted_count),
            qber: Some(format!("{:.6}", r.qber_estimate)),
            verdict: r.verdict.as_str().to_string(),
            seed: r.seed,
        }
    }

    pub fn errored(session: &str, sender: &str, receiver: &str, seed: u64) -> Self {
        ReportRecord {
            session: session.to_string(),
            sender: sender.to_string(),
            receiver: receiver.to_string(),
            raw_count: None,
            sifted_count: None,
            qber: None,
            verdict: "error".to_string(),
            seed,
        }
    }

    pub fn qber_value(&self) -> Option<f64> {
        self.qber.as_deref().and_then(|q| q.parse().ok())
    }
}

fn io_error(e: impl std::fmt::Display) -> Error {
    Error::invalid("report", e.to_string())
}

pub fn write_report<W: Write>(records: &[ReportRecord], out: W) -> Result<()> {
    let mut writer = csv::WriterBuilder::new()
        .delimiter(b'\t')
        .has_headers(true)
        .from_writer(out);
    for record in records {
        writer.serialize(record).map_err(io_error)?;
    }
    if records.is_empty() {
        writer.write_record(REPORT_COLUMNS).map_err(io_error)?;
    }
    writer.flush().map_err(io_error)
}

pub fn report_to_string(records: &[ReportRecord]) -> String {
    let mut buf = Vec::new();
    write_report(records, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("report is UTF-8")
}

pub fn read_report<R: Read>(input: R) -> Result<Vec<ReportRecord>> {
    let mut reader = csv::ReaderBuilder::new().delimiter(b'\t').from_reader(input);
    let header: Vec<String> = reader.headers().map_err(io_error)?.iter().map(str::to_string).collect();
    if header != REPORT_COLUMNS {
        return Err(Error::invalid("report", format!("unexpected header {header:?}")));
    }
    reader
        .deserialize()
        .map(|r| r.map_err(io_error))
        .collect()
}
