//! Results CSV, summary JSON and constellation dumps.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{MetricsTable, RunError, RunRecord, FAILURE_MSE};
use crate::em::ChannelEstimate;
use crate::ofdm::FreqGrid;
use crate::receiver::ReceiverMode;
use crate::{Error, Result};

/// One results row: a run at one EM iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub run_id: usize,
    pub snr_db: f64,
    pub mode: ReceiverMode,
    pub seed: u64,
    pub theta: f64,
    pub iteration: usize,
    pub mse: f64,
    pub phase_corrected: bool,
    pub confident: Option<bool>,
    pub evidence_gap: Option<f64>,
    pub detected_l: Option<usize>,
    pub failed: bool,
}

impl ResultRow {
    pub fn from_record(record: &RunRecord) -> impl Iterator<Item = ResultRow> + '_ {
        record.mse.iter().enumerate().map(move |(k, &mse)| ResultRow {
            run_id: record.run_id,
            snr_db: record.snr_db,
            mode: record.mode,
            seed: record.seed,
            theta: record.theta,
            iteration: k + 1,
            mse,
            phase_corrected: record.phase_corrected_at == Some(k + 1),
            confident: record.detection.as_ref().map(|d| d.confident),
            evidence_gap: record.detection.as_ref().map(|d| d.evidence_gap),
            detected_l: record.detection.as_ref().map(|d| d.shift),
            failed: mse > FAILURE_MSE,
        })
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Writes the header and one row per run per iteration.
pub fn write_results_csv<W: Write>(out: W, records: &[RunRecord]) -> std::result::Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for rec in records {
        for row in ResultRow::from_record(rec) {
            w.serialize(row)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_results_file(path: &Path, records: &[RunRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_results_csv(BufWriter::new(file), records).map_err(|e| csv_error(path, e))
}

#[derive(Serialize)]
struct Summary<'a> {
    #[serde(flatten)]
    table: &'a MetricsTable,
    errors: &'a [RunError],
}

pub fn write_summary_json(path: &Path, table: &MetricsTable, errors: &[RunError]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, &Summary { table, errors }).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

/// Parses one data row of the results CSV (no header).
pub fn parse_record_row(row: &str) -> Result<ResultRow> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(row.trim().as_bytes());
    reader
        .deserialize()
        .next()
        .ok_or_else(|| Error::arg("empty seed record"))?
        .map_err(|e| Error::arg(format!("bad seed record: {e}")))
}

#[derive(Serialize)]
struct ConstellationRow {
    kind: &'static str,
    m: usize,
    n: usize,
    re: f64,
    im: f64,
    tx_symbol: usize,
}

/// Writes `Y` and `Y_eq = Y / Ĥ` as CSV rows `kind,m,n,re,im,tx_symbol`.
///
/// `2·M·N` data rows follow the header, `Y` first.
pub fn dump_constellation(
    path: &Path,
    received: &FreqGrid,
    estimate: &ChannelEstimate,
    transmitted: &[usize],
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let equalized = super::equalize(received, estimate);
    for (kind, grid) in [("y", received), ("y_eq", &equalized)] {
        for n in 0..grid.cols() {
            for m in 0..grid.rows() {
                let v = grid.get(m, n);
                w.serialize(ConstellationRow {
                    kind,
                    m,
                    n,
                    re: v.re,
                    im: v.im,
                    tx_symbol: transmitted[n * grid.rows() + m],
                })
                .map_err(|e| csv_error(path, e))?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}
