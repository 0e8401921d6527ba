use std::fs::{self, File};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::RunFile;
use super::sweep::{RunResult, SlotRecord};
use super::EstimatorKind;
use crate::error::{Error, Result};

pub const RESULTS_HEADER: [&str; 6] = ["estimator", "snr_db", "speed_kmh", "slots", "nmse_db", "ber"];

/// `%g`-style rendering with `sig` significant digits.
pub fn format_sig(v: f64, sig: usize) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let sig = sig.max(1);
    let exp = v.abs().log10().floor() as i32;
    // rounding may carry into the next decade, so re-derive from the rounded text
    let sci = format!("{:.*e}", sig - 1, v);
    let exp = sci.split('e').nth(1).and_then(|e| e.parse::<i32>().ok()).unwrap_or(exp);
    if exp < -5 || exp >= sig as i32 {
        let (mantissa, e) = sci.split_once('e').expect("scientific format");
        return format!("{}e{}", trim_zeros(mantissa), e);
    }
    let decimals = (sig as i32 - 1 - exp).max(0) as usize;
    trim_zeros(&format!("{:.*}", decimals, v)).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub estimator: EstimatorKind,
    pub snr_db: f64,
    pub speed_kmh: f64,
    pub slots: usize,
    pub nmse_db: f64,
    pub ber: f64,
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            path: path.to_path_buf(),
            message: format!("{other:?}"),
        },
    }
}

fn row_fields(r: &RunResult) -> [String; 6] {
    [
        r.estimator.id().to_string(),
        format_sig(r.snr_db, 6),
        format_sig(r.speed_kmh, 6),
        r.slots.to_string(),
        format_sig(r.nmse_db, 6),
        format_sig(r.ber, 6),
    ]
}

/// Appends rows to `results.csv` as points finish, flushing after each.
pub struct ResultsWriter {
    path: std::path::PathBuf,
    inner: csv::Writer<File>,
}

impl ResultsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let mut inner = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        inner.write_record(RESULTS_HEADER).map_err(|e| csv_error(path, e))?;
        inner.flush().map_err(|e| Error::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            inner,
        })
    }

    pub fn append(&mut self, r: &RunResult) -> Result<()> {
        self.inner.write_record(row_fields(r)).map_err(|e| csv_error(&self.path, e))?;
        self.inner.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Writes the results table, header included.
pub fn write_results(path: &Path, results: &[RunResult]) -> Result<()> {
    if results.is_empty() {
        return Err(Error::Config("no results to write".into()));
    }
    let mut w = ResultsWriter::create(path)?;
    results.iter().try_for_each(|r| w.append(r))
}

pub fn read_results(path: &Path) -> Result<Vec<CsvRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = r.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.iter().ne(RESULTS_HEADER) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            message: format!("unexpected header {header:?}"),
        });
    }
    r.deserialize().map(|row| row.map_err(|e| csv_error(path, e))).collect()
}

/// Resolved run description plus version and fingerprint. Feeding it back
/// as a config file reproduces the run.
pub fn write_manifest(path: &Path, run: &RunFile, fingerprint: &str) -> Result<()> {
    let mut m = run.resolved();
    m.artifact_version = Some(env!("CARGO_PKG_VERSION").to_string());
    m.fingerprint = Some(fingerprint.to_string());
    let text = format!("# chanfit run manifest\n{}", m.to_toml()?);
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_slot_dump(path: &Path, records: &[SlotRecord]) -> Result<()> {
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut text = String::from("estimator,snr_db,speed_kmh,slot,seed,channel_checksum,nmse_db,bit_errors\n");
    for r in records {
        text.push_str(&format!(
            "{},{},{},{},{},{:016x},{},{}\n",
            r.estimator,
            format_sig(r.snr_db, 6),
            format_sig(r.speed_kmh, 6),
            r.slot,
            r.seed,
            r.channel_checksum,
            format_sig(r.nmse_db, 6),
            r.bit_errors
        ));
    }
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(format_sig(0.0, 6), "0");
        assert_eq!(format_sig(10.0, 6), "10");
        assert_eq!(format_sig(-12.345678, 6), "-12.3457");
        assert_eq!(format_sig(0.000123456789, 6), "0.000123457");
        assert_eq!(format_sig(1.5e-7, 6), "1.5e-7");
        assert_eq!(format_sig(999999.7, 6), "1e6");
        assert_eq!(format_sig(-100.0, 6), "-100");
        assert_eq!(format_sig(0.5, 6), "0.5");
    }
}
