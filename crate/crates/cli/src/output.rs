use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use maxreg_core::verify::VerificationReport;
use maxreg_core::{Error, Result};
use serde::Serialize;

pub fn prepare_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse(format!("{other:?}")),
    }
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| Error::Parse(e.to_string()))?;
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Parse(e.to_string()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    for r in rows {
        w.serialize(r).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    identity: &'a str,
    operator: &'a str,
    n_param: u32,
    rel_error: f64,
    pass: bool,
    skipped: bool,
}

/// `summary.csv`, with the header written even when there are no reports.
pub fn write_summary(path: &Path, reports: &[VerificationReport]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path).map_err(csv_error)?;
    w.write_record(["identity", "operator", "n_param", "rel_error", "pass", "skipped"])
        .map_err(csv_error)?;
    for r in reports {
        let row = SummaryRow {
            identity: r.identity.tag(),
            operator: &r.operator,
            n_param: r.n_param,
            rel_error: r.rel_error,
            pass: r.pass,
            skipped: r.skipped,
        };
        w.serialize(row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}
