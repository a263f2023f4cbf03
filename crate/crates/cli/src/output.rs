//! On-disk outputs. Every file is written to a temporary sibling and renamed
//! into place.
//!
//! `trace.csv` columns: `t, feas, set_violation, stat_est, dual_norm,
//! x_minus_z, resets` and `potential` when potentials are recorded. The
//! first row is `t = 0`. Floats use shortest round-trip exponent notation.

use std::io::Write;
use std::path::Path;

use salm::solvers::{Trace, TraceRecord};
use serde::Serialize;

use crate::CliError;

pub const TRACE_COLUMNS: [&str; 7] = ["t", "feas", "set_violation", "stat_est", "dual_norm", "x_minus_z", "resets"];

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let res = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    res.map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        CliError::Io(format!("cannot write {}: {e}", path.display()))
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v:e}")
}

fn record_row(r: &TraceRecord, with_potential: bool) -> Vec<String> {
    let mut row = vec![
        r.t.to_string(),
        fmt_f64(r.feasibility),
        fmt_f64(r.set_violation),
        fmt_f64(r.stat_est),
        fmt_f64(r.dual_norm),
        fmt_f64(r.x_minus_z),
        r.resets.to_string(),
    ];
    if with_potential {
        row.push(r.potential.map(fmt_f64).unwrap_or_default());
    }
    row
}

pub fn trace_csv(trace: &Trace, with_potential: bool) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = TRACE_COLUMNS.to_vec();
    if with_potential {
        header.push("potential");
    }
    let err = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record(&header).map_err(err)?;
    for r in std::iter::once(&trace.initial).chain(&trace.records) {
        w.write_record(record_row(r, with_potential)).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Io(e.to_string()))
}

/// Table of `(header, rows)` as CSV text.
pub fn table_csv(header: &[&str], rows: &[Vec<String>]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Io(e.to_string()))
}
