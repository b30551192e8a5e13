//! Run records as CSV.
//!
//! Header `step,time,policy,trace_crlb,trace_forecast,err_norm,u_0,…`, one row
//! per measurement, floats as `{:.16e}` (17 significant digits, exact
//! round trip), empty `err_norm` without a filter, LF line endings. A run that
//! stopped early ends with a `# error: …` line.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use super::experiment::{RunRecord, RunRow};
use crate::error::{Error, Result};

const FIXED_COLUMNS: [&str; 6] = [
    "step",
    "time",
    "policy",
    "trace_crlb",
    "trace_forecast",
    "err_norm",
];

pub(crate) fn float(out: &mut String, v: f64) {
    write!(out, "{v:.16e}").unwrap();
}

pub fn csv_header(dimension: usize) -> String {
    let mut h = FIXED_COLUMNS.join(",");
    for i in 0..dimension {
        write!(h, ",u_{i}").unwrap();
    }
    h
}

pub fn to_csv(record: &RunRecord) -> String {
    let mut s = csv_header(record.dimension);
    s.push('\n');
    for r in &record.rows {
        write!(s, "{},", r.step).unwrap();
        float(&mut s, r.time);
        write!(s, ",{},", record.policy).unwrap();
        float(&mut s, r.trace_crlb);
        s.push(',');
        float(&mut s, r.trace_forecast);
        s.push(',');
        if let Some(e) = r.err_norm {
            float(&mut s, e);
        }
        for v in &r.u {
            s.push(',');
            float(&mut s, *v);
        }
        s.push('\n');
    }
    if let Some(e) = &record.error {
        writeln!(s, "# error: {}", e.replace('\n', " ")).unwrap();
    }
    s
}

pub fn write_csv<W: Write>(record: &RunRecord, mut w: W) -> std::io::Result<()> {
    w.write_all(to_csv(record).as_bytes())
}

pub fn emit_csv(record: &RunRecord, path: &Path) -> Result<()> {
    fs::write(path, to_csv(record)).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn bad(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Parse(format!("csv line {line}: {msg}"))
}

/// Inverse of [`to_csv`].
pub fn parse_csv(text: &str) -> Result<RunRecord> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Parse("csv is empty".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < FIXED_COLUMNS.len() || cols[..FIXED_COLUMNS.len()] != FIXED_COLUMNS {
        return Err(bad(1, "unexpected header"));
    }
    let dimension = cols.len() - FIXED_COLUMNS.len();
    for (i, c) in cols[FIXED_COLUMNS.len()..].iter().enumerate() {
        if *c != format!("u_{i}") {
            return Err(bad(1, format!("unexpected column {c:?}")));
        }
    }
    let mut record = RunRecord {
        policy: String::new(),
        dimension,
        rows: Vec::new(),
        error: None,
    };
    for (i, line) in lines {
        let n = i + 1;
        if let Some(e) = line.strip_prefix("# error: ") {
            record.error = Some(e.to_string());
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != cols.len() {
            return Err(bad(
                n,
                format!("expected {} fields, found {}", cols.len(), f.len()),
            ));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| bad(n, format!("bad number {s:?}")))
        };
        record.policy = f[2].to_string();
        record.rows.push(RunRow {
            step: f[0]
                .parse()
                .map_err(|_| bad(n, format!("bad step {:?}", f[0])))?,
            time: num(f[1])?,
            trace_crlb: num(f[3])?,
            trace_forecast: num(f[4])?,
            err_norm: if f[5].is_empty() {
                None
            } else {
                Some(num(f[5])?)
            },
            u: f[6..].iter().map(|s| num(s)).collect::<Result<_>>()?,
        });
    }
    Ok(record)
}
