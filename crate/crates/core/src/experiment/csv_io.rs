//! CSV files. Floats are written with the shortest representation that parses
//! back to the same bits.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::learner::Trajectory;

use super::{AggregateRow, RunResult};

pub const AGGREGATE_HEADER: [&str; 4] = ["k", "mse_mean", "mse_std", "runs"];
pub const TRAJECTORY_HEADER: [&str; 3] = ["run_id", "k", "squared_error"];

/// Writes a header and rows to `path`.
pub fn write_table<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(file);
    let wrap = |e: csv::Error| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    w.write_record(header).map_err(wrap)?;
    for row in rows {
        w.write_record(row.into_iter().collect::<Vec<_>>()).map_err(wrap)?;
    }
    let mut inner = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    inner.flush().map_err(|e| Error::io(path, e))
}

pub fn emit_csv(result: &RunResult, path: &Path) -> Result<()> {
    write_table(
        path,
        &AGGREGATE_HEADER,
        result
            .aggregate
            .iter()
            .map(|r| [r.k.to_string(), r.mse_mean.to_string(), r.mse_std.to_string(), r.runs.to_string()]),
    )
}

pub fn emit_trajectories(result: &RunResult, path: &Path) -> Result<()> {
    write_table(
        path,
        &TRAJECTORY_HEADER,
        result.trajectories.iter().flat_map(|t| {
            t.records
                .iter()
                .map(move |(k, e)| [t.run_id.to_string(), k.to_string(), e.to_string()])
        }),
    )
}

fn reader<'a>(text: &'a str, header: &[&str], origin: &Path) -> Result<csv::Reader<&'a [u8]>> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let got = r.headers().map_err(|e| format_error(origin, e.to_string()))?;
    if got.iter().ne(header.iter().copied()) {
        return Err(format_error(origin, format!("expected header {}", header.join(","))));
    }
    Ok(r)
}

fn format_error(path: &Path, message: String) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message,
    }
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, origin: &Path) -> Result<T> {
    let line = rec.position().map(|p| p.line()).unwrap_or(0);
    rec.get(i)
        .ok_or_else(|| format_error(origin, format!("line {line}: missing column {i}")))?
        .parse()
        .map_err(|_| format_error(origin, format!("line {line}: bad value in column {i}")))
}

/// Parses the aggregate CSV; `origin` is only used in error messages.
pub fn parse_aggregate_csv(text: &str, origin: &Path) -> Result<Vec<AggregateRow>> {
    let mut r = reader(text, &AGGREGATE_HEADER, origin)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| format_error(origin, e.to_string()))?;
        out.push(AggregateRow {
            k: field(&rec, 0, origin)?,
            mse_mean: field(&rec, 1, origin)?,
            mse_std: field(&rec, 2, origin)?,
            runs: field(&rec, 3, origin)?,
        });
    }
    Ok(out)
}

/// Parses the trajectories CSV back into per-run trajectories (rows grouped by
/// consecutive `run_id`).
pub fn parse_trajectories_csv(text: &str, origin: &Path) -> Result<Vec<Trajectory>> {
    let mut r = reader(text, &TRAJECTORY_HEADER, origin)?;
    let mut out: Vec<Trajectory> = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| format_error(origin, e.to_string()))?;
        let (run_id, k, err): (u64, usize, f64) = (field(&rec, 0, origin)?, field(&rec, 1, origin)?, field(&rec, 2, origin)?);
        match out.last_mut() {
            Some(t) if t.run_id == run_id => t.records.push((k, err)),
            _ => out.push(Trajectory {
                run_id,
                records: vec![(k, err)],
            }),
        }
    }
    Ok(out)
}
