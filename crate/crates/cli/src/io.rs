use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::CliError;

/// Reads the observation column of a headed CSV: the column named `y`, or
/// the only column.
pub fn read_series(path: &Path) -> Result<Vec<f64>, CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
        .clone();
    let column = match headers.iter().position(|h| h == "y") {
        Some(c) => c,
        None if headers.len() == 1 => 0,
        None => {
            return Err(CliError::Data(format!(
                "{}: no `y` column in header [{}]",
                path.display(),
                headers.iter().collect::<Vec<_>>().join(",")
            )))
        }
    };
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            CliError::Data(format!("{}: line {line}: {e}", path.display()))
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = record
            .get(column)
            .ok_or_else(|| CliError::Data(format!("{}: line {line}: missing column {column}", path.display())))?;
        let v: f64 = field
            .parse()
            .map_err(|_| CliError::Data(format!("{}: line {line}: `{field}` is not a number", path.display())))?;
        if !v.is_finite() {
            return Err(CliError::Data(format!(
                "{}: line {line}: non-finite value",
                path.display()
            )));
        }
        values.push(v);
    }
    if values.is_empty() {
        return Err(CliError::Data(format!("{}: no observations", path.display())));
    }
    Ok(values)
}

/// CSV with a header row; every cell is already formatted.
pub fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let werr = |e: csv::Error| CliError::Data(format!("csv encoding: {e}"));
    w.write_record(header).map_err(werr)?;
    for row in rows {
        w.write_record(&row).map_err(werr)?;
    }
    w.into_inner().map_err(|e| CliError::Data(format!("csv encoding: {e}")))
}

pub fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut out = serde_json::to_vec_pretty(value).map_err(|e| CliError::Data(format!("json encoding: {e}")))?;
    out.push(b'\n');
    Ok(out)
}

/// Formats a float with the shortest representation that round-trips.
pub fn num(v: f64) -> String {
    format!("{v}")
}

pub fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Writes `bytes` to `dir/name` through a temporary file and a rename.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let target = dir.join(name);
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(tmp.path(), e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(tmp.path(), e))?;
    tmp.persist(&target).map_err(|e| CliError::io(&target, e.error))?;
    Ok(target)
}
