use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use cuwls::stdf::DataMatrix;

/// Read a numeric matrix. Accepts `,` or `;` as delimiter and an optional
/// header row; any other non-numeric cell is an error with its location.
pub fn read_matrix(path: &Path) -> Result<DataMatrix> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    parse_matrix(&text).with_context(|| format!("in {}", path.display()))
}

pub fn parse_matrix(text: &str) -> Result<DataMatrix> {
    let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    let delimiter = if first.contains(';') && !first.contains(',') { b';' } else { b',' };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let mut values = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for (idx, record) in reader.records().enumerate() {
        let record = record.context("malformed CSV")?;
        let line = record.position().map_or(idx + 1, |p| p.line() as usize);
        if record.iter().all(|c| c.is_empty()) {
            continue;
        }
        let parsed: Vec<Result<f64, _>> = record.iter().map(|c| c.parse::<f64>()).collect();
        if idx == 0 && parsed.iter().any(|p| p.is_err()) {
            // header row
            width = Some(record.len());
            continue;
        }
        match width {
            Some(w) if w != record.len() => {
                bail!("line {line}: expected {w} columns, found {}", record.len())
            }
            None => width = Some(record.len()),
            _ => {}
        }
        for (col, (cell, p)) in record.iter().zip(parsed).enumerate() {
            match p {
                Ok(v) if v.is_finite() => values.push(v),
                _ => bail!("line {line}, column {}: `{cell}` is not a finite number", col + 1),
            }
        }
        rows += 1;
    }
    let d = width.unwrap_or(0);
    if rows == 0 || d == 0 {
        bail!("no data rows");
    }
    Ok(DataMatrix::new(rows, d, values)?)
}

/// Write with a `x1..xd` header and round-trip precision.
pub fn write_matrix(out: &mut dyn Write, data: &DataMatrix) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record((1..=data.d()).map(|j| format!("x{j}")))?;
    for i in 0..data.n() {
        w.write_record(data.row(i).iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
