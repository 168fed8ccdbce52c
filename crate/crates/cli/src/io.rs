//! CSV and JSON files read and written by the subcommands.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use plg_core::Dataset;
use serde::Serialize;

use crate::error::{CliError, Result};

fn format_error(path: &Path, message: impl Into<String>) -> CliError {
    CliError::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    match e.kind() {
        csv::ErrorKind::Io(_) => match e.into_kind() {
            csv::ErrorKind::Io(io) => CliError::io(path, io),
            _ => unreachable!(),
        },
        _ => format_error(path, e.to_string()),
    }
}

fn open_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

/// Parses every record into numbers, naming the row (1-based, header = row
/// 1) and column of the first bad cell.
fn read_numeric(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut reader = open_reader(path)?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(format_error(path, "missing header row"));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let row = record.position().map_or(0, |p| p.line());
        let mut values = Vec::with_capacity(header.len());
        for (cell, column) in record.iter().zip(&header) {
            let bad = |message: String| CliError::Cell {
                path: path.to_path_buf(),
                row,
                column: column.clone(),
                message,
            };
            if cell.is_empty() || cell.eq_ignore_ascii_case("na") || cell.eq_ignore_ascii_case("nan") {
                return Err(bad("missing value".into()));
            }
            let v: f64 = cell.parse().map_err(|_| bad(format!("not a number: '{cell}'")))?;
            if !v.is_finite() {
                return Err(bad(format!("value must be finite, got '{cell}'")));
            }
            values.push(v);
        }
        rows.push(values);
    }
    Ok((header, rows))
}

/// Reads a data set whose first column, named `y`, is the response and whose
/// remaining columns form X in file order.
pub fn ingest_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let (header, rows) = read_numeric(path)?;
    if header[0] != "y" {
        return Err(format_error(
            path,
            format!("the first column must be named \"y\", found \"{}\"", header[0]),
        ));
    }
    if header.len() < 2 {
        return Err(format_error(path, "no predictor columns after \"y\""));
    }
    if rows.is_empty() {
        return Err(format_error(path, "no data rows"));
    }
    let y: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let x: Vec<Vec<f64>> = rows.into_iter().map(|r| r[1..].to_vec()).collect();
    Ok(Dataset::from_rows(y, &x)?)
}

/// Shortest decimal text that parses back to the same f64.
pub fn format_f64(v: f64) -> String {
    format!("{v:?}")
}

fn write_table<'a>(
    path: &Path,
    header: &[String],
    rows: impl Iterator<Item = Vec<f64>> + 'a,
) -> Result<()> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut writer = csv::Writer::from_writer(BufWriter::new(file));
    writer.write_record(header).map_err(|e| csv_error(path, e))?;
    for row in rows {
        writer
            .write_record(row.iter().map(|v| format_f64(*v)))
            .map_err(|e| csv_error(path, e))?;
    }
    writer.flush().map_err(|e| CliError::io(path, e))
}

/// Writes a data set in the layout [`ingest_csv`] reads, with predictor
/// columns named x1, x2, ….
pub fn write_dataset_csv(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    let mut header = vec!["y".to_string()];
    header.extend((1..=data.p()).map(|j| format!("x{j}")));
    let rows = (0..data.n()).map(|i| {
        let mut row = vec![data.y()[i]];
        row.extend(data.x().row(i).iter());
        row
    });
    write_table(path.as_ref(), &header, rows)
}

pub fn write_samples(path: impl AsRef<Path>, labels: &[String], draws: &[Vec<f64>]) -> Result<()> {
    write_table(path.as_ref(), labels, draws.iter().cloned())
}

/// Reads a samples file back as labels and an N × d matrix.
pub fn read_samples(path: impl AsRef<Path>) -> Result<(Vec<String>, DMatrix<f64>)> {
    let path = path.as_ref();
    let (header, rows) = read_numeric(path)?;
    if rows.is_empty() {
        return Err(format_error(path, "no draws"));
    }
    let m = DMatrix::from_fn(rows.len(), header.len(), |i, j| rows[i][j]);
    Ok((header, m))
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}
