//! CSV dataset loading and writing.
//!
//! Values are written with Rust's shortest-round-trip float formatting
//! and parsed back with the standard grammar, so a write/load cycle
//! reproduces every coordinate bit for bit — datasets exported by `gen`
//! are exactly the datasets later runs consume.

use std::fmt::Write as _;
use std::path::Path;

use repclust_core::data::{DataError, Dataset, Matrix};

/// Which CSV column holds ground-truth labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumn {
    /// Header name; requires the file to have a header row.
    Name(String),
    /// Zero-based position.
    Index(usize),
}

/// Errors from CSV loading and writing.
#[derive(Debug, thiserror::Error)]
pub enum IoError {
    /// File-level read/write or CSV framing failure.
    #[error(transparent)]
    Csv(#[from] csv::Error),
    /// No data rows.
    #[error("no data rows")]
    Empty,
    /// Named label column missing from the header.
    #[error("no column named {name:?} in the header")]
    ColumnNotFound {
        /// The requested column name.
        name: String,
    },
    /// Label index outside the row width.
    #[error("label column {index} out of range for {width} columns")]
    LabelIndexOutOfRange {
        /// The requested column index.
        index: usize,
        /// Row width.
        width: usize,
    },
    /// A feature cell failed to parse as a number.
    #[error("line {line}, column {column}: {content:?} is not a number")]
    InvalidCell {
        /// 1-based line in the file.
        line: u64,
        /// 1-based column.
        column: usize,
        /// The offending text.
        content: String,
    },
    /// A row's width disagrees with the first row.
    #[error("line {line}: expected {expected} fields, got {actual}")]
    RaggedRow {
        /// 1-based line in the file.
        line: u64,
        /// Width of the first row.
        expected: usize,
        /// Width of this row.
        actual: usize,
    },
    /// Parsed values violate dataset invariants (non-finite entries, ...).
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Load a dataset from CSV.
///
/// A header row is detected by parsing: if every cell of the first row
/// (minus the label column) reads as a number, the file is headerless.
/// Naming the label column via [`LabelColumn::Name`] requires a header.
/// Integer labels are taken as-is; anything else (including a mixed
/// column) is encoded by first appearance: 0 for the first distinct
/// value, 1 for the next, and so on. The dataset is named after the file
/// stem.
pub fn load_csv(path: &Path, label_column: Option<&LabelColumn>) -> Result<Dataset, IoError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;

    let mut rows: Vec<(u64, csv::StringRecord)> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, csv::Position::line);
        rows.push((line, record));
    }
    if rows.is_empty() {
        return Err(IoError::Empty);
    }

    let width = rows[0].1.len();
    let label_index = match label_column {
        None => None,
        Some(LabelColumn::Index(index)) => {
            if *index >= width {
                return Err(IoError::LabelIndexOutOfRange { index: *index, width });
            }
            Some(*index)
        }
        Some(LabelColumn::Name(name)) => {
            let header = &rows[0].1;
            let index = header
                .iter()
                .position(|cell| cell == name)
                .ok_or_else(|| IoError::ColumnNotFound { name: name.clone() })?;
            Some(index)
        }
    };

    // A named label implies a header; otherwise the first row is a header
    // exactly when some non-label cell is not numeric.
    let has_header = match label_column {
        Some(LabelColumn::Name(_)) => true,
        _ => rows[0]
            .1
            .iter()
            .enumerate()
            .any(|(i, cell)| Some(i) != label_index && cell.parse::<f64>().is_err()),
    };
    let data_rows = &rows[if has_header { 1 } else { 0 }..];
    if data_rows.is_empty() {
        return Err(IoError::Empty);
    }

    let n_features = width - usize::from(label_index.is_some());
    let mut values = Vec::with_capacity(data_rows.len() * n_features);
    let mut raw_labels: Vec<String> = Vec::with_capacity(data_rows.len());
    for (line, record) in data_rows {
        if record.len() != width {
            return Err(IoError::RaggedRow {
                line: *line,
                expected: width,
                actual: record.len(),
            });
        }
        for (column, cell) in record.iter().enumerate() {
            if Some(column) == label_index {
                raw_labels.push(cell.to_string());
                continue;
            }
            let value: f64 = cell.parse().map_err(|_| IoError::InvalidCell {
                line: *line,
                column: column + 1,
                content: cell.to_string(),
            })?;
            values.push(value);
        }
    }

    let name = path.file_stem().map_or_else(
        || "dataset".to_string(),
        |stem| stem.to_string_lossy().into_owned(),
    );
    let matrix = Matrix::new(data_rows.len(), n_features, values)?;
    if label_index.is_none() {
        return Ok(Dataset::new(name, matrix)?);
    }
    Ok(Dataset::with_labels(name, matrix, encode_labels(&raw_labels))?)
}

/// Integer labels pass through; otherwise the whole column is coded by
/// first appearance.
fn encode_labels(raw: &[String]) -> Vec<i64> {
    let parsed: Option<Vec<i64>> = raw.iter().map(|s| s.parse().ok()).collect();
    if let Some(labels) = parsed {
        return labels;
    }
    let mut codes: Vec<(&str, i64)> = Vec::new();
    raw.iter()
        .map(|value| {
            if let Some(&(_, code)) = codes.iter().find(|(seen, _)| seen == value) {
                return code;
            }
            let code = codes.len() as i64;
            codes.push((value, code));
            code
        })
        .collect()
}

/// Write a dataset as CSV: header `f0..f{d-1}` plus `label` when ground
/// truth is present, then one row per point.
pub fn write_csv(path: &Path, dataset: &Dataset) -> Result<(), IoError> {
    let mut writer = csv::Writer::from_path(path)?;
    let d = dataset.n_features();

    let mut header: Vec<String> = (0..d).map(|j| format!("f{j}")).collect();
    if dataset.labels().is_some() {
        header.push("label".to_string());
    }
    writer.write_record(&header)?;

    let mut cell = String::new();
    for (i, row) in dataset.points().rows().enumerate() {
        let mut record = csv::StringRecord::new();
        for value in row {
            cell.clear();
            write!(cell, "{value}").expect("formatting to a String cannot fail");
            record.push_field(&cell);
        }
        if let Some(labels) = dataset.labels() {
            cell.clear();
            write!(cell, "{}", labels[i]).expect("formatting to a String cannot fail");
            record.push_field(&cell);
        }
        writer.write_record(&record)?;
    }
    writer.flush().map_err(csv::Error::from)?;
    Ok(())
}
