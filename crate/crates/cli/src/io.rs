//! CSV ingestion and full-precision output.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1};
use sqr::Dataset;

pub const INTERCEPT_NAME: &str = "(intercept)";

#[derive(Debug, Clone, PartialEq)]
pub enum DataError {
    Io { path: String, message: String },
    EmptyFile { path: String },
    MissingTarget { target: String, available: Vec<String> },
    /// `row` is the 1-based data row, not counting the header.
    NonNumericCell { row: usize, column: String, value: String },
    Malformed { path: String, message: String },
}

impl fmt::Display for DataError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataError::Io { path, message } => write!(f, "cannot read {path}: {message}"),
            DataError::EmptyFile { path } => write!(f, "{path} has no header or no data rows"),
            DataError::MissingTarget { target, available } => write!(
                f,
                "target column '{target}' not found (available columns: {})",
                available.join(", ")
            ),
            DataError::NonNumericCell { row, column, value } => {
                write!(f, "row {row}, column '{column}': '{value}' is not a finite number")
            }
            DataError::Malformed { path, message } => write!(f, "{path}: {message}"),
        }
    }
}

impl std::error::Error for DataError {}

/// A dataset read from disk with its term names, intercept first.
#[derive(Debug, Clone)]
pub struct LoadedData {
    pub data: Dataset,
    pub terms: Vec<String>,
}

fn parse_cell(raw: &str, row: usize, column: &str) -> Result<f64, DataError> {
    raw.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| DataError::NonNumericCell {
            row,
            column: column.to_string(),
            value: raw.to_string(),
        })
}

/// Reads a headered CSV file. `target` names the response; every other
/// column is a numeric feature, and an intercept column is prepended.
pub fn read_dataset(path: &Path, target: &str) -> Result<LoadedData, DataError> {
    let shown = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| DataError::Io {
            path: shown.clone(),
            message: e.to_string(),
        })?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| DataError::Malformed {
            path: shown.clone(),
            message: e.to_string(),
        })?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if header.is_empty() || header.iter().all(|h| h.is_empty()) {
        return Err(DataError::EmptyFile { path: shown });
    }
    let t = header
        .iter()
        .position(|h| h == target)
        .ok_or_else(|| DataError::MissingTarget {
            target: target.to_string(),
            available: header.clone(),
        })?;

    let mut y = Vec::new();
    let mut feats = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| DataError::Malformed {
            path: shown.clone(),
            message: e.to_string(),
        })?;
        for (j, cell) in rec.iter().enumerate() {
            let v = parse_cell(cell, i + 1, &header[j])?;
            if j == t {
                y.push(v);
            } else {
                feats.push(v);
            }
        }
    }
    if y.is_empty() {
        return Err(DataError::EmptyFile { path: shown });
    }
    let n = y.len();
    let k = header.len() - 1;
    let features = Array2::from_shape_vec((n, k), feats).expect("rows have the header's width");
    let data = Dataset::with_intercept(&features, Array1::from(y)).map_err(|e| DataError::Malformed {
        path: shown,
        message: e.to_string(),
    })?;
    let terms = std::iter::once(INTERCEPT_NAME.to_string())
        .chain(header.into_iter().enumerate().filter(|&(j, _)| j != t).map(|(_, h)| h))
        .collect();
    Ok(LoadedData { data, terms })
}

/// 17 significant digits, enough to round-trip any finite double.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        String::new()
    }
}

pub fn create(path: &Path) -> std::io::Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// Writes `y` and the non-intercept columns of `data` under `header`.
pub fn write_dataset(path: &Path, data: &Dataset, feature_names: &[String]) -> std::io::Result<()> {
    let mut w = create(path)?;
    let start = usize::from(data.has_intercept());
    write!(w, "y")?;
    for name in feature_names {
        write!(w, ",{name}")?;
    }
    writeln!(w)?;
    for i in 0..data.n() {
        write!(w, "{}", fmt_f64(data.y()[i]))?;
        for j in start..data.p() {
            write!(w, ",{}", fmt_f64(data.x()[[i, j]]))?;
        }
        writeln!(w)?;
    }
    w.flush()
}

/// One row per term, one column per named coefficient vector.
pub fn write_columns(path: &Path, terms: &[String], columns: &[(&str, ArrayView1<'_, f64>)]) -> std::io::Result<()> {
    let mut w = create(path)?;
    write!(w, "term")?;
    for (name, _) in columns {
        write!(w, ",{name}")?;
    }
    writeln!(w)?;
    for (j, term) in terms.iter().enumerate() {
        write!(w, "{term}")?;
        for (_, col) in columns {
            write!(w, ",{}", fmt_f64(col[j]))?;
        }
        writeln!(w)?;
    }
    w.flush()
}

/// Reads a file written by [`write_columns`]: term names and one vector
/// per value column, in header order.
pub fn read_columns(path: &Path) -> Result<(Vec<String>, Vec<(String, Array1<f64>)>), DataError> {
    let shown = path.display().to_string();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| DataError::Io {
        path: shown.clone(),
        message: e.to_string(),
    })?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| DataError::Malformed {
            path: shown.clone(),
            message: e.to_string(),
        })?
        .iter()
        .map(str::to_string)
        .collect();
    if header.len() < 2 {
        return Err(DataError::EmptyFile { path: shown });
    }
    let mut terms = Vec::new();
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); header.len() - 1];
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| DataError::Malformed {
            path: shown.clone(),
            message: e.to_string(),
        })?;
        terms.push(rec[0].to_string());
        for (j, col) in cols.iter_mut().enumerate() {
            col.push(parse_cell(&rec[j + 1], i + 1, &header[j + 1])?);
        }
    }
    if terms.is_empty() {
        return Err(DataError::EmptyFile { path: shown });
    }
    Ok((
        terms,
        header.into_iter().skip(1).zip(cols.into_iter().map(Array1::from)).collect(),
    ))
}
