//! CSV ingestion and emission shared by the file schemas.
//!
//! Every CSV the engine writes can be re-read through [`Table::read`], so
//! outputs round-trip through the same ingestion code as inputs.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Malformed {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("{path}, row {row}: {message}")]
    Schema {
        path: String,
        row: usize,
        message: String,
    },
}

/// A rectangular CSV file: one header row plus string cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(headers: Vec<String>) -> Self {
        Self {
            headers,
            rows: Vec::new(),
        }
    }

    pub fn read(path: &Path) -> Result<Self, CsvError> {
        let wrap_io = |source| CsvError::Io {
            path: path.display().to_string(),
            source,
        };
        let raw = std::fs::read_to_string(path).map_err(wrap_io)?;
        Self::parse(path, &raw)
    }

    pub fn parse(path: &Path, raw: &str) -> Result<Self, CsvError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(raw.as_bytes());
        let wrap = |source| CsvError::Malformed {
            path: path.display().to_string(),
            source,
        };
        let headers = reader
            .headers()
            .map_err(wrap)?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.map_err(wrap)?;
            rows.push(record.iter().map(str::to_string).collect());
        }
        Ok(Self { headers, rows })
    }

    /// Checks the header row matches `expected` exactly (order included).
    pub fn expect_headers(&self, expected: &[&str]) -> Result<(), CsvError> {
        if self.headers.len() != expected.len()
            || self.headers.iter().zip(expected).any(|(a, b)| a != b)
        {
            return Err(CsvError::Schema {
                path: String::new(),
                row: 1,
                message: format!(
                    "expected header `{}`, got `{}`",
                    expected.join(","),
                    self.headers.join(",")
                ),
            });
        }
        Ok(())
    }

    /// Column index by header name.
    pub fn column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    pub fn push_row(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.headers.len());
        self.rows.push(row);
    }

    /// Serializes to CSV text. Cells are written verbatim; callers keep
    /// them free of commas and quotes (numeric data and identifiers).
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.headers.join(","));
        for row in &self.rows {
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<(), CsvError> {
        std::fs::write(path, self.to_csv_string()).map_err(|source| CsvError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

/// Parses a numeric cell, reporting file, row and column on failure.
pub fn parse_f64(path: &Path, row: usize, column: &str, cell: &str) -> Result<f64, CsvError> {
    cell.parse::<f64>().map_err(|_| CsvError::Schema {
        path: path.display().to_string(),
        row,
        message: format!("column `{column}`: not a number: `{cell}`"),
    })
}

/// Formats a float the way all output CSVs do: shortest round-trip form.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_round_trips() {
        let mut t = Table::new(vec!["year".into(), "value".into()]);
        t.push_row(vec!["2008".into(), fmt_f64(1.25)]);
        t.push_row(vec!["2009".into(), fmt_f64(2.0)]);
        let text = t.to_csv_string();
        let back = Table::parse(Path::new("mem"), &text).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn parse_reports_row_and_column() {
        let err = parse_f64(Path::new("x.csv"), 7, "value", "abc").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 7") && msg.contains("value"), "{msg}");
    }

    #[test]
    fn fmt_round_trips_significant_values() {
        for v in [0.1, 1.0 / 3.0, 123456.789, 1e-12, 0.0] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }
}
