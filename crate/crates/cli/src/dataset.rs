//! CSV ingestion: header row required, comma separated, '.' decimals.
//! Rows with missing or non-numeric cells are dropped and reported.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use pickands::SampleMatrix;

use crate::DataError;

pub const DEFAULT_MIN_ROWS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct DroppedRow {
    /// 1-based line number in the file, header included.
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParseReport {
    pub rows_read: usize,
    pub dropped: Vec<DroppedRow>,
}

impl fmt::Display for ParseReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} rows read, {} dropped", self.rows_read, self.dropped.len())?;
        for row in self.dropped.iter().take(5) {
            write!(f, "\n  line {}: {}", row.line, row.reason)?;
        }
        if self.dropped.len() > 5 {
            write!(f, "\n  ... and {} more", self.dropped.len() - 5)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
    pub source: PathBuf,
    pub report: ParseReport,
}

impl Dataset {
    pub fn read(path: &Path, min_rows: usize) -> Result<Self> {
        let file = std::fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
        Self::from_reader(file, path, min_rows)
    }

    pub fn from_reader<R: std::io::Read>(reader: R, source: &Path, min_rows: usize) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(reader);
        let names: Vec<String> = rdr
            .headers()
            .with_context(|| format!("cannot read header of {}", source.display()))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        if names.len() < 2 {
            return Err(DataError(format!(
                "{}: need at least 2 columns, found {}",
                source.display(),
                names.len()
            ))
            .into());
        }
        let mut columns = vec![Vec::new(); names.len()];
        let mut report = ParseReport::default();
        for record in rdr.records() {
            let record = record.with_context(|| format!("malformed CSV in {}", source.display()))?;
            report.rows_read += 1;
            let line = record.position().map_or(0, |p| p.line());
            match parse_row(&record, names.len()) {
                Ok(values) => {
                    for (col, v) in columns.iter_mut().zip(values) {
                        col.push(v);
                    }
                }
                Err(reason) => report.dropped.push(DroppedRow { line, reason }),
            }
        }
        let n = columns[0].len();
        if n < min_rows {
            return Err(DataError(format!(
                "{}: {n} usable rows after dropping {} (at least {min_rows} required)",
                source.display(),
                report.dropped.len()
            ))
            .into());
        }
        Ok(Self {
            names,
            columns,
            source: source.to_path_buf(),
            report,
        })
    }

    pub fn n(&self) -> usize {
        self.columns[0].len()
    }

    pub fn d(&self) -> usize {
        self.columns.len()
    }

    pub fn sample(&self) -> Result<SampleMatrix> {
        Ok(SampleMatrix::from_columns(&self.columns)?)
    }

    /// Indices of columns whose values are all equal.
    pub fn constant_columns(&self) -> Vec<usize> {
        (0..self.d())
            .filter(|&i| self.columns[i].iter().all(|v| *v == self.columns[i][0]))
            .collect()
    }
}

fn parse_row(record: &csv::StringRecord, width: usize) -> std::result::Result<Vec<f64>, String> {
    if record.len() != width {
        return Err(format!("expected {width} fields, found {}", record.len()));
    }
    record
        .iter()
        .enumerate()
        .map(|(i, cell)| {
            let cell = cell.trim();
            if cell.is_empty() {
                return Err(format!("missing value in column {}", i + 1));
            }
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(format!("non-numeric value '{cell}' in column {}", i + 1)),
            }
        })
        .collect()
}

/// Writes a header and rows of numbers at full precision.
pub fn write_csv<W: std::io::Write>(out: W, header: &[String], rows: &[Vec<f64>]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(header)?;
    for row in rows {
        wtr.write_record(row.iter().map(|v| v.to_string()))?;
    }
    wtr.flush()?;
    Ok(())
}
