//! Versioned CSV telemetry.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CSV_HEADER_COMMENT: &str = "# rkopt-metrics v1";
pub const CSV_COLUMNS: [&str; 9] = [
    "step",
    "wall_ms",
    "train_loss",
    "test_loss",
    "train_acc",
    "test_acc",
    "lr_effective",
    "grad_norm",
    "grad_evals_cum",
];

/// One telemetry row. Accuracies are NaN for problems without labels;
/// `lr_effective` and `grad_norm` are NaN at step 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub step: u64,
    pub wall_ms: f64,
    pub train_loss: f64,
    pub test_loss: f64,
    pub train_acc: f64,
    pub test_acc: f64,
    pub lr_effective: f64,
    pub grad_norm: f64,
    pub grad_evals_cum: u64,
}

impl MetricsRecord {
    /// Equality that treats NaN as equal to NaN and ignores `wall_ms`.
    pub fn same_values(&self, other: &Self) -> bool {
        let eq = |a: f64, b: f64| a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan());
        self.step == other.step
            && self.grad_evals_cum == other.grad_evals_cum
            && eq(self.train_loss, other.train_loss)
            && eq(self.test_loss, other.test_loss)
            && eq(self.train_acc, other.train_acc)
            && eq(self.test_acc, other.test_acc)
            && eq(self.lr_effective, other.lr_effective)
            && eq(self.grad_norm, other.grad_norm)
    }
}

/// Streams records to disk, flushing after every row so a crashed or
/// diverged run leaves a readable partial file.
pub struct MetricsWriter {
    inner: csv::Writer<BufWriter<File>>,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let mut file = BufWriter::new(File::create(path)?);
        writeln!(file, "{CSV_HEADER_COMMENT}")?;
        let mut inner = csv::WriterBuilder::new().has_headers(false).from_writer(file);
        inner.write_record(CSV_COLUMNS)?;
        inner.flush()?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, record: &MetricsRecord) -> Result<()> {
        self.inner.serialize(record)?;
        self.inner.flush()?;
        Ok(())
    }
}

pub fn write_metrics(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    let mut w = MetricsWriter::create(path)?;
    for r in records {
        w.write(r)?;
    }
    Ok(())
}

/// Reads a metrics file, checking the version line and the column names.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    if first.trim_end() != CSV_HEADER_COMMENT {
        return Err(Error::InvalidInput(format!(
            "{}: expected '{CSV_HEADER_COMMENT}' header, found '{}'",
            path.display(),
            first.trim_end()
        )));
    }
    let mut csv = csv::Reader::from_reader(reader);
    let headers: Vec<String> = csv.headers()?.iter().map(str::to_string).collect();
    if headers != CSV_COLUMNS {
        return Err(Error::InvalidInput(format!(
            "{}: unexpected columns {headers:?}",
            path.display()
        )));
    }
    let mut out = Vec::new();
    for row in csv.deserialize() {
        out.push(row?);
    }
    Ok(out)
}
