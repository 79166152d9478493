//! CSV tables with a leading metadata comment.

use crate::error::CliError;

/// Shortest round-trip decimal, in exponent form outside `[1e-4, 1e15)`;
/// `NaN`, `inf` and `-inf` for non-finite values.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || !x.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Self { header: header.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// `metadata` is written verbatim as the first line.
    pub fn to_csv(&self, metadata: &str) -> Result<Vec<u8>, CliError> {
        let mut buf = Vec::with_capacity(64 * (self.rows.len() + 2));
        buf.extend_from_slice(metadata.as_bytes());
        buf.push(b'\n');
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(buf);
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))
    }

    /// Column `name` parsed as numbers (unparsable cells become `NaN`).
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.header.iter().position(|h| *h == name)?;
        Some(self.rows.iter().map(|r| r[i].parse().unwrap_or(f64::NAN)).collect())
    }
}
