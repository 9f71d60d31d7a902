//! Timestamp-indexed feature tables.
//!
//! A [`TimeTable`] is the common currency of the ingest and dataset stages:
//! strictly increasing UTC timestamps (unix seconds), an ordered list of
//! uniquely named columns, a row-major `f64` matrix and a missing-value mask
//! of the same shape. Missing cells hold `NaN` in `values`, but the mask is
//! authoritative.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime, Utc};

use crate::error::{Error, Result};

pub const HOUR: i64 = 3_600;
pub const THREE_HOURS: i64 = 3 * HOUR;
pub const DAY: i64 = 24 * HOUR;

/// Formats unix seconds as `YYYY-MM-DDTHH:MM:SSZ`.
pub fn format_ts(ts: i64) -> String {
    match DateTime::<Utc>::from_timestamp(ts, 0) {
        Some(dt) => dt.format("%Y-%m-%dT%H:%M:%SZ").to_string(),
        None => format!("@{ts}"),
    }
}

/// Parses the ISO-8601 variants found in Kp and image-feature files.
///
/// Accepts a trailing `Z`, a space or `T` separator, and date-only or
/// hour-only keys (`2024-05-10`, `2024-05-10T13`).
pub fn parse_ts(text: &str) -> Option<i64> {
    let s = text.trim().trim_end_matches('Z').trim_end_matches("+00:00");
    let s = s.replacen(' ', "T", 1);
    const FORMATS: [&str; 3] = ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%dT%H:%M"];
    for fmt in FORMATS {
        if let Ok(dt) = NaiveDateTime::parse_from_str(&s, fmt) {
            return Some(dt.and_utc().timestamp());
        }
    }
    if let Some((date, hour)) = s.split_once('T') {
        let date = NaiveDate::parse_from_str(date, "%Y-%m-%d").ok()?;
        let hour: u32 = hour.parse().ok()?;
        return Some(date.and_hms_opt(hour, 0, 0)?.and_utc().timestamp());
    }
    let date = NaiveDate::parse_from_str(&s, "%Y-%m-%d").ok()?;
    Some(date.and_hms_opt(0, 0, 0)?.and_utc().timestamp())
}

/// Column descriptor. The unit is whatever follows the last comma in the
/// source header (`"Scalar B, nT"` has unit `nT`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Column {
    pub name: String,
    pub unit: Option<String>,
}

impl Column {
    pub fn new(name: impl Into<String>) -> Self {
        let name = name.into();
        let unit = name
            .rsplit_once(',')
            .map(|(_, u)| u.trim().to_string())
            .filter(|u| !u.is_empty() && !u.contains(' '));
        Column { name, unit }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeTable {
    timestamps: Vec<i64>,
    columns: Vec<Column>,
    values: Vec<f64>,
    missing: Vec<bool>,
}

impl TimeTable {
    pub fn new(
        timestamps: Vec<i64>,
        columns: Vec<Column>,
        values: Vec<f64>,
        missing: Vec<bool>,
    ) -> Result<Self> {
        let n = timestamps.len() * columns.len();
        if values.len() != n || missing.len() != n {
            return Err(Error::Dimension(format!(
                "table of {} rows x {} columns needs {} cells, got {} values and {} mask entries",
                timestamps.len(),
                columns.len(),
                n,
                values.len(),
                missing.len()
            )));
        }
        if let Some(w) = timestamps.windows(2).find(|w| w[1] <= w[0]) {
            let kind = if w[1] == w[0] { "duplicate" } else { "non-monotonic" };
            return Err(Error::Validation(format!(
                "{kind} timestamp {} after {}",
                format_ts(w[1]),
                format_ts(w[0])
            )));
        }
        let mut seen = HashSet::new();
        for c in &columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column `{}`", c.name)));
            }
        }
        Ok(TimeTable {
            timestamps,
            columns,
            values,
            missing,
        })
    }

    /// Builds a table from complete rows; `NaN` cells are marked missing.
    pub fn from_rows(timestamps: Vec<i64>, names: &[&str], rows: Vec<Vec<f64>>) -> Result<Self> {
        let columns: Vec<Column> = names.iter().map(|n| Column::new(*n)).collect();
        if rows.len() != timestamps.len() {
            return Err(Error::Dimension(format!(
                "{} rows for {} timestamps",
                rows.len(),
                timestamps.len()
            )));
        }
        let mut values = Vec::with_capacity(rows.len() * columns.len());
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != columns.len() {
                return Err(Error::Dimension(format!(
                    "row {i} has {} cells, expected {}",
                    row.len(),
                    columns.len()
                )));
            }
            values.extend(row);
        }
        let missing = values.iter().map(|v| v.is_nan()).collect();
        TimeTable::new(timestamps, columns, values, missing)
    }

    pub fn empty_like(&self) -> Self {
        TimeTable {
            timestamps: Vec::new(),
            columns: self.columns.clone(),
            values: Vec::new(),
            missing: Vec::new(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.timestamps.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column_names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn missing_mask(&self) -> &[bool] {
        &self.missing
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let w = self.n_cols();
        &self.values[r * w..(r + 1) * w]
    }

    pub fn row_missing(&self, r: usize) -> &[bool] {
        let w = self.n_cols();
        &self.missing[r * w..(r + 1) * w]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.n_cols() + c]
    }

    pub fn is_missing(&self, r: usize, c: usize) -> bool {
        self.missing[r * self.n_cols() + c]
    }

    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        let i = r * self.n_cols() + c;
        self.values[i] = value;
        self.missing[i] = false;
    }

    pub fn set_missing(&mut self, r: usize, c: usize) {
        let i = r * self.n_cols() + c;
        self.values[i] = f64::NAN;
        self.missing[i] = true;
    }

    pub fn column_values(&self, c: usize) -> Vec<f64> {
        (0..self.n_rows()).map(|r| self.get(r, c)).collect()
    }

    pub fn any_missing(&self) -> bool {
        self.missing.iter().any(|&m| m)
    }

    /// Keeps the rows for which `keep(timestamp)` holds.
    pub fn filter_rows(&self, mut keep: impl FnMut(i64) -> bool) -> TimeTable {
        let idx: Vec<usize> = (0..self.n_rows()).filter(|&r| keep(self.timestamps[r])).collect();
        self.take_rows(&idx)
    }

    /// Rows at the given (increasing) indices.
    pub fn take_rows(&self, idx: &[usize]) -> TimeTable {
        let w = self.n_cols();
        let mut out = self.empty_like();
        for &r in idx {
            out.timestamps.push(self.timestamps[r]);
            out.values.extend_from_slice(&self.values[r * w..(r + 1) * w]);
            out.missing.extend_from_slice(&self.missing[r * w..(r + 1) * w]);
        }
        out
    }

    /// Projects onto the named columns, in the given order.
    pub fn select_columns(&self, names: &[&str]) -> Result<TimeTable> {
        let idx = names
            .iter()
            .map(|n| {
                self.column_index(n)
                    .ok_or_else(|| Error::Schema(format!("missing column `{n}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        let columns = idx.iter().map(|&c| self.columns[c].clone()).collect();
        let mut values = Vec::with_capacity(self.n_rows() * idx.len());
        let mut missing = Vec::with_capacity(self.n_rows() * idx.len());
        for r in 0..self.n_rows() {
            for &c in &idx {
                values.push(self.get(r, c));
                missing.push(self.is_missing(r, c));
            }
        }
        TimeTable::new(self.timestamps.clone(), columns, values, missing)
    }

    /// Writes the table as CSV: a `timestamp` column of ISO instants followed
    /// by each feature column; missing cells are written as `NaN`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["timestamp".to_string()];
        header.extend(self.columns.iter().map(|c| c.name.clone()));
        let to_err = |e: csv::Error| Error::Validation(format!("csv write: {e}"));
        w.write_record(&header).map_err(to_err)?;
        for r in 0..self.n_rows() {
            let mut rec = vec![format_ts(self.timestamps[r])];
            for c in 0..self.n_cols() {
                rec.push(if self.is_missing(r, c) {
                    "NaN".to_string()
                } else {
                    self.get(r, c).to_string()
                });
            }
            w.write_record(&rec).map_err(to_err)?;
        }
        w.flush().map_err(|e| Error::Validation(format!("csv flush: {e}")))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<TimeTable> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let header = rdr
            .headers()
            .map_err(|e| Error::Parse { line: 1, message: e.to_string() })?
            .clone();
        if header.get(0) != Some("timestamp") {
            return Err(Error::Schema("first column must be `timestamp`".into()));
        }
        let columns: Vec<Column> = header.iter().skip(1).map(Column::new).collect();
        let mut timestamps = Vec::new();
        let mut values = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| Error::Parse { line, message: e.to_string() })?;
            if rec.len() != columns.len() + 1 {
                return Err(Error::Parse {
                    line,
                    message: format!("expected {} fields, got {}", columns.len() + 1, rec.len()),
                });
            }
            let ts = parse_ts(&rec[0]).ok_or_else(|| Error::Parse {
                line,
                message: format!("bad timestamp `{}`", &rec[0]),
            })?;
            timestamps.push(ts);
            for field in rec.iter().skip(1) {
                let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                    line,
                    message: format!("bad number `{field}`"),
                })?;
                values.push(v);
            }
        }
        let missing = values.iter().map(|v| v.is_nan()).collect();
        TimeTable::new(timestamps, columns, values, missing)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn load_csv(path: &Path) -> Result<TimeTable> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        TimeTable::read_csv(std::io::BufReader::new(f))
    }
}
