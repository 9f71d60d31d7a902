//! Hourly image-feature files produced by the solar-image extractor.
//!
//! Two framings carry the same records (ISO-8601 hour key + `dim` floats):
//!
//! * text: a header `hour,f0,...,f{dim-1}` then one comma-separated row per hour;
//! * binary: magic `KPIMGF01`, `u32` dim, then records of
//!   `u32 len | u16 key_len | key utf8 | dim x f64`, all little-endian, where
//!   `len` counts the bytes after itself.
//!
//! The reader auto-detects the framing from the magic bytes.

use std::path::Path;

use crate::error::{Error, Result};
use crate::table::{format_ts, parse_ts, Column, TimeTable, HOUR};

pub const IMAGE_MAGIC: &[u8; 8] = b"KPIMGF01";
pub const IMAGE_FEATURE_DIM: usize = 768;
pub const IMAGE_PREFIX: &str = "img_";

pub fn image_column_name(i: usize) -> String {
    format!("{IMAGE_PREFIX}{i:03}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub hour: i64,
    pub features: Vec<f64>,
}

fn to_table(records: Vec<FeatureRecord>, dim: usize) -> Result<TimeTable> {
    let columns = (0..dim).map(|i| Column::new(image_column_name(i))).collect();
    let mut timestamps = Vec::with_capacity(records.len());
    let mut values = Vec::with_capacity(records.len() * dim);
    for rec in records {
        if rec.hour.rem_euclid(HOUR) != 0 {
            return Err(Error::Validation(format!(
                "image feature key {} is not on an hour boundary",
                format_ts(rec.hour)
            )));
        }
        if let Some(&prev) = timestamps.last() {
            if rec.hour <= prev {
                let kind = if rec.hour == prev { "duplicate" } else { "unsorted" };
                return Err(Error::Validation(format!(
                    "{kind} image feature hour {}",
                    format_ts(rec.hour)
                )));
            }
        }
        if let Some(bad) = rec.features.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "non-finite image feature {bad} at {}",
                format_ts(rec.hour)
            )));
        }
        timestamps.push(rec.hour);
        values.extend(rec.features);
    }
    let missing = vec![false; values.len()];
    TimeTable::new(timestamps, columns, values, missing)
}

pub fn parse_feature_text(text: &str, expected_dim: Option<usize>) -> Result<TimeTable> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::EmptyInput("image feature file has no header".into()))?;
    let dim = header.split(',').count() - 1;
    check_dim(dim, expected_dim)?;
    let mut records = Vec::new();
    for (i, l) in lines {
        let line = i + 1;
        let mut fields = l.split(',');
        let key = fields.next().unwrap_or_default();
        let hour = parse_ts(key).ok_or_else(|| Error::Parse {
            line,
            message: format!("bad hour key `{key}`"),
        })?;
        let features = fields
            .map(|f| {
                f.trim().parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    message: format!("bad feature value `{f}`"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if features.len() != dim {
            return Err(Error::Parse {
                line,
                message: format!("expected {dim} features, got {}", features.len()),
            });
        }
        records.push(FeatureRecord { hour, features });
    }
    to_table(records, dim)
}

fn check_dim(dim: usize, expected: Option<usize>) -> Result<()> {
    if dim == 0 {
        return Err(Error::Schema("image feature file declares zero features".into()));
    }
    match expected {
        Some(e) if e != dim => Err(Error::Schema(format!(
            "image features have width {dim}, expected {e}"
        ))),
        _ => Ok(()),
    }
}

pub fn parse_feature_binary(bytes: &[u8], expected_dim: Option<usize>) -> Result<TimeTable> {
    let err = |m: String| Error::Parse { line: 0, message: m };
    if bytes.len() < 12 || &bytes[..8] != IMAGE_MAGIC {
        return Err(err("missing KPIMGF01 magic".into()));
    }
    let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    check_dim(dim, expected_dim)?;
    let mut pos = 12;
    let mut records = Vec::new();
    while pos < bytes.len() {
        let take = |pos: usize, n: usize| -> Result<&[u8]> {
            bytes
                .get(pos..pos + n)
                .ok_or_else(|| err(format!("truncated record at byte {pos}")))
        };
        let len = u32::from_le_bytes(take(pos, 4)?.try_into().unwrap()) as usize;
        let body = take(pos + 4, len)?;
        pos += 4 + len;
        if body.len() < 2 {
            return Err(err("record shorter than its key length".into()));
        }
        let key_len = u16::from_le_bytes([body[0], body[1]]) as usize;
        if body.len() != 2 + key_len + 8 * dim {
            return Err(err(format!(
                "record length {} does not match key {} + {dim} floats",
                body.len(),
                key_len
            )));
        }
        let key = std::str::from_utf8(&body[2..2 + key_len])
            .map_err(|e| err(format!("key is not utf-8: {e}")))?;
        let hour = parse_ts(key).ok_or_else(|| err(format!("bad hour key `{key}`")))?;
        let features = body[2 + key_len..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        records.push(FeatureRecord { hour, features });
    }
    to_table(records, dim)
}

/// Reads either framing, detected from the leading bytes.
pub fn load_feature_file(path: &Path, expected_dim: Option<usize>) -> Result<TimeTable> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(IMAGE_MAGIC) {
        parse_feature_binary(&bytes, expected_dim)
    } else {
        let text = String::from_utf8(bytes).map_err(|e| Error::format(path, e.to_string()))?;
        parse_feature_text(&text, expected_dim)
    }
}

pub fn write_feature_text(records: &[FeatureRecord], dim: usize) -> String {
    let mut s = String::from("hour");
    for i in 0..dim {
        s.push_str(&format!(",f{i}"));
    }
    s.push('\n');
    for r in records {
        s.push_str(&format_ts(r.hour));
        for v in &r.features {
            s.push(',');
            s.push_str(&v.to_string());
        }
        s.push('\n');
    }
    s
}

pub fn write_feature_binary(records: &[FeatureRecord], dim: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + records.len() * (26 + 8 * dim));
    out.extend_from_slice(IMAGE_MAGIC);
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    for r in records {
        let key = format_ts(r.hour);
        let len = 2 + key.len() + 8 * r.features.len();
        out.extend_from_slice(&(len as u32).to_le_bytes());
        out.extend_from_slice(&(key.len() as u16).to_le_bytes());
        out.extend_from_slice(key.as_bytes());
        for v in &r.features {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}
