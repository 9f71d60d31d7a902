use std::io::Read;

use crate::error::{Error, Result};
use crate::table::{format_ts, parse_ts, THREE_HOURS};

/// Tolerance for snapping a published Kp value to the thirds scale.
/// Sources round 14/3 to 4.67 or 4.667.
const SNAP_TOLERANCE: f64 = 0.01;

/// Kp values at 3-hour cadence on the 28-step thirds scale.
#[derive(Debug, Clone, PartialEq)]
pub struct KpSeries {
    timestamps: Vec<i64>,
    kp: Vec<f64>,
}

/// Snaps `value` onto `k/3` if it lies within tolerance of one.
pub fn snap_to_thirds(value: f64) -> Option<f64> {
    if !(value.is_finite() && (-SNAP_TOLERANCE..=9.0 + SNAP_TOLERANCE).contains(&value)) {
        return None;
    }
    let k = (value * 3.0).round();
    let snapped = k / 3.0;
    ((value - snapped).abs() <= SNAP_TOLERANCE && (0.0..=27.0).contains(&k)).then_some(snapped)
}

/// Parses either a decimal Kp value or the `5-`/`5o`/`5+` notation.
fn parse_kp_value(field: &str) -> Option<f64> {
    let f = field.trim();
    if let Ok(v) = f.parse::<f64>() {
        return snap_to_thirds(v);
    }
    let (digits, suffix) = f.split_at(f.len().checked_sub(1)?);
    let base: f64 = digits.parse().ok()?;
    let v = match suffix {
        "-" => base - 1.0 / 3.0,
        "o" | "0" => base,
        "+" => base + 1.0 / 3.0,
        _ => return None,
    };
    snap_to_thirds(v)
}

impl KpSeries {
    pub fn new(timestamps: Vec<i64>, kp: Vec<f64>) -> Result<Self> {
        if timestamps.len() != kp.len() {
            return Err(Error::Dimension(format!(
                "{} Kp values for {} timestamps",
                kp.len(),
                timestamps.len()
            )));
        }
        if let Some(w) = timestamps.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::Validation(format!(
                "Kp timestamps not strictly increasing at {}",
                format_ts(w[1])
            )));
        }
        if let Some(t) = timestamps.iter().find(|t| t.rem_euclid(THREE_HOURS) != 0) {
            return Err(Error::Validation(format!(
                "Kp timestamp {} is not on a 3-hour boundary",
                format_ts(*t)
            )));
        }
        let mut snapped = Vec::with_capacity(kp.len());
        for (&t, &v) in timestamps.iter().zip(&kp) {
            snapped.push(snap_to_thirds(v).ok_or_else(|| {
                Error::Domain(format!("Kp {v} at {} is not on the thirds scale", format_ts(t)))
            })?);
        }
        Ok(KpSeries {
            timestamps,
            kp: snapped,
        })
    }

    /// Two-column delimited text: ISO-8601 timestamp, Kp value. A header row
    /// and `#` comment lines are skipped; the delimiter may be a comma,
    /// semicolon, tab or run of spaces.
    pub fn parse<R: Read>(mut input: R) -> Result<Self> {
        let mut text = String::new();
        input
            .read_to_string(&mut text)
            .map_err(|e| Error::Parse { line: 0, message: e.to_string() })?;
        let mut timestamps = Vec::new();
        let mut kp = Vec::new();
        let mut seen_data = false;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let l = raw.trim();
            if l.is_empty() || l.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = if l.contains([',', ';', '\t']) {
                l.split([',', ';', '\t']).map(str::trim).collect()
            } else {
                l.split_whitespace().collect()
            };
            let ts = fields.first().and_then(|f| parse_ts(f));
            let Some(ts) = ts else {
                if !seen_data {
                    continue; // header
                }
                return Err(Error::Parse {
                    line,
                    message: format!("bad timestamp in `{l}`"),
                });
            };
            seen_data = true;
            if fields.len() != 2 {
                return Err(Error::Parse {
                    line,
                    message: format!("expected 2 fields, got {}", fields.len()),
                });
            }
            let v = parse_kp_value(fields[1]).ok_or_else(|| Error::Parse {
                line,
                message: format!("`{}` is not a Kp value on the thirds scale", fields[1]),
            })?;
            timestamps.push(ts);
            kp.push(v);
        }
        KpSeries::new(timestamps, kp)
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn values(&self) -> &[f64] {
        &self.kp
    }

    pub fn len(&self) -> usize {
        self.kp.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kp.is_empty()
    }

    /// The Kp value whose 3-hour validity window contains `ts`.
    pub fn value_at(&self, ts: i64) -> Option<f64> {
        let i = self.timestamps.partition_point(|&t| t <= ts);
        if i == 0 {
            return None;
        }
        (ts < self.timestamps[i - 1] + THREE_HOURS).then(|| self.kp[i - 1])
    }

    pub fn write_text(&self) -> String {
        let mut s = String::from("timestamp,kp\n");
        for (t, v) in self.timestamps.iter().zip(&self.kp) {
            s.push_str(&format!("{},{}\n", format_ts(*t), v));
        }
        s
    }
}
