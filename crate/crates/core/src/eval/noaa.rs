//! Adapter for the public NOAA SWPC "3-Day Forecast" text product.
//!
//! Only the "NOAA Kp index breakdown" table is read. Column `c` (0-based) is
//! mapped to horizon `c + 1` and every row gets the first column's 00 UT as
//! its issue day. Quirks handled:
//!
//! - storm annotations after a value, e.g. `5.67 (G2)`;
//! - the year appears once, after the last date of the breakdown heading, so
//!   a table spanning New Year takes the previous year for December columns;
//! - the final row is labelled `21-00UT`.

use chrono::NaiveDate;

use super::{BaselineForecast, BaselineRow};
use crate::error::{Error, Result};
use crate::table::{DAY, HOUR};

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

fn month_number(name: &str) -> Option<u32> {
    const MONTHS: [&str; 12] = ["jan", "feb", "mar", "apr", "may", "jun", "jul", "aug", "sep", "oct", "nov", "dec"];
    let lower = name.to_ascii_lowercase();
    MONTHS.iter().position(|m| lower.starts_with(m)).map(|i| i as u32 + 1)
}

pub fn parse_noaa_3day(text: &str) -> Result<BaselineForecast> {
    let lines: Vec<&str> = text.lines().collect();
    let head = lines
        .iter()
        .position(|l| l.trim_start().starts_with("NOAA Kp index breakdown"))
        .ok_or_else(|| Error::Schema("no `NOAA Kp index breakdown` section".into()))?;
    let year: i32 = lines[head]
        .split_whitespace()
        .last()
        .and_then(|y| y.parse().ok())
        .ok_or_else(|| parse_err(head + 1, "breakdown heading has no year"))?;

    let mut idx = head + 1;
    while idx < lines.len() && lines[idx].trim().is_empty() {
        idx += 1;
    }
    let date_tokens: Vec<&str> = lines.get(idx).map(|l| l.split_whitespace().collect()).unwrap_or_default();
    if date_tokens.is_empty() || !date_tokens.len().is_multiple_of(2) {
        return Err(parse_err(idx + 1, "expected a row of `Mon DD` column dates"));
    }
    let pairs: Vec<(u32, u32)> = date_tokens
        .chunks(2)
        .map(|c| {
            let m = month_number(c[0]).ok_or_else(|| parse_err(idx + 1, format!("unknown month {:?}", c[0])))?;
            let d: u32 = c[1].parse().map_err(|_| parse_err(idx + 1, format!("bad day {:?}", c[1])))?;
            Ok((m, d))
        })
        .collect::<Result<_>>()?;
    let last_month = pairs.last().unwrap().0;
    let days: Vec<i64> = pairs
        .iter()
        .map(|&(m, d)| {
            let y = if m > last_month { year - 1 } else { year };
            NaiveDate::from_ymd_opt(y, m, d)
                .map(|nd| nd.and_hms_opt(0, 0, 0).unwrap().and_utc().timestamp())
                .ok_or_else(|| parse_err(idx + 1, format!("invalid date {y}-{m}-{d}")))
        })
        .collect::<Result<_>>()?;
    for w in days.windows(2) {
        if w[1] - w[0] != DAY {
            return Err(parse_err(idx + 1, "column dates are not consecutive days"));
        }
    }
    let issue_day = days[0];

    let mut rows = Vec::new();
    let mut seen = 0;
    for (n, line) in lines.iter().enumerate().skip(idx + 1) {
        let t = line.trim();
        if seen == 8 {
            break;
        }
        if t.is_empty() {
            continue;
        }
        let mut tokens = t.split_whitespace();
        let label = tokens.next().unwrap();
        let start_hour: i64 = label
            .split('-')
            .next()
            .and_then(|h| h.parse().ok())
            .filter(|_| label.ends_with("UT"))
            .ok_or_else(|| parse_err(n + 1, format!("bad time slot {label:?}")))?;
        let values: Vec<f64> = tokens
            .filter(|tok| !tok.starts_with('('))
            .map(|tok| tok.parse::<f64>().map_err(|_| parse_err(n + 1, format!("bad Kp {tok:?}"))))
            .collect::<Result<_>>()?;
        if values.len() != days.len() {
            return Err(parse_err(n + 1, format!("expected {} values, found {}", days.len(), values.len())));
        }
        for (c, (&day, &kp)) in days.iter().zip(&values).enumerate() {
            rows.push(BaselineRow {
                day: issue_day,
                horizon: c + 1,
                step: day + start_hour * HOUR,
                kp,
            });
        }
        seen += 1;
    }
    if seen != 8 {
        return Err(Error::Schema(format!("breakdown table has {seen} time slots, expected 8")));
    }
    rows.sort_by_key(|r| (r.horizon, r.step));
    BaselineForecast::new(rows)
}
