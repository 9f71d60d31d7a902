//! OMNI-style satellite tables: `YEAR`, `DOY`, `Hour` plus solar-wind and
//! IMF columns, comma- or whitespace-delimited.

use std::io::Read;

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::table::{Column, TimeTable, DAY, HOUR};

pub const YEAR: &str = "YEAR";
pub const DOY: &str = "DOY";
pub const HOUR_COL: &str = "Hour";
pub const TEMPORAL_COLUMNS: [&str; 3] = [YEAR, DOY, HOUR_COL];

/// One required feature column and the header spellings accepted for it.
#[derive(Debug, Clone)]
pub struct SpecColumn {
    pub name: String,
    pub aliases: Vec<String>,
}

impl SpecColumn {
    fn matches(&self, header: &str) -> bool {
        let h = normalize(header);
        normalize(&self.name) == h || self.aliases.iter().any(|a| normalize(a) == h)
    }
}

/// The feature columns a satellite table must provide, in output order.
#[derive(Debug, Clone)]
pub struct ColumnSpec {
    pub columns: Vec<SpecColumn>,
}

impl ColumnSpec {
    pub fn new<S: AsRef<str>>(names: &[S]) -> Self {
        ColumnSpec {
            columns: names
                .iter()
                .map(|n| SpecColumn {
                    name: n.as_ref().to_string(),
                    aliases: Vec::new(),
                })
                .collect(),
        }
    }

    /// The OMNIWeb hourly feature set. Canonical names keep the OMNIWeb
    /// header spellings (including its typos); corrected spellings are
    /// accepted as aliases.
    pub fn omni() -> Self {
        let mut spec = ColumnSpec::new(&OMNI_FEATURES);
        for (canonical, alias) in [
            ("E elecrtic field", "E electric field"),
            ("Alfen mach number", "Alfven mach number"),
            ("Magnetosonic Much num.", "Magnetosonic Mach number"),
            ("SW Proton Density, N/cm^3", "SW Proton Density, N/cm3"),
        ] {
            if let Some(c) = spec.columns.iter_mut().find(|c| c.name == canonical) {
                c.aliases.push(alias.to_string());
            }
        }
        spec
    }

    pub fn names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }
}

pub const OMNI_FEATURES: [&str; 26] = [
    "Scalar B, nT",
    "Vector B Magnitude, nT",
    "Lat. Angle of B (GSE)",
    "Long. Angle of B (GSE)",
    "BX, nT (GSE, GSM)",
    "BY, nT (GSE)",
    "BZ, nT (GSE)",
    "BY, nT (GSM)",
    "BZ, nT (GSM)",
    "RMS_magnitude, nT",
    "RMS_field_vector, nT",
    "RMS_BX_GSE, nT",
    "RMS_BY_GSE, nT",
    "RMS_BZ_GSE, nT",
    "SW Plasma Temperature, K",
    "SW Proton Density, N/cm^3",
    "SW Plasma Speed, km/s",
    "SW Plasma flow long. angle",
    "SW Plasma flow lat. angle",
    "Alpha/Prot. ratio",
    "Flow pressure",
    "E elecrtic field",
    "Plasma Beta",
    "Alfen mach number",
    "Magnetosonic Much num.",
    "Quasy-Invariant",
];

fn normalize(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Splits a whitespace-delimited line, honouring double quotes so that
/// headers such as `"Scalar B, nT"` stay one token.
fn split_whitespace_quoted(line: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut in_quotes = false;
    let mut has_token = false;
    for ch in line.chars() {
        match ch {
            '"' => {
                in_quotes = !in_quotes;
                has_token = true;
            }
            c if c.is_whitespace() && !in_quotes => {
                if has_token {
                    out.push(std::mem::take(&mut cur));
                    has_token = false;
                }
            }
            c => {
                cur.push(c);
                has_token = true;
            }
        }
    }
    if has_token {
        out.push(cur);
    }
    out
}

fn split_lines(text: &str) -> Result<Vec<(usize, Vec<String>)>> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
    let Some((_, header)) = lines.next() else {
        return Err(Error::EmptyInput("satellite table has no header row".into()));
    };
    // Numeric rows never contain commas unless the table is comma-delimited;
    // headers may ("Scalar B, nT").
    let comma = match text.lines().filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#')).nth(1) {
        Some(first_row) => first_row.contains(','),
        None => header.contains(',') && !header.contains('"'),
    };
    let mut out = Vec::new();
    if comma {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::Parse {
                line: e.position().map(|p| p.line() as usize).unwrap_or(0),
                message: e.to_string(),
            })?;
            let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
            if rec.iter().all(|f| f.is_empty()) {
                continue;
            }
            out.push((line, rec.iter().map(str::to_string).collect()));
        }
    } else {
        out.push((0, split_whitespace_quoted(header)));
        for (line, l) in lines {
            out.push((line, split_whitespace_quoted(l)));
        }
    }
    Ok(out)
}

/// Parses a satellite table into a [`TimeTable`] keyed by the UTC instant
/// composed from `YEAR`, `DOY` and `Hour`. Output columns are the three
/// temporal markers followed by the spec columns in spec order; other
/// source columns are dropped.
pub fn parse_satellite_table<R: Read>(mut input: R, spec: &ColumnSpec) -> Result<TimeTable> {
    let mut text = String::new();
    input
        .read_to_string(&mut text)
        .map_err(|e| Error::Parse { line: 0, message: e.to_string() })?;
    let rows = split_lines(&text)?;
    let (_, header) = &rows[0];

    let find = |name: &str| header.iter().position(|h| normalize(h) == normalize(name));
    let mut missing_cols = Vec::new();
    let mut temporal_idx = Vec::new();
    for name in TEMPORAL_COLUMNS {
        match find(name) {
            Some(i) => temporal_idx.push(i),
            None => missing_cols.push(name.to_string()),
        }
    }
    let mut feature_idx = Vec::new();
    for col in &spec.columns {
        match header.iter().position(|h| col.matches(h)) {
            Some(i) => feature_idx.push(i),
            None => missing_cols.push(col.name.clone()),
        }
    }
    if !missing_cols.is_empty() {
        return Err(Error::Schema(format!(
            "satellite table is missing mandatory columns: {}",
            missing_cols.join("; ")
        )));
    }

    let mut columns: Vec<Column> = TEMPORAL_COLUMNS.iter().map(|n| Column::new(*n)).collect();
    columns.extend(spec.columns.iter().map(|c| Column::new(c.name.clone())));

    let mut timestamps = Vec::with_capacity(rows.len() - 1);
    let mut values = Vec::with_capacity((rows.len() - 1) * columns.len());
    for (line, fields) in rows.iter().skip(1) {
        let line = *line;
        if fields.len() != header.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, got {}", header.len(), fields.len()),
            });
        }
        let num = |i: usize| -> Result<f64> {
            fields[i].parse::<f64>().map_err(|_| Error::Parse {
                line,
                message: format!("`{}` is not a number in column `{}`", fields[i], header[i]),
            })
        };
        let year = num(temporal_idx[0])?;
        let doy = num(temporal_idx[1])?;
        let hour = num(temporal_idx[2])?;
        let ts = compose_timestamp(year, doy, hour).ok_or_else(|| Error::Parse {
            line,
            message: format!("invalid date YEAR={year} DOY={doy} Hour={hour}"),
        })?;
        if let Some(&prev) = timestamps.last() {
            if ts <= prev {
                let kind = if ts == prev { "duplicate" } else { "non-monotonic" };
                return Err(Error::Validation(format!(
                    "{kind} timestamp {} at line {line}",
                    crate::table::format_ts(ts)
                )));
            }
        }
        timestamps.push(ts);
        values.extend([year, doy, hour]);
        for &i in &feature_idx {
            values.push(num(i)?);
        }
    }
    let missing = values.iter().map(|v: &f64| v.is_nan()).collect();
    TimeTable::new(timestamps, columns, values, missing)
}

/// `YEAR`/`DOY`/`Hour` to unix seconds; DOY is 1-based.
pub fn compose_timestamp(year: f64, doy: f64, hour: f64) -> Option<i64> {
    let is_int = |x: f64| x.fract() == 0.0 && x.is_finite();
    if !is_int(year) || !is_int(doy) || !is_int(hour) {
        return None;
    }
    let (year, doy, hour) = (year as i32, doy as i64, hour as i64);
    let days_in_year = if NaiveDate::from_ymd_opt(year, 2, 29).is_some() { 366 } else { 365 };
    if !(1..=days_in_year).contains(&doy) || !(0..24).contains(&hour) {
        return None;
    }
    let jan1 = NaiveDate::from_ymd_opt(year, 1, 1)?.and_hms_opt(0, 0, 0)?.and_utc().timestamp();
    Some(jan1 + (doy - 1) * DAY + hour * HOUR)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::{format_ts, parse_ts};

    #[test]
    fn doy_arithmetic() {
        let ts = compose_timestamp(2022.0, 1.0, 0.0).unwrap();
        assert_eq!(format_ts(ts), "2022-01-01T00:00:00Z");
        let ts = compose_timestamp(2024.0, 60.0, 13.0).unwrap();
        assert_eq!(format_ts(ts), "2024-02-29T13:00:00Z");
        assert!(compose_timestamp(2023.0, 366.0, 0.0).is_none());
        assert!(compose_timestamp(2024.0, 1.0, 24.0).is_none());
        assert!(compose_timestamp(2024.0, 1.5, 0.0).is_none());
    }

    #[test]
    fn quoted_whitespace_tokens() {
        let t = split_whitespace_quoted(r#"YEAR DOY  "Scalar B, nT"   x"#);
        assert_eq!(t, vec!["YEAR", "DOY", "Scalar B, nT", "x"]);
    }

    #[test]
    fn whitespace_table_with_custom_spec() {
        let text = "YEAR DOY Hour \"Scalar B, nT\" Other\n2022 1 0 5.5 1\n2022 1 1 999.9 2\n";
        let spec = ColumnSpec::new(&["Scalar B, nT"]);
        let t = parse_satellite_table(text.as_bytes(), &spec).unwrap();
        assert_eq!(t.column_names(), vec!["YEAR", "DOY", "Hour", "Scalar B, nT"]);
        assert_eq!(t.timestamps()[1], parse_ts("2022-01-01T01:00:00Z").unwrap());
        assert_eq!(t.get(1, 3), 999.9);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let spec = ColumnSpec::new(&["B"]);
        let bad = "YEAR,DOY,Hour,B\n2022,1,0,1.0\n2022,1,1,abc\n";
        match parse_satellite_table(bad.as_bytes(), &spec) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let dup = "YEAR,DOY,Hour,B\n2022,1,0,1.0\n2022,1,0,2.0\n";
        assert!(matches!(
            parse_satellite_table(dup.as_bytes(), &spec),
            Err(Error::Validation(m)) if m.contains("duplicate")
        ));
        let missing = "YEAR,DOY,B\n2022,1,1.0\n";
        assert!(matches!(
            parse_satellite_table(missing.as_bytes(), &spec),
            Err(Error::Schema(m)) if m.contains("Hour")
        ));
    }
}
