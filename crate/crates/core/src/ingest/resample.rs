use crate::error::{Error, Result};
use crate::table::{Column, TimeTable, HOUR};

/// Places the table on an hourly grid from the hour containing the first
/// row through the hour containing the last. Each grid row copies the most
/// recent input row at or before it (values and missing flags alike).
pub fn resample_hourly_ffill(table: &TimeTable) -> Result<TimeTable> {
    if table.is_empty() {
        return Err(Error::EmptyInput("cannot resample an empty table".into()));
    }
    let ts = table.timestamps();
    let start = ts[0].div_euclid(HOUR) * HOUR;
    let end = ts[ts.len() - 1].div_euclid(HOUR) * HOUR;
    let w = table.n_cols();
    let n = ((end - start) / HOUR + 1) as usize;
    let mut timestamps = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n * w);
    let mut missing = Vec::with_capacity(n * w);
    let mut src = 0usize;
    for i in 0..n {
        let t = start + i as i64 * HOUR;
        while src < ts.len() && ts[src] <= t {
            src += 1;
        }
        timestamps.push(t);
        if src == 0 {
            values.extend(std::iter::repeat_n(f64::NAN, w));
            missing.extend(std::iter::repeat_n(true, w));
        } else {
            values.extend_from_slice(table.row(src - 1));
            missing.extend_from_slice(table.row_missing(src - 1));
        }
    }
    TimeTable::new(timestamps, table.columns().to_vec(), values, missing)
}

/// Fills interior gaps by linear interpolation against timestamps and
/// leading/trailing gaps with the nearest observed value.
pub fn interpolate_linear(table: &TimeTable) -> Result<TimeTable> {
    let mut out = table.clone();
    let ts = table.timestamps();
    for c in 0..table.n_cols() {
        let observed: Vec<usize> = (0..table.n_rows()).filter(|&r| !table.is_missing(r, c)).collect();
        if observed.is_empty() {
            if table.n_rows() == 0 {
                continue;
            }
            return Err(Error::UnfillableColumn(table.columns()[c].name.clone()));
        }
        let mut next = 0usize;
        for r in 0..table.n_rows() {
            if !table.is_missing(r, c) {
                continue;
            }
            while next < observed.len() && observed[next] < r {
                next += 1;
            }
            let value = match (next.checked_sub(1).map(|i| observed[i]), observed.get(next)) {
                (Some(a), Some(&b)) => {
                    let (va, vb) = (table.get(a, c), table.get(b, c));
                    let frac = (ts[r] - ts[a]) as f64 / (ts[b] - ts[a]) as f64;
                    va + (vb - va) * frac
                }
                (Some(a), None) => table.get(a, c),
                (None, Some(&b)) => table.get(b, c),
                (None, None) => unreachable!("observed is non-empty"),
            };
            out.set(r, c, value);
        }
    }
    Ok(out)
}

pub const KP_COLUMN: &str = "Kp";

/// Inner join of the hourly satellite and image tables on timestamp, with
/// each Kp value broadcast to the hourly rows inside its 3-hour window.
pub fn merge_by_timestamp(
    sat: &TimeTable,
    kp: &super::KpSeries,
    img: &TimeTable,
) -> Result<TimeTable> {
    let mut columns: Vec<Column> = sat.columns().to_vec();
    columns.push(Column::new(KP_COLUMN));
    columns.extend(img.columns().iter().cloned());
    let mut seen = std::collections::HashSet::new();
    for c in &columns {
        if !seen.insert(c.name.as_str()) {
            return Err(Error::Merge(format!("column name collision on `{}`", c.name)));
        }
    }

    let mut timestamps = Vec::new();
    let mut values = Vec::new();
    let mut missing = Vec::new();
    let img_ts = img.timestamps();
    let mut j = 0usize;
    for (i, &t) in sat.timestamps().iter().enumerate() {
        while j < img_ts.len() && img_ts[j] < t {
            j += 1;
        }
        if j >= img_ts.len() || img_ts[j] != t {
            continue;
        }
        let Some(k) = kp.value_at(t) else { continue };
        timestamps.push(t);
        values.extend_from_slice(sat.row(i));
        missing.extend_from_slice(sat.row_missing(i));
        values.push(k);
        missing.push(false);
        values.extend_from_slice(img.row(j));
        missing.extend_from_slice(img.row_missing(j));
    }
    if timestamps.is_empty() {
        return Err(Error::Merge(
            "satellite, Kp and image records share no timestamps".into(),
        ));
    }
    TimeTable::new(timestamps, columns, values, missing)
}
