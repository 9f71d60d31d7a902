//! 3-hour resampling, date splits, sliding windows, labels and class
//! balancing.

mod balance;
mod shard;
mod window;

pub use balance::{class_histogram, expand_balance, expand_balance_indices, BalanceKey};
pub use shard::{decode_sample, encode_sample, read_shards, write_shards, SHARD_MAGIC};
pub use window::{
    make_daily_windows, make_windows, make_windows_with_stride, window_count, LabelConfig,
    TableLayout, WindowConfig, WindowSample,
};

use crate::error::{Error, Result};
use crate::table::{format_ts, TimeTable, THREE_HOURS};

/// Averages each column over 3-hour buckets aligned to 00/03/06/... UTC and
/// drops any bucket that still has a missing cell.
pub fn resample_3h_mean(table: &TimeTable) -> Result<TimeTable> {
    if table.is_empty() {
        return Err(Error::EmptyInput("cannot resample an empty table".into()));
    }
    let w = table.n_cols();
    let mut timestamps = Vec::new();
    let mut values = Vec::new();
    let mut r = 0;
    let ts = table.timestamps();
    while r < table.n_rows() {
        let bucket = ts[r].div_euclid(THREE_HOURS) * THREE_HOURS;
        let mut sums = vec![0.0; w];
        let mut counts = vec![0usize; w];
        while r < table.n_rows() && ts[r] < bucket + THREE_HOURS {
            for c in 0..w {
                if !table.is_missing(r, c) {
                    sums[c] += table.get(r, c);
                    counts[c] += 1;
                }
            }
            r += 1;
        }
        if counts.iter().all(|&n| n > 0) {
            timestamps.push(bucket);
            values.extend(sums.iter().zip(&counts).map(|(s, &n)| s / n as f64));
        }
    }
    let missing = vec![false; values.len()];
    TimeTable::new(timestamps, table.columns().to_vec(), values, missing)
}

/// Train rows strictly before `train_end`; test rows in `[test_start, test_end)`.
pub fn split_by_date(
    table: &TimeTable,
    train_end: i64,
    test_start: i64,
    test_end: i64,
) -> Result<(TimeTable, TimeTable)> {
    if !(train_end <= test_start && test_start < test_end) {
        return Err(Error::Config(format!(
            "split bounds must satisfy train_end <= test_start < test_end, got {} / {} / {}",
            format_ts(train_end),
            format_ts(test_start),
            format_ts(test_end)
        )));
    }
    let train = table.filter_rows(|t| t < train_end);
    let test = table.filter_rows(|t| (test_start..test_end).contains(&t));
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::{parse_ts, HOUR};

    #[test]
    fn three_hour_means() {
        let ts: Vec<i64> = (0..6).map(|h| h * HOUR).collect();
        let rows = vec![
            vec![1.0, 5.0],
            vec![2.0, 5.0],
            vec![3.0, 5.0],
            vec![4.0, 5.0],
            vec![4.0, 5.0],
            vec![7.0, 5.0],
        ];
        let t = TimeTable::from_rows(ts, &["a", "const"], rows).unwrap();
        let r = resample_3h_mean(&t).unwrap();
        assert_eq!(r.timestamps(), &[0, THREE_HOURS]);
        assert_eq!(r.column_values(0), vec![2.0, 5.0]);
        assert_eq!(r.column_values(1), vec![5.0, 5.0]);
    }

    #[test]
    fn buckets_with_no_observation_are_dropped() {
        let nan = f64::NAN;
        let ts: Vec<i64> = (0..6).map(|h| h * HOUR).collect();
        let rows = vec![vec![1.0], vec![nan], vec![3.0], vec![nan], vec![nan], vec![nan]];
        let t = TimeTable::from_rows(ts, &["a"], rows).unwrap();
        let r = resample_3h_mean(&t).unwrap();
        assert_eq!(r.n_rows(), 1);
        assert_eq!(r.get(0, 0), 2.0);
        assert!(resample_3h_mean(&t.empty_like()).is_err());
    }

    #[test]
    fn split_boundaries() {
        let a = parse_ts("2024-04-19T21:00:00Z").unwrap();
        let b = parse_ts("2024-04-20T00:00:00Z").unwrap();
        let end = parse_ts("2024-07-01").unwrap();
        let t = TimeTable::from_rows(vec![a, b], &["x"], vec![vec![1.0], vec![2.0]]).unwrap();
        let (train, test) = split_by_date(&t, b, b, end).unwrap();
        assert_eq!((train.n_rows(), test.n_rows()), (1, 1));
        let (train, _) = split_by_date(&t, a, b, end).unwrap();
        assert!(train.is_empty());
        assert!(matches!(split_by_date(&t, end, b, end), Err(Error::Config(_))));
        assert!(matches!(split_by_date(&t, a, end, b), Err(Error::Config(_))));
    }
}
