//! Error metrics over forecast reports and comparison against an external
//! baseline forecast.

mod noaa;
mod plot;

pub use noaa::parse_noaa_3day;
pub use plot::{emit_plots, forecast_svg, histogram_svg};

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::forecast::{ForecastReport, ForecastRow};
use crate::table::{format_ts, parse_ts, THREE_HOURS};

/// Error histogram covers [-9, 9] in 1/3-wide bins.
pub const HIST_BINS: usize = 54;
pub const HIST_MIN: f64 = -9.0;
pub const HIST_WIDTH: f64 = 1.0 / 3.0;

/// Histogram bin of a signed error. Values on a bin edge (up to rounding)
/// land in the upper bin; anything outside the range is clamped.
pub fn hist_bin(e: f64) -> usize {
    let x = ((e - HIST_MIN) * 3.0 + 1e-9).floor();
    if x.is_nan() || x < 0.0 {
        0
    } else {
        (x as usize).min(HIST_BINS - 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSummary {
    pub horizon: usize,
    pub count: usize,
    pub mae: f64,
    pub rmse: f64,
    pub bias: f64,
    pub histogram: Vec<usize>,
}

impl ErrorSummary {
    /// Summary of one error sample. Errors are sorted before summation so the
    /// result does not depend on row order.
    pub fn of(horizon: usize, errors: &[f64]) -> Self {
        let mut sorted = errors.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut histogram = vec![0; HIST_BINS];
        for &e in &sorted {
            histogram[hist_bin(e)] += 1;
        }
        let n = sorted.len();
        if n == 0 {
            return ErrorSummary { horizon, count: 0, mae: 0.0, rmse: 0.0, bias: 0.0, histogram };
        }
        let nf = n as f64;
        let mae = sorted.iter().map(|e| e.abs()).sum::<f64>() / nf;
        let rmse = (sorted.iter().map(|e| e * e).sum::<f64>() / nf).sqrt();
        let bias = sorted.iter().sum::<f64>() / nf;
        ErrorSummary { horizon, count: n, mae, rmse, bias, histogram }
    }
}

fn by_horizon<'a>(rows: impl Iterator<Item = (usize, f64)> + 'a) -> BTreeMap<usize, Vec<f64>> {
    let mut out: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for (h, e) in rows {
        out.entry(h).or_default().push(e);
    }
    out
}

/// One summary per horizon present in the report, in horizon order.
pub fn error_summary(report: &ForecastReport) -> Vec<ErrorSummary> {
    by_horizon(report.rows.iter().map(|r| (r.horizon, r.error)))
        .into_iter()
        .map(|(h, e)| ErrorSummary::of(h, &e))
        .collect()
}

pub fn summaries_csv(summaries: &[ErrorSummary]) -> String {
    let mut out = String::from("horizon,count,mae,rmse,bias\n");
    for s in summaries {
        out.push_str(&format!("{},{},{:.6},{:.6},{:.6}\n", s.horizon, s.count, s.mae, s.rmse, s.bias));
    }
    out
}

pub fn histogram_csv(summaries: &[ErrorSummary]) -> String {
    let mut out = String::from("horizon,bin_low,bin_high,count\n");
    for s in summaries {
        for (i, c) in s.histogram.iter().enumerate() {
            let lo = HIST_MIN + i as f64 * HIST_WIDTH;
            out.push_str(&format!("{},{:.4},{:.4},{}\n", s.horizon, lo, lo + HIST_WIDTH, c));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineRow {
    pub day: i64,
    pub horizon: usize,
    pub step: i64,
    pub kp: f64,
}

/// Forecasts from an external model keyed like the report.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BaselineForecast {
    pub rows: Vec<BaselineRow>,
}

impl BaselineForecast {
    pub fn new(rows: Vec<BaselineRow>) -> Result<Self> {
        for r in &rows {
            if !(0.0..=9.0).contains(&r.kp) {
                return Err(Error::Validation(format!("baseline Kp {} outside [0, 9] at {}", r.kp, format_ts(r.step))));
            }
            if r.step.rem_euclid(THREE_HOURS) != 0 {
                return Err(Error::Validation(format!("baseline step {} is not on a 3-hour boundary", format_ts(r.step))));
            }
        }
        Ok(BaselineForecast { rows })
    }

    /// Columns `day,horizon,step_timestamp,kp_pred`. A report file is accepted
    /// too, in which case `kp_pred_expected` supplies the prediction.
    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let headers = rdr.headers().map_err(|e| Error::Parse { line: 1, message: e.to_string() })?.clone();
        let find = |names: &[&str]| {
            headers
                .iter()
                .position(|h| names.contains(&h))
                .ok_or_else(|| Error::Schema(format!("baseline is missing column {}", names[0])))
        };
        let (cd, ch, cs, ck) = (
            find(&["day"])?,
            find(&["horizon"])?,
            find(&["step_timestamp"])?,
            find(&["kp_pred", "kp_pred_expected"])?,
        );
        let mut rows = Vec::new();
        for (n, rec) in rdr.records().enumerate() {
            let line = n + 2;
            let rec = rec.map_err(|e| Error::Parse { line, message: e.to_string() })?;
            let bad = |what: &str, v: &str| Error::Parse { line, message: format!("bad {what} {v:?}") };
            let get = |i: usize| rec.get(i).unwrap_or("");
            rows.push(BaselineRow {
                day: parse_ts(get(cd)).ok_or_else(|| bad("day", get(cd)))?,
                horizon: get(ch).parse().map_err(|_| bad("horizon", get(ch)))?,
                step: parse_ts(get(cs)).ok_or_else(|| bad("step_timestamp", get(cs)))?,
                kp: get(ck).parse().map_err(|_| bad("kp_pred", get(ck)))?,
            });
        }
        BaselineForecast::new(rows)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("day,horizon,step_timestamp,kp_pred\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{:.6}\n", format_ts(r.day), r.horizon, format_ts(r.step), r.kp));
        }
        out
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        BaselineForecast::parse_csv(&text)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepDelta {
    pub day: i64,
    pub horizon: usize,
    pub step: i64,
    pub kp_observed: f64,
    pub model_error: f64,
    pub baseline_error: f64,
    /// `|model_error| - |baseline_error|`; negative where the model is closer.
    pub abs_delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub model: Vec<ErrorSummary>,
    pub baseline: Vec<ErrorSummary>,
    pub deltas: Vec<StepDelta>,
}

/// Joins report and baseline on (day, horizon, step) and summarizes both
/// over the common rows only.
pub fn compare_baseline(report: &ForecastReport, baseline: &BaselineForecast) -> Result<Comparison> {
    let index: BTreeMap<(i64, usize, i64), f64> = baseline.rows.iter().map(|r| ((r.day, r.horizon, r.step), r.kp)).collect();
    let deltas: Vec<StepDelta> = report
        .rows
        .iter()
        .filter_map(|r: &ForecastRow| {
            index.get(&(r.day, r.horizon, r.step)).map(|&kp| {
                let baseline_error = kp - r.kp_observed;
                StepDelta {
                    day: r.day,
                    horizon: r.horizon,
                    step: r.step,
                    kp_observed: r.kp_observed,
                    model_error: r.error,
                    baseline_error,
                    abs_delta: r.error.abs() - baseline_error.abs(),
                }
            })
        })
        .collect();
    if deltas.is_empty() {
        return Err(Error::Comparison("report and baseline share no (day, horizon, step) rows".into()));
    }
    let summarize = |f: fn(&StepDelta) -> f64| {
        by_horizon(deltas.iter().map(|d| (d.horizon, f(d))))
            .into_iter()
            .map(|(h, e)| ErrorSummary::of(h, &e))
            .collect()
    };
    Ok(Comparison {
        model: summarize(|d| d.model_error),
        baseline: summarize(|d| d.baseline_error),
        deltas,
    })
}

impl Comparison {
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("source,horizon,count,mae,rmse,bias\n");
        for (name, list) in [("model", &self.model), ("baseline", &self.baseline)] {
            for s in list {
                out.push_str(&format!(
                    "{name},{},{},{:.6},{:.6},{:.6}\n",
                    s.horizon, s.count, s.mae, s.rmse, s.bias
                ));
            }
        }
        out
    }

    pub fn deltas_csv(&self) -> String {
        let mut out = String::from("day,horizon,step_timestamp,kp_observed,model_error,baseline_error,abs_delta\n");
        for d in &self.deltas {
            out.push_str(&format!(
                "{},{},{},{:.6},{:.6},{:.6},{:.6}\n",
                format_ts(d.day),
                d.horizon,
                format_ts(d.step),
                d.kp_observed,
                d.model_error,
                d.baseline_error,
                d.abs_delta
            ));
        }
        out
    }
}
