//! Walk-forward evaluation: each day the model is fine-tuned on the newest
//! fully observed daily window, then forecasts the following days.
//!
//! Day `i` uses daily sample `i` for fine-tuning. Its output window ends at
//! the day boundary `B`. Horizon `h` reads sample `i + h`, whose input
//! window ends `h` days after sample `i`'s and therefore at or before `B`
//! whenever `8h <= output_steps`. Nothing timestamped at or after `B` feeds
//! a prediction issued on that day.

use std::path::Path;

use crate::config::Config;
use crate::dataset::{make_daily_windows, make_windows_with_stride, LabelConfig, WindowConfig, WindowSample};
use crate::error::{Error, Result};
use crate::features::FeatureTransform;
use crate::loss::LossConfig;
use crate::model::{forward, DistVector, ModelConfig, ModelParams};
use crate::nn::Mode;
use crate::table::{format_ts, parse_ts, TimeTable};
use crate::train::{finetune_steps, mix_seed, AdamConfig};

/// Daily-window steps per day: 24 h / 3 h.
pub const STEPS_PER_DAY: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastConfig {
    pub finetune_epochs: usize,
    pub finetune_lr: f64,
    pub horizons: Vec<usize>,
    /// Fine-tune on every stride-1 window completed during the day instead
    /// of the single daily window.
    pub multi_sample: bool,
    pub seed: u64,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        ForecastConfig {
            finetune_epochs: 2,
            finetune_lr: 1e-4,
            horizons: vec![1, 2, 3],
            multi_sample: false,
            seed: 0,
        }
    }
}

impl ForecastConfig {
    pub fn validate(&self, output_steps: usize) -> Result<()> {
        if self.horizons.is_empty() {
            return Err(Error::Config("at least one horizon is required".into()));
        }
        if let Some(&h) = self.horizons.iter().find(|&&h| !(1..=5).contains(&h)) {
            return Err(Error::Config(format!("horizon {h} outside 1..=5 days")));
        }
        let max = *self.horizons.iter().max().unwrap();
        if max * STEPS_PER_DAY > output_steps {
            return Err(Error::Config(format!(
                "horizon {max} needs output_steps >= {}, got {output_steps}",
                max * STEPS_PER_DAY
            )));
        }
        if !(self.finetune_lr > 0.0) {
            return Err(Error::Config("finetune_lr must be positive".into()));
        }
        Ok(())
    }

    pub fn from_config(cfg: &Config, section: &str) -> Result<Self> {
        let d = ForecastConfig::default();
        let mut horizons: Vec<usize> = cfg.list(section, "horizons", d.horizons.clone())?;
        horizons.sort_unstable();
        horizons.dedup();
        Ok(ForecastConfig {
            finetune_epochs: cfg.value(section, "finetune_epochs", d.finetune_epochs)?,
            finetune_lr: cfg.value(section, "finetune_lr", d.finetune_lr)?,
            horizons,
            multi_sample: cfg.value(section, "multi_sample", d.multi_sample)?,
            seed: cfg.value(section, "seed", d.seed)?,
        })
    }
}

/// `sum_k p_k * k / 3` over the 28 Kp bins.
pub fn expected_kp(dist: &DistVector) -> f64 {
    let e: f64 = dist.probs().iter().enumerate().map(|(k, p)| p * k as f64 / 3.0).sum();
    e.clamp(0.0, 9.0)
}

pub fn argmax_kp(dist: &DistVector) -> f64 {
    dist.argmax() as f64 / 3.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastRow {
    /// Fine-tune boundary of the issuing day.
    pub day: i64,
    pub horizon: usize,
    pub step: i64,
    pub kp_expected: f64,
    pub kp_argmax: f64,
    pub kp_observed: f64,
    /// `kp_expected - kp_observed`.
    pub error: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ForecastReport {
    pub rows: Vec<ForecastRow>,
    /// (day, horizon) pairs skipped for lack of future data.
    pub gaps: Vec<(i64, usize)>,
}

pub const REPORT_HEADER: [&str; 7] = [
    "day",
    "horizon",
    "step_timestamp",
    "kp_pred_expected",
    "kp_pred_argmax",
    "kp_observed",
    "error",
];

impl ForecastReport {
    /// Distinct (day, horizon) groups in row order.
    pub fn groups(&self) -> Vec<(i64, usize)> {
        let mut out: Vec<(i64, usize)> = Vec::new();
        for r in &self.rows {
            if out.last() != Some(&(r.day, r.horizon)) {
                out.push((r.day, r.horizon));
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = REPORT_HEADER.join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{:.6},{:.6},{:.6},{:.6}\n",
                format_ts(r.day),
                r.horizon,
                format_ts(r.step),
                r.kp_expected,
                r.kp_argmax,
                r.kp_observed,
                r.error
            ));
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let headers = rdr
            .headers()
            .map_err(|e| Error::Parse { line: 1, message: e.to_string() })?
            .clone();
        let idx = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Schema(format!("report is missing column {name}")))
        };
        let cols = REPORT_HEADER.map(idx);
        let cols: Vec<usize> = cols.into_iter().collect::<Result<_>>()?;
        let mut rows = Vec::new();
        for (n, rec) in rdr.records().enumerate() {
            let line = n + 2;
            let rec = rec.map_err(|e| Error::Parse { line, message: e.to_string() })?;
            let field = |i: usize| rec.get(cols[i]).unwrap_or("");
            let ts = |i: usize| {
                parse_ts(field(i)).ok_or_else(|| Error::Parse {
                    line,
                    message: format!("bad timestamp {:?}", field(i)),
                })
            };
            let num = |i: usize| {
                field(i).parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    message: format!("bad number {:?} in {}", field(i), REPORT_HEADER[i]),
                })
            };
            rows.push(ForecastRow {
                day: ts(0)?,
                horizon: field(1).parse().map_err(|_| Error::Parse {
                    line,
                    message: format!("bad horizon {:?}", field(1)),
                })?,
                step: ts(2)?,
                kp_expected: num(3)?,
                kp_argmax: num(4)?,
                kp_observed: num(5)?,
                error: num(6)?,
            });
        }
        Ok(ForecastReport { rows, gaps: Vec::new() })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ForecastReport::parse_csv(&text)
    }
}

fn audit(sample: &WindowSample, boundary: i64, what: &str) -> Result<()> {
    if sample.output_end() > boundary {
        return Err(Error::Leakage(format!(
            "{what} window ends {} after the day boundary {}",
            format_ts(sample.output_end()),
            format_ts(boundary)
        )));
    }
    Ok(())
}

/// Fine-tunes on `samples` (already feature-transformed), which must all end
/// at or before `boundary`.
#[allow(clippy::too_many_arguments)]
pub fn finetune_day(
    params: &ModelParams,
    samples: &[&WindowSample],
    boundary: i64,
    mcfg: &ModelConfig,
    lcfg: &LossConfig,
    fcfg: &ForecastConfig,
    day_seed: u64,
) -> Result<ModelParams> {
    for s in samples {
        audit(s, boundary, "fine-tune")?;
    }
    let mut p = params.clone();
    let adam = AdamConfig {
        lr: fcfg.finetune_lr,
        ..AdamConfig::default()
    };
    for (j, s) in samples.iter().enumerate() {
        finetune_steps(s, &mut p, mcfg, lcfg, &adam, fcfg.finetune_epochs, mix_seed(day_seed, j as u64, 1))?;
    }
    Ok(p)
}

/// Forecast rows for day `i` of the transformed daily samples.
pub fn predict_horizons(
    params: &ModelParams,
    daily: &[WindowSample],
    raw_daily: &[WindowSample],
    i: usize,
    boundary: i64,
    mcfg: &ModelConfig,
    fcfg: &ForecastConfig,
) -> Result<ForecastReport> {
    let mut report = ForecastReport::default();
    for &h in &fcfg.horizons {
        let j = i + h;
        let Some(sample) = daily.get(j) else {
            log::info!("no data for horizon {h} on day {}", format_ts(boundary));
            report.gaps.push((boundary, h));
            continue;
        };
        if sample.input_end() > boundary {
            return Err(Error::Leakage(format!(
                "horizon {h} input ends {} after the day boundary {}",
                format_ts(sample.input_end()),
                format_ts(boundary)
            )));
        }
        let out = forward(sample, params, mcfg, Mode::Infer, 0)?;
        let observed = &raw_daily[j].kp_out;
        for (s, dist) in out.dist28.iter().enumerate() {
            let kp_expected = expected_kp(dist);
            report.rows.push(ForecastRow {
                day: boundary,
                horizon: h,
                step: sample.output_times()[s],
                kp_expected,
                kp_argmax: argmax_kp(dist),
                kp_observed: observed[s],
                error: kp_expected - observed[s],
            });
        }
    }
    Ok(report)
}

/// Everything the walk-forward needs besides the table and parameters.
#[derive(Debug, Clone)]
pub struct WalkForward<'a> {
    pub transform: &'a FeatureTransform,
    pub model: &'a ModelConfig,
    pub loss: &'a LossConfig,
    pub windows: &'a WindowConfig,
    pub labels: &'a LabelConfig,
    pub forecast: &'a ForecastConfig,
}

pub fn run_walkforward(initial: &ModelParams, test: &TimeTable, ctx: &WalkForward<'_>) -> Result<ForecastReport> {
    ctx.forecast.validate(ctx.windows.output_steps)?;
    ctx.transform.ensure_unseen(test)?;
    let raw_daily = make_daily_windows(test, ctx.windows, ctx.labels)?;
    let daily: Vec<WindowSample> = raw_daily
        .iter()
        .map(|s| ctx.transform.apply_sample(s))
        .collect::<Result<_>>()?;
    let fine: Vec<WindowSample> = if ctx.forecast.multi_sample {
        make_windows_with_stride(test, ctx.windows, ctx.labels, 1)?
            .iter()
            .map(|s| ctx.transform.apply_sample(s))
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };

    let mut params = initial.clone();
    let mut report = ForecastReport::default();
    for i in 0..daily.len() {
        let boundary = daily[i].output_end();
        let day_samples: Vec<&WindowSample> = if ctx.forecast.multi_sample {
            fine.iter()
                .filter(|s| s.output_end() <= boundary && s.output_end() > boundary - crate::table::DAY)
                .collect()
        } else {
            vec![&daily[i]]
        };
        params = finetune_day(
            &params,
            &day_samples,
            boundary,
            ctx.model,
            ctx.loss,
            ctx.forecast,
            mix_seed(ctx.forecast.seed, i as u64, 0),
        )?;
        let day = predict_horizons(&params, &daily, &raw_daily, i, boundary, ctx.model, ctx.forecast)?;
        report.rows.extend(day.rows);
        report.gaps.extend(day.gaps);
    }
    log::info!(
        "walk-forward: {} days, {} groups, {} gaps",
        daily.len(),
        report.groups().len(),
        report.gaps.len()
    );
    Ok(report)
}
