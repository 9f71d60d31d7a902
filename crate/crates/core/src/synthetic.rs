//! Seeded synthetic data with a known answer.
//!
//! A regime-switching driver takes one of four levels for 100-200 steps at a
//! time; Kp is a threshold function of the driver. Other satellite columns
//! and the image features are noise with a weak regime imprint.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::ingest::{
    image_column_name, write_feature_binary, write_feature_text, FeatureRecord, KpSeries, KP_COLUMN,
    OMNI_FEATURES,
};
use crate::table::{parse_ts, Column, TimeTable, HOUR, THREE_HOURS};

/// Driver regime levels and the Kp each one implies.
pub const LEVELS: [f64; 4] = [-1.0, 0.0, 1.0, 2.0];
pub const DRIVER_COLUMN: &str = "driver";

/// Kp as a step function of the driver: thresholds halfway between levels.
pub fn kp_for_driver(x: f64) -> f64 {
    if x < -0.5 {
        1.0
    } else if x < 0.5 {
        13.0 / 3.0
    } else if x < 1.5 {
        17.0 / 3.0
    } else {
        22.0 / 3.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    /// Number of 3-hour steps.
    pub rows: usize,
    pub start: i64,
    /// Satellite columns including the driver, which comes first.
    pub satellite_cols: usize,
    pub image_dim: usize,
    pub regime_min: usize,
    pub regime_max: usize,
    /// Standard deviation of the noise on the driver.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            rows: 1200,
            start: parse_ts("2023-01-01T00:00:00Z").unwrap(),
            satellite_cols: 3,
            image_dim: 6,
            regime_min: 100,
            regime_max: 200,
            noise: 0.1,
            seed: 0,
        }
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Regime level per step. Levels cycle through shuffled rounds of all four so
/// every class appears early and often.
pub fn regime_levels(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut out = Vec::with_capacity(spec.rows);
    let mut round: Vec<f64> = Vec::new();
    let mut last = f64::NAN;
    while out.len() < spec.rows {
        if round.is_empty() {
            round = LEVELS.to_vec();
            round.shuffle(rng);
            if round[round.len() - 1] == last {
                round.swap(0, 3);
            }
        }
        let level = round.pop().unwrap();
        last = level;
        let len = rng.gen_range(spec.regime_min..=spec.regime_max);
        out.extend(std::iter::repeat_n(level, len));
    }
    out.truncate(spec.rows);
    out
}

fn satellite_names(n: usize) -> Vec<String> {
    std::iter::once(DRIVER_COLUMN.to_string())
        .chain((1..n).map(|i| format!("aux_{i}")))
        .collect()
}

/// A merged 3-hour table: satellite columns, image features, then `Kp`.
pub fn synthetic_table(spec: &SyntheticSpec) -> Result<TimeTable> {
    if spec.rows == 0 || spec.satellite_cols == 0 || spec.regime_min == 0 || spec.regime_min > spec.regime_max {
        return Err(Error::Config(format!("invalid synthetic spec {spec:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let levels = regime_levels(spec, &mut rng);
    let mut columns: Vec<Column> = satellite_names(spec.satellite_cols).into_iter().map(Column::new).collect();
    columns.extend((0..spec.image_dim).map(|i| Column::new(image_column_name(i))));
    columns.push(Column::new(KP_COLUMN));
    let mut values = Vec::with_capacity(spec.rows * columns.len());
    let mut timestamps = Vec::with_capacity(spec.rows);
    for (r, &level) in levels.iter().enumerate() {
        timestamps.push(spec.start + r as i64 * THREE_HOURS);
        let noise = (spec.noise * normal(&mut rng)).clamp(-0.45, 0.45);
        values.push(level + noise);
        for _ in 1..spec.satellite_cols {
            values.push(normal(&mut rng));
        }
        for i in 0..spec.image_dim {
            let imprint = if i == 0 { 0.3 * level } else { 0.0 };
            values.push(imprint + normal(&mut rng));
        }
        values.push(kp_for_driver(level));
    }
    let missing = vec![false; values.len()];
    TimeTable::new(timestamps, columns, values, missing)
}

/// Paths of a raw input set written by [`write_raw_fixture`].
#[derive(Debug, Clone)]
pub struct RawFixture {
    pub satellite: PathBuf,
    pub kp: PathBuf,
    pub images_text: PathBuf,
    pub images_binary: PathBuf,
}

/// OMNI column carrying the driver in raw fixtures (scaled by -5).
pub const RAW_DRIVER_COLUMN: &str = "BZ, nT (GSM)";

fn fmt_num(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

/// Writes hourly OMNI-layout satellite text, a 3-hourly Kp file and
/// 3-hourly image features (text and binary) for `spec.rows` 3-hour steps.
///
/// Some hours are dropped and some cells carry OMNI fill values so that the
/// ingest stage has gaps to repair. Image features are rounded to two
/// decimals so the text and binary variants hold identical values.
pub fn write_raw_fixture(dir: &Path, spec: &SyntheticSpec) -> Result<RawFixture> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let levels = regime_levels(spec, &mut rng);

    let mut sat = String::new();
    sat.push_str("YEAR DOY Hour");
    for name in OMNI_FEATURES {
        write!(sat, " \"{name}\"").unwrap();
    }
    sat.push('\n');
    let driver_idx = OMNI_FEATURES.iter().position(|n| *n == RAW_DRIVER_COLUMN).unwrap();
    let speed_idx = OMNI_FEATURES.iter().position(|n| *n == "SW Plasma Speed, km/s").unwrap();
    let hours = spec.rows * 3;
    for h in 0..hours {
        let ts = spec.start + h as i64 * HOUR;
        let interior = h > 0 && h + 1 < hours;
        if interior && h % 97 == 41 {
            continue;
        }
        let date = chrono::DateTime::from_timestamp(ts, 0).ok_or_else(|| Error::Validation("bad start".into()))?;
        let level = levels[h / 3];
        write!(
            sat,
            "{} {} {}",
            chrono::Datelike::year(&date.date_naive()),
            chrono::Datelike::ordinal(&date.date_naive()),
            chrono::Timelike::hour(&date.time())
        )
        .unwrap();
        for i in 0..OMNI_FEATURES.len() {
            let v = if i == driver_idx {
                -5.0 * (level + (spec.noise * normal(&mut rng)).clamp(-0.45, 0.45))
            } else if i == speed_idx && interior && h % 53 == 7 {
                9999.0
            } else {
                10.0 * (i as f64 + 1.0) + normal(&mut rng)
            };
            write!(sat, " {}", fmt_num(v)).unwrap();
        }
        sat.push('\n');
    }
    let satellite = dir.join("satellite.txt");
    std::fs::write(&satellite, sat).map_err(|e| Error::io(&satellite, e))?;

    let kp_times: Vec<i64> = (0..spec.rows).map(|r| spec.start + r as i64 * THREE_HOURS).collect();
    let kp_vals: Vec<f64> = levels.iter().map(|&l| kp_for_driver(l)).collect();
    let kp = dir.join("kp.txt");
    std::fs::write(&kp, KpSeries::new(kp_times.clone(), kp_vals)?.write_text()).map_err(|e| Error::io(&kp, e))?;

    let records: Vec<FeatureRecord> = kp_times
        .iter()
        .zip(&levels)
        .map(|(&t, &level)| FeatureRecord {
            hour: t,
            features: (0..spec.image_dim)
                .map(|i| {
                    let imprint = if i < 8 { 0.5 * level } else { 0.0 };
                    (100.0 * (imprint + normal(&mut rng))).round() / 100.0
                })
                .collect(),
        })
        .collect();
    let images_text = dir.join("images.csv");
    std::fs::write(&images_text, write_feature_text(&records, spec.image_dim))
        .map_err(|e| Error::io(&images_text, e))?;
    let images_binary = dir.join("images.kpimg");
    std::fs::write(&images_binary, write_feature_binary(&records, spec.image_dim))
        .map_err(|e| Error::io(&images_binary, e))?;

    Ok(RawFixture {
        satellite,
        kp,
        images_text,
        images_binary,
    })
}
