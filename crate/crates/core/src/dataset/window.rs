use crate::config::Config;
use crate::error::{Error, Result};
use crate::ingest::{IMAGE_PREFIX, KP_COLUMN, TEMPORAL_COLUMNS};
use crate::table::{TimeTable, THREE_HOURS};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct WindowConfig {
    pub input_steps: usize,
    pub output_steps: usize,
    pub stride_train: usize,
    /// One day at 3-hour cadence.
    pub stride_daily: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            input_steps: 40,
            output_steps: 24,
            stride_train: 1,
            stride_daily: 8,
        }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_steps == 0 {
            return Err(Error::Config("window.input_steps must be positive".into()));
        }
        if !matches!(self.output_steps, 24 | 40) {
            return Err(Error::Config(format!(
                "window.output_steps must be 24 or 40, got {}",
                self.output_steps
            )));
        }
        if self.stride_train == 0 || self.stride_daily == 0 {
            return Err(Error::Config("window strides must be at least 1".into()));
        }
        Ok(())
    }

    pub fn span(&self) -> usize {
        self.input_steps + self.output_steps
    }

    pub fn from_config(cfg: &Config, section: &str) -> Result<Self> {
        let d = WindowConfig::default();
        let w = WindowConfig {
            input_steps: cfg.value(section, "input_steps", d.input_steps)?,
            output_steps: cfg.value(section, "output_steps", d.output_steps)?,
            stride_train: cfg.value(section, "stride_train", d.stride_train)?,
            stride_daily: cfg.value(section, "stride_daily", d.stride_daily)?,
        };
        w.validate()?;
        Ok(w)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelConfig {
    pub high_kp_threshold: f64,
    pub quiet_upper: f64,
    pub storm_lower: f64,
}

impl Default for LabelConfig {
    fn default() -> Self {
        LabelConfig {
            high_kp_threshold: 7.0,
            quiet_upper: 4.0,
            storm_lower: 5.0,
        }
    }
}

impl LabelConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = 0.0 < self.quiet_upper
            && self.quiet_upper <= self.storm_lower
            && self.storm_lower <= 9.0
            && 0.0 < self.high_kp_threshold
            && self.high_kp_threshold <= 9.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid label bounds {self:?}")))
        }
    }

    pub fn from_config(cfg: &Config, section: &str) -> Result<Self> {
        let d = LabelConfig::default();
        let l = LabelConfig {
            high_kp_threshold: cfg.value(section, "high_kp_threshold", d.high_kp_threshold)?,
            quiet_upper: cfg.value(section, "quiet_upper", d.quiet_upper)?,
            storm_lower: cfg.value(section, "storm_lower", d.storm_lower)?,
        };
        l.validate()?;
        Ok(l)
    }

    /// Index on the 28-step thirds scale.
    pub fn class28(&self, kp: f64) -> usize {
        (3.0 * kp).round().clamp(0.0, 27.0) as usize
    }

    /// Integer bins, with Kp 9 folded into bin 9.
    pub fn class10(&self, kp: f64) -> usize {
        kp.floor().clamp(0.0, 9.0) as usize
    }

    /// Quiet / active / storm.
    pub fn class3(&self, kp: f64) -> usize {
        if kp < self.quiet_upper {
            0
        } else if kp < self.storm_lower {
            1
        } else {
            2
        }
    }

    pub fn high(&self, kp: f64) -> bool {
        kp >= self.high_kp_threshold
    }
}

/// Which columns feed which modality.
#[derive(Debug, Clone, PartialEq)]
pub struct TableLayout {
    pub image: Vec<usize>,
    pub satellite: Vec<usize>,
    pub kp: usize,
}

impl TableLayout {
    /// Image columns are the `img_*` ones, Kp is `Kp`; every remaining
    /// column other than the temporal markers is a satellite feature.
    pub fn infer(table: &TimeTable) -> Result<Self> {
        let kp = table
            .column_index(KP_COLUMN)
            .ok_or_else(|| Error::Schema(format!("table has no `{KP_COLUMN}` column")))?;
        let mut image = Vec::new();
        let mut satellite = Vec::new();
        for (i, c) in table.columns().iter().enumerate() {
            if i == kp || TEMPORAL_COLUMNS.contains(&c.name.as_str()) {
                continue;
            }
            if c.name.starts_with(IMAGE_PREFIX) {
                image.push(i);
            } else {
                satellite.push(i);
            }
        }
        if image.is_empty() {
            return Err(Error::Schema("table has no image feature columns".into()));
        }
        Ok(TableLayout {
            image,
            satellite,
            kp,
        })
    }

    pub fn satellite_names<'a>(&self, table: &'a TimeTable) -> Vec<&'a str> {
        self.satellite
            .iter()
            .map(|&i| table.columns()[i].name.as_str())
            .collect()
    }
}

/// One training or forecast instance.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    /// Start instant of every input step followed by every output step.
    pub times: Vec<i64>,
    pub img_in: Tensor,
    pub sat_in: Tensor,
    pub kp_in: Vec<f64>,
    pub labels28: Vec<usize>,
    pub labels10: Vec<usize>,
    pub labels3: Vec<usize>,
    pub label_high: Vec<u8>,
    pub kp_out: Vec<f64>,
}

impl WindowSample {
    pub fn t0(&self) -> i64 {
        self.times[0]
    }

    pub fn input_steps(&self) -> usize {
        self.kp_in.len()
    }

    pub fn output_steps(&self) -> usize {
        self.kp_out.len()
    }

    pub fn output_times(&self) -> &[i64] {
        &self.times[self.input_steps()..]
    }

    /// End (exclusive) of the last input step.
    pub fn input_end(&self) -> i64 {
        self.times[self.input_steps() - 1] + THREE_HOURS
    }

    /// End (exclusive) of the last output step.
    pub fn output_end(&self) -> i64 {
        self.times[self.times.len() - 1] + THREE_HOURS
    }

    /// Builds the label blocks for an output slice of raw Kp values.
    pub fn labels_from(kp_out: &[f64], lcfg: &LabelConfig) -> (Vec<usize>, Vec<usize>, Vec<usize>, Vec<u8>) {
        (
            kp_out.iter().map(|&k| lcfg.class28(k)).collect(),
            kp_out.iter().map(|&k| lcfg.class10(k)).collect(),
            kp_out.iter().map(|&k| lcfg.class3(k)).collect(),
            kp_out.iter().map(|&k| lcfg.high(k) as u8).collect(),
        )
    }
}

/// Number of windows a table of `rows` rows yields.
pub fn window_count(rows: usize, input_steps: usize, output_steps: usize, stride: usize) -> usize {
    let span = input_steps + output_steps;
    if rows < span {
        0
    } else {
        (rows - span) / stride + 1
    }
}

/// Training windows at `stride_train`.
pub fn make_windows(table: &TimeTable, wcfg: &WindowConfig, lcfg: &LabelConfig) -> Result<Vec<WindowSample>> {
    make_windows_with_stride(table, wcfg, lcfg, wcfg.stride_train)
}

/// Daily forecast windows at `stride_daily`.
pub fn make_daily_windows(table: &TimeTable, wcfg: &WindowConfig, lcfg: &LabelConfig) -> Result<Vec<WindowSample>> {
    make_windows_with_stride(table, wcfg, lcfg, wcfg.stride_daily)
}

pub fn make_windows_with_stride(
    table: &TimeTable,
    wcfg: &WindowConfig,
    lcfg: &LabelConfig,
    stride: usize,
) -> Result<Vec<WindowSample>> {
    wcfg.validate()?;
    lcfg.validate()?;
    if stride == 0 {
        return Err(Error::Config("stride must be at least 1".into()));
    }
    let required = wcfg.span();
    if table.n_rows() < required {
        return Err(Error::WindowUnderflow {
            required,
            available: table.n_rows(),
        });
    }
    if table.any_missing() {
        return Err(Error::Validation(
            "windows require a table without missing cells".into(),
        ));
    }
    let layout = TableLayout::infer(table)?;
    let count = window_count(table.n_rows(), wcfg.input_steps, wcfg.output_steps, stride);
    Ok((0..count)
        .map(|w| cut_window(table, &layout, w * stride, wcfg, lcfg))
        .collect())
}

fn cut_window(
    table: &TimeTable,
    layout: &TableLayout,
    start: usize,
    wcfg: &WindowConfig,
    lcfg: &LabelConfig,
) -> WindowSample {
    let (n_in, n_out) = (wcfg.input_steps, wcfg.output_steps);
    let gather = |cols: &[usize]| {
        let mut data = Vec::with_capacity(n_in * cols.len());
        for r in start..start + n_in {
            data.extend(cols.iter().map(|&c| table.get(r, c)));
        }
        Tensor::matrix(n_in, cols.len(), data).expect("window block shape")
    };
    let kp_in: Vec<f64> = (start..start + n_in).map(|r| table.get(r, layout.kp)).collect();
    let kp_out: Vec<f64> = (start + n_in..start + n_in + n_out)
        .map(|r| table.get(r, layout.kp))
        .collect();
    let (labels28, labels10, labels3, label_high) = WindowSample::labels_from(&kp_out, lcfg);
    WindowSample {
        times: table.timestamps()[start..start + n_in + n_out].to_vec(),
        img_in: gather(&layout.image),
        sat_in: gather(&layout.satellite),
        kp_in,
        labels28,
        labels10,
        labels3,
        label_high,
        kp_out,
    }
}
