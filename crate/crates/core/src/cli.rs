//! Command-line surface. Every stage reads one config file; `--set` and
//! `--seed` override it.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::Config;
use crate::dataset::{
    expand_balance, make_windows, read_shards, resample_3h_mean, split_by_date, write_shards, BalanceKey,
    LabelConfig, WindowConfig, WindowSample,
};
use crate::error::{Error, Result};
use crate::eval::{
    compare_baseline, emit_plots, error_summary, histogram_csv, parse_noaa_3day, summaries_csv, BaselineForecast,
};
use crate::features::{FeatureTransform, DEFAULT_PCA_COMPONENTS};
use crate::fetch::{fetch, parse_manifest, FetchOptions, FetchStatus};
use crate::forecast::{run_walkforward, ForecastConfig, ForecastReport, WalkForward};
use crate::ingest::{ingest_files, ColumnSpec, IngestInputs, SentinelConfig};
use crate::loss::LossConfig;
use crate::model::{ModelConfig, ModelParams};
use crate::table::{parse_ts, TimeTable};
use crate::train::{history_csv, train_loop, TrainConfig};

/// Sections whose `seed` key `--seed` replaces.
pub const SEEDED_SECTIONS: [&str; 4] = ["prepare", "model", "train", "forecast"];

#[derive(Debug, Parser)]
#[command(name = "kpcast", version, about = "Multimodal multi-day Kp index forecasting pipeline")]
pub struct Cli {
    /// Pipeline configuration file.
    #[arg(long, global = true, default_value = "kpcast.cfg")]
    pub config: PathBuf,

    /// Override a config value, `section.key=value`. Repeatable.
    #[arg(long = "set", global = true, value_name = "SECTION.KEY=VALUE")]
    pub overrides: Vec<String>,

    /// Seed for every stochastic stage.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Log progress to stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Parse, clean and merge raw satellite, Kp and image-feature files.
    Ingest,
    /// Resample to 3 hours, split by date, build and balance training windows.
    Prepare,
    /// Fit the feature transforms on the training table.
    FitTransforms,
    /// Train the model on the prepared windows.
    Train,
    /// Walk-forward fine-tuning and forecasting over the test table.
    Forecast,
    /// Error summaries, histograms, plots and baseline comparison.
    Report,
    /// Download the files listed in a URL manifest.
    Fetch,
}

/// Config plus the directory relative paths are resolved against.
pub struct Context {
    pub config: Config,
    pub base: PathBuf,
}

impl Context {
    pub fn load(path: &Path, overrides: &[String], seed: Option<u64>) -> Result<Self> {
        let mut config = Config::load(path)?;
        for o in overrides {
            config.apply_override(o)?;
        }
        let global = match seed {
            Some(s) => Some(s.to_string()),
            None => config.get("", "seed").map(str::to_string),
        };
        if let Some(s) = global {
            for section in SEEDED_SECTIONS {
                if seed.is_some() || config.get(section, "seed").is_none() {
                    config.set(section, "seed", &s);
                }
            }
        }
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Context { config, base })
    }

    pub fn path(&self, section: &str, key: &str) -> Result<PathBuf> {
        let raw: String = self.config.required(section, key)?;
        Ok(self.resolve(&raw))
    }

    pub fn optional_path(&self, section: &str, key: &str) -> Option<PathBuf> {
        self.config.get(section, key).map(|p| self.resolve(p))
    }

    fn resolve(&self, raw: &str) -> PathBuf {
        let p = PathBuf::from(raw);
        if p.is_absolute() {
            p
        } else {
            self.base.join(p)
        }
    }

    fn time(&self, section: &str, key: &str) -> Result<i64> {
        let raw: String = self.config.required(section, key)?;
        parse_ts(&raw).ok_or_else(|| Error::Config(format!("{section}.{key}: bad timestamp {raw:?}")))
    }

    fn seed(&self, section: &str) -> Result<u64> {
        self.config.value(section, "seed", 0)
    }
}

fn parent_dir(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => std::fs::create_dir_all(p).map_err(|e| Error::io(p, e)),
        _ => Ok(()),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    parent_dir(path)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn run_ingest(ctx: &Context) -> Result<String> {
    let columns = match ctx.config.get("ingest", "columns").unwrap_or("omni") {
        "omni" => ColumnSpec::omni(),
        _ => ColumnSpec::new(&ctx.config.list::<String>("ingest", "columns", Vec::new())?),
    };
    let sentinels = match ctx.config.get("ingest", "sentinels").unwrap_or("omni") {
        "omni" => SentinelConfig::omni_default(),
        "none" => SentinelConfig::empty(),
        _ => SentinelConfig::load(&ctx.path("ingest", "sentinels")?)?,
    };
    let image_dim = match ctx.config.get("ingest", "image_dim") {
        Some(_) => Some(ctx.config.required("ingest", "image_dim")?),
        None => None,
    };
    let (sat, kp, img) = (ctx.path("ingest", "satellite")?, ctx.path("ingest", "kp")?, ctx.path("ingest", "images")?);
    let table = ingest_files(&IngestInputs {
        satellite: &sat,
        kp: &kp,
        images: &img,
        columns: &columns,
        sentinels: &sentinels,
        image_dim,
    })?;
    let out = ctx.path("ingest", "output")?;
    parent_dir(&out)?;
    table.save_csv(&out)?;
    Ok(format!("ingest: {} hourly rows, {} columns -> {}", table.n_rows(), table.n_cols(), out.display()))
}

pub fn run_prepare(ctx: &Context) -> Result<String> {
    let wcfg = WindowConfig::from_config(&ctx.config, "window")?;
    let lcfg = LabelConfig::from_config(&ctx.config, "label")?;
    let hourly = TimeTable::load_csv(&ctx.path("prepare", "input")?)?;
    let table = resample_3h_mean(&hourly)?;
    let (train, test) = split_by_date(
        &table,
        ctx.time("prepare", "train_end")?,
        ctx.time("prepare", "test_start")?,
        ctx.time("prepare", "test_end")?,
    )?;
    let windows = make_windows(&train, &wcfg, &lcfg)?;
    let key = BalanceKey::parse(ctx.config.get("prepare", "balance").unwrap_or("max_input"))?;
    let balanced = if ctx.config.value("prepare", "balance_enabled", true)? {
        expand_balance(&windows, key, ctx.seed("prepare")?)?
    } else {
        windows.clone()
    };
    let (train_out, test_out, shards) = (
        ctx.path("prepare", "train_table")?,
        ctx.path("prepare", "test_table")?,
        ctx.path("prepare", "shards")?,
    );
    parent_dir(&train_out)?;
    train.save_csv(&train_out)?;
    parent_dir(&test_out)?;
    test.save_csv(&test_out)?;
    if shards.exists() {
        std::fs::remove_dir_all(&shards).map_err(|e| Error::io(&shards, e))?;
    }
    write_shards(&shards, &balanced)?;
    Ok(format!(
        "prepare: {} train rows, {} test rows, {} windows ({} after balancing) -> {}",
        train.n_rows(),
        test.n_rows(),
        windows.len(),
        balanced.len(),
        shards.display()
    ))
}

pub fn run_fit_transforms(ctx: &Context) -> Result<String> {
    let train = TimeTable::load_csv(&ctx.path("prepare", "train_table")?)?;
    let k = ctx.config.value("features", "pca_components", DEFAULT_PCA_COMPONENTS)?;
    let t = FeatureTransform::fit(&train, k)?;
    let out = ctx.path("features", "output")?;
    parent_dir(&out)?;
    t.save(&out)?;
    Ok(format!(
        "fit-transforms: {} image components, {} satellite columns -> {}",
        t.image_dim(),
        t.satellite_dim(),
        out.display()
    ))
}

/// Model configuration with the dimensions fixed by the window and
/// transform settings.
pub fn model_config(ctx: &Context, transform: &FeatureTransform) -> Result<ModelConfig> {
    let wcfg = WindowConfig::from_config(&ctx.config, "window")?;
    let mut c = ctx.config.clone();
    c.set("model", "input_steps", wcfg.input_steps);
    c.set("model", "output_steps", wcfg.output_steps);
    c.set("model", "image_dim", transform.image_dim());
    c.set("model", "satellite_dim", transform.satellite_dim());
    ModelConfig::from_config(&c, "model")
}

fn train_config(ctx: &Context) -> Result<TrainConfig> {
    let mut t = TrainConfig::from_config(&ctx.config, "train")?;
    t.checkpoint_dir = ctx.optional_path("train", "checkpoint_dir");
    t.loss_log = ctx.optional_path("train", "loss_log");
    Ok(t)
}

pub fn run_train(ctx: &Context) -> Result<String> {
    let transform = FeatureTransform::load(&ctx.path("features", "output")?)?;
    let mcfg = model_config(ctx, &transform)?;
    let lcfg = LossConfig::from_config(&ctx.config, "loss")?;
    let tcfg = train_config(ctx)?;
    let raw = read_shards(&ctx.path("prepare", "shards")?)?;
    let samples: Vec<WindowSample> = raw.iter().map(|s| transform.apply_sample(s)).collect::<Result<_>>()?;
    if let Some(dir) = &tcfg.checkpoint_dir {
        if dir.exists() {
            std::fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    if let Some(log) = &tcfg.loss_log {
        parent_dir(log)?;
        if log.exists() {
            std::fs::remove_file(log).map_err(|e| Error::io(log, e))?;
        }
    }
    let outcome = train_loop(&samples, ModelParams::init(&mcfg)?, &mcfg, &lcfg, &tcfg)?;
    let out = ctx.path("train", "output")?;
    parent_dir(&out)?;
    outcome.params.save(&out)?;
    mcfg.save(&out.with_extension("model.cfg"))?;
    if let Some(h) = ctx.optional_path("train", "history") {
        write_text(&h, &history_csv(&outcome.history))?;
    }
    Ok(format!(
        "train: {} epochs, best epoch {}{} -> {}",
        outcome.history.len(),
        outcome.best_epoch,
        if outcome.stopped_early { " (early stop)" } else { "" },
        out.display()
    ))
}

pub fn run_forecast(ctx: &Context) -> Result<String> {
    let transform = FeatureTransform::load(&ctx.path("features", "output")?)?;
    let params_path = ctx.path("train", "output")?;
    let mcfg = ModelConfig::load(&params_path.with_extension("model.cfg"))?;
    let params = ModelParams::load(&params_path, &mcfg)?;
    let lcfg = LossConfig::from_config(&ctx.config, "loss")?;
    let wcfg = WindowConfig::from_config(&ctx.config, "window")?;
    let labels = LabelConfig::from_config(&ctx.config, "label")?;
    let fcfg = ForecastConfig::from_config(&ctx.config, "forecast")?;
    let test = TimeTable::load_csv(&ctx.path("prepare", "test_table")?)?;
    let report = run_walkforward(
        &params,
        &test,
        &WalkForward {
            transform: &transform,
            model: &mcfg,
            loss: &lcfg,
            windows: &wcfg,
            labels: &labels,
            forecast: &fcfg,
        },
    )?;
    let out = ctx.path("forecast", "output")?;
    parent_dir(&out)?;
    report.save(&out)?;
    Ok(format!(
        "forecast: {} groups, {} rows, {} horizon gaps -> {}",
        report.groups().len(),
        report.rows.len(),
        report.gaps.len(),
        out.display()
    ))
}

pub fn run_report(ctx: &Context) -> Result<String> {
    let input = ctx.optional_path("report", "input").map_or_else(|| ctx.path("forecast", "output"), Ok)?;
    let report = ForecastReport::load(&input)?;
    let out_dir = ctx.path("report", "out_dir")?;
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    let summaries = error_summary(&report);
    write_text(&out_dir.join("summary.csv"), &summaries_csv(&summaries))?;
    write_text(&out_dir.join("histogram.csv"), &histogram_csv(&summaries))?;
    let plots = emit_plots(&summaries, &report, &out_dir.join("plots"))?;
    let mut msg = format!("report: {} horizons, {} plots -> {}", summaries.len(), plots.len(), out_dir.display());
    if let Some(path) = ctx.optional_path("report", "baseline") {
        let baseline = match ctx.config.get("report", "baseline_format").unwrap_or("csv") {
            "csv" => BaselineForecast::load(&path)?,
            "noaa" => parse_noaa_3day(&std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?)?,
            other => return Err(Error::Config(format!("report.baseline_format: unknown format `{other}`"))),
        };
        let cmp = compare_baseline(&report, &baseline)?;
        write_text(&out_dir.join("comparison.csv"), &cmp.summary_csv())?;
        write_text(&out_dir.join("comparison_steps.csv"), &cmp.deltas_csv())?;
        msg.push_str(&format!(", {} baseline-matched steps", cmp.deltas.len()));
    }
    Ok(msg)
}

pub fn run_fetch(ctx: &Context) -> Result<String> {
    let manifest_path = ctx.path("fetch", "manifest")?;
    let text = std::fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let entries = parse_manifest(&text)?;
    let d = FetchOptions::default();
    let opts = FetchOptions {
        attempts: ctx.config.value("fetch", "attempts", d.attempts)?,
        timeout: std::time::Duration::from_secs(ctx.config.value("fetch", "timeout_secs", d.timeout.as_secs())?),
        backoff: std::time::Duration::from_millis(ctx.config.value("fetch", "backoff_ms", d.backoff.as_millis() as u64)?),
        jobs: ctx.config.value("fetch", "jobs", d.jobs)?,
    };
    let out_dir = ctx.path("fetch", "out_dir")?;
    let outcome = fetch(&entries, &out_dir, &opts)?;
    for (path, msg) in outcome.failures() {
        eprintln!("fetch failed: {}: {msg}", path.display());
    }
    if !outcome.is_complete() {
        return Err(Error::Fetch {
            url: manifest_path.display().to_string(),
            message: format!("{} of {} files missing", outcome.failures().len(), entries.len()),
        });
    }
    Ok(format!(
        "fetch: {} downloaded, {} skipped -> {}",
        outcome.count(|s| *s == FetchStatus::Downloaded),
        outcome.count(|s| *s == FetchStatus::Skipped),
        out_dir.display()
    ))
}

pub fn dispatch(command: Command, ctx: &Context) -> Result<String> {
    match command {
        Command::Ingest => run_ingest(ctx),
        Command::Prepare => run_prepare(ctx),
        Command::FitTransforms => run_fit_transforms(ctx),
        Command::Train => run_train(ctx),
        Command::Forecast => run_forecast(ctx),
        Command::Report => run_report(ctx),
        Command::Fetch => run_fetch(ctx),
    }
}

/// Parses `argv` and runs one stage. Returns the process exit code:
/// 0 success, 1 validation or runtime failure, 2 usage error.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    let result = Context::load(&cli.config, &cli.overrides, cli.seed).and_then(|ctx| dispatch(cli.command, &ctx));
    match result {
        Ok(msg) => {
            println!("{msg}");
            0
        }
        Err(e) => {
            eprintln!("error[{}]: {e}", e.kind());
            1
        }
    }
}
