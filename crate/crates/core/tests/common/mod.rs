#![allow(dead_code)]

use std::path::{Path, PathBuf};

use kpcast::dataset::{make_windows, LabelConfig, WindowConfig, WindowSample};
use kpcast::features::FeatureTransform;
use kpcast::model::ModelConfig;
use kpcast::synthetic::{synthetic_table, SyntheticSpec};
use kpcast::table::TimeTable;

/// 1-D earth mover's distance from quantile functions: integrates
/// `|F^-1(u) - G^-1(u)|` over `u` in [0, 1] by merging breakpoints.
pub fn emd_quantile(p: &[f64], q: &[f64]) -> f64 {
    let cum = |d: &[f64]| {
        let mut acc = 0.0;
        d.iter()
            .map(|v| {
                acc += v;
                acc
            })
            .collect::<Vec<f64>>()
    };
    let (cp, cq) = (cum(p), cum(q));
    let quantile = |c: &[f64], u: f64| c.iter().position(|&x| x >= u - 1e-15).unwrap_or(c.len() - 1) as f64;
    let mut breaks: Vec<f64> = cp.iter().chain(&cq).map(|x| x.min(1.0)).collect();
    breaks.push(0.0);
    breaks.push(1.0);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let mut total = 0.0;
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b - a <= 0.0 {
            continue;
        }
        let mid = 0.5 * (a + b);
        total += (b - a) * (quantile(&cp, mid) - quantile(&cq, mid)).abs();
    }
    total
}

/// Counts windows by walking start offsets.
pub fn count_windows_by_enumeration(rows: usize, input: usize, output: usize, stride: usize) -> usize {
    let mut n = 0;
    let mut t0 = 0;
    while t0 + input + output <= rows {
        n += 1;
        t0 += stride;
    }
    n
}

/// Expected labels for Kp = k/3, from integer arithmetic on k.
pub fn brute_labels(k: usize) -> (usize, usize, usize, bool) {
    let c10 = (k / 3).min(9);
    let c3 = if k < 12 {
        0
    } else if k < 15 {
        1
    } else {
        2
    };
    (k, c10, c3, k >= 21)
}

pub struct SyntheticTask {
    pub train: Vec<WindowSample>,
    pub test: Vec<WindowSample>,
    pub transform: FeatureTransform,
    pub model: ModelConfig,
    pub train_table: TimeTable,
    pub test_table: TimeTable,
}

pub fn micro_window() -> WindowConfig {
    WindowConfig {
        input_steps: 4,
        output_steps: 24,
        ..WindowConfig::default()
    }
}

/// Threshold task split chronologically: the first `train_rows` rows train,
/// the rest are held out. The micro model config matches the transform.
pub fn synthetic_task(spec: &SyntheticSpec, train_rows: usize, pca_k: usize) -> SyntheticTask {
    let table = synthetic_table(spec).unwrap();
    let ts = table.timestamps().to_vec();
    let cut = ts[train_rows];
    let train_table = table.filter_rows(|t| t < cut);
    let test_table = table.filter_rows(|t| t >= cut);
    let transform = FeatureTransform::fit(&train_table, pca_k).unwrap();
    let w = micro_window();
    let l = LabelConfig::default();
    let apply = |t: &TimeTable| -> Vec<WindowSample> {
        make_windows(t, &w, &l)
            .unwrap()
            .iter()
            .map(|s| transform.apply_sample(s).unwrap())
            .collect()
    };
    let train = apply(&train_table);
    let test = apply(&test_table);
    let model = ModelConfig::micro(transform.image_dim(), transform.satellite_dim(), w.output_steps);
    SyntheticTask {
        train,
        test,
        transform,
        model,
        train_table,
        test_table,
    }
}

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

/// Copies the bundled fixture (inputs and config) into `dest`.
pub fn copy_fixture(dest: &Path) -> PathBuf {
    for name in ["satellite.txt", "kp.txt", "images.csv", "pipeline.cfg"] {
        std::fs::copy(fixture_dir().join(name), dest.join(name)).unwrap();
    }
    dest.join("pipeline.cfg")
}

pub fn run_cli(args: &[&str]) -> i32 {
    let mut argv = vec!["kpcast"];
    argv.extend_from_slice(args);
    kpcast::cli::run(argv)
}

/// Runs every stage after `fetch` on a config; returns the first nonzero
/// exit code, or 0.
pub fn run_pipeline(config: &Path, extra: &[&str]) -> i32 {
    let cfg = config.to_str().unwrap();
    for stage in ["ingest", "prepare", "fit-transforms", "train", "forecast", "report"] {
        let mut args = vec![stage, "--config", cfg];
        args.extend_from_slice(extra);
        let code = run_cli(&args);
        if code != 0 {
            return code;
        }
    }
    0
}

pub fn files_under(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p);
            }
        }
    }
    out.sort();
    out
}

pub fn pass_line(name: &str, ok: bool, detail: &str) {
    println!("[{}] {name}: {detail}", if ok { "PASS" } else { "FAIL" });
}

/// Separable task for the learning checks: Kp is a step function of the
/// driver column, regimes persist for 100 to 200 steps.
pub fn separable_task(seed: u64) -> SyntheticTask {
    let spec = SyntheticSpec {
        rows: 900,
        seed,
        ..SyntheticSpec::default()
    };
    let mut task = synthetic_task(&spec, 700, 4);
    task.model.seed = seed;
    task
}

pub fn separable_train_config(seed: u64) -> kpcast::train::TrainConfig {
    kpcast::train::TrainConfig {
        adam: kpcast::train::AdamConfig {
            lr: 3e-3,
            ..Default::default()
        },
        batch_size: 32,
        max_epochs: 20,
        val_fraction: 0.25,
        seed,
        ..Default::default()
    }
}

/// Walk-forward setup: 20 training days, then `test_rows` 3-hour steps.
pub struct WalkTask {
    pub task: SyntheticTask,
    pub params: kpcast::model::ModelParams,
    pub windows: WindowConfig,
    pub labels: LabelConfig,
    pub loss: kpcast::loss::LossConfig,
    pub forecast: kpcast::forecast::ForecastConfig,
}

impl WalkTask {
    pub fn new(test_rows: usize, seed: u64) -> Self {
        let spec = SyntheticSpec {
            rows: 160 + test_rows,
            regime_min: 8,
            regime_max: 20,
            seed,
            ..SyntheticSpec::default()
        };
        let mut task = synthetic_task(&spec, 160, 4);
        task.model.seed = seed;
        let params = kpcast::model::ModelParams::init(&task.model).unwrap();
        WalkTask {
            task,
            params,
            windows: micro_window(),
            labels: LabelConfig::default(),
            loss: kpcast::loss::LossConfig::default(),
            forecast: kpcast::forecast::ForecastConfig {
                seed,
                ..Default::default()
            },
        }
    }

    pub fn ctx(&self) -> kpcast::forecast::WalkForward<'_> {
        kpcast::forecast::WalkForward {
            transform: &self.task.transform,
            model: &self.task.model,
            loss: &self.loss,
            windows: &self.windows,
            labels: &self.labels,
            forecast: &self.forecast,
        }
    }

    pub fn run(&self, test: &TimeTable) -> kpcast::forecast::ForecastReport {
        kpcast::forecast::run_walkforward(&self.params, test, &self.ctx()).unwrap()
    }

    /// Fine-tune boundaries in day order.
    pub fn boundaries(&self) -> Vec<i64> {
        kpcast::dataset::make_daily_windows(&self.task.test_table, &self.windows, &self.labels)
            .unwrap()
            .iter()
            .map(WindowSample::output_end)
            .collect()
    }
}

/// Replaces every cell at or after `boundary` with noise; Kp stays on the
/// thirds grid.
pub fn perturb_after(table: &TimeTable, boundary: i64, seed: u64) -> TimeTable {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = table.clone();
    let kp = table.column_index(kpcast::ingest::KP_COLUMN).unwrap();
    for r in 0..out.n_rows() {
        if out.timestamps()[r] < boundary {
            continue;
        }
        for c in 0..out.n_cols() {
            let v = if c == kp {
                rng.gen_range(0..28) as f64 / 3.0
            } else {
                rng.gen_range(-50.0..50.0)
            };
            out.set(r, c, v);
        }
    }
    out
}

/// Every file under `dir/work`, as (relative path, bytes).
pub fn work_outputs(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let work = dir.join("work");
    files_under(&work)
        .into_iter()
        .map(|p| (p.strip_prefix(&work).unwrap().to_path_buf(), std::fs::read(&p).unwrap()))
        .collect()
}
