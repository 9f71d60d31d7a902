//! Walk-forward evaluation: fine-tune on each day's newest window, forecast
//! one to three days ahead, then summarize the errors.
//!
//! ```bash
//! cargo run --release --example walk_forward
//! ```

use kpcast::dataset::{make_windows, LabelConfig, WindowConfig, WindowSample};
use kpcast::eval::error_summary;
use kpcast::features::FeatureTransform;
use kpcast::forecast::{run_walkforward, ForecastConfig, WalkForward};
use kpcast::loss::LossConfig;
use kpcast::model::{ModelConfig, ModelParams};
use kpcast::synthetic::{synthetic_table, SyntheticSpec};
use kpcast::table::format_ts;
use kpcast::train::{train_loop, AdamConfig, TrainConfig};

fn main() -> kpcast::Result<()> {
    let table = synthetic_table(&SyntheticSpec { rows: 800, seed: 3, ..SyntheticSpec::default() })?;
    let cut = table.timestamps()[560];
    let (train, test) = (table.filter_rows(|t| t < cut), table.filter_rows(|t| t >= cut));
    let transform = FeatureTransform::fit(&train, 4)?;
    let windows = WindowConfig { input_steps: 4, output_steps: 24, ..WindowConfig::default() };
    let labels = LabelConfig::default();
    let samples: Vec<WindowSample> = make_windows(&train, &windows, &labels)?
        .iter()
        .map(|s| transform.apply_sample(s))
        .collect::<kpcast::Result<_>>()?;

    let model = ModelConfig::micro(transform.image_dim(), transform.satellite_dim(), 24);
    let loss = LossConfig::default();
    let tcfg = TrainConfig {
        adam: AdamConfig { lr: 3e-3, ..AdamConfig::default() },
        batch_size: 32,
        max_epochs: 10,
        val_fraction: 0.25,
        ..TrainConfig::default()
    };
    let params = train_loop(&samples, ModelParams::init(&model)?, &model, &loss, &tcfg)?.params;

    let forecast = ForecastConfig::default();
    let ctx = WalkForward { transform: &transform, model: &model, loss: &loss, windows: &windows, labels: &labels, forecast: &forecast };
    let report = run_walkforward(&params, &test, &ctx)?;
    println!("{} groups, {} rows, gaps at {:?}", report.groups().len(), report.rows.len(), report.gaps.iter().map(|g| (format_ts(g.0), g.1)).collect::<Vec<_>>());
    for s in error_summary(&report) {
        println!("horizon {}: n {:>4}  MAE {:.3}  RMSE {:.3}  bias {:+.3}", s.horizon, s.count, s.mae, s.rmse, s.bias);
    }
    Ok(())
}
