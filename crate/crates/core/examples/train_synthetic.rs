//! Trains the micro model on a task where Kp is a step function of one
//! satellite column, then scores held-out windows.
//!
//! ```bash
//! cargo run --release --example train_synthetic
//! ```

use kpcast::dataset::{make_windows, LabelConfig, WindowConfig, WindowSample};
use kpcast::features::FeatureTransform;
use kpcast::loss::LossConfig;
use kpcast::model::{ModelConfig, ModelParams};
use kpcast::synthetic::{synthetic_table, SyntheticSpec};
use kpcast::train::{evaluate, train_loop, AdamConfig, TrainConfig};

fn main() -> kpcast::Result<()> {
    let table = synthetic_table(&SyntheticSpec { rows: 900, ..SyntheticSpec::default() })?;
    let cut = table.timestamps()[700];
    let (train, test) = (table.filter_rows(|t| t < cut), table.filter_rows(|t| t >= cut));
    let transform = FeatureTransform::fit(&train, 4)?;
    let w = WindowConfig { input_steps: 4, output_steps: 24, ..WindowConfig::default() };
    let windows = |t| -> kpcast::Result<Vec<WindowSample>> {
        make_windows(t, &w, &LabelConfig::default())?.iter().map(|s| transform.apply_sample(s)).collect()
    };
    let (train_s, test_s) = (windows(&train)?, windows(&test)?);

    let cfg = ModelConfig::micro(transform.image_dim(), transform.satellite_dim(), 24);
    let lcfg = LossConfig::default();
    let tcfg = TrainConfig {
        adam: AdamConfig { lr: 3e-3, ..AdamConfig::default() },
        batch_size: 32,
        max_epochs: 20,
        val_fraction: 0.25,
        ..TrainConfig::default()
    };
    let out = train_loop(&train_s, ModelParams::init(&cfg)?, &cfg, &lcfg, &tcfg)?;
    for r in &out.history {
        println!(
            "epoch {:>2}  train {:>8.4}  val {:>8.4}  align {:.4}{}",
            r.epoch,
            r.train.total,
            r.val.total,
            r.train.raw.align,
            if r.improved { " *" } else { "" }
        );
    }
    let ev = evaluate(&test_s, &out.params, &cfg, &lcfg)?;
    println!(
        "best epoch {}; held-out accuracy: 28-class {:.3}, 10-class {:.3}, 3-class {:.3}, high {:.3}",
        out.best_epoch, ev.acc28, ev.acc10, ev.acc3, ev.acc_high
    );
    Ok(())
}
