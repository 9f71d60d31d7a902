//! Compares reverse-mode gradients of the micro model's total loss with
//! central finite differences.
//!
//! ```bash
//! cargo run --release --example gradient_check
//! ```

use kpcast::dataset::{make_windows, LabelConfig, WindowConfig};
use kpcast::features::FeatureTransform;
use kpcast::loss::{record_loss, LossConfig};
use kpcast::model::{build_graph, ModelConfig, ModelParams};
use kpcast::nn::{check_gradients, Mode};
use kpcast::synthetic::{synthetic_table, SyntheticSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> kpcast::Result<()> {
    let table = synthetic_table(&SyntheticSpec { rows: 60, regime_min: 8, regime_max: 20, seed: 11, ..SyntheticSpec::default() })?;
    let transform = FeatureTransform::fit(&table, 4)?;
    let w = WindowConfig { input_steps: 4, output_steps: 24, ..WindowConfig::default() };
    let sample = transform.apply_sample(&make_windows(&table, &w, &LabelConfig::default())?[5])?;
    let cfg = ModelConfig::micro(transform.image_dim(), transform.satellite_dim(), 24);

    let mut params = ModelParams::init(&cfg)?;
    for t in params.tensors.values_mut() {
        t.scale_in_place(0.5);
    }
    let lcfg = LossConfig::default();
    let report = check_gradients(&params.tensors, 1e-5, |tape, vars| {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g = build_graph(tape, vars, &sample, &cfg, Mode::Train, &mut rng)?;
        Ok(record_loss(tape, &g, &sample, vars, &params, &lcfg)?.total)
    })?;
    for (name, err) in &report.per_param {
        println!("{name:<24} {err:.2e}");
    }
    println!("{} tensors, {} parameters, worst {} = {:.2e}", report.per_param.len(), params.count(), report.worst, report.max);
    Ok(())
}
