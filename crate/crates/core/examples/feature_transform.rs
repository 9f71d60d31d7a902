//! Fits the image PCA and satellite standardization on a training table and
//! applies them to later data.
//!
//! ```bash
//! cargo run --example feature_transform
//! ```

use kpcast::dataset::{make_windows, LabelConfig, WindowConfig};
use kpcast::features::FeatureTransform;
use kpcast::synthetic::{synthetic_table, SyntheticSpec};

fn main() -> kpcast::Result<()> {
    let table = synthetic_table(&SyntheticSpec { rows: 300, image_dim: 32, ..SyntheticSpec::default() })?;
    let cut = table.timestamps()[200];
    let train = table.filter_rows(|t| t < cut);
    let test = table.filter_rows(|t| t >= cut);

    let transform = FeatureTransform::fit(&train, 8)?;
    println!("image features: 32 -> {} components", transform.image_dim());
    println!("satellite columns: {}", transform.satellite_dim());

    let w = WindowConfig { input_steps: 8, output_steps: 24, ..WindowConfig::default() };
    let raw = &make_windows(&test, &w, &LabelConfig::default())?[0];
    let s = transform.apply_sample(raw)?;
    println!("sample image input {:?} -> {:?}", raw.img_in.shape(), s.img_in.shape());
    println!("normalized Kp input: {:?}", s.kp_in);

    transform.ensure_unseen(&test)?;
    match transform.ensure_unseen(&train) {
        Err(e) => println!("reusing training rows is refused: {e}"),
        Ok(()) => println!("unexpected: training rows accepted"),
    }
    Ok(())
}
