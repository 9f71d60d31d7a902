//! Distances between ordinal distributions and the combined class loss.
//!
//! ```bash
//! cargo run --example wasserstein_loss
//! ```

use kpcast::loss::{combined_class_loss, cross_entropy, wasserstein_1d, LossConfig, WassersteinVariant};
use kpcast::model::DistVector;

fn main() -> kpcast::Result<()> {
    let k = 28;
    let target = 15;
    let truth = DistVector::delta(k, target);
    let near = DistVector::delta(k, target + 1);
    let far = DistVector::delta(k, 3);
    for (name, d) in [("one bin off", &near), ("twelve bins off", &far)] {
        println!(
            "{name:>16}: W sum {:.3}, W mean {:.4}",
            wasserstein_1d(d, &truth, WassersteinVariant::Sum)?,
            wasserstein_1d(d, &truth, WassersteinVariant::Mean)?
        );
    }

    let spread = |center: usize| {
        let mut p = vec![0.01 / (k - 3) as f64; k];
        for (i, w) in [(center - 1, 0.2), (center, 0.59), (center + 1, 0.2)] {
            p[i] = w;
        }
        DistVector::new(p)
    };
    let cfg = LossConfig::default();
    for center in [15, 10] {
        let d = spread(center)?;
        println!(
            "prediction centered on bin {center}: CE {:.3}, W {:.4}, combined {:.3}",
            cross_entropy(&d, target)?,
            wasserstein_1d(&d, &truth, cfg.variant)?,
            combined_class_loss(&d, target, &cfg)?
        );
    }
    Ok(())
}
