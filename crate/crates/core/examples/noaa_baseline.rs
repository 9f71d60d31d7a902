//! Reads a NOAA 3-day forecast bulletin and scores it against a synthetic
//! report on the same days.
//!
//! ```bash
//! cargo run --example noaa_baseline
//! cargo run --example noaa_baseline -- path/to/3-day-forecast.txt
//! ```

use std::path::PathBuf;

use kpcast::eval::{compare_baseline, parse_noaa_3day};
use kpcast::forecast::{ForecastReport, ForecastRow};
use kpcast::table::{format_ts, THREE_HOURS};

fn main() -> kpcast::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/noaa_3day.txt"));
    let text = std::fs::read_to_string(&path).map_err(|e| kpcast::Error::io(&path, e))?;
    let baseline = parse_noaa_3day(&text)?;
    println!("{} baseline steps from {}", baseline.rows.len(), path.display());

    let day = baseline.rows[0].day;
    let mut rows = Vec::new();
    for b in &baseline.rows {
        let observed = 3.0 + ((b.step - day) / THREE_HOURS % 5) as f64 / 3.0;
        let expected = observed + 0.5;
        rows.push(ForecastRow {
            day: b.day,
            horizon: b.horizon,
            step: b.step,
            kp_expected: expected,
            kp_argmax: expected,
            kp_observed: observed,
            error: expected - observed,
        });
    }
    let cmp = compare_baseline(&ForecastReport { rows, gaps: vec![] }, &baseline)?;
    for (m, b) in cmp.model.iter().zip(&cmp.baseline) {
        println!("issued {} horizon {}: model MAE {:.3}, NOAA MAE {:.3} over {} steps", format_ts(day), m.horizon, m.mae, b.mae, b.count);
    }
    Ok(())
}
