//! Builds training windows from a synthetic 3-hour table and balances them
//! by the largest Kp class seen in each input window.
//!
//! ```bash
//! cargo run --example windows_and_balance
//! ```

use kpcast::dataset::{class_histogram, expand_balance, make_daily_windows, make_windows, BalanceKey, LabelConfig, WindowConfig};
use kpcast::synthetic::{synthetic_table, SyntheticSpec};
use kpcast::table::format_ts;

fn main() -> kpcast::Result<()> {
    let table = synthetic_table(&SyntheticSpec { rows: 400, regime_min: 10, regime_max: 30, ..SyntheticSpec::default() })?;
    let w = WindowConfig { input_steps: 40, output_steps: 24, ..WindowConfig::default() };
    let labels = LabelConfig::default();

    let windows = make_windows(&table, &w, &labels)?;
    let daily = make_daily_windows(&table, &w, &labels)?;
    println!("{} rows -> {} training windows, {} daily windows", table.n_rows(), windows.len(), daily.len());
    let s = &daily[0];
    println!(
        "first daily window: input {} .. {}, output ends {}",
        format_ts(s.t0()),
        format_ts(s.input_end()),
        format_ts(s.output_end())
    );
    println!("labels28 of its first output steps: {:?}", &s.labels28[..8]);

    let key = BalanceKey::MaxInput;
    println!("classes before: {:?}", class_histogram(&windows, key));
    let balanced = expand_balance(&windows, key, 0)?;
    println!("classes after:  {:?} ({} windows)", class_histogram(&balanced, key), balanced.len());
    Ok(())
}
