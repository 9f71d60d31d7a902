//! Runs every pipeline stage on a copy of the bundled fixture through the
//! command-line entry point, with a shortened training run.
//!
//! ```bash
//! cargo run --release --example pipeline -- /tmp/kpcast-demo
//! ```

use std::path::{Path, PathBuf};

fn main() {
    let dest = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "kpcast-demo".into()));
    std::fs::create_dir_all(&dest).expect("create output directory");
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    for name in ["satellite.txt", "kp.txt", "images.csv", "pipeline.cfg", "noaa_3day.txt"] {
        std::fs::copy(fixtures.join(name), dest.join(name)).expect("copy fixture");
    }
    let cfg = dest.join("pipeline.cfg");
    let cfg = cfg.to_str().expect("utf-8 path");
    for stage in ["ingest", "prepare", "fit-transforms", "train", "forecast"] {
        let code = kpcast::cli::run(["kpcast", stage, "--config", cfg, "--set", "train.max_epochs=4", "--seed", "1"]);
        if code != 0 {
            std::process::exit(code);
        }
    }
    let code = kpcast::cli::run([
        "kpcast", "report", "--config", cfg,
        "--set", "report.baseline=noaa_3day.txt",
        "--set", "report.baseline_format=noaa",
    ]);
    std::process::exit(code);
}
