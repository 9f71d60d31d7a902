//! Writes a raw synthetic input set (hourly OMNI text, Kp, image features).
//!
//! ```bash
//! cargo run --example generate_fixture -- crates/core/fixtures 200 768
//! ```

use std::path::PathBuf;

use kpcast::synthetic::{write_raw_fixture, SyntheticSpec};

fn main() -> kpcast::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "fixture-out".into()));
    let rows = args.next().and_then(|s| s.parse().ok()).unwrap_or(200);
    let image_dim = args.next().and_then(|s| s.parse().ok()).unwrap_or(768);
    let spec = SyntheticSpec {
        rows,
        image_dim,
        regime_min: 6,
        regime_max: 16,
        seed: 2024,
        ..SyntheticSpec::default()
    };
    let files = write_raw_fixture(&dir, &spec)?;
    println!("satellite: {}", files.satellite.display());
    println!("kp:        {}", files.kp.display());
    println!("images:    {} / {}", files.images_text.display(), files.images_binary.display());
    Ok(())
}
