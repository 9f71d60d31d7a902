//! Parses the bundled raw fixture into one hourly table.
//!
//! ```bash
//! cargo run --example ingest_fixture
//! ```

use std::path::Path;

use kpcast::ingest::{ingest_files, ColumnSpec, IngestInputs, SentinelConfig};

fn main() -> kpcast::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let table = ingest_files(&IngestInputs {
        satellite: &dir.join("satellite.txt"),
        kp: &dir.join("kp.txt"),
        images: &dir.join("images.csv"),
        columns: &ColumnSpec::omni(),
        sentinels: &SentinelConfig::omni_default(),
        image_dim: Some(768),
    })?;
    let ts = table.timestamps();
    println!("{} hourly rows from {} to {}", table.n_rows(), kpcast::table::format_ts(ts[0]), kpcast::table::format_ts(ts[ts.len() - 1]));
    let names = table.column_names();
    let images = names.iter().filter(|n| n.starts_with("img_")).count();
    println!("{} columns: {images} image features, {} others", names.len(), names.len() - images);
    for n in names.iter().filter(|n| !n.starts_with("img_")) {
        println!("  {n}");
    }
    Ok(())
}
