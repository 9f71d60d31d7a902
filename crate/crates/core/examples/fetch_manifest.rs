//! Downloads the files listed in a manifest, verifying pinned checksums.
//! Without arguments it only prints what the bundled example manifest
//! would fetch.
//!
//! ```bash
//! cargo run --example fetch_manifest
//! cargo run --example fetch_manifest -- urls.txt raw/
//! ```

use std::path::PathBuf;

use kpcast::fetch::{fetch, parse_manifest, FetchOptions};

const EXAMPLE: &str = "\
# url [sha256|-] [file name]
https://omniweb.gsfc.nasa.gov/staging/omni2_2024.dat - omni2_2024.dat
https://kp.gfz-potsdam.de/app/files/Kp_ap_since_1932.txt
https://services.swpc.noaa.gov/text/3-day-forecast.txt - noaa_3day.txt
";

fn main() -> kpcast::Result<()> {
    let mut args = std::env::args().skip(1);
    let Some(manifest) = args.next().map(PathBuf::from) else {
        for e in parse_manifest(EXAMPLE)? {
            println!("{} -> {} (checksum {})", e.url, e.file_name, e.sha256.as_deref().unwrap_or("recorded on first download"));
        }
        return Ok(());
    };
    let out = PathBuf::from(args.next().unwrap_or_else(|| "raw".into()));
    let text = std::fs::read_to_string(&manifest).map_err(|e| kpcast::Error::io(&manifest, e))?;
    let outcome = fetch(&parse_manifest(&text)?, &out, &FetchOptions::default())?;
    for (path, status) in &outcome.files {
        println!("{:?}: {}", status, path.display());
    }
    Ok(())
}
