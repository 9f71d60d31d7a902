//! Satellite, Kp and image-feature ingestion into one hourly [`TimeTable`].
//!
//! Stage order: sanitize, hourly forward fill, then linear interpolation of
//! whatever gaps remain. Image features are forward filled onto the same
//! hourly grid before the timestamp join.

mod images;
mod kp;
mod resample;
mod satellite;
mod sentinel;

use std::path::Path;

pub use images::{
    image_column_name, load_feature_file, parse_feature_binary, parse_feature_text,
    write_feature_binary, write_feature_text, FeatureRecord, IMAGE_FEATURE_DIM, IMAGE_MAGIC,
    IMAGE_PREFIX,
};
pub use kp::{snap_to_thirds, KpSeries};
pub use resample::{interpolate_linear, merge_by_timestamp, resample_hourly_ffill, KP_COLUMN};
pub use satellite::{
    compose_timestamp, parse_satellite_table, ColumnSpec, SpecColumn, OMNI_FEATURES,
    TEMPORAL_COLUMNS,
};
pub use sentinel::{sanitize, SentinelConfig};

use crate::error::{Error, Result};
use crate::table::TimeTable;

/// Sanitize, resample and fill a parsed satellite table.
pub fn condition_satellite(raw: &TimeTable, sentinels: &SentinelConfig) -> Result<TimeTable> {
    let clean = sanitize(raw, sentinels)?;
    let hourly = resample_hourly_ffill(&clean)?;
    interpolate_linear(&hourly)
}

pub struct IngestInputs<'a> {
    pub satellite: &'a Path,
    pub kp: &'a Path,
    pub images: &'a Path,
    pub columns: &'a ColumnSpec,
    pub sentinels: &'a SentinelConfig,
    pub image_dim: Option<usize>,
}

/// Runs the whole ingest stage from files to the merged hourly table.
pub fn ingest_files(inputs: &IngestInputs<'_>) -> Result<TimeTable> {
    let open = |p: &Path| std::fs::File::open(p).map_err(|e| Error::io(p, e));
    let raw = parse_satellite_table(open(inputs.satellite)?, inputs.columns)?;
    let sat = condition_satellite(&raw, inputs.sentinels)?;
    let kp = KpSeries::parse(open(inputs.kp)?)?;
    let img = load_feature_file(inputs.images, inputs.image_dim)?;
    let img = resample_hourly_ffill(&img)?;
    log::info!(
        "ingest: {} satellite hours, {} Kp values, {} image hours",
        sat.n_rows(),
        kp.len(),
        img.n_rows()
    );
    merge_by_timestamp(&sat, &kp, &img)
}
