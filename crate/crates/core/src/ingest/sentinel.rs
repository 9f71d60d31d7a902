use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::TimeTable;

/// Per-column fill values that mark a missing measurement.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SentinelConfig {
    pub columns: BTreeMap<String, Vec<f64>>,
}

impl SentinelConfig {
    pub fn empty() -> Self {
        SentinelConfig::default()
    }

    /// Fill values from the OMNI2 hourly data dictionary.
    pub fn omni_default() -> Self {
        let table: [(&str, &[f64]); 26] = [
            ("Scalar B, nT", &[999.9]),
            ("Vector B Magnitude, nT", &[999.9]),
            ("Lat. Angle of B (GSE)", &[999.9]),
            ("Long. Angle of B (GSE)", &[999.9]),
            ("BX, nT (GSE, GSM)", &[999.9]),
            ("BY, nT (GSE)", &[999.9]),
            ("BZ, nT (GSE)", &[999.9]),
            ("BY, nT (GSM)", &[999.9]),
            ("BZ, nT (GSM)", &[999.9]),
            ("RMS_magnitude, nT", &[999.9]),
            ("RMS_field_vector, nT", &[999.9]),
            ("RMS_BX_GSE, nT", &[999.9]),
            ("RMS_BY_GSE, nT", &[999.9]),
            ("RMS_BZ_GSE, nT", &[999.9]),
            ("SW Plasma Temperature, K", &[9_999_999.0]),
            ("SW Proton Density, N/cm^3", &[999.9]),
            ("SW Plasma Speed, km/s", &[9999.0]),
            ("SW Plasma flow long. angle", &[999.9]),
            ("SW Plasma flow lat. angle", &[999.9]),
            ("Alpha/Prot. ratio", &[9.999]),
            ("Flow pressure", &[99.99]),
            ("E elecrtic field", &[999.99]),
            ("Plasma Beta", &[999.99]),
            ("Alfen mach number", &[999.9]),
            ("Magnetosonic Much num.", &[99.9]),
            ("Quasy-Invariant", &[9.9999]),
        ];
        SentinelConfig {
            columns: table
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_vec()))
                .collect(),
        }
    }

    /// Loads a JSON object mapping column names to lists of fill values.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("sentinel map serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

fn is_sentinel(v: f64, s: f64) -> bool {
    v == s || (v - s).abs() <= 1e-9 * v.abs().max(s.abs())
}

/// Marks every cell matching one of its column's sentinels as missing.
pub fn sanitize(table: &TimeTable, cfg: &SentinelConfig) -> Result<TimeTable> {
    let mut targets = Vec::with_capacity(cfg.columns.len());
    for (name, sentinels) in &cfg.columns {
        let c = table.column_index(name).ok_or_else(|| {
            Error::Config(format!("sentinel configured for unknown column `{name}`"))
        })?;
        targets.push((c, sentinels));
    }
    let mut out = table.clone();
    for (c, sentinels) in targets {
        for r in 0..out.n_rows() {
            if out.is_missing(r, c) {
                continue;
            }
            let v = out.get(r, c);
            if sentinels.iter().any(|&s| is_sentinel(v, s)) {
                out.set_missing(r, c);
            }
        }
    }
    Ok(out)
}
