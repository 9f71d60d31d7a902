//! Train-fitted feature transforms.
//!
//! Image features are standardized per row and reduced by PCA, satellite
//! columns are z-scored, and Kp is scaled into `[0, 1]`. All statistics come
//! from the training table; the [`Fingerprint`] of that table travels with
//! the transform so later stages can prove they never fit on test rows.

mod pca;

use std::path::Path;

use sha2::{Digest, Sha256};

pub use pca::{fit_pca, Pca};

use crate::binio::{read_file, ByteReader, ByteWriter};
use crate::dataset::{TableLayout, WindowSample};
use crate::error::{Error, Result};
use crate::table::{format_ts, Column, TimeTable};
use crate::tensor::Tensor;

pub const KP_SCALE: f64 = 9.0;
pub const DEFAULT_PCA_COMPONENTS: usize = 512;
pub const TRANSFORM_MAGIC: &[u8; 8] = b"KPFTRN01";

/// Zero mean, unit population standard deviation; constant rows map to zeros.
pub fn row_standardize(v: &[f64]) -> Result<Vec<f64>> {
    if v.len() < 2 {
        return Err(Error::Dimension(format!(
            "row standardization needs at least 2 values, got {}",
            v.len()
        )));
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std == 0.0 || !std.is_finite() {
        return Ok(vec![0.0; v.len()]);
    }
    Ok(v.iter().map(|x| (x - mean) / std).collect())
}

fn standardize_rows(rows: &Tensor) -> Result<Tensor> {
    let mut out = Vec::with_capacity(rows.len());
    for r in 0..rows.rows() {
        out.extend(row_standardize(rows.row(r))?);
    }
    Tensor::matrix(rows.rows(), rows.cols(), out)
}

pub fn normalize_kp(kp: f64) -> f64 {
    kp / KP_SCALE
}

/// Inverse of [`normalize_kp`]. Results within a few ulps of the thirds grid
/// snap onto it, absorbing the rounding of `kp / 9`.
pub fn denormalize_kp(x: f64) -> f64 {
    let y = x * KP_SCALE;
    let snapped = (y * 3.0).round() / 3.0;
    if (y - snapped).abs() <= 4.0 * f64::EPSILON * y.abs().max(1.0) {
        snapped
    } else {
        y
    }
}

/// Per-column z-score statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnNorm {
    pub names: Vec<String>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    /// Columns with zero training variance; they normalize to 0.
    pub zero_variance: Vec<bool>,
}

impl ColumnNorm {
    pub fn zero_variance_columns(&self) -> Vec<&str> {
        self.names
            .iter()
            .zip(&self.zero_variance)
            .filter(|(_, &z)| z)
            .map(|(n, _)| n.as_str())
            .collect()
    }

    fn z(&self, c: usize, v: f64) -> f64 {
        if self.zero_variance[c] {
            0.0
        } else {
            (v - self.means[c]) / self.stds[c]
        }
    }
}

/// Fits z-score statistics (population std) on the named columns.
pub fn fit_column_norm(train: &TimeTable, names: &[&str]) -> Result<ColumnNorm> {
    if train.is_empty() {
        return Err(Error::EmptyInput("column normalization needs training rows".into()));
    }
    let mut norm = ColumnNorm {
        names: Vec::new(),
        means: Vec::new(),
        stds: Vec::new(),
        zero_variance: Vec::new(),
    };
    let n = train.n_rows() as f64;
    for name in names {
        let c = train
            .column_index(name)
            .ok_or_else(|| Error::Schema(format!("missing column `{name}`")))?;
        let vals = train.column_values(c);
        let mean = vals.iter().sum::<f64>() / n;
        let std = (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
        norm.names.push(name.to_string());
        norm.means.push(mean);
        norm.stds.push(if std > 0.0 { std } else { 1.0 });
        norm.zero_variance.push(std <= 0.0);
    }
    Ok(norm)
}

/// Normalizes the fitted columns of `table` in place of their raw values.
pub fn apply_column_norm(norm: &ColumnNorm, table: &TimeTable) -> Result<TimeTable> {
    let idx = norm
        .names
        .iter()
        .map(|n| {
            table
                .column_index(n)
                .ok_or_else(|| Error::Schema(format!("table lacks fitted column `{n}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = table.clone();
    for r in 0..out.n_rows() {
        for (j, &c) in idx.iter().enumerate() {
            if !out.is_missing(r, c) {
                let v = norm.z(j, out.get(r, c));
                out.set(r, c, v);
            }
        }
    }
    Ok(out)
}

/// Identifies the table a transform was fitted on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fingerprint {
    pub first: i64,
    pub last: i64,
    pub rows: u64,
    pub digest: String,
}

impl Fingerprint {
    pub fn of(table: &TimeTable) -> Self {
        let mut h = Sha256::new();
        for c in table.columns() {
            h.update(c.name.as_bytes());
            h.update([0u8]);
        }
        for t in table.timestamps() {
            h.update(t.to_le_bytes());
        }
        for v in table.values() {
            h.update(v.to_le_bytes());
        }
        let ts = table.timestamps();
        Fingerprint {
            first: ts.first().copied().unwrap_or(0),
            last: ts.last().copied().unwrap_or(0),
            rows: ts.len() as u64,
            digest: hex::encode(h.finalize()),
        }
    }
}

/// Everything needed to turn raw window blocks into model inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTransform {
    pub pca: Pca,
    pub column_norm: ColumnNorm,
    pub kp_scale: f64,
    pub fitted_on: Fingerprint,
}

impl FeatureTransform {
    /// Fits on a training table. `k` is reduced to the feasible rank
    /// (`rows - 1`) when the table is too short, with a warning.
    pub fn fit(train: &TimeTable, k: usize) -> Result<Self> {
        if train.any_missing() {
            return Err(Error::Validation("cannot fit transforms on missing cells".into()));
        }
        let layout = TableLayout::infer(train)?;
        let n = train.n_rows();
        let d = layout.image.len();
        let mut img = Vec::with_capacity(n * d);
        for r in 0..n {
            let row: Vec<f64> = layout.image.iter().map(|&c| train.get(r, c)).collect();
            img.extend(row_standardize(&row)?);
        }
        let img = Tensor::matrix(n, d, img)?;
        let feasible = n.saturating_sub(1).min(d).max(1);
        let k_used = if k > feasible {
            log::warn!("reducing PCA components from {k} to the feasible rank {feasible}");
            feasible
        } else {
            k
        };
        let pca = fit_pca(&img, k_used)?;
        let names = layout.satellite_names(train);
        let column_norm = fit_column_norm(train, &names)?;
        if !column_norm.zero_variance_columns().is_empty() {
            log::warn!(
                "zero-variance satellite columns map to 0: {:?}",
                column_norm.zero_variance_columns()
            );
        }
        Ok(FeatureTransform {
            pca,
            column_norm,
            kp_scale: KP_SCALE,
            fitted_on: Fingerprint::of(train),
        })
    }

    pub fn image_dim(&self) -> usize {
        self.pca.k()
    }

    pub fn satellite_dim(&self) -> usize {
        self.column_norm.names.len()
    }

    /// Transforms the image rows of raw features into PCA space.
    pub fn apply_images(&self, rows: &Tensor) -> Result<Tensor> {
        self.pca.apply(&standardize_rows(rows)?)
    }

    /// Turns a raw window into model inputs; labels are left untouched.
    pub fn apply_sample(&self, raw: &WindowSample) -> Result<WindowSample> {
        if raw.sat_in.cols() != self.satellite_dim() {
            return Err(Error::Dimension(format!(
                "satellite block has width {}, transform expects {}",
                raw.sat_in.cols(),
                self.satellite_dim()
            )));
        }
        let img_in = self.apply_images(&raw.img_in)?;
        let mut sat = raw.sat_in.clone();
        for r in 0..sat.rows() {
            for c in 0..sat.cols() {
                let v = self.column_norm.z(c, sat.get(r, c));
                sat.set(r, c, v);
            }
        }
        Ok(WindowSample {
            img_in,
            sat_in: sat,
            kp_in: raw.kp_in.iter().map(|k| k / self.kp_scale).collect(),
            ..raw.clone()
        })
    }

    /// Fails unless every timestamp of `table` is later than the training
    /// range this transform was fitted on.
    pub fn ensure_unseen(&self, table: &TimeTable) -> Result<()> {
        match table.timestamps().first() {
            Some(&first) if first <= self.fitted_on.last => Err(Error::Leakage(format!(
                "transform was fitted on data through {} but is applied to data from {}",
                format_ts(self.fitted_on.last),
                format_ts(first)
            ))),
            _ => Ok(()),
        }
    }

    /// A table-level view of the transform, used for inspection: image
    /// columns replaced by `pc_*` components, satellite columns z-scored and
    /// Kp scaled.
    pub fn apply_table(&self, table: &TimeTable) -> Result<TimeTable> {
        let layout = TableLayout::infer(table)?;
        let normed = apply_column_norm(&self.column_norm, table)?;
        let n = table.n_rows();
        let img = Tensor::matrix(
            n,
            layout.image.len(),
            (0..n)
                .flat_map(|r| layout.image.iter().map(move |&c| table.get(r, c)))
                .collect(),
        )?;
        let pcs = self.apply_images(&img)?;
        let mut columns: Vec<Column> = Vec::new();
        let keep: Vec<usize> = (0..table.n_cols()).filter(|c| !layout.image.contains(c)).collect();
        columns.extend(keep.iter().map(|&c| table.columns()[c].clone()));
        columns.extend((0..pcs.cols()).map(|j| Column::new(format!("pc_{j:03}"))));
        let mut values = Vec::with_capacity(n * columns.len());
        for r in 0..n {
            for &c in &keep {
                let v = normed.get(r, c);
                values.push(if c == layout.kp { v / self.kp_scale } else { v });
            }
            values.extend_from_slice(pcs.row(r));
        }
        let missing = values.iter().map(|v: &f64| v.is_nan()).collect();
        TimeTable::new(table.timestamps().to_vec(), columns, values, missing)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = ByteWriter::new(TRANSFORM_MAGIC);
        w.u32(self.pca.k() as u32);
        w.u32(self.pca.dims() as u32);
        w.f64s(self.pca.components.data());
        w.f64s(&self.pca.mean);
        w.f64s(&self.pca.explained_variance);
        w.u32(self.column_norm.names.len() as u32);
        for i in 0..self.column_norm.names.len() {
            w.str(&self.column_norm.names[i]);
            w.f64(self.column_norm.means[i]);
            w.f64(self.column_norm.stds[i]);
            w.f64(if self.column_norm.zero_variance[i] { 1.0 } else { 0.0 });
        }
        w.f64(self.kp_scale);
        w.i64(self.fitted_on.first);
        w.i64(self.fitted_on.last);
        w.u64(self.fitted_on.rows);
        w.str(&self.fitted_on.digest);
        w.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = read_file(path)?;
        let mut r = ByteReader::new(&bytes, TRANSFORM_MAGIC, path)?;
        let k = r.u32()? as usize;
        let d = r.u32()? as usize;
        let components = Tensor::matrix(k, d, r.f64s(k * d)?)?;
        let mean = r.f64s(d)?;
        let explained_variance = r.f64s(k)?;
        let n = r.u32()? as usize;
        let mut column_norm = ColumnNorm {
            names: Vec::with_capacity(n),
            means: Vec::with_capacity(n),
            stds: Vec::with_capacity(n),
            zero_variance: Vec::with_capacity(n),
        };
        for _ in 0..n {
            column_norm.names.push(r.str()?);
            column_norm.means.push(r.f64()?);
            column_norm.stds.push(r.f64()?);
            column_norm.zero_variance.push(r.f64()? != 0.0);
        }
        let kp_scale = r.f64()?;
        let fitted_on = Fingerprint {
            first: r.i64()?,
            last: r.i64()?,
            rows: r.u64()?,
            digest: r.str()?,
        };
        r.finish()?;
        Ok(FeatureTransform {
            pca: Pca {
                components,
                mean,
                explained_variance,
            },
            column_norm,
            kp_scale,
            fitted_on,
        })
    }
}
