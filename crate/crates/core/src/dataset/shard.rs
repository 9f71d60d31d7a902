//! Sample shards: one `sample-NNNNNN.kpws` file per window.
//!
//! Record layout, little-endian:
//!
//! ```text
//! magic "KPWSMP01"
//! u32 input_steps | u32 output_steps | u32 img_dim | u32 sat_dim
//! i64 x (input_steps + output_steps)        step start times, unix seconds
//! f64 x input_steps*img_dim                 image block, row-major
//! f64 x input_steps*sat_dim                 satellite block, row-major
//! f64 x input_steps                         Kp input block
//! f64 x output_steps  (x4)                  labels28, labels10, labels3, label_high
//! f64 x output_steps                        observed Kp for the output steps
//! ```

use std::path::{Path, PathBuf};

use super::WindowSample;
use crate::binio::{read_file, ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const SHARD_MAGIC: &[u8; 8] = b"KPWSMP01";
const EXTENSION: &str = "kpws";

pub fn encode_sample(s: &WindowSample) -> Vec<u8> {
    let mut w = ByteWriter::new(SHARD_MAGIC);
    let (n_in, n_out) = (s.input_steps(), s.output_steps());
    w.u32(n_in as u32);
    w.u32(n_out as u32);
    w.u32(s.img_in.cols() as u32);
    w.u32(s.sat_in.cols() as u32);
    for &t in &s.times {
        w.i64(t);
    }
    w.f64s(s.img_in.data());
    w.f64s(s.sat_in.data());
    w.f64s(&s.kp_in);
    for labels in [&s.labels28, &s.labels10, &s.labels3] {
        for &l in labels {
            w.f64(l as f64);
        }
    }
    for &h in &s.label_high {
        w.f64(h as f64);
    }
    w.f64s(&s.kp_out);
    w.buf
}

pub fn decode_sample(bytes: &[u8], path: &Path) -> Result<WindowSample> {
    let mut r = ByteReader::new(bytes, SHARD_MAGIC, path)?;
    let n_in = r.u32()? as usize;
    let n_out = r.u32()? as usize;
    let img_dim = r.u32()? as usize;
    let sat_dim = r.u32()? as usize;
    if n_in == 0 {
        return Err(r.error("zero input steps"));
    }
    let times = (0..n_in + n_out).map(|_| r.i64()).collect::<Result<Vec<_>>>()?;
    let img_in = Tensor::matrix(n_in, img_dim, r.f64s(n_in * img_dim)?)?;
    let sat_in = Tensor::matrix(n_in, sat_dim, r.f64s(n_in * sat_dim)?)?;
    let kp_in = r.f64s(n_in)?;
    let mut class_block = |max: f64| -> Result<Vec<usize>> {
        r.f64s(n_out)?
            .into_iter()
            .map(|v| {
                if v.fract() == 0.0 && (0.0..=max).contains(&v) {
                    Ok(v as usize)
                } else {
                    Err(Error::format(path, format!("label {v} out of range")))
                }
            })
            .collect()
    };
    let labels28 = class_block(27.0)?;
    let labels10 = class_block(9.0)?;
    let labels3 = class_block(2.0)?;
    let label_high = class_block(1.0)?.into_iter().map(|v| v as u8).collect();
    let kp_out = r.f64s(n_out)?;
    r.finish()?;
    Ok(WindowSample {
        times,
        img_in,
        sat_in,
        kp_in,
        labels28,
        labels10,
        labels3,
        label_high,
        kp_out,
    })
}

/// Writes each sample to its own file under `dir` (created if needed).
pub fn write_shards(dir: &Path, samples: &[WindowSample]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let path = dir.join(format!("sample-{i:06}.{EXTENSION}"));
        std::fs::write(&path, encode_sample(s)).map_err(|e| Error::io(&path, e))?;
        paths.push(path);
    }
    Ok(paths)
}

/// Reads every shard in `dir` in file-name order.
pub fn read_shards(dir: &Path) -> Result<Vec<WindowSample>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == EXTENSION))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| decode_sample(&read_file(p)?, p))
        .collect()
}
