//! Named parameter sets, initialization and checkpoint files.
//!
//! Checkpoint layout, little-endian:
//!
//! ```text
//! magic "KPCKPT01"
//! u32 record count
//! per record, sorted by path:
//!   u16 path length | path bytes (UTF-8)
//!   u32 rank | u64 x rank dims
//!   f64 x product(dims)
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;

use crate::binio::{read_file, ByteReader, ByteWriter};
use crate::error::Result;
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"KPCKPT01";

/// Parameters keyed by slash-separated path, e.g. `enc.image.wq`.
pub type ParamStore = BTreeMap<String, Tensor>;

/// He-uniform weights: `U(-sqrt(6/fan_in), sqrt(6/fan_in))`, `fan_in = rows`.
pub fn he_uniform(rows: usize, cols: usize, rng: &mut impl Rng) -> Tensor {
    let limit = (6.0 / rows.max(1) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.gen_range(-limit..=limit)).collect();
    Tensor::matrix(rows, cols, data).expect("sized above")
}

pub fn save_checkpoint(path: &Path, params: &ParamStore) -> Result<()> {
    let mut w = ByteWriter::new(CHECKPOINT_MAGIC);
    w.u32(params.len() as u32);
    for (name, t) in params {
        w.str(name);
        w.u32(t.shape().len() as u32);
        for &d in t.shape() {
            w.u64(d as u64);
        }
        w.f64s(t.data());
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| crate::Error::io(parent, e))?;
    }
    w.save(path)
}

pub fn load_checkpoint(path: &Path) -> Result<ParamStore> {
    let bytes = read_file(path)?;
    let mut r = ByteReader::new(&bytes, CHECKPOINT_MAGIC, path)?;
    let n = r.u32()? as usize;
    let mut out = ParamStore::new();
    for _ in 0..n {
        let name = r.str()?;
        let rank = r.u32()? as usize;
        if rank > 8 {
            return Err(r.error(format!("rank {rank} for {name}")));
        }
        let shape = (0..rank)
            .map(|_| r.u64().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let len = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| r.error(format!("shape overflow for {name}")))?;
        let t = Tensor::new(shape, r.f64s(len)?)?;
        if out.insert(name.clone(), t).is_some() {
            return Err(r.error(format!("duplicate path {name}")));
        }
    }
    r.finish()?;
    Ok(out)
}
