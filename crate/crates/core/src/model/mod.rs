//! Three modality encoders, per-branch alignment distributions, local/global
//! fusion and the four per-step output heads.

mod config;

pub use config::{ModelConfig, HEAD_WIDTH};

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::WindowSample;
use crate::error::{Error, Result};
use crate::nn::{
    self, conv1d_residual, dense, dropout, global_avg_pool, he_uniform, multi_head_attention,
    AttentionParams, Mode, ParamStore, Tape, Var,
};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Branch {
    Image,
    Satellite,
    Kp,
}

impl Branch {
    pub const ALL: [Branch; 3] = [Branch::Image, Branch::Satellite, Branch::Kp];

    pub fn name(self) -> &'static str {
        match self {
            Branch::Image => "image",
            Branch::Satellite => "satellite",
            Branch::Kp => "kp",
        }
    }

    pub fn input_width(self, cfg: &ModelConfig) -> usize {
        match self {
            Branch::Image => cfg.image_dim,
            Branch::Satellite => cfg.satellite_dim,
            Branch::Kp => 1,
        }
    }
}

/// A probability vector over `K` bins.
#[derive(Debug, Clone, PartialEq)]
pub struct DistVector {
    probs: Vec<f64>,
}

impl DistVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Domain("empty distribution".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Domain(format!("negative or non-finite probability in {probs:?}")));
        }
        let s: f64 = probs.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!("probabilities sum to {s}")));
        }
        Ok(DistVector { probs })
    }

    /// All mass on `bin`.
    pub fn delta(k: usize, bin: usize) -> Self {
        let mut probs = vec![0.0; k];
        probs[bin] = 1.0;
        DistVector { probs }
    }

    pub fn uniform(k: usize) -> Self {
        DistVector {
            probs: vec![1.0 / k as f64; k],
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn argmax(&self) -> usize {
        self.probs
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
            .0
    }
}

/// Per-step head outputs plus the three alignment distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelOutput {
    pub dist28: Vec<DistVector>,
    pub dist10: Vec<DistVector>,
    pub dist3: Vec<DistVector>,
    pub p_high: Vec<f64>,
    /// Image, satellite, kp.
    pub align: [DistVector; 3],
    /// Pre-activation `output_steps x 42` logits.
    pub logits: Tensor,
}

/// Named tensors of the whole network.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub tensors: ParamStore,
}

const ENCODER_PARTS: [&str; 10] = [
    "proj.w", "proj.b", "attn.wq", "attn.wk", "attn.wv", "attn.wo", "ffn1.w", "ffn1.b", "ffn2.w", "ffn2.b",
];

fn encoder_shape(part: &str, d_in: usize, cfg: &ModelConfig) -> [usize; 2] {
    let (d, f) = (cfg.model_dim, cfg.ffn_dim);
    match part {
        "proj.w" => [d_in, d],
        "proj.b" => [1, d],
        "ffn1.w" => [d, f],
        "ffn1.b" => [1, f],
        "ffn2.w" => [f, d],
        "ffn2.b" => [1, d],
        _ => [d, d],
    }
}

/// Expected path and shape of every parameter, sorted by path.
pub fn param_shapes(cfg: &ModelConfig) -> BTreeMap<String, [usize; 2]> {
    let mut out = BTreeMap::new();
    let d = cfg.model_dim;
    let fused = 3 * d;
    for b in Branch::ALL {
        for part in ENCODER_PARTS {
            out.insert(
                format!("enc.{}.{part}", b.name()),
                encoder_shape(part, b.input_width(cfg), cfg),
            );
        }
        out.insert(format!("align.{}.w", b.name()), [d, cfg.bins]);
        out.insert(format!("align.{}.b", b.name()), [1, cfg.bins]);
    }
    out.insert("fuse.conv.w".into(), [cfg.conv_width * fused, fused]);
    out.insert("fuse.conv.b".into(), [1, fused]);
    for w in ["wq", "wk", "wv", "wo"] {
        out.insert(format!("fuse.attn.{w}"), [fused, fused]);
    }
    out.insert("head.w".into(), [2 * fused, cfg.output_steps * HEAD_WIDTH]);
    out.insert("head.b".into(), [1, cfg.output_steps * HEAD_WIDTH]);
    out
}

fn is_bias(path: &str) -> bool {
    path.ends_with(".b")
}

impl ModelParams {
    /// He-uniform weights and zero biases, drawn in path order from `cfg.seed`.
    pub fn init(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let tensors = param_shapes(cfg)
            .into_iter()
            .map(|(path, [r, c])| {
                let t = if is_bias(&path) {
                    Tensor::zeros(&[r, c])
                } else {
                    he_uniform(r, c, &mut rng)
                };
                (path, t)
            })
            .collect();
        Ok(ModelParams { tensors })
    }

    /// Checks that paths and shapes match `cfg` exactly.
    pub fn validate(&self, cfg: &ModelConfig) -> Result<()> {
        let expected = param_shapes(cfg);
        for (path, shape) in &expected {
            match self.tensors.get(path) {
                None => return Err(Error::Dimension(format!("missing parameter {path}"))),
                Some(t) if t.shape() != shape => {
                    return Err(Error::Dimension(format!(
                        "parameter {path} has shape {:?}, expected {shape:?}",
                        t.shape()
                    )))
                }
                Some(t) if !t.all_finite() => {
                    return Err(Error::Domain(format!("parameter {path} is not finite")))
                }
                _ => {}
            }
        }
        if let Some(extra) = self.tensors.keys().find(|k| !expected.contains_key(*k)) {
            return Err(Error::Dimension(format!("unexpected parameter {extra}")));
        }
        Ok(())
    }

    pub fn count(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    /// Weight matrices under the L2 penalty: the encoder feed-forward layers.
    pub fn l2_paths(&self) -> Vec<&str> {
        self.tensors
            .keys()
            .map(String::as_str)
            .filter(|p| p.starts_with("enc.") && (p.ends_with("ffn1.w") || p.ends_with("ffn2.w")))
            .collect()
    }

    /// Registers every tensor as a named tape leaf.
    pub fn bind(&self, tape: &mut Tape) -> BTreeMap<String, Var> {
        self.tensors
            .iter()
            .map(|(k, t)| (k.clone(), tape.param(k, t.clone())))
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        nn::save_checkpoint(path, &self.tensors)
    }

    pub fn load(path: &Path, cfg: &ModelConfig) -> Result<Self> {
        let p = ModelParams {
            tensors: nn::load_checkpoint(path)?,
        };
        p.validate(cfg)?;
        Ok(p)
    }
}

fn var(vars: &BTreeMap<String, Var>, path: &str) -> Result<Var> {
    vars.get(path)
        .copied()
        .ok_or_else(|| Error::Dimension(format!("missing parameter {path}")))
}

fn attention(vars: &BTreeMap<String, Var>, prefix: &str) -> Result<AttentionParams> {
    Ok(AttentionParams {
        wq: var(vars, &format!("{prefix}.wq"))?,
        wk: var(vars, &format!("{prefix}.wk"))?,
        wv: var(vars, &format!("{prefix}.wv"))?,
        wo: var(vars, &format!("{prefix}.wo"))?,
    })
}

/// Input projection, then attention and feed-forward sublayers, each with
/// dropout and a residual add.
pub fn encode_modality(
    tape: &mut Tape,
    x: Var,
    branch: Branch,
    vars: &BTreeMap<String, Var>,
    cfg: &ModelConfig,
    mode: Mode,
    rng: &mut ChaCha8Rng,
) -> Result<Var> {
    let p = |part: &str| var(vars, &format!("enc.{}.{part}", branch.name()));
    let width = tape.value(x).cols();
    let expected = tape.value(p("proj.w")?).rows();
    if width != expected {
        return Err(Error::Dimension(format!(
            "{} branch expects width {expected}, got {width}",
            branch.name()
        )));
    }
    let mut h = dense(tape, x, p("proj.w")?, p("proj.b")?)?;
    if cfg.positional_encoding {
        let steps = tape.value(h).rows();
        let pe = tape.constant(nn::sinusoidal_encoding(steps, cfg.model_dim));
        h = tape.add(h, pe)?;
    }
    let (a, _) = multi_head_attention(tape, h, &attention(vars, &format!("enc.{}.attn", branch.name()))?, cfg.heads)?;
    let a = dropout(tape, a, cfg.dropout, mode, rng)?;
    let h1 = tape.add(h, a)?;
    let f = dense(tape, h1, p("ffn1.w")?, p("ffn1.b")?)?;
    let f = tape.relu(f);
    let f = dense(tape, f, p("ffn2.w")?, p("ffn2.b")?)?;
    let f = dropout(tape, f, cfg.dropout, mode, rng)?;
    tape.add(h1, f)
}

/// Mean over time, dense, softmax: a `1 x K` distribution.
pub fn project_alignment(tape: &mut Tape, h: Var, branch: Branch, vars: &BTreeMap<String, Var>) -> Result<Var> {
    let pooled = global_avg_pool(tape, h);
    let w = var(vars, &format!("align.{}.w", branch.name()))?;
    let b = var(vars, &format!("align.{}.b", branch.name()))?;
    let logits = dense(tape, pooled, w, b)?;
    Ok(tape.softmax_rows(logits))
}

/// Tape handles of the head outputs.
#[derive(Debug, Clone, Copy)]
pub struct HeadVars {
    pub logits: Var,
    pub dist28: Var,
    pub dist10: Var,
    pub dist3: Var,
    pub high_logit: Var,
    pub p_high: Var,
}

pub fn fuse_and_head(
    tape: &mut Tape,
    encoded: [Var; 3],
    vars: &BTreeMap<String, Var>,
    cfg: &ModelConfig,
) -> Result<HeadVars> {
    let steps: Vec<usize> = encoded.iter().map(|&h| tape.value(h).rows()).collect();
    if steps.iter().any(|&s| s != steps[0]) {
        return Err(Error::Dimension(format!("branch step counts differ: {steps:?}")));
    }
    let cat = tape.concat_cols(&encoded)?;
    let local = conv1d_residual(tape, cat, var(vars, "fuse.conv.w")?, var(vars, "fuse.conv.b")?, cfg.conv_width)?;
    let local = global_avg_pool(tape, local);
    let (global, _) = multi_head_attention(tape, cat, &attention(vars, "fuse.attn")?, cfg.heads)?;
    let global = global_avg_pool(tape, global);
    let z = tape.concat_cols(&[local, global])?;
    let flat = dense(tape, z, var(vars, "head.w")?, var(vars, "head.b")?)?;
    let logits = tape.reshape(flat, cfg.output_steps, HEAD_WIDTH)?;
    let block = |tape: &mut Tape, start, len| -> Result<Var> {
        let s = tape.slice_cols(logits, start, len)?;
        Ok(tape.softmax_rows(s))
    };
    let dist28 = block(tape, 0, 28)?;
    let dist10 = block(tape, 28, 10)?;
    let dist3 = block(tape, 38, 3)?;
    let high = tape.slice_cols(logits, 41, 1)?;
    let p_high = tape.sigmoid(high);
    Ok(HeadVars {
        logits,
        dist28,
        dist10,
        dist3,
        high_logit: high,
        p_high,
    })
}

/// Everything a loss needs from one forward pass.
#[derive(Debug, Clone)]
pub struct Graph {
    pub heads: HeadVars,
    pub align: [Var; 3],
}

/// Records the full network for one (feature-transformed) sample.
pub fn build_graph(
    tape: &mut Tape,
    vars: &BTreeMap<String, Var>,
    sample: &WindowSample,
    cfg: &ModelConfig,
    mode: Mode,
    rng: &mut ChaCha8Rng,
) -> Result<Graph> {
    if sample.input_steps() != cfg.input_steps {
        return Err(Error::Dimension(format!(
            "sample has {} input steps, model expects {}",
            sample.input_steps(),
            cfg.input_steps
        )));
    }
    let inputs = [
        sample.img_in.clone(),
        sample.sat_in.clone(),
        Tensor::column_vector(sample.kp_in.clone()),
    ];
    let mut encoded = Vec::with_capacity(3);
    let mut align = Vec::with_capacity(3);
    for (b, x) in Branch::ALL.into_iter().zip(inputs) {
        let xv = tape.constant(x);
        let h = encode_modality(tape, xv, b, vars, cfg, mode, rng)?;
        align.push(project_alignment(tape, h, b, vars)?);
        encoded.push(h);
    }
    let heads = fuse_and_head(tape, [encoded[0], encoded[1], encoded[2]], vars, cfg)?;
    Ok(Graph {
        heads,
        align: [align[0], align[1], align[2]],
    })
}

fn rows_to_dists(t: &Tensor) -> Result<Vec<DistVector>> {
    (0..t.rows()).map(|r| DistVector::new(t.row(r).to_vec())).collect()
}

/// Reads a [`ModelOutput`] off a recorded graph.
pub fn collect_output(tape: &Tape, g: &Graph) -> Result<ModelOutput> {
    let align = [
        DistVector::new(tape.value(g.align[0]).data().to_vec())?,
        DistVector::new(tape.value(g.align[1]).data().to_vec())?,
        DistVector::new(tape.value(g.align[2]).data().to_vec())?,
    ];
    Ok(ModelOutput {
        dist28: rows_to_dists(tape.value(g.heads.dist28))?,
        dist10: rows_to_dists(tape.value(g.heads.dist10))?,
        dist3: rows_to_dists(tape.value(g.heads.dist3))?,
        p_high: tape.value(g.heads.p_high).data().to_vec(),
        align,
        logits: tape.value(g.heads.logits).clone(),
    })
}

/// One forward pass. `dropout_seed` only matters in training mode.
pub fn forward(
    sample: &WindowSample,
    params: &ModelParams,
    cfg: &ModelConfig,
    mode: Mode,
    dropout_seed: u64,
) -> Result<ModelOutput> {
    let mut tape = Tape::new();
    let vars = params.bind(&mut tape);
    let mut rng = ChaCha8Rng::seed_from_u64(dropout_seed);
    let g = build_graph(&mut tape, &vars, sample, cfg, mode, &mut rng)?;
    collect_output(&tape, &g)
}
