//! Wasserstein, cross-entropy and alignment losses and the combined
//! training objective.
//!
//! Every loss exists twice: as a plain function over [`DistVector`]s and as
//! tape ops for training. The two agree to rounding.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::config::Config;
use crate::dataset::WindowSample;
use crate::error::{Error, Result};
use crate::model::{Branch, DistVector, Graph, ModelOutput, ModelParams};
use crate::nn::{bce_logit, cdf_distance, l2_penalty, Tape, Var};
use crate::tensor::Tensor;

pub const LOG_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WassersteinVariant {
    Sum,
    Mean,
}

impl FromStr for WassersteinVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum" => Ok(WassersteinVariant::Sum),
            "mean" => Ok(WassersteinVariant::Mean),
            _ => Err(Error::Config(format!("unknown Wasserstein variant {s:?} (sum|mean)"))),
        }
    }
}

impl fmt::Display for WassersteinVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WassersteinVariant::Sum => "sum",
            WassersteinVariant::Mean => "mean",
        })
    }
}

/// Which modality pairs enter the alignment penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlignmentScheme {
    /// Mean over the three unordered pairs.
    PairwiseMean,
    /// Mean distance from one branch to the other two.
    Anchor(Branch),
}

impl FromStr for AlignmentScheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pairwise" => Ok(AlignmentScheme::PairwiseMean),
            "anchor:image" => Ok(AlignmentScheme::Anchor(Branch::Image)),
            "anchor:satellite" => Ok(AlignmentScheme::Anchor(Branch::Satellite)),
            "anchor:kp" => Ok(AlignmentScheme::Anchor(Branch::Kp)),
            _ => Err(Error::Config(format!(
                "unknown alignment scheme {s:?} (pairwise|anchor:image|anchor:satellite|anchor:kp)"
            ))),
        }
    }
}

impl AlignmentScheme {
    /// Index pairs into the (image, satellite, kp) triple.
    fn pairs(self) -> Vec<(usize, usize)> {
        match self {
            AlignmentScheme::PairwiseMean => vec![(0, 1), (0, 2), (1, 2)],
            AlignmentScheme::Anchor(b) => {
                let a = Branch::ALL.iter().position(|&x| x == b).unwrap();
                (0..3).filter(|&i| i != a).map(|i| (a, i)).collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    pub alpha: f64,
    pub lambda_align: f64,
    pub lambda_l2: f64,
    pub variant: WassersteinVariant,
    pub alignment: AlignmentScheme,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            alpha: 0.8,
            lambda_align: 0.1,
            lambda_l2: 1e-4,
            variant: WassersteinVariant::Mean,
            alignment: AlignmentScheme::PairwiseMean,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if !(self.lambda_align >= 0.0) || !(self.lambda_l2 >= 0.0) {
            return Err(Error::Config("loss weights must be non-negative".into()));
        }
        Ok(())
    }

    pub fn from_config(cfg: &Config, section: &str) -> Result<Self> {
        let d = LossConfig::default();
        let l = LossConfig {
            alpha: cfg.value(section, "alpha", d.alpha)?,
            lambda_align: cfg.value(section, "lambda_align", d.lambda_align)?,
            lambda_l2: cfg.value(section, "lambda_l2", d.lambda_l2)?,
            variant: cfg.value(section, "wasserstein_variant", d.variant)?,
            alignment: match cfg.get(section, "alignment") {
                Some(s) => s.parse()?,
                None => d.alignment,
            },
        };
        l.validate()?;
        Ok(l)
    }
}

fn check_same_len(p: &DistVector, q: &DistVector) -> Result<()> {
    if p.len() != q.len() {
        return Err(Error::Dimension(format!(
            "distributions have {} and {} bins",
            p.len(),
            q.len()
        )));
    }
    Ok(())
}

/// `sum_k |F_p(k) - F_q(k)|`, divided by `K` for the mean variant.
pub fn wasserstein_1d(p: &DistVector, q: &DistVector, variant: WassersteinVariant) -> Result<f64> {
    check_same_len(p, q)?;
    Ok(cdf_distance(p.probs(), q.probs(), variant == WassersteinVariant::Mean))
}

pub fn cross_entropy(dist: &DistVector, target: usize) -> Result<f64> {
    let p = dist.probs().get(target).ok_or_else(|| {
        Error::Dimension(format!("target class {target} outside {} bins", dist.len()))
    })?;
    Ok(-(p + LOG_EPS).ln())
}

pub fn binary_cross_entropy(p: f64, label: f64) -> f64 {
    -(label * (p + LOG_EPS).ln() + (1.0 - label) * (1.0 - p + LOG_EPS).ln())
}

/// [`binary_cross_entropy`] of `sigmoid(z)`, keeping precision when the
/// logit saturates.
pub fn binary_cross_entropy_logit(z: f64, label: f64) -> f64 {
    bce_logit(z, label, LOG_EPS)
}

pub fn alignment_loss(
    dists: [&DistVector; 3],
    variant: WassersteinVariant,
    scheme: AlignmentScheme,
) -> Result<f64> {
    let pairs = scheme.pairs();
    let mut sum = 0.0;
    for &(a, b) in &pairs {
        sum += wasserstein_1d(dists[a], dists[b], variant)?;
    }
    Ok(sum / pairs.len() as f64)
}

/// `alpha * CE + (1 - alpha) * W(dist, one_hot(target))`.
pub fn combined_class_loss(dist: &DistVector, target: usize, cfg: &LossConfig) -> Result<f64> {
    let ce = cross_entropy(dist, target)?;
    let w = wasserstein_1d(dist, &DistVector::delta(dist.len(), target), cfg.variant)?;
    Ok(cfg.alpha * ce + (1.0 - cfg.alpha) * w)
}

/// Named loss components.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossTerms {
    pub ce28: f64,
    pub ce10: f64,
    pub ce3: f64,
    pub bce: f64,
    pub wass28: f64,
    pub wass10: f64,
    pub wass3: f64,
    pub align: f64,
    pub l2: f64,
}

impl LossTerms {
    pub const NAMES: [&'static str; 9] = ["ce28", "ce10", "ce3", "bce", "wass28", "wass10", "wass3", "align", "l2"];

    pub fn as_array(&self) -> [f64; 9] {
        [
            self.ce28, self.ce10, self.ce3, self.bce, self.wass28, self.wass10, self.wass3, self.align, self.l2,
        ]
    }

    fn from_array(a: [f64; 9]) -> Self {
        LossTerms {
            ce28: a[0],
            ce10: a[1],
            ce3: a[2],
            bce: a[3],
            wass28: a[4],
            wass10: a[5],
            wass3: a[6],
            align: a[7],
            l2: a[8],
        }
    }

    /// Left-to-right sum in [`LossTerms::NAMES`] order.
    pub fn sum(&self) -> f64 {
        self.as_array().iter().fold(0.0, |acc, v| acc + v)
    }

    fn weighted(&self, cfg: &LossConfig) -> Self {
        let a = cfg.alpha;
        LossTerms {
            ce28: a * self.ce28,
            ce10: a * self.ce10,
            ce3: a * self.ce3,
            bce: self.bce,
            wass28: (1.0 - a) * self.wass28,
            wass10: (1.0 - a) * self.wass10,
            wass3: (1.0 - a) * self.wass3,
            align: cfg.lambda_align * self.align,
            l2: cfg.lambda_l2 * self.l2,
        }
    }

    /// Element-wise mean.
    pub fn mean(items: &[LossTerms]) -> LossTerms {
        let mut acc = [0.0; 9];
        for t in items {
            for (a, v) in acc.iter_mut().zip(t.as_array()) {
                *a += v;
            }
        }
        let n = items.len().max(1) as f64;
        LossTerms::from_array(acc.map(|v| v / n))
    }
}

/// Scalar objective with raw and weighted components; `weighted.sum() == total`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub weighted: LossTerms,
    pub raw: LossTerms,
}

impl LossBreakdown {
    pub fn from_raw(raw: LossTerms, cfg: &LossConfig) -> Self {
        let weighted = raw.weighted(cfg);
        LossBreakdown {
            total: weighted.sum(),
            weighted,
            raw,
        }
    }

    /// Mean of raw terms, re-weighted.
    pub fn mean(items: &[LossBreakdown], cfg: &LossConfig) -> Self {
        let raws: Vec<LossTerms> = items.iter().map(|b| b.raw).collect();
        LossBreakdown::from_raw(LossTerms::mean(&raws), cfg)
    }
}

fn mean_over_steps(
    dists: &[DistVector],
    targets: &[usize],
    f: impl Fn(&DistVector, usize) -> Result<f64>,
) -> Result<f64> {
    if dists.len() != targets.len() {
        return Err(Error::Dimension(format!(
            "{} output steps but {} labels",
            dists.len(),
            targets.len()
        )));
    }
    let mut s = 0.0;
    for (d, &t) in dists.iter().zip(targets) {
        s += f(d, t)?;
    }
    Ok(s / dists.len() as f64)
}

/// Sum of squares over the L2-penalised weights.
pub fn l2_raw(params: &ModelParams) -> f64 {
    params
        .l2_paths()
        .iter()
        .map(|p| params.tensors[*p].sum_squares())
        .sum()
}

/// Objective for one sample from an already computed forward pass.
pub fn total_loss(
    out: &ModelOutput,
    sample: &WindowSample,
    params: &ModelParams,
    cfg: &LossConfig,
) -> Result<LossBreakdown> {
    let v = cfg.variant;
    let ce = |d: &DistVector, t| cross_entropy(d, t);
    let w = |d: &DistVector, t| wasserstein_1d(d, &DistVector::delta(d.len(), t), v);
    if out.p_high.len() != sample.label_high.len() || out.logits.rows() != out.p_high.len() {
        return Err(Error::Dimension("binary head and labels differ in length".into()));
    }
    let high_col = out.logits.cols() - 1;
    let bce = sample
        .label_high
        .iter()
        .enumerate()
        .map(|(r, &y)| binary_cross_entropy_logit(out.logits.get(r, high_col), y as f64))
        .sum::<f64>()
        / out.p_high.len() as f64;
    let raw = LossTerms {
        ce28: mean_over_steps(&out.dist28, &sample.labels28, ce)?,
        ce10: mean_over_steps(&out.dist10, &sample.labels10, ce)?,
        ce3: mean_over_steps(&out.dist3, &sample.labels3, ce)?,
        bce,
        wass28: mean_over_steps(&out.dist28, &sample.labels28, w)?,
        wass10: mean_over_steps(&out.dist10, &sample.labels10, w)?,
        wass3: mean_over_steps(&out.dist3, &sample.labels3, w)?,
        align: alignment_loss([&out.align[0], &out.align[1], &out.align[2]], v, cfg.alignment)?,
        l2: l2_raw(params),
    };
    Ok(LossBreakdown::from_raw(raw, cfg))
}

/// The objective recorded on a tape: `total` is differentiable, `raw` holds
/// the component nodes in [`LossTerms::NAMES`] order.
#[derive(Debug, Clone, Copy)]
pub struct TapeLoss {
    pub total: Var,
    pub raw: [Var; 9],
}

impl TapeLoss {
    pub fn breakdown(&self, tape: &Tape, cfg: &LossConfig) -> LossBreakdown {
        LossBreakdown::from_raw(LossTerms::from_array(self.raw.map(|v| tape.scalar(v))), cfg)
    }
}

fn one_hot(targets: &[usize], k: usize) -> Tensor {
    let mut t = Tensor::zeros(&[targets.len(), k]);
    for (r, &c) in targets.iter().enumerate() {
        t.set(r, c, 1.0);
    }
    t
}

pub fn record_loss(
    tape: &mut Tape,
    graph: &Graph,
    sample: &WindowSample,
    vars: &BTreeMap<String, Var>,
    params: &ModelParams,
    cfg: &LossConfig,
) -> Result<TapeLoss> {
    let mean = cfg.variant == WassersteinVariant::Mean;
    let h = graph.heads;
    let class_terms = |tape: &mut Tape, dist: Var, targets: &[usize]| -> Result<(Var, Var)> {
        let k = tape.value(dist).cols();
        let ce = tape.cross_entropy(dist, targets, LOG_EPS)?;
        let q = tape.constant(one_hot(targets, k));
        let w = tape.wasserstein(dist, q, mean)?;
        Ok((ce, w))
    };
    let (ce28, w28) = class_terms(tape, h.dist28, &sample.labels28)?;
    let (ce10, w10) = class_terms(tape, h.dist10, &sample.labels10)?;
    let (ce3, w3) = class_terms(tape, h.dist3, &sample.labels3)?;
    let labels: Vec<f64> = sample.label_high.iter().map(|&y| y as f64).collect();
    let bce = tape.binary_cross_entropy_logits(h.high_logit, &labels, LOG_EPS)?;

    let pairs = cfg.alignment.pairs();
    let mut align_sum: Option<Var> = None;
    for (a, b) in &pairs {
        let w = tape.wasserstein(graph.align[*a], graph.align[*b], mean)?;
        align_sum = Some(match align_sum {
            Some(s) => tape.add(s, w)?,
            None => w,
        });
    }
    let align = tape.scale(align_sum.expect("at least one pair"), 1.0 / pairs.len() as f64);

    let l2_vars: Vec<Var> = params.l2_paths().iter().map(|p| vars[*p]).collect();
    let l2 = l2_penalty(tape, &l2_vars, 1.0)?;

    let raw = [ce28, ce10, ce3, bce, w28, w10, w3, align, l2];
    let a = cfg.alpha;
    let weights = [a, a, a, 1.0, 1.0 - a, 1.0 - a, 1.0 - a, cfg.lambda_align, cfg.lambda_l2];
    let mut total: Option<Var> = None;
    for (&v, &wt) in raw.iter().zip(&weights) {
        let term = tape.scale(v, wt);
        total = Some(match total {
            Some(t) => tape.add(t, term)?,
            None => term,
        });
    }
    Ok(TapeLoss {
        total: total.unwrap(),
        raw,
    })
}
