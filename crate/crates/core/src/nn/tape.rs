//! Reverse-mode gradient tape over 2-D tensors.
//!
//! Ops append nodes in evaluation order; [`Tape::backward`] walks them in
//! reverse, accumulating adjoints. Only the ops the model needs exist.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Transpose(Var),
    SoftmaxRows(Var),
    Relu(Var),
    Sigmoid(Var),
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    MeanRows(Var),
    MulConst(Var, Tensor),
    Reshape(Var),
    Conv1d { x: Var, w: Var, b: Var, width: usize },
    SumSquares(Var),
    CrossEntropy { p: Var, targets: Vec<usize>, eps: f64 },
    Wasserstein { p: Var, q: Var, mean: bool },
    BinaryCrossEntropy { z: Var, labels: Vec<f64>, eps: f64 },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    name: Option<String>,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn dim_err(what: &str, a: &Tensor, b: &Tensor) -> Error {
    Error::Dimension(format!("{what}: {:?} vs {:?}", a.shape(), b.shape()))
}

/// Logistic function, evaluated without overflow for large `|x|`.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy of `sigmoid(z)` against `y` with `eps` clamping.
pub fn bce_logit(z: f64, y: f64, eps: f64) -> f64 {
    -(y * (sigmoid(z) + eps).ln() + (1.0 - y) * (sigmoid(-z) + eps).ln())
}

/// Softmax of one row, max-shifted.
pub(crate) fn softmax_slice(row: &[f64], out: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &x) in out.iter_mut().zip(row) {
        *o = (x - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// `sum_k |F_p(k) - F_q(k)|`, divided by `K` for the mean variant.
pub(crate) fn cdf_distance(p: &[f64], q: &[f64], mean: bool) -> f64 {
    let (mut fp, mut fq, mut acc) = (0.0, 0.0, 0.0);
    for (a, b) in p.iter().zip(q) {
        fp += a;
        fq += b;
        acc += (fp - fq).abs();
    }
    if mean {
        acc / p.len() as f64
    } else {
        acc
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op, name: None });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    /// A named leaf whose gradient is reported by [`Gradients::named`].
    pub fn param(&mut self, name: &str, t: Tensor) -> Var {
        let v = self.push(t, Op::Leaf);
        self.nodes[v.0].name = Some(name.to_string());
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rows() != tb.rows() || ta.cols() != tb.cols() {
            return Err(dim_err("add", ta, tb));
        }
        let mut out = ta.clone();
        out.add_assign(tb);
        Ok(self.push(out, Op::Add(a, b)))
    }

    /// Adds a `1 x n` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (ta, tr) = (self.value(a), self.value(row));
        if tr.rows() != 1 || tr.cols() != ta.cols() {
            return Err(dim_err("add_row", ta, tr));
        }
        let w = ta.cols();
        let mut out = ta.clone();
        for (i, o) in out.data_mut().iter_mut().enumerate() {
            *o += tr.data()[i % w];
        }
        Ok(self.push(out, Op::AddRow(a, row)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).map(|x| x * s);
        self.push(out, Op::Scale(a, s))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        self.push(out, Op::Transpose(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let ta = self.value(a);
        let mut out = Tensor::zeros(&[ta.rows(), ta.cols()]);
        let w = ta.cols();
        for r in 0..ta.rows() {
            softmax_slice(ta.row(r), &mut out.data_mut()[r * w..(r + 1) * w]);
        }
        self.push(out, Op::SoftmaxRows(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.max(0.0));
        self.push(out, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let ta = self.value(a);
        if start + len > ta.cols() || len == 0 {
            return Err(Error::Dimension(format!(
                "slice {start}..{} of {} columns",
                start + len,
                ta.cols()
            )));
        }
        let mut data = Vec::with_capacity(ta.rows() * len);
        for r in 0..ta.rows() {
            data.extend_from_slice(&ta.row(r)[start..start + len]);
        }
        let out = Tensor::matrix(ta.rows(), len, data)?;
        Ok(self.push(out, Op::SliceCols(a, start)))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.value(parts[0]).rows();
        if let Some(p) = parts.iter().find(|&&p| self.value(p).rows() != rows) {
            return Err(dim_err("concat_cols", self.value(parts[0]), self.value(*p)));
        }
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let out = Tensor::matrix(rows, cols, data)?;
        Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
    }

    /// Column means, `T x C -> 1 x C`.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let ta = self.value(a);
        let (t, c) = (ta.rows(), ta.cols());
        let mut data = vec![0.0; c];
        for r in 0..t {
            for (d, x) in data.iter_mut().zip(ta.row(r)) {
                *d += x;
            }
        }
        for d in &mut data {
            *d /= t as f64;
        }
        self.push(Tensor::row_vector(data), Op::MeanRows(a))
    }

    /// Elementwise product with a constant tensor of the same shape.
    pub fn mul_const(&mut self, a: Var, mask: Tensor) -> Result<Var> {
        let ta = self.value(a);
        if ta.len() != mask.len() {
            return Err(dim_err("mul_const", ta, &mask));
        }
        let mut out = ta.clone();
        for (o, m) in out.data_mut().iter_mut().zip(mask.data()) {
            *o *= m;
        }
        Ok(self.push(out, Op::MulConst(a, mask)))
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let out = self.value(a).clone().reshape(vec![rows, cols])?;
        Ok(self.push(out, Op::Reshape(a)))
    }

    /// "Same"-padded 1-D convolution over time. `x` is `T x C_in`, `w` is
    /// `(width * C_in) x C_out` with tap `j` in rows `j*C_in..(j+1)*C_in`,
    /// `b` is `1 x C_out`. Tap `j` reads time `t + j - width/2`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, width: usize) -> Result<Var> {
        let (tx, tw, tb) = (self.value(x), self.value(w), self.value(b));
        let (t_len, c_in) = (tx.rows(), tx.cols());
        if width == 0 || width.is_multiple_of(2) {
            return Err(Error::Config(format!("conv width must be odd, got {width}")));
        }
        if tw.rows() != width * c_in {
            return Err(dim_err("conv1d weights", tx, tw));
        }
        let c_out = tw.cols();
        if tb.rows() != 1 || tb.cols() != c_out {
            return Err(dim_err("conv1d bias", tw, tb));
        }
        let pad = width / 2;
        let mut out = Tensor::zeros(&[t_len, c_out]);
        for t in 0..t_len {
            let o = &mut out.data_mut()[t * c_out..(t + 1) * c_out];
            o.copy_from_slice(tb.data());
            for j in 0..width {
                let Some(src) = (t + j).checked_sub(pad).filter(|&s| s < t_len) else {
                    continue;
                };
                for (ci, &xv) in tx.row(src).iter().enumerate() {
                    if xv == 0.0 {
                        continue;
                    }
                    for (ov, wv) in o.iter_mut().zip(tw.row(j * c_in + ci)) {
                        *ov += xv * wv;
                    }
                }
            }
        }
        Ok(self.push(out, Op::Conv1d { x, w, b, width }))
    }

    pub fn sum_squares(&mut self, a: Var) -> Var {
        let s = self.value(a).sum_squares();
        self.push(Tensor::scalar(s), Op::SumSquares(a))
    }

    /// Mean over rows of `-ln(p[r, target_r] + eps)`.
    pub fn cross_entropy(&mut self, p: Var, targets: &[usize], eps: f64) -> Result<Var> {
        let tp = self.value(p);
        if targets.len() != tp.rows() || targets.iter().any(|&t| t >= tp.cols()) {
            return Err(Error::Dimension(format!(
                "{} targets (max {:?}) for probabilities {:?}",
                targets.len(),
                targets.iter().max(),
                tp.shape()
            )));
        }
        let loss = targets
            .iter()
            .enumerate()
            .map(|(r, &t)| -(tp.get(r, t) + eps).ln())
            .sum::<f64>()
            / targets.len() as f64;
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                p,
                targets: targets.to_vec(),
                eps,
            },
        ))
    }

    /// Mean over rows of the 1-D Wasserstein distance between rows of `p`
    /// and `q`.
    pub fn wasserstein(&mut self, p: Var, q: Var, mean: bool) -> Result<Var> {
        let (tp, tq) = (self.value(p), self.value(q));
        if tp.rows() != tq.rows() || tp.cols() != tq.cols() {
            return Err(dim_err("wasserstein", tp, tq));
        }
        let rows = tp.rows();
        let loss = (0..rows)
            .map(|r| cdf_distance(tp.row(r), tq.row(r), mean))
            .sum::<f64>()
            / rows as f64;
        Ok(self.push(Tensor::scalar(loss), Op::Wasserstein { p, q, mean }))
    }

    /// Mean over rows of `-[y ln(p + eps) + (1 - y) ln(1 - p + eps)]` with
    /// `p = sigmoid(z)` for a `T x 1` logit column. `1 - p` is evaluated as
    /// `sigmoid(-z)` so saturated logits keep full precision.
    pub fn binary_cross_entropy_logits(&mut self, z: Var, labels: &[f64], eps: f64) -> Result<Var> {
        let tz = self.value(z);
        if tz.cols() != 1 || tz.rows() != labels.len() {
            return Err(Error::Dimension(format!(
                "{} labels for logits {:?}",
                labels.len(),
                tz.shape()
            )));
        }
        let loss = labels
            .iter()
            .zip(tz.data())
            .map(|(&y, &z)| bce_logit(z, y, eps))
            .sum::<f64>()
            / labels.len() as f64;
        Ok(self.push(
            Tensor::scalar(loss),
            Op::BinaryCrossEntropy {
                z,
                labels: labels.to_vec(),
                eps,
            },
        ))
    }

    /// Adjoints of every node with respect to the scalar `out`.
    pub fn backward(&self, out: Var) -> Gradients {
        assert_eq!(self.value(out).len(), 1, "backward needs a scalar output");
        let mut grads: Vec<Option<Tensor>> = vec![None; out.0 + 1];
        grads[out.0] = Some(Tensor::full(self.value(out).shape(), 1.0));

        fn acc(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }

        for i in (0..=out.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    acc(&mut grads, *a, g.matmul(&tb.transpose()).unwrap());
                    acc(&mut grads, *b, ta.transpose().matmul(&g).unwrap());
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g.clone());
                }
                Op::AddRow(a, row) => {
                    let w = g.cols();
                    let mut gr = vec![0.0; w];
                    for (k, v) in g.data().iter().enumerate() {
                        gr[k % w] += v;
                    }
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *row, Tensor::row_vector(gr));
                }
                Op::Scale(a, s) => acc(&mut grads, *a, g.map(|x| x * s)),
                Op::Transpose(a) => acc(&mut grads, *a, g.transpose()),
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let w = y.cols();
                    let mut ga = Tensor::zeros(&[y.rows(), w]);
                    for r in 0..y.rows() {
                        let (yr, gr) = (y.row(r), g.row(r));
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for c in 0..w {
                            ga.data_mut()[r * w + c] = yr[c] * (gr[c] - dot);
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::Relu(a) => {
                    let ta = self.value(*a);
                    let mut ga = g.clone();
                    for (o, &x) in ga.data_mut().iter_mut().zip(ta.data()) {
                        if x <= 0.0 {
                            *o = 0.0;
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::Sigmoid(a) => {
                    let mut ga = g.clone();
                    for (o, &y) in ga.data_mut().iter_mut().zip(node.value.data()) {
                        *o *= y * (1.0 - y);
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::SliceCols(a, start) => {
                    let ta = self.value(*a);
                    let mut ga = Tensor::zeros(&[ta.rows(), ta.cols()]);
                    let len = g.cols();
                    for r in 0..g.rows() {
                        for c in 0..len {
                            ga.set(r, start + c, g.get(r, c));
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.value(p).cols();
                        let mut gp = Vec::with_capacity(g.rows() * w);
                        for r in 0..g.rows() {
                            gp.extend_from_slice(&g.row(r)[offset..offset + w]);
                        }
                        acc(&mut grads, p, Tensor::matrix(g.rows(), w, gp).unwrap());
                        offset += w;
                    }
                }
                Op::MeanRows(a) => {
                    let ta = self.value(*a);
                    let t = ta.rows();
                    let mut ga = Tensor::zeros(&[t, ta.cols()]);
                    for r in 0..t {
                        for c in 0..ta.cols() {
                            ga.set(r, c, g.data()[c] / t as f64);
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::MulConst(a, mask) => {
                    let mut ga = g.clone();
                    for (o, m) in ga.data_mut().iter_mut().zip(mask.data()) {
                        *o *= m;
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::Reshape(a) => {
                    let shape = self.value(*a).shape().to_vec();
                    acc(&mut grads, *a, g.clone().reshape(shape).unwrap());
                }
                Op::Conv1d { x, w, b, width } => {
                    let (tx, tw) = (self.value(*x), self.value(*w));
                    let (t_len, c_in, c_out) = (tx.rows(), tx.cols(), tw.cols());
                    let pad = width / 2;
                    let mut gx = Tensor::zeros(&[t_len, c_in]);
                    let mut gw = Tensor::zeros(&[tw.rows(), c_out]);
                    let mut gb = vec![0.0; c_out];
                    for t in 0..t_len {
                        let gt = g.row(t);
                        for (s, v) in gb.iter_mut().zip(gt) {
                            *s += v;
                        }
                        for j in 0..*width {
                            let Some(src) = (t + j).checked_sub(pad).filter(|&s| s < t_len) else {
                                continue;
                            };
                            for ci in 0..c_in {
                                let wr = j * c_in + ci;
                                let xv = tx.get(src, ci);
                                let mut dx = 0.0;
                                for co in 0..c_out {
                                    dx += gt[co] * tw.get(wr, co);
                                    gw.data_mut()[wr * c_out + co] += xv * gt[co];
                                }
                                gx.data_mut()[src * c_in + ci] += dx;
                            }
                        }
                    }
                    acc(&mut grads, *x, gx);
                    acc(&mut grads, *w, gw);
                    acc(&mut grads, *b, Tensor::row_vector(gb));
                }
                Op::SumSquares(a) => {
                    let s = g.data()[0];
                    acc(&mut grads, *a, self.value(*a).map(|x| 2.0 * x * s));
                }
                Op::CrossEntropy { p, targets, eps } => {
                    let tp = self.value(*p);
                    let s = g.data()[0] / targets.len() as f64;
                    let mut gp = Tensor::zeros(&[tp.rows(), tp.cols()]);
                    for (r, &t) in targets.iter().enumerate() {
                        gp.set(r, t, -s / (tp.get(r, t) + eps));
                    }
                    acc(&mut grads, *p, gp);
                }
                Op::Wasserstein { p, q, mean } => {
                    let (tp, tq) = (self.value(*p), self.value(*q));
                    let (rows, k) = (tp.rows(), tp.cols());
                    let mut s = g.data()[0] / rows as f64;
                    if *mean {
                        s /= k as f64;
                    }
                    let mut gp = Tensor::zeros(&[rows, k]);
                    for r in 0..rows {
                        let (pr, qr) = (tp.row(r), tq.row(r));
                        let mut signs = vec![0.0; k];
                        let (mut fp, mut fq) = (0.0, 0.0);
                        for c in 0..k {
                            fp += pr[c];
                            fq += qr[c];
                            let d = fp - fq;
                            signs[c] = if d > 0.0 {
                                1.0
                            } else if d < 0.0 {
                                -1.0
                            } else {
                                0.0
                            };
                        }
                        // d/dp_i sum_k |F_p(k) - F_q(k)| = sum_{k >= i} sign_k
                        let mut tail = 0.0;
                        for c in (0..k).rev() {
                            tail += signs[c];
                            gp.set(r, c, tail * s);
                        }
                    }
                    let gq = gp.map(|x| -x);
                    acc(&mut grads, *p, gp);
                    acc(&mut grads, *q, gq);
                }
                Op::BinaryCrossEntropy { z, labels, eps } => {
                    let tz = self.value(*z);
                    let s = g.data()[0] / labels.len() as f64;
                    let gz: Vec<f64> = labels
                        .iter()
                        .zip(tz.data())
                        .map(|(&y, &z)| {
                            let (p, q) = (sigmoid(z), sigmoid(-z));
                            -s * p * q * (y / (p + eps) - (1.0 - y) / (q + eps))
                        })
                        .collect();
                    acc(&mut grads, *z, Tensor::column_vector(gz));
                }
            }
            if node.name.is_some() || matches!(node.op, Op::Leaf) {
                grads[i] = Some(g);
            }
        }
        let names = self
            .nodes
            .iter()
            .enumerate()
            .take(out.0 + 1)
            .filter_map(|(i, n)| n.name.clone().map(|name| (name, Var(i))))
            .collect();
        Gradients { grads, names }
    }
}

pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    names: Vec<(String, Var)>,
}

impl Gradients {
    /// Gradient of a leaf, if the output depends on it.
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradients of all named parameters; parameters the output does not
    /// depend on get zeros of their shape.
    pub fn named(&self, tape: &Tape) -> BTreeMap<String, Tensor> {
        let mut out: BTreeMap<String, Tensor> = BTreeMap::new();
        for (name, v) in &self.names {
            let g = match self.wrt(*v) {
                Some(g) => g.clone(),
                None => Tensor::zeros(tape.value(*v).shape()),
            };
            match out.get_mut(name) {
                Some(existing) => existing.add_assign(&g),
                None => {
                    out.insert(name.clone(), g);
                }
            }
        }
        out
    }
}
