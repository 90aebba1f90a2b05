//! Eager reverse-mode autodiff over 2D tensors.
//!
//! Every primitive computes its value immediately and appends a node to the
//! tape. Nodes are stored in creation order, which is a topological order, so
//! `backward` is a single reverse sweep.

use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::params::{Gradients, ParamId, ParamStore};
use super::tensor::{gemm, Tensor};
use crate::error::{Error, Result};

pub const LEAKY_SLOPE: f64 = 0.01;
pub const LAYER_NORM_EPS: f64 = 1e-5;
/// Probabilities are clamped to this before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    MulConst(Var, Rc<Tensor>),
    LeakyRelu(Var, f64),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Tensor,
        rstd: Vec<f64>,
    },
    Concat(Vec<Var>),
    SliceCols(Var, usize),
    Reshape(Var),
    GatherRows(Var, Rc<[usize]>),
    ScatterAddRows(Var, Rc<[usize]>),
    SegmentSoftmax(Var, Rc<[usize]>),
    HeadDot(Var, Var, usize),
    HeadScale(Var, Var, usize),
    Softplus(Var),
    ClampMin(Var, f64),
    CumsumStrided(Var, usize),
    SumRows(Var),
    SumAll(Var),
    Focal {
        p: Var,
        alpha: f64,
        gamma: f64,
    },
    Huber {
        pred: Var,
        target: Tensor,
        delta: f64,
    },
    LaplaceNll {
        mu: Var,
        b: Var,
        target: Tensor,
    },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "constant",
            Op::Param(_) => "param",
            Op::MatMul(..) => "matmul",
            Op::AddBias(..) => "add_bias",
            Op::Add(..) => "add",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::MulConst(..) => "mul_const",
            Op::LeakyRelu(..) => "leaky_relu",
            Op::LayerNorm { .. } => "layer_norm",
            Op::Concat(_) => "concat",
            Op::SliceCols(..) => "slice",
            Op::Reshape(_) => "reshape",
            Op::GatherRows(..) => "gather_rows",
            Op::ScatterAddRows(..) => "scatter_add_rows",
            Op::SegmentSoftmax(..) => "softmax_grouped",
            Op::HeadDot(..) => "head_dot",
            Op::HeadScale(..) => "head_scale",
            Op::Softplus(_) => "softplus",
            Op::ClampMin(..) => "clamp_min",
            Op::CumsumStrided(..) => "cumsum",
            Op::SumRows(_) => "sum_rows",
            Op::SumAll(_) => "sum_all",
            Op::Focal { .. } => "focal",
            Op::Huber { .. } => "huber",
            Op::LaplaceNll { .. } => "laplace_nll",
        }
    }
}

enum Value {
    Owned(Tensor),
    Param(ParamId),
}

struct Node {
    value: Value,
    op: Op,
}

/// Records one forward pass against a read-only parameter store.
pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    train: bool,
    rng: ChaCha8Rng,
    /// Smallest |input| seen by any LeakyReLU.
    kink_margin: f64,
    /// Running hash of LeakyReLU sign patterns and recorded discrete decisions.
    pattern: u64,
    first_non_finite: Option<(usize, &'static str)>,
}

fn shape_err(op: &'static str, a: [usize; 2], b: [usize; 2]) -> Error {
    Error::Shape {
        op,
        lhs: a.to_vec(),
        rhs: b.to_vec(),
    }
}

#[inline]
fn mix(h: u64, v: u64) -> u64 {
    (h ^ v).wrapping_mul(0x100_0000_01b3)
}

impl<'p> Tape<'p> {
    /// Inference tape: dropout is the identity.
    pub fn new(params: &'p ParamStore) -> Self {
        Self::with_mode(params, false, 0)
    }

    pub fn with_mode(params: &'p ParamStore, train: bool, dropout_seed: u64) -> Self {
        Self {
            params,
            nodes: Vec::with_capacity(1024),
            train,
            rng: ChaCha8Rng::seed_from_u64(dropout_seed),
            kink_margin: f64::INFINITY,
            pattern: 0xcbf2_9ce4_8422_2325,
            first_non_finite: None,
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn is_train(&self) -> bool {
        self.train
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn kink_margin(&self) -> f64 {
        self.kink_margin
    }

    /// Node index and op name of the first non-finite value, if any.
    pub fn first_non_finite(&self) -> Option<(usize, &'static str)> {
        self.first_non_finite
    }

    /// Fingerprint of every piecewise branch taken so far.
    pub fn pattern(&self) -> u64 {
        self.pattern
    }

    /// Record which side of a kink at zero `x` lies on.
    fn note_branch(&mut self, x: f64) {
        self.kink_margin = self.kink_margin.min(x.abs());
        self.pattern = mix(self.pattern, (x > 0.0) as u64);
    }

    /// Mix a discrete choice (e.g. an argmax) into the branch fingerprint.
    pub fn record_decision(&mut self, choice: usize) {
        self.pattern = mix(self.pattern, choice as u64 ^ 0x9e37_79b9_7f4a_7c15);
    }

    pub fn value(&self, v: Var) -> &Tensor {
        match &self.nodes[v.0].value {
            Value::Owned(t) => t,
            Value::Param(id) => self.params.value(*id),
        }
    }

    pub fn shape(&self, v: Var) -> [usize; 2] {
        self.value(v).shape()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        if self.first_non_finite.is_none() && !value.all_finite() {
            self.first_non_finite = Some((self.nodes.len(), op.name()));
        }
        self.nodes.push(Node {
            value: Value::Owned(value),
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.nodes.push(Node {
            value: Value::Param(id),
            op: Op::Param(id),
        });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa[1] != sb[0] {
            return Err(shape_err("matmul", sa, sb));
        }
        let mut out = Tensor::zeros(sa[0], sb[1]);
        gemm(self.value(a), false, self.value(b), false, &mut out, 0.0);
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    /// `a + bias` with `bias` a `1 x cols` row broadcast over rows.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(bias));
        if sb[0] != 1 || sb[1] != sa[1] {
            return Err(shape_err("add_bias", sa, sb));
        }
        let mut out = self.value(a).clone();
        let b = self.value(bias).data().to_vec();
        for r in 0..sa[0] {
            for (x, y) in out.row_slice_mut(r).iter_mut().zip(&b) {
                *x += y;
            }
        }
        Ok(self.push(out, Op::AddBias(a, bias)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(shape_err("add", sa, sb));
        }
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(shape_err("mul", sa, sb));
        }
        let mut out = self.value(a).clone();
        for (x, y) in out.data_mut().iter_mut().zip(self.value(b).data()) {
            *x *= y;
        }
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn scalar_mul(&mut self, a: Var, s: f64) -> Var {
        let mut out = self.value(a).clone();
        out.data_mut().iter_mut().for_each(|x| *x *= s);
        self.push(out, Op::Scale(a, s))
    }

    /// Elementwise product with a constant tensor.
    pub fn mul_const(&mut self, a: Var, c: Tensor) -> Result<Var> {
        let sa = self.shape(a);
        if sa != c.shape() {
            return Err(shape_err("mul_const", sa, c.shape()));
        }
        let mut out = self.value(a).clone();
        for (x, y) in out.data_mut().iter_mut().zip(c.data()) {
            *x *= y;
        }
        Ok(self.push(out, Op::MulConst(a, Rc::new(c))))
    }

    pub fn leaky_relu(&mut self, a: Var) -> Var {
        let slope = LEAKY_SLOPE;
        let mut out = self.value(a).clone();
        let mut margin = self.kink_margin;
        let mut h = self.pattern;
        for x in out.data_mut().iter_mut() {
            margin = margin.min(x.abs());
            h = mix(h, (*x > 0.0) as u64);
            if *x <= 0.0 {
                *x *= slope;
            }
        }
        self.kink_margin = margin;
        self.pattern = h;
        self.push(out, Op::LeakyRelu(a, slope))
    }

    /// Row-wise layer normalization with learnable gain and bias rows.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let sx = self.shape(x);
        for g in [gain, bias] {
            let sg = self.shape(g);
            if sg != [1, sx[1]] {
                return Err(shape_err("layer_norm", sx, sg));
            }
        }
        let n = sx[1] as f64;
        let xv = self.value(x);
        let mut xhat = Tensor::zeros(sx[0], sx[1]);
        let mut rstd = Vec::with_capacity(sx[0]);
        for r in 0..sx[0] {
            let row = xv.row_slice(r);
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let rs = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            for (o, v) in xhat.row_slice_mut(r).iter_mut().zip(row) {
                *o = (v - mean) * rs;
            }
            rstd.push(rs);
        }
        let g = self.value(gain).data().to_vec();
        let b = self.value(bias).data().to_vec();
        let mut out = xhat.clone();
        for r in 0..sx[0] {
            for ((o, gi), bi) in out.row_slice_mut(r).iter_mut().zip(&g).zip(&b) {
                *o = *o * gi + bi;
            }
        }
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            },
        ))
    }

    /// Column-wise concatenation of tensors with equal row counts.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.shape(parts[0])[0];
        let mut cols = 0;
        for &p in parts {
            let s = self.shape(p);
            if s[0] != rows {
                return Err(shape_err("concat", [rows, cols], s));
            }
            cols += s[1];
        }
        let mut out = Tensor::zeros(rows, cols);
        let mut off = 0;
        for &p in parts {
            let v = self.value(p);
            let w = v.cols();
            for r in 0..rows {
                out.row_slice_mut(r)[off..off + w].copy_from_slice(v.row_slice(r));
            }
            off += w;
        }
        Ok(self.push(out, Op::Concat(parts.to_vec())))
    }

    /// Columns `start..end`.
    pub fn slice(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let s = self.shape(a);
        if start > end || end > s[1] {
            return Err(shape_err("slice", s, [start, end]));
        }
        let v = self.value(a);
        let mut out = Tensor::zeros(s[0], end - start);
        for r in 0..s[0] {
            out.row_slice_mut(r)
                .copy_from_slice(&v.row_slice(r)[start..end]);
        }
        Ok(self.push(out, Op::SliceCols(a, start)))
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let out = self.value(a).clone().reshaped(rows, cols)?;
        Ok(self.push(out, Op::Reshape(a)))
    }

    /// Rows of `a` selected by `idx` (repeats allowed).
    pub fn gather_rows(&mut self, a: Var, idx: impl Into<Rc<[usize]>>) -> Result<Var> {
        let idx: Rc<[usize]> = idx.into();
        let v = self.value(a);
        let (n, w) = (v.rows(), v.cols());
        if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
            return Err(Error::Index(format!("gather row {bad} out of {n}")));
        }
        let mut out = Tensor::zeros(idx.len(), w);
        for (o, &i) in idx.iter().enumerate() {
            out.row_slice_mut(o).copy_from_slice(v.row_slice(i));
        }
        Ok(self.push(out, Op::GatherRows(a, idx)))
    }

    /// Lookup-table rows for categorical ids.
    pub fn embedding_lookup(&mut self, table: ParamId, ids: &[usize]) -> Result<Var> {
        let t = self.param(table);
        self.gather_rows(t, ids.to_vec())
            .map_err(|e| Error::InvalidConfig(format!("unknown category: {e}")))
    }

    /// Sum rows of `a` into `n_out` buckets: `out[idx[i]] += a[i]`.
    pub fn scatter_add_rows(
        &mut self,
        a: Var,
        idx: impl Into<Rc<[usize]>>,
        n_out: usize,
    ) -> Result<Var> {
        let idx: Rc<[usize]> = idx.into();
        let v = self.value(a);
        if idx.len() != v.rows() {
            return Err(shape_err("scatter_add_rows", v.shape(), [idx.len(), n_out]));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= n_out) {
            return Err(Error::Index(format!("scatter row {bad} out of {n_out}")));
        }
        let mut out = Tensor::zeros(n_out, v.cols());
        for (r, &d) in idx.iter().enumerate() {
            for (o, x) in out.row_slice_mut(d).iter_mut().zip(v.row_slice(r)) {
                *o += x;
            }
        }
        Ok(self.push(out, Op::ScatterAddRows(a, idx)))
    }

    /// Softmax of each column taken independently within each group of rows.
    pub fn softmax_grouped(
        &mut self,
        logits: Var,
        groups: impl Into<Rc<[usize]>>,
        n_groups: usize,
    ) -> Result<Var> {
        let groups: Rc<[usize]> = groups.into();
        let v = self.value(logits);
        let (n, h) = (v.rows(), v.cols());
        if groups.len() != n {
            return Err(shape_err("softmax_grouped", v.shape(), [groups.len(), 1]));
        }
        if let Some(&bad) = groups.iter().find(|&&g| g >= n_groups) {
            return Err(Error::Index(format!(
                "softmax group {bad} out of {n_groups}"
            )));
        }
        let mut maxv = vec![f64::NEG_INFINITY; n_groups * h];
        for (r, &g) in groups.iter().enumerate() {
            for c in 0..h {
                let m = &mut maxv[g * h + c];
                *m = m.max(v.get(r, c));
            }
        }
        let mut out = Tensor::zeros(n, h);
        let mut sum = vec![0.0; n_groups * h];
        for (r, &g) in groups.iter().enumerate() {
            for c in 0..h {
                let e = (v.get(r, c) - maxv[g * h + c]).exp();
                out.set(r, c, e);
                sum[g * h + c] += e;
            }
        }
        for (r, &g) in groups.iter().enumerate() {
            for c in 0..h {
                let val = out.get(r, c) / sum[g * h + c];
                out.set(r, c, val);
            }
        }
        Ok(self.push(out, Op::SegmentSoftmax(logits, groups)))
    }

    /// Per-row, per-head dot products: `out[e, h] = <a[e, head h], b[e, head h]>`.
    pub fn head_dot(&mut self, a: Var, b: Var, heads: usize) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb || sa[1] % heads != 0 {
            return Err(shape_err("head_dot", sa, sb));
        }
        let c = sa[1] / heads;
        let (av, bv) = (self.value(a), self.value(b));
        let mut out = Tensor::zeros(sa[0], heads);
        for r in 0..sa[0] {
            let (ra, rb) = (av.row_slice(r), bv.row_slice(r));
            for hd in 0..heads {
                let s: f64 = ra[hd * c..(hd + 1) * c]
                    .iter()
                    .zip(&rb[hd * c..(hd + 1) * c])
                    .map(|(x, y)| x * y)
                    .sum();
                out.set(r, hd, s);
            }
        }
        Ok(self.push(out, Op::HeadDot(a, b, heads)))
    }

    /// Scale each head block of `v` (rows x heads*c) by `w[row, head]`.
    pub fn head_scale(&mut self, v: Var, w: Var, heads: usize) -> Result<Var> {
        let (sv, sw) = (self.shape(v), self.shape(w));
        if sv[0] != sw[0] || sw[1] != heads || sv[1] % heads != 0 {
            return Err(shape_err("head_scale", sv, sw));
        }
        let c = sv[1] / heads;
        let wv = self.value(w);
        let mut out = self.value(v).clone();
        for r in 0..sv[0] {
            for hd in 0..heads {
                let s = wv.get(r, hd);
                out.row_slice_mut(r)[hd * c..(hd + 1) * c]
                    .iter_mut()
                    .for_each(|x| *x *= s);
            }
        }
        Ok(self.push(out, Op::HeadScale(v, w, heads)))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        for x in out.data_mut() {
            *x = if *x > 30.0 { *x } else { x.exp().ln_1p() };
        }
        self.push(out, Op::Softplus(a))
    }

    pub fn clamp_min(&mut self, a: Var, floor: f64) -> Var {
        let mut out = self.value(a).clone();
        for x in out.data_mut() {
            self.note_branch(*x - floor);
            *x = x.max(floor);
        }
        self.push(out, Op::ClampMin(a, floor))
    }

    /// Running sum along each row over elements `stride` apart.
    pub fn cumsum_strided(&mut self, a: Var, stride: usize) -> Var {
        let mut out = self.value(a).clone();
        let cols = out.cols();
        for r in 0..out.rows() {
            let row = out.row_slice_mut(r);
            for j in stride..cols {
                row[j] += row[j - stride];
            }
        }
        self.push(out, Op::CumsumStrided(a, stride))
    }

    /// Column sums as a `1 x cols` row.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let mut out = Tensor::zeros(1, v.cols());
        for r in 0..v.rows() {
            for (o, x) in out.data_mut().iter_mut().zip(v.row_slice(r)) {
                *o += x;
            }
        }
        self.push(out, Op::SumRows(a))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::SumAll(a))
    }

    /// Inverted dropout; identity when not training or when `p == 0`.
    pub fn dropout(&mut self, a: Var, p: f64) -> Result<Var> {
        if !self.train || p <= 0.0 {
            return Ok(a);
        }
        let s = self.shape(a);
        let keep = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..s[0] * s[1])
            .map(|_| if self.rng.random::<f64>() < p { 0.0 } else { keep })
            .collect();
        self.mul_const(a, Tensor::from_vec(s[0], s[1], mask)?)
    }

    /// `-alpha (1 - p)^gamma log p` for a `1 x 1` probability.
    pub fn focal(&mut self, p: Var, alpha: f64, gamma: f64) -> Result<Var> {
        let s = self.shape(p);
        if s != [1, 1] {
            return Err(shape_err("focal", s, [1, 1]));
        }
        let pv = self.value(p).item();
        let loss = -alpha * (1.0 - pv).max(0.0).powf(gamma) * pv.max(PROB_FLOOR).ln();
        Ok(self.push(Tensor::scalar(loss), Op::Focal { p, alpha, gamma }))
    }

    /// Mean Huber loss against a constant target.
    pub fn huber(&mut self, pred: Var, target: Tensor, delta: f64) -> Result<Var> {
        let s = self.shape(pred);
        if s != target.shape() {
            return Err(shape_err("huber", s, target.shape()));
        }
        let v = self.value(pred).clone();
        let n = v.len().max(1) as f64;
        let mut total = 0.0;
        for (p, t) in v.data().iter().zip(target.data()) {
            let e = (p - t).abs();
            self.note_branch(e - delta);
            total += if e <= delta {
                0.5 * e * e
            } else {
                delta * (e - 0.5 * delta)
            };
        }
        Ok(self.push(
            Tensor::scalar(total / n),
            Op::Huber {
                pred,
                target,
                delta,
            },
        ))
    }

    /// Mean Laplace negative log-likelihood `log(2b) + |x - mu| / b`.
    pub fn laplace_nll(&mut self, mu: Var, b: Var, target: Tensor) -> Result<Var> {
        let (sm, sb) = (self.shape(mu), self.shape(b));
        if sm != sb {
            return Err(shape_err("laplace_nll", sm, sb));
        }
        if sm != target.shape() {
            return Err(shape_err("laplace_nll", sm, target.shape()));
        }
        let (mv, bv) = (self.value(mu).clone(), self.value(b).clone());
        let n = mv.len().max(1) as f64;
        let mut total = 0.0;
        for ((m, b), x) in mv.data().iter().zip(bv.data()).zip(target.data()) {
            self.note_branch(x - m);
            total += (2.0 * b).ln() + (x - m).abs() / b;
        }
        Ok(self.push(Tensor::scalar(total / n), Op::LaplaceNll { mu, b, target }))
    }

    /// Reverse sweep from a scalar loss.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let s = self.shape(loss);
        if s != [1, 1] {
            return Err(Error::Shape {
                op: "backward (loss must be scalar)",
                lhs: s.to_vec(),
                rhs: vec![1, 1],
            });
        }
        let mut grads: Vec<Option<Tensor>> = Vec::with_capacity(loss.0 + 1);
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(Tensor::scalar(1.0));
        let mut out = Gradients(vec![None; self.params.len()]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, g, &mut grads, &mut out);
        }
        Ok(out)
    }

    fn backprop_node(
        &self,
        i: usize,
        g: Tensor,
        grads: &mut [Option<Tensor>],
        out: &mut Gradients,
    ) {
        let node = &self.nodes[i];
        let y = match &node.value {
            Value::Owned(t) => t,
            Value::Param(id) => self.params.value(*id),
        };
        match &node.op {
            Op::Leaf => {}
            Op::Param(id) => accumulate_owned(&mut out.0[id.0], g),
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let mut ga = Tensor::zeros(av.rows(), av.cols());
                gemm(&g, false, bv, true, &mut ga, 0.0);
                let mut gb = Tensor::zeros(bv.rows(), bv.cols());
                gemm(av, true, &g, false, &mut gb, 0.0);
                acc(grads, *a, ga);
                acc(grads, *b, gb);
            }
            Op::AddBias(a, bias) => {
                let mut gb = Tensor::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for (o, x) in gb.data_mut().iter_mut().zip(g.row_slice(r)) {
                        *o += x;
                    }
                }
                acc(grads, *bias, gb);
                acc(grads, *a, g);
            }
            Op::Add(a, b) => {
                acc(grads, *b, g.clone());
                acc(grads, *a, g);
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let mut ga = g.clone();
                ga.data_mut()
                    .iter_mut()
                    .zip(bv.data())
                    .for_each(|(x, y)| *x *= y);
                let mut gb = g;
                gb.data_mut()
                    .iter_mut()
                    .zip(av.data())
                    .for_each(|(x, y)| *x *= y);
                acc(grads, *a, ga);
                acc(grads, *b, gb);
            }
            Op::Scale(a, s) => {
                let mut ga = g;
                ga.data_mut().iter_mut().for_each(|x| *x *= s);
                acc(grads, *a, ga);
            }
            Op::MulConst(a, c) => {
                let mut ga = g;
                ga.data_mut()
                    .iter_mut()
                    .zip(c.data())
                    .for_each(|(x, y)| *x *= y);
                acc(grads, *a, ga);
            }
            Op::LeakyRelu(a, slope) => {
                let av = self.value(*a);
                let mut ga = g;
                ga.data_mut()
                    .iter_mut()
                    .zip(av.data())
                    .for_each(|(x, v)| {
                        if *v <= 0.0 {
                            *x *= slope
                        }
                    });
                acc(grads, *a, ga);
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            } => {
                let gv = self.value(*gain).data().to_vec();
                let (rows, cols) = (g.rows(), g.cols());
                let n = cols as f64;
                let mut ggain = Tensor::zeros(1, cols);
                let mut gbias = Tensor::zeros(1, cols);
                let mut gx = Tensor::zeros(rows, cols);
                let mut dxhat = vec![0.0; cols];
                for r in 0..rows {
                    let (gr, xr) = (g.row_slice(r), xhat.row_slice(r));
                    let mut s1 = 0.0;
                    let mut s2 = 0.0;
                    for c in 0..cols {
                        ggain.data_mut()[c] += gr[c] * xr[c];
                        gbias.data_mut()[c] += gr[c];
                        dxhat[c] = gr[c] * gv[c];
                        s1 += dxhat[c];
                        s2 += dxhat[c] * xr[c];
                    }
                    let k = rstd[r] / n;
                    for (c, o) in gx.row_slice_mut(r).iter_mut().enumerate() {
                        *o = k * (n * dxhat[c] - s1 - xr[c] * s2);
                    }
                }
                acc(grads, *x, gx);
                acc(grads, *gain, ggain);
                acc(grads, *bias, gbias);
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for &p in parts {
                    let w = self.shape(p)[1];
                    let mut gp = Tensor::zeros(g.rows(), w);
                    for r in 0..g.rows() {
                        gp.row_slice_mut(r)
                            .copy_from_slice(&g.row_slice(r)[off..off + w]);
                    }
                    off += w;
                    acc(grads, p, gp);
                }
            }
            Op::SliceCols(a, start) => {
                let s = self.shape(*a);
                let mut ga = Tensor::zeros(s[0], s[1]);
                let w = g.cols();
                for r in 0..s[0] {
                    ga.row_slice_mut(r)[*start..start + w].copy_from_slice(g.row_slice(r));
                }
                acc(grads, *a, ga);
            }
            Op::Reshape(a) => {
                let s = self.shape(*a);
                acc(grads, *a, g.reshaped(s[0], s[1]).expect("same size"));
            }
            Op::GatherRows(a, idx) => {
                let s = self.shape(*a);
                let mut ga = Tensor::zeros(s[0], s[1]);
                for (o, &src) in idx.iter().enumerate() {
                    for (x, y) in ga.row_slice_mut(src).iter_mut().zip(g.row_slice(o)) {
                        *x += y;
                    }
                }
                acc(grads, *a, ga);
            }
            Op::ScatterAddRows(a, idx) => {
                let s = self.shape(*a);
                let mut ga = Tensor::zeros(s[0], s[1]);
                for (r, &d) in idx.iter().enumerate() {
                    ga.row_slice_mut(r).copy_from_slice(g.row_slice(d));
                }
                acc(grads, *a, ga);
            }
            Op::SegmentSoftmax(a, groups) => {
                let (n, h) = (y.rows(), y.cols());
                let n_groups = groups.iter().max().map_or(0, |m| m + 1);
                let mut dot = vec![0.0; n_groups * h];
                for (r, &grp) in groups.iter().enumerate() {
                    for c in 0..h {
                        dot[grp * h + c] += y.get(r, c) * g.get(r, c);
                    }
                }
                let mut ga = Tensor::zeros(n, h);
                for (r, &grp) in groups.iter().enumerate() {
                    for c in 0..h {
                        ga.set(r, c, y.get(r, c) * (g.get(r, c) - dot[grp * h + c]));
                    }
                }
                acc(grads, *a, ga);
            }
            Op::HeadDot(a, b, heads) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let c = av.cols() / heads;
                let mut ga = Tensor::zeros(av.rows(), av.cols());
                let mut gb = Tensor::zeros(bv.rows(), bv.cols());
                for r in 0..av.rows() {
                    for hd in 0..*heads {
                        let s = g.get(r, hd);
                        let span = hd * c..(hd + 1) * c;
                        for j in span {
                            ga.data_mut()[r * av.cols() + j] += s * bv.get(r, j);
                            gb.data_mut()[r * bv.cols() + j] += s * av.get(r, j);
                        }
                    }
                }
                acc(grads, *a, ga);
                acc(grads, *b, gb);
            }
            Op::HeadScale(v, w, heads) => {
                let (vv, wv) = (self.value(*v), self.value(*w));
                let c = vv.cols() / heads;
                let mut gv = g.clone();
                let mut gw = Tensor::zeros(wv.rows(), wv.cols());
                for r in 0..vv.rows() {
                    for hd in 0..*heads {
                        let s = wv.get(r, hd);
                        let mut d = 0.0;
                        for j in hd * c..(hd + 1) * c {
                            d += g.get(r, j) * vv.get(r, j);
                            gv.data_mut()[r * vv.cols() + j] *= s;
                        }
                        gw.set(r, hd, d);
                    }
                }
                acc(grads, *v, gv);
                acc(grads, *w, gw);
            }
            Op::Softplus(a) => {
                let av = self.value(*a);
                let mut ga = g;
                ga.data_mut()
                    .iter_mut()
                    .zip(av.data())
                    .for_each(|(x, v)| *x *= 1.0 / (1.0 + (-v).exp()));
                acc(grads, *a, ga);
            }
            Op::ClampMin(a, floor) => {
                let av = self.value(*a);
                let mut ga = g;
                ga.data_mut()
                    .iter_mut()
                    .zip(av.data())
                    .for_each(|(x, v)| {
                        if *v < *floor {
                            *x = 0.0
                        }
                    });
                acc(grads, *a, ga);
            }
            Op::CumsumStrided(a, stride) => {
                let mut ga = g;
                let cols = ga.cols();
                for r in 0..ga.rows() {
                    let row = ga.row_slice_mut(r);
                    for j in (0..cols.saturating_sub(*stride)).rev() {
                        row[j] += row[j + stride];
                    }
                }
                acc(grads, *a, ga);
            }
            Op::SumRows(a) => {
                let s = self.shape(*a);
                let mut ga = Tensor::zeros(s[0], s[1]);
                for r in 0..s[0] {
                    ga.row_slice_mut(r).copy_from_slice(g.data());
                }
                acc(grads, *a, ga);
            }
            Op::SumAll(a) => {
                let s = self.shape(*a);
                acc(grads, *a, Tensor::full(s[0], s[1], g.item()));
            }
            Op::Focal { p, alpha, gamma } => {
                let pv = self.value(*p).item();
                let q = (1.0 - pv).max(0.0);
                let logp = pv.max(PROB_FLOOR).ln();
                let dlog = if pv > PROB_FLOOR { 1.0 / pv } else { 0.0 };
                let dmod = if *gamma == 0.0 || q == 0.0 {
                    0.0
                } else {
                    -gamma * q.powf(gamma - 1.0)
                };
                let d = -alpha * (dmod * logp + q.powf(*gamma) * dlog);
                acc(grads, *p, Tensor::scalar(d * g.item()));
            }
            Op::Huber {
                pred,
                target,
                delta,
            } => {
                let pv = self.value(*pred);
                let n = pv.len().max(1) as f64;
                let mut ga = Tensor::zeros(pv.rows(), pv.cols());
                for ((o, p), t) in ga.data_mut().iter_mut().zip(pv.data()).zip(target.data()) {
                    *o = (p - t).clamp(-delta, *delta) / n * g.item();
                }
                acc(grads, *pred, ga);
            }
            Op::LaplaceNll { mu, b, target } => {
                let (mv, bv) = (self.value(*mu), self.value(*b));
                let n = mv.len().max(1) as f64;
                let s = g.item() / n;
                let mut gm = Tensor::zeros(mv.rows(), mv.cols());
                let mut gbt = Tensor::zeros(bv.rows(), bv.cols());
                for k in 0..mv.len() {
                    let (m, bb, x) = (mv.data()[k], bv.data()[k], target.data()[k]);
                    let e = x - m;
                    let sign = if e > 0.0 {
                        1.0
                    } else if e < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
                    gm.data_mut()[k] = -sign / bb * s;
                    gbt.data_mut()[k] = (1.0 / bb - e.abs() / (bb * bb)) * s;
                }
                acc(grads, *mu, gm);
                acc(grads, *b, gbt);
            }
        }
    }
}

fn accumulate_owned(slot: &mut Option<Tensor>, g: Tensor) {
    match slot {
        Some(t) => t.add_assign(&g),
        None => *slot = Some(g),
    }
}

#[inline]
fn acc(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    accumulate_owned(&mut grads[v.0], g);
}
