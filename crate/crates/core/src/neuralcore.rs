//! Minimal differentiable numeric kernel.
//!
//! A small eager tape ([`Tape`]) records every primitive as it executes and
//! replays the chain rule backwards on demand. The primitive set is exactly
//! what the model needs: dense products, a width-3 same-length convolution,
//! channel-split gating, sigmoid/softmax, mean pooling, the two loss terms,
//! and the glue around them. Training runs at 32-bit precision; gradient
//! verification runs the same graph at 64-bit.

use std::fmt;
use std::iter::Sum;

use num_traits::Float;
use rand::Rng;
use thiserror::Error;

/// Stability epsilon clamped into the reconstruction loss logs.
pub const LOSS_EPSILON: f64 = 1e-7;

/// Floating-point scalar the kernel is generic over.
pub trait Real:
    Float + num_traits::NumAssignOps + Sum + Send + Sync + fmt::Debug + fmt::Display + 'static
{
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NeuralError {
    #[error("{op}: shape {left:?} incompatible with {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("{0}")]
    UnsupportedComposition(String),
    #[error("loss input out of domain: {0}")]
    DomainError(String),
}

fn shape_err(op: &'static str, left: (usize, usize), right: (usize, usize)) -> NeuralError {
    NeuralError::ShapeMismatch { op, left, right }
}

/// Dense row-major matrix of scalars.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor2<F> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: Real> Tensor2<F> {
    pub fn new(rows: usize, cols: usize, data: Vec<F>) -> Result<Self, NeuralError> {
        if data.len() != rows * cols {
            return Err(shape_err("new", (rows, cols), (data.len(), 1)));
        }
        Ok(Tensor2 { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor2 {
            rows,
            cols,
            data: vec![F::zero(); rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, v: F) -> Self {
        Tensor2 {
            rows,
            cols,
            data: vec![v; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, r: usize, c: usize) -> F {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: F) {
        self.data[r * self.cols + c] = v;
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    /// Column index of the largest entry in row `r`; first wins on ties.
    pub fn argmax_row(&self, r: usize) -> usize {
        let row = &self.data[r * self.cols..(r + 1) * self.cols];
        let mut best = 0;
        for (i, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = i;
            }
        }
        best
    }

    pub fn add_assign(&mut self, other: &Tensor2<F>) -> Result<(), NeuralError> {
        if self.shape() != other.shape() {
            return Err(shape_err("add_assign", self.shape(), other.shape()));
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale_assign(&mut self, k: F) {
        for v in &mut self.data {
            *v *= k;
        }
    }

    /// Elementwise cast between scalar precisions.
    pub fn convert<G: Real>(&self) -> Tensor2<G> {
        Tensor2 {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| G::from_f64(v.as_f64())).collect(),
        }
    }
}

/// Scaled uniform init over ±sqrt(6 / (fan_in + fan_out)) with fan sizes
/// taken from the matrix shape; sampled at 64-bit then narrowed so every
/// precision sees the same values.
pub fn glorot_uniform<F: Real, R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Tensor2<F> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| F::from_f64((rng.random::<f64>() * 2.0 - 1.0) * bound))
        .collect();
    Tensor2 { rows, cols, data }
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op<F> {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    MatMul(usize, usize),
    AddRowBroadcast(usize, usize),
    Sigmoid(usize),
    Exp(usize),
    Scale(usize, F),
    SumAll(usize),
    MeanRows(usize),
    SoftmaxRows(usize),
    Conv1dSame(usize, usize),
    SplitCols(usize, usize, usize),
    Reshape(usize),
    BceSum(usize, Tensor2<F>),
    KlSum(usize, usize),
}

struct Node<F> {
    value: Tensor2<F>,
    op: Op<F>,
}

/// Eager computation recorder: every operation evaluates immediately and
/// appends one node, so parents always precede children and [`Tape::backward`]
/// is a single reverse sweep.
pub struct Tape<F: Real> {
    nodes: Vec<Node<F>>,
}

impl<F: Real> Default for Tape<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Real> Tape<F> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    fn push(&mut self, value: Tensor2<F>, op: Op<F>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor2<F>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor2<F> {
        &self.nodes[v.0].value
    }

    /// Reads a 1×1 value back as a scalar.
    pub fn scalar(&self, v: Var) -> Result<f64, NeuralError> {
        let t = self.value(v);
        if t.shape() != (1, 1) {
            return Err(NeuralError::UnsupportedComposition(format!(
                "expected scalar, got shape {:?}",
                t.shape()
            )));
        }
        Ok(t.get(0, 0).as_f64())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NeuralError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err("add", ta.shape(), tb.shape()));
        }
        let mut out = ta.clone();
        for (o, &v) in out.data.iter_mut().zip(&tb.data) {
            *o += v;
        }
        Ok(self.push(out, Op::Add(a.0, b.0)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NeuralError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err("sub", ta.shape(), tb.shape()));
        }
        let mut out = ta.clone();
        for (o, &v) in out.data.iter_mut().zip(&tb.data) {
            *o -= v;
        }
        Ok(self.push(out, Op::Sub(a.0, b.0)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NeuralError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err("mul", ta.shape(), tb.shape()));
        }
        let mut out = ta.clone();
        for (o, &v) in out.data.iter_mut().zip(&tb.data) {
            *o *= v;
        }
        Ok(self.push(out, Op::Mul(a.0, b.0)))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NeuralError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.cols != tb.rows {
            return Err(shape_err("matmul", ta.shape(), tb.shape()));
        }
        let (m, k, n) = (ta.rows, ta.cols, tb.cols);
        let mut out = Tensor2::zeros(m, n);
        for i in 0..m {
            for p in 0..k {
                let av = ta.get(i, p);
                if av == F::zero() {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += av * tb.get(p, j);
                }
            }
        }
        Ok(self.push(out, Op::MatMul(a.0, b.0)))
    }

    /// Adds a 1×C row vector to every row of an R×C matrix.
    pub fn add_row_broadcast(&mut self, x: Var, bias: Var) -> Result<Var, NeuralError> {
        let (tx, tb) = (self.value(x), self.value(bias));
        if tb.rows != 1 || tb.cols != tx.cols {
            return Err(shape_err("add_row_broadcast", tx.shape(), tb.shape()));
        }
        let mut out = tx.clone();
        for r in 0..out.rows {
            for c in 0..out.cols {
                out.data[r * out.cols + c] += tb.data[c];
            }
        }
        Ok(self.push(out, Op::AddRowBroadcast(x.0, bias.0)))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        for v in &mut out.data {
            *v = F::one() / (F::one() + (-*v).exp());
        }
        self.push(out, Op::Sigmoid(x.0))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        for v in &mut out.data {
            *v = v.exp();
        }
        self.push(out, Op::Exp(x.0))
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Var {
        let kf = F::from_f64(k);
        let mut out = self.value(x).clone();
        out.scale_assign(kf);
        self.push(out, Op::Scale(x.0, kf))
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let s: F = self.value(x).data.iter().copied().sum();
        self.push(Tensor2::filled(1, 1, s), Op::SumAll(x.0))
    }

    /// Column means: R×C collapses to 1×C.
    pub fn mean_rows(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let inv = F::from_f64(1.0 / t.rows as f64);
        let mut out = Tensor2::zeros(1, t.cols);
        for r in 0..t.rows {
            for c in 0..t.cols {
                out.data[c] += t.get(r, c) * inv;
            }
        }
        self.push(out, Op::MeanRows(x.0))
    }

    /// Row-wise softmax with max-shift stabilization.
    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let mut out = t.clone();
        for r in 0..t.rows {
            let row = &mut out.data[r * t.cols..(r + 1) * t.cols];
            let max = row.iter().copied().fold(F::neg_infinity(), F::max);
            let mut total = F::zero();
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            for v in row.iter_mut() {
                *v /= total;
            }
        }
        self.push(out, Op::SoftmaxRows(x.0))
    }

    /// Width-3 convolution along the rows with one zero row of padding on
    /// each end, so the output has as many rows as the input. `kernels`
    /// packs the three taps as (3·C_in)×C_out.
    pub fn conv1d_same(&mut self, x: Var, kernels: Var) -> Result<Var, NeuralError> {
        let (tx, tw) = (self.value(x), self.value(kernels));
        if tw.rows != 3 * tx.cols {
            return Err(shape_err("conv1d_same", tx.shape(), tw.shape()));
        }
        let (rows, cin, cout) = (tx.rows, tx.cols, tw.cols);
        let mut out = Tensor2::zeros(rows, cout);
        for r in 0..rows {
            for t in 0..3 {
                let src = r as isize + t as isize - 1;
                if src < 0 || src >= rows as isize {
                    continue;
                }
                let src = src as usize;
                for c in 0..cin {
                    let xv = tx.get(src, c);
                    if xv == F::zero() {
                        continue;
                    }
                    for o in 0..cout {
                        out.data[r * cout + o] += xv * tw.get(t * cin + c, o);
                    }
                }
            }
        }
        Ok(self.push(out, Op::Conv1dSame(x.0, kernels.0)))
    }

    /// Column slice `start..end` of the source.
    pub fn split_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var, NeuralError> {
        let t = self.value(x);
        if start >= end || end > t.cols {
            return Err(shape_err("split_cols", t.shape(), (start, end)));
        }
        let width = end - start;
        let mut out = Tensor2::zeros(t.rows, width);
        for r in 0..t.rows {
            for c in 0..width {
                out.data[r * width + c] = t.get(r, start + c);
            }
        }
        Ok(self.push(out, Op::SplitCols(x.0, start, end)))
    }

    pub fn reshape(&mut self, x: Var, rows: usize, cols: usize) -> Result<Var, NeuralError> {
        let t = self.value(x);
        if rows * cols != t.len() {
            return Err(shape_err("reshape", t.shape(), (rows, cols)));
        }
        let out = Tensor2 {
            rows,
            cols,
            data: t.data.clone(),
        };
        Ok(self.push(out, Op::Reshape(x.0)))
    }

    /// Elementwise binary cross-entropy against a fixed 0/1 target, summed
    /// over all entries. Predictions are clamped to [ε, 1−ε] before the
    /// logs; the clamp has zero gradient outside its range.
    pub fn bce_sum(&mut self, y: Var, target: &Tensor2<F>) -> Result<Var, NeuralError> {
        let ty = self.value(y);
        if ty.shape() != target.shape() {
            return Err(shape_err("bce_sum", ty.shape(), target.shape()));
        }
        let eps = F::from_f64(LOSS_EPSILON);
        let one = F::one();
        let mut total = F::zero();
        for (&yv, &xv) in ty.data.iter().zip(&target.data) {
            if !yv.is_finite() {
                return Err(NeuralError::DomainError(format!(
                    "non-finite prediction {yv}"
                )));
            }
            let yc = yv.max(eps).min(one - eps);
            total -= xv * yc.ln() + (one - xv) * (one - yc).ln();
        }
        Ok(self.push(Tensor2::filled(1, 1, total), Op::BceSum(y.0, target.clone())))
    }

    /// Divergence of a diagonal Gaussian from the standard normal, summed
    /// over dimensions: −½ Σ (1 + logσ² − μ² − σ²).
    pub fn kl_sum(&mut self, mu: Var, log_var: Var) -> Result<Var, NeuralError> {
        let (tm, tv) = (self.value(mu), self.value(log_var));
        if tm.shape() != tv.shape() {
            return Err(shape_err("kl_sum", tm.shape(), tv.shape()));
        }
        let (one, half) = (F::one(), F::from_f64(0.5));
        let mut total = F::zero();
        for (&m, &lv) in tm.data.iter().zip(&tv.data) {
            total -= half * (one + lv - m * m - lv.exp());
        }
        Ok(self.push(Tensor2::filled(1, 1, total), Op::KlSum(mu.0, log_var.0)))
    }

    /// Gradients of a scalar loss with respect to every recorded value.
    pub fn backward(&self, loss: Var) -> Result<Gradients<F>, NeuralError> {
        if self.value(loss).shape() != (1, 1) {
            return Err(NeuralError::UnsupportedComposition(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor2<F>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor2::filled(1, 1, F::one()));

        for i in (0..=loss.0).rev() {
            let Some(dout) = grads[i].clone() else {
                continue;
            };
            match &self.nodes[i].op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    self.accum(&mut grads, *a, &dout);
                    self.accum(&mut grads, *b, &dout);
                }
                Op::Sub(a, b) => {
                    self.accum(&mut grads, *a, &dout);
                    let mut neg = dout.clone();
                    neg.scale_assign(-F::one());
                    self.accum(&mut grads, *b, &neg);
                }
                Op::Mul(a, b) => {
                    let mut da = dout.clone();
                    for (d, &v) in da.data.iter_mut().zip(&self.nodes[*b].value.data) {
                        *d *= v;
                    }
                    let mut db = dout.clone();
                    for (d, &v) in db.data.iter_mut().zip(&self.nodes[*a].value.data) {
                        *d *= v;
                    }
                    self.accum(&mut grads, *a, &da);
                    self.accum(&mut grads, *b, &db);
                }
                Op::MatMul(a, b) => {
                    let ta = &self.nodes[*a].value;
                    let tb = &self.nodes[*b].value;
                    let (m, k, n) = (ta.rows, ta.cols, tb.cols);
                    let mut da = Tensor2::zeros(m, k);
                    for i in 0..m {
                        for p in 0..k {
                            let mut s = F::zero();
                            for j in 0..n {
                                s += dout.get(i, j) * tb.get(p, j);
                            }
                            da.data[i * k + p] = s;
                        }
                    }
                    let mut db = Tensor2::zeros(k, n);
                    for p in 0..k {
                        for j in 0..n {
                            let mut s = F::zero();
                            for i in 0..m {
                                s += ta.get(i, p) * dout.get(i, j);
                            }
                            db.data[p * n + j] = s;
                        }
                    }
                    self.accum(&mut grads, *a, &da);
                    self.accum(&mut grads, *b, &db);
                }
                Op::AddRowBroadcast(x, bias) => {
                    self.accum(&mut grads, *x, &dout);
                    let mut db = Tensor2::zeros(1, dout.cols);
                    for r in 0..dout.rows {
                        for c in 0..dout.cols {
                            db.data[c] += dout.get(r, c);
                        }
                    }
                    self.accum(&mut grads, *bias, &db);
                }
                Op::Sigmoid(x) => {
                    let s = &self.nodes[i].value;
                    let mut dx = dout.clone();
                    for (d, &sv) in dx.data.iter_mut().zip(&s.data) {
                        *d *= sv * (F::one() - sv);
                    }
                    self.accum(&mut grads, *x, &dx);
                }
                Op::Exp(x) => {
                    let e = &self.nodes[i].value;
                    let mut dx = dout.clone();
                    for (d, &ev) in dx.data.iter_mut().zip(&e.data) {
                        *d *= ev;
                    }
                    self.accum(&mut grads, *x, &dx);
                }
                Op::Scale(x, k) => {
                    let mut dx = dout.clone();
                    dx.scale_assign(*k);
                    self.accum(&mut grads, *x, &dx);
                }
                Op::SumAll(x) => {
                    let src = &self.nodes[*x].value;
                    let dx = Tensor2::filled(src.rows, src.cols, dout.get(0, 0));
                    self.accum(&mut grads, *x, &dx);
                }
                Op::MeanRows(x) => {
                    let src = &self.nodes[*x].value;
                    let inv = F::from_f64(1.0 / src.rows as f64);
                    let mut dx = Tensor2::zeros(src.rows, src.cols);
                    for r in 0..src.rows {
                        for c in 0..src.cols {
                            dx.data[r * src.cols + c] = dout.get(0, c) * inv;
                        }
                    }
                    self.accum(&mut grads, *x, &dx);
                }
                Op::SoftmaxRows(x) => {
                    let s = &self.nodes[i].value;
                    let mut dx = Tensor2::zeros(s.rows, s.cols);
                    for r in 0..s.rows {
                        let mut dot = F::zero();
                        for c in 0..s.cols {
                            dot += dout.get(r, c) * s.get(r, c);
                        }
                        for c in 0..s.cols {
                            dx.data[r * s.cols + c] = s.get(r, c) * (dout.get(r, c) - dot);
                        }
                    }
                    self.accum(&mut grads, *x, &dx);
                }
                Op::Conv1dSame(x, w) => {
                    let tx = &self.nodes[*x].value;
                    let tw = &self.nodes[*w].value;
                    let (rows, cin, cout) = (tx.rows, tx.cols, tw.cols);
                    let mut dx = Tensor2::zeros(rows, cin);
                    let mut dw = Tensor2::zeros(tw.rows, tw.cols);
                    for r in 0..rows {
                        for t in 0..3 {
                            let src = r as isize + t as isize - 1;
                            if src < 0 || src >= rows as isize {
                                continue;
                            }
                            let src = src as usize;
                            for o in 0..cout {
                                let dv = dout.get(r, o);
                                if dv == F::zero() {
                                    continue;
                                }
                                for c in 0..cin {
                                    dx.data[src * cin + c] += dv * tw.get(t * cin + c, o);
                                    dw.data[(t * cin + c) * cout + o] += dv * tx.get(src, c);
                                }
                            }
                        }
                    }
                    self.accum(&mut grads, *x, &dx);
                    self.accum(&mut grads, *w, &dw);
                }
                Op::SplitCols(x, start, _end) => {
                    let src = &self.nodes[*x].value;
                    let mut dx = Tensor2::zeros(src.rows, src.cols);
                    for r in 0..dout.rows {
                        for c in 0..dout.cols {
                            dx.data[r * src.cols + start + c] = dout.get(r, c);
                        }
                    }
                    self.accum(&mut grads, *x, &dx);
                }
                Op::Reshape(x) => {
                    let src = &self.nodes[*x].value;
                    let dx = Tensor2 {
                        rows: src.rows,
                        cols: src.cols,
                        data: dout.data.clone(),
                    };
                    self.accum(&mut grads, *x, &dx);
                }
                Op::BceSum(y, target) => {
                    let ty = &self.nodes[*y].value;
                    let eps = F::from_f64(LOSS_EPSILON);
                    let one = F::one();
                    let scale = dout.get(0, 0);
                    let mut dy = Tensor2::zeros(ty.rows, ty.cols);
                    for (i, (&yv, &xv)) in ty.data.iter().zip(&target.data).enumerate() {
                        if yv > eps && yv < one - eps {
                            let yc = yv;
                            dy.data[i] = scale * (-xv / yc + (one - xv) / (one - yc));
                        }
                    }
                    self.accum(&mut grads, *y, &dy);
                }
                Op::KlSum(mu, log_var) => {
                    let tm = &self.nodes[*mu].value;
                    let tv = &self.nodes[*log_var].value;
                    let scale = dout.get(0, 0);
                    let half = F::from_f64(0.5);
                    let mut dm = Tensor2::zeros(tm.rows, tm.cols);
                    let mut dv = Tensor2::zeros(tv.rows, tv.cols);
                    for i in 0..tm.data.len() {
                        dm.data[i] = scale * tm.data[i];
                        dv.data[i] = scale * half * (tv.data[i].exp() - F::one());
                    }
                    self.accum(&mut grads, *mu, &dm);
                    self.accum(&mut grads, *log_var, &dv);
                }
            }
        }
        Ok(Gradients { grads })
    }

    fn accum(&self, grads: &mut [Option<Tensor2<F>>], target: usize, delta: &Tensor2<F>) {
        match &mut grads[target] {
            Some(g) => g.add_assign(delta).expect("gradient shape drift"),
            slot @ None => *slot = Some(delta.clone()),
        }
    }
}

/// Result of a backward sweep; indexed by the same handles as the tape.
pub struct Gradients<F> {
    grads: Vec<Option<Tensor2<F>>>,
}

impl<F: Real> Gradients<F> {
    /// Gradient with respect to `v`; zero-shaped `None` means the loss does
    /// not depend on it.
    pub fn wrt(&self, v: Var) -> Option<&Tensor2<F>> {
        self.grads[v.0].as_ref()
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor2<F>> {
        self.grads[v.0].take()
    }
}

/// Weights of one gated convolutional layer: width-3 kernels over `cin`
/// input channels producing 2·G output channels that the gate splits into
/// halves A (content) and B (gate), plus per-output-channel bias.
#[derive(Clone, Debug, PartialEq)]
pub struct GatedConvParams<F> {
    /// (3·C_in) × (2·G) tap matrix.
    pub kernels: Tensor2<F>,
    /// 1 × (2·G) bias row.
    pub bias: Tensor2<F>,
}

impl<F: Real> GatedConvParams<F> {
    pub fn zeros(cin: usize, gate_channels: usize) -> Self {
        GatedConvParams {
            kernels: Tensor2::zeros(3 * cin, 2 * gate_channels),
            bias: Tensor2::zeros(1, 2 * gate_channels),
        }
    }

    pub fn init<R: Rng>(cin: usize, gate_channels: usize, rng: &mut R) -> Self {
        GatedConvParams {
            kernels: glorot_uniform(3 * cin, 2 * gate_channels, rng),
            bias: Tensor2::zeros(1, 2 * gate_channels),
        }
    }

    pub fn gate_channels(&self) -> usize {
        self.bias.cols() / 2
    }
}

/// Records one gated convolution on the tape: conv → bias → split into
/// halves A and B → A ⊗ σ(B). Output is rows × G.
pub fn gated_conv<F: Real>(
    tape: &mut Tape<F>,
    kernels: Var,
    bias: Var,
    x: Var,
) -> Result<Var, NeuralError> {
    let conv = tape.conv1d_same(x, kernels)?;
    let pre = tape.add_row_broadcast(conv, bias)?;
    let width = tape.value(pre).cols();
    if width % 2 != 0 {
        return Err(shape_err("gated_conv", tape.value(pre).shape(), (0, 2)));
    }
    let a = tape.split_cols(pre, 0, width / 2)?;
    let b = tape.split_cols(pre, width / 2, width)?;
    let gate = tape.sigmoid(b);
    tape.mul(a, gate)
}

/// One-shot gated convolution on plain tensors.
pub fn gated_conv_forward<F: Real>(
    p: &GatedConvParams<F>,
    x: &Tensor2<F>,
) -> Result<Tensor2<F>, NeuralError> {
    let mut tape = Tape::new();
    let k = tape.leaf(p.kernels.clone());
    let b = tape.leaf(p.bias.clone());
    let xv = tape.leaf(x.clone());
    let h = gated_conv(&mut tape, k, b, xv)?;
    Ok(tape.value(h).clone())
}

/// Adaptive-moment update hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment accumulators, one pair per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState<F> {
    pub config: AdamConfig,
    pub step_count: u64,
    m: Vec<Tensor2<F>>,
    v: Vec<Tensor2<F>>,
}

impl<F: Real> OptimizerState<F> {
    pub fn new(config: AdamConfig, params: &[Tensor2<F>]) -> Self {
        OptimizerState {
            config,
            step_count: 0,
            m: params.iter().map(|p| Tensor2::zeros(p.rows, p.cols)).collect(),
            v: params.iter().map(|p| Tensor2::zeros(p.rows, p.cols)).collect(),
        }
    }

    /// One bias-corrected moment update applied in place.
    pub fn step(
        &mut self,
        params: &mut [Tensor2<F>],
        grads: &[Tensor2<F>],
    ) -> Result<(), NeuralError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(shape_err(
                "optimizer_step",
                (params.len(), grads.len()),
                (self.m.len(), self.m.len()),
            ));
        }
        for (p, g) in params.iter().zip(grads) {
            if p.shape() != g.shape() {
                return Err(shape_err("optimizer_step", p.shape(), g.shape()));
            }
        }
        self.step_count += 1;
        let b1 = F::from_f64(self.config.beta1);
        let b2 = F::from_f64(self.config.beta2);
        let lr = F::from_f64(self.config.learning_rate);
        let eps = F::from_f64(self.config.epsilon);
        let c1 = F::from_f64(1.0 - self.config.beta1.powi(self.step_count as i32));
        let c2 = F::from_f64(1.0 - self.config.beta2.powi(self.step_count as i32));
        let one = F::one();
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for i in 0..p.data.len() {
                let gv = g.data[i];
                m.data[i] = b1 * m.data[i] + (one - b1) * gv;
                v.data[i] = b2 * v.data[i] + (one - b2) * gv * gv;
                let m_hat = m.data[i] / c1;
                let v_hat = v.data[i] / c2;
                p.data[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Outcome of comparing a gradient against central differences.
#[derive(Clone, Copy, Debug)]
pub struct FdReport {
    pub max_rel_error: f64,
    /// (tensor index, row, col) of the worst coordinate.
    pub worst_coordinate: (usize, usize, usize),
    pub passed: bool,
}

/// Relative error with a floor on the denominator, so tiny gradients are
/// judged on absolute error.
fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / f64::max(a.abs().max(b.abs()), 1e-2)
}

fn compare_grads(
    build: &dyn Fn(&mut Tape<f64>, &[Var]) -> Result<Var, NeuralError>,
    at: &[Tensor2<f64>],
    step: f64,
    tolerance: f64,
    analytic: &[Tensor2<f64>],
) -> Result<FdReport, NeuralError> {
    assert!(step > 0.0, "finite-difference step must be positive");
    let eval = |point: &[Tensor2<f64>]| -> Result<f64, NeuralError> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = point.iter().map(|t| tape.leaf(t.clone())).collect();
        let loss = build(&mut tape, &vars)?;
        tape.scalar(loss)
    };

    let mut worst = 0.0;
    let mut worst_at = (0, 0, 0);
    let mut point = at.to_vec();
    for (ti, tensor) in at.iter().enumerate() {
        for r in 0..tensor.rows() {
            for c in 0..tensor.cols() {
                let orig = tensor.get(r, c);
                point[ti].set(r, c, orig + step);
                let plus = eval(&point)?;
                point[ti].set(r, c, orig - step);
                let minus = eval(&point)?;
                point[ti].set(r, c, orig);
                let numeric = (plus - minus) / (2.0 * step);
                let err = rel_error(analytic[ti].get(r, c), numeric);
                if err > worst {
                    worst = err;
                    worst_at = (ti, r, c);
                }
            }
        }
    }
    Ok(FdReport {
        max_rel_error: worst,
        worst_coordinate: worst_at,
        passed: worst <= tolerance,
    })
}

/// Checks the tape's own gradients of `build`'s scalar loss against central
/// finite differences at 64-bit precision, coordinate by coordinate.
pub fn finite_diff_check(
    build: &dyn Fn(&mut Tape<f64>, &[Var]) -> Result<Var, NeuralError>,
    at: &[Tensor2<f64>],
    step: f64,
    tolerance: f64,
) -> Result<FdReport, NeuralError> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = at.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = build(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;
    let analytic: Vec<Tensor2<f64>> = vars
        .iter()
        .zip(at)
        .map(|(v, t)| {
            grads
                .wrt(*v)
                .cloned()
                .unwrap_or_else(|| Tensor2::zeros(t.rows(), t.cols()))
        })
        .collect();
    compare_grads(build, at, step, tolerance, &analytic)
}

/// Same comparison against a caller-supplied gradient, for validating
/// gradients produced elsewhere (or deliberately corrupted ones).
pub fn compare_gradient_to_finite_diff(
    build: &dyn Fn(&mut Tape<f64>, &[Var]) -> Result<Var, NeuralError>,
    at: &[Tensor2<f64>],
    step: f64,
    tolerance: f64,
    gradient: &[Tensor2<f64>],
) -> Result<FdReport, NeuralError> {
    compare_grads(build, at, step, tolerance, gradient)
}
