//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! A [`Graph`] records every operation as it is evaluated. Leaves are either
//! parameters (gradients requested) or constants. [`Graph::backward`] walks the
//! tape once in reverse and returns the gradient of a scalar node with respect
//! to every parameter leaf that influences it.

use super::tensor::{gemm, Tensor};
use super::NumericsError;

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Tanh(Var),
    Exp(Var),
    Log(Var),
    Square(Var),
    Huber(Var, f64),
    Clamp(Var, f64, f64),
    Min(Var, Var),
    Mean(Var),
    Sum(Var),
    SumCols(Var),
    RowCosine(Var, Var),
    NormFloor(Var, f64),
    SoftmaxRows(Var),
    ConcatCols(Var, Var),
    SliceCols(Var, usize, usize),
    RepeatRows(Var, usize),
    GatherRows(Var, Vec<usize>),
    Reshape(Var),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::AddRow(..) => "add_row",
            Op::MulRow(..) => "mul_row",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::Relu(..) => "relu",
            Op::Tanh(..) => "tanh",
            Op::Exp(..) => "exp",
            Op::Log(..) => "log",
            Op::Square(..) => "square",
            Op::Huber(..) => "huber",
            Op::Clamp(..) => "clamp",
            Op::Min(..) => "min",
            Op::Mean(..) => "mean",
            Op::Sum(..) => "sum",
            Op::SumCols(..) => "sum_cols",
            Op::RowCosine(..) => "row_cosine",
            Op::NormFloor(..) => "norm_floor",
            Op::SoftmaxRows(..) => "softmax_rows",
            Op::ConcatCols(..) => "concat_cols",
            Op::SliceCols(..) => "slice_cols",
            Op::RepeatRows(..) => "repeat_rows",
            Op::GatherRows(..) => "gather_rows",
            Op::Reshape(..) => "reshape",
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Recording tape. One graph per loss evaluation; drop it afterwards.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    first_non_finite: Option<(usize, &'static str)>,
    kink_margin: f64,
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. `v`; `None` when `v` does not influence it.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}

impl Graph {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), first_non_finite: None, kink_margin: f64::INFINITY }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Smallest distance, over every differentiable-path input seen so far, to
    /// a point where some recorded op is not differentiable (rectifier at 0,
    /// `min` tie, clamp bound, Huber threshold, norm floor).
    pub fn kink_margin(&self) -> f64 {
        self.kink_margin
    }

    /// First node whose value was non-finite, if any.
    pub fn non_finite(&self) -> Option<(usize, &'static str)> {
        self.first_non_finite
    }

    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        let id = self.nodes.len();
        if self.first_non_finite.is_none() && !value.is_finite() {
            self.first_non_finite = Some((id, op.name()));
        }
        self.nodes.push(Node { value, op, requires_grad });
        Var(id)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn note_margin(&mut self, tracked: bool, m: f64) {
        if tracked && m < self.kink_margin {
            self.kink_margin = m;
        }
    }

    fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> NumericsError {
        NumericsError::ShapeMismatch { op, detail: format!("{:?} vs {:?}", a.shape(), b.shape()) }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let out = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    /// `a[i, j] + row[j]` for a `[n, m]` matrix and a length-`m` row.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, NumericsError> {
        let out = self.broadcast_row(a, row, "add_row", |x, y| x + y)?;
        let rg = self.rg(&[a, row]);
        Ok(self.push(out, Op::AddRow(a, row), rg))
    }

    /// `a[i, j] * row[j]`.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var, NumericsError> {
        let out = self.broadcast_row(a, row, "mul_row", |x, y| x * y)?;
        let rg = self.rg(&[a, row]);
        Ok(self.push(out, Op::MulRow(a, row), rg))
    }

    fn broadcast_row(
        &self,
        a: Var,
        row: Var,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor, NumericsError> {
        let (av, rv) = (self.value(a), self.value(row));
        let m = av.cols();
        if rv.len() != m {
            return Err(Self::mismatch(op, av, rv));
        }
        let data = av.data().chunks_exact(m.max(1)).flat_map(|r| r.iter().zip(rv.data()).map(|(&x, &y)| f(x, y))).collect();
        Tensor::new(av.shape().to_vec(), data)
    }

    fn elementwise2(
        &mut self,
        a: Var,
        b: Var,
        op: Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Var, NumericsError> {
        let out = self
            .value(a)
            .zip_map(self.value(b), f)
            .map_err(|_| Self::mismatch(op.name(), self.value(a), self.value(b)))?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.elementwise2(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.elementwise2(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.elementwise2(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    /// Elementwise minimum; ties route the gradient to `a`.
    pub fn min(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let tracked = self.rg(&[a, b]);
        if tracked {
            let m = self
                .value(a)
                .data()
                .iter()
                .zip(self.value(b).data())
                .map(|(x, y)| (x - y).abs())
                .fold(f64::INFINITY, f64::min);
            self.note_margin(true, m);
        }
        self.elementwise2(a, b, Op::Min(a, b), f64::min)
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let out = self.value(a).map(f);
        let rg = self.rg(&[a]);
        self.push(out, op, rg)
    }

    fn margin_of(&mut self, a: Var, m: impl Fn(f64) -> f64) {
        if self.rg(&[a]) {
            let v = self.value(a).data().iter().map(|&x| m(x)).fold(f64::INFINITY, f64::min);
            self.note_margin(true, v);
        }
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, Op::Scale(a, c), |x| c * x)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, Op::AddScalar(a), |x| x + c)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.margin_of(a, f64::abs);
        self.unary(a, Op::Relu(a), |x| x.max(0.0))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Op::Tanh(a), f64::tanh)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Op::Exp(a), f64::exp)
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, Op::Log(a), f64::ln)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, Op::Square(a), |x| x * x)
    }

    /// Huber penalty with threshold `delta`: `½r²` inside, `δ(|r| − ½δ)` outside.
    pub fn huber(&mut self, a: Var, delta: f64) -> Var {
        self.margin_of(a, |x| (x.abs() - delta).abs());
        self.unary(a, Op::Huber(a, delta), |x| huber(x, delta))
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.margin_of(a, |x| (x - lo).abs().min((x - hi).abs()));
        self.unary(a, Op::Clamp(a, lo, hi), |x| x.clamp(lo, hi))
    }

    /// Mean of all elements, as a scalar.
    pub fn mean(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).mean());
        let rg = self.rg(&[a]);
        self.push(out, Op::Mean(a), rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        let rg = self.rg(&[a]);
        self.push(out, Op::Sum(a), rg)
    }

    /// Row sums: `[n, m] -> [n, 1]`.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let n = av.rows();
        let data = (0..n).map(|r| av.row(r).iter().sum()).collect();
        let out = Tensor::new(vec![n, 1], data).expect("row sums");
        let rg = self.rg(&[a]);
        self.push(out, Op::SumCols(a), rg)
    }

    /// Row-wise cosine similarity `[n, d] × [n, d] -> [n, 1]`, clamped to
    /// `[-1, 1]`. Rows with zero norm yield 0.
    pub fn row_cosine(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Self::mismatch("row_cosine", av, bv));
        }
        let n = av.rows();
        let data = (0..n).map(|r| cosine(av.row(r), bv.row(r))).collect();
        let out = Tensor::new(vec![n, 1], data)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::RowCosine(a, b), rg))
    }

    /// Replaces rows whose norm is below `floor` with the first unit basis
    /// vector; replaced rows pass no gradient.
    pub fn norm_floor(&mut self, a: Var, floor: f64) -> Var {
        self.margin_of_rows(a, floor);
        let mut out = self.value(a).clone();
        apply_norm_floor(&mut out, floor);
        let rg = self.rg(&[a]);
        self.push(out, Op::NormFloor(a, floor), rg)
    }

    fn margin_of_rows(&mut self, a: Var, floor: f64) {
        if self.rg(&[a]) {
            let av = self.value(a);
            let m = (0..av.rows())
                .map(|r| (row_norm(av.row(r)) - floor).abs())
                .fold(f64::INFINITY, f64::min);
            self.note_margin(true, m);
        }
    }

    /// Numerically stable softmax along each row.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        let c = out.cols();
        for row in out.data_mut().chunks_mut(c) {
            softmax_in_place(row);
        }
        let rg = self.rg(&[a]);
        self.push(out, Op::SoftmaxRows(a), rg)
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let out = self.value(a).concat_cols(self.value(b))?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::ConcatCols(a, b), rg))
    }

    /// Columns `lo..hi` of a matrix.
    pub fn slice_cols(&mut self, a: Var, lo: usize, hi: usize) -> Result<Var, NumericsError> {
        let av = self.value(a);
        let c = av.cols();
        if lo > hi || hi > c {
            return Err(NumericsError::ShapeMismatch {
                op: "slice_cols",
                detail: format!("{lo}..{hi} of {c} columns"),
            });
        }
        let n = av.rows();
        let mut data = Vec::with_capacity(n * (hi - lo));
        for r in 0..n {
            data.extend_from_slice(&av.row(r)[lo..hi]);
        }
        let out = Tensor::matrix(n, hi - lo, data)?;
        let rg = self.rg(&[a]);
        Ok(self.push(out, Op::SliceCols(a, lo, hi), rg))
    }

    pub fn repeat_rows(&mut self, a: Var, times: usize) -> Var {
        let out = self.value(a).repeat_rows(times);
        let rg = self.rg(&[a]);
        self.push(out, Op::RepeatRows(a, times), rg)
    }

    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var, NumericsError> {
        let n = self.value(a).rows();
        if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
            return Err(NumericsError::ShapeMismatch {
                op: "gather_rows",
                detail: format!("row {bad} out of {n}"),
            });
        }
        let out = self.value(a).gather_rows(idx);
        let rg = self.rg(&[a]);
        Ok(self.push(out, Op::GatherRows(a, idx.to_vec()), rg))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var, NumericsError> {
        let out = self.value(a).clone().reshape(shape)?;
        let rg = self.rg(&[a]);
        Ok(self.push(out, Op::Reshape(a), rg))
    }

    /// Gradient of the scalar node `loss` w.r.t. every node that requires one.
    pub fn backward(&self, loss: Var) -> Result<Gradients, NumericsError> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(NumericsError::NotScalar { shape: lv.shape().to_vec() });
        }
        if let Some((node, op)) = self.first_non_finite.filter(|(n, _)| *n <= loss.0) {
            return Err(NumericsError::NonFinite { node, op });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::filled(lv.shape(), 1.0));
        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            if node.requires_grad {
                self.propagate(&node.op, id, &g, &mut grads)?;
            }
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => {
                for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                    *a += b;
                }
            }
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(
        &self,
        op: &Op,
        id: usize,
        g: &Tensor,
        grads: &mut [Option<Tensor>],
    ) -> Result<(), NumericsError> {
        let out = &self.nodes[id].value;
        let like = |v: Var, data: Vec<f64>| Tensor::new(self.value(v).shape().to_vec(), data);
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (n, k, m) = (av.rows(), av.cols(), bv.cols());
                if self.requires_grad(*a) {
                    let mut da = vec![0.0; n * k];
                    gemm(n, m, k, g.data(), false, bv.data(), true, &mut da, 0.0);
                    self.accumulate(grads, *a, like(*a, da)?);
                }
                if self.requires_grad(*b) {
                    let mut db = vec![0.0; k * m];
                    gemm(k, n, m, av.data(), true, g.data(), false, &mut db, 0.0);
                    self.accumulate(grads, *b, like(*b, db)?);
                }
            }
            Op::AddRow(a, row) => {
                self.accumulate(grads, *a, g.clone());
                if self.requires_grad(*row) {
                    let m = g.cols();
                    let mut dr = vec![0.0; m];
                    for r in g.data().chunks_exact(m.max(1)) {
                        for (d, v) in dr.iter_mut().zip(r) {
                            *d += v;
                        }
                    }
                    self.accumulate(grads, *row, like(*row, dr)?);
                }
            }
            Op::MulRow(a, row) => {
                let (av, rv) = (self.value(*a), self.value(*row));
                let m = av.cols();
                if self.requires_grad(*a) {
                    let da = g.data().chunks_exact(m.max(1)).flat_map(|r| r.iter().zip(rv.data()).map(|(v, y)| v * y)).collect();
                    self.accumulate(grads, *a, like(*a, da)?);
                }
                if self.requires_grad(*row) {
                    let mut dr = vec![0.0; m];
                    for (gr, ar) in g.data().chunks_exact(m.max(1)).zip(av.data().chunks_exact(m.max(1))) {
                        for ((d, v), x) in dr.iter_mut().zip(gr).zip(ar) {
                            *d += v * x;
                        }
                    }
                    self.accumulate(grads, *row, like(*row, dr)?);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                if self.requires_grad(*a) {
                    self.accumulate(grads, *a, g.zip_map(self.value(*b), |v, y| v * y)?);
                }
                if self.requires_grad(*b) {
                    self.accumulate(grads, *b, g.zip_map(self.value(*a), |v, x| v * x)?);
                }
            }
            Op::Min(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (mut da, mut db) = (vec![0.0; g.len()], vec![0.0; g.len()]);
                for i in 0..g.len() {
                    if av.data()[i] <= bv.data()[i] {
                        da[i] = g.data()[i];
                    } else {
                        db[i] = g.data()[i];
                    }
                }
                self.accumulate(grads, *a, like(*a, da)?);
                self.accumulate(grads, *b, like(*b, db)?);
            }
            Op::Scale(a, c) => self.accumulate(grads, *a, g.map(|v| c * v)),
            Op::AddScalar(a) | Op::Reshape(a) => {
                let d = g.data().to_vec();
                self.accumulate(grads, *a, like(*a, d)?);
            }
            Op::Relu(a) => {
                let d = g.zip_map(self.value(*a), |v, x| if x > 0.0 { v } else { 0.0 })?;
                self.accumulate(grads, *a, d);
            }
            Op::Tanh(a) => self.accumulate(grads, *a, g.zip_map(out, |v, y| v * (1.0 - y * y))?),
            Op::Exp(a) => self.accumulate(grads, *a, g.zip_map(out, |v, y| v * y)?),
            Op::Log(a) => self.accumulate(grads, *a, g.zip_map(self.value(*a), |v, x| v / x)?),
            Op::Square(a) => {
                self.accumulate(grads, *a, g.zip_map(self.value(*a), |v, x| 2.0 * x * v)?)
            }
            Op::Huber(a, delta) => {
                let d = g.zip_map(self.value(*a), |v, x| v * x.clamp(-*delta, *delta))?;
                self.accumulate(grads, *a, d);
            }
            Op::Clamp(a, lo, hi) => {
                let d =
                    g.zip_map(self.value(*a), |v, x| if x >= *lo && x <= *hi { v } else { 0.0 })?;
                self.accumulate(grads, *a, d);
            }
            Op::Mean(a) => {
                let av = self.value(*a);
                let v = g.data()[0] / av.len() as f64;
                self.accumulate(grads, *a, Tensor::filled(av.shape(), v));
            }
            Op::Sum(a) => {
                let av = self.value(*a);
                self.accumulate(grads, *a, Tensor::filled(av.shape(), g.data()[0]));
            }
            Op::SumCols(a) => {
                let av = self.value(*a);
                let m = av.cols();
                let d = (0..av.len()).map(|i| g.data()[i / m]).collect();
                self.accumulate(grads, *a, like(*a, d)?);
            }
            Op::RowCosine(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let d = av.cols();
                let mut da = vec![0.0; av.len()];
                let mut db = vec![0.0; bv.len()];
                for r in 0..av.rows() {
                    let (x, y) = (av.row(r), bv.row(r));
                    let (nx, ny) = (row_norm(x), row_norm(y));
                    if nx == 0.0 || ny == 0.0 {
                        continue;
                    }
                    let c = dot(x, y) / (nx * ny);
                    let gr = g.data()[r];
                    for j in 0..d {
                        da[r * d + j] = gr * (y[j] / (nx * ny) - c * x[j] / (nx * nx));
                        db[r * d + j] = gr * (x[j] / (nx * ny) - c * y[j] / (ny * ny));
                    }
                }
                self.accumulate(grads, *a, like(*a, da)?);
                self.accumulate(grads, *b, like(*b, db)?);
            }
            Op::NormFloor(a, floor) => {
                let av = self.value(*a);
                let c = av.cols();
                let mut d = g.data().to_vec();
                for r in 0..av.rows() {
                    if row_norm(av.row(r)) < *floor {
                        d[r * c..(r + 1) * c].iter_mut().for_each(|v| *v = 0.0);
                    }
                }
                self.accumulate(grads, *a, like(*a, d)?);
            }
            Op::SoftmaxRows(a) => {
                let c = out.cols();
                let mut d = vec![0.0; out.len()];
                for r in 0..out.rows() {
                    let y = out.row(r);
                    let gy = g.row(r);
                    let s = dot(y, gy);
                    for j in 0..c {
                        d[r * c + j] = y[j] * (gy[j] - s);
                    }
                }
                self.accumulate(grads, *a, like(*a, d)?);
            }
            Op::ConcatCols(a, b) => {
                let ca = self.value(*a).cols();
                let c = g.cols();
                let (mut da, mut db) = (Vec::new(), Vec::new());
                for r in 0..g.rows() {
                    let row = g.row(r);
                    da.extend_from_slice(&row[..ca]);
                    db.extend_from_slice(&row[ca..c]);
                }
                self.accumulate(grads, *a, like(*a, da)?);
                self.accumulate(grads, *b, like(*b, db)?);
            }
            Op::SliceCols(a, lo, hi) => {
                let c = self.value(*a).cols();
                let mut d = vec![0.0; self.value(*a).len()];
                for r in 0..g.rows() {
                    d[r * c + lo..r * c + hi].copy_from_slice(g.row(r));
                }
                self.accumulate(grads, *a, like(*a, d)?);
            }
            Op::RepeatRows(a, times) => {
                let av = self.value(*a);
                let c = av.cols();
                let mut d = vec![0.0; av.len()];
                for (r, row) in g.data().chunks(c).enumerate() {
                    let src = r / times;
                    for j in 0..c {
                        d[src * c + j] += row[j];
                    }
                }
                self.accumulate(grads, *a, like(*a, d)?);
            }
            Op::GatherRows(a, idx) => {
                let av = self.value(*a);
                let c = av.cols();
                let mut d = vec![0.0; av.len()];
                for (r, &src) in idx.iter().enumerate() {
                    for j in 0..c {
                        d[src * c + j] += g.data()[r * c + j];
                    }
                }
                self.accumulate(grads, *a, like(*a, d)?);
            }
        }
        Ok(())
    }
}

pub fn huber(r: f64, delta: f64) -> f64 {
    if r.abs() <= delta {
        0.5 * r * r
    } else {
        delta * (r.abs() - 0.5 * delta)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn row_norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine similarity clamped to `[-1, 1]`; 0 when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (row_norm(a), row_norm(b));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot(a, b) / (na * nb)).clamp(-1.0, 1.0)
}

pub fn apply_norm_floor(t: &mut Tensor, floor: f64) {
    let c = t.cols();
    if c == 0 {
        return;
    }
    for row in t.data_mut().chunks_mut(c) {
        if row_norm(row) < floor {
            row.iter_mut().for_each(|v| *v = 0.0);
            row[0] = 1.0;
        }
    }
}

pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}
