//! Tape of tensor operations with a reverse sweep.
//!
//! Values are computed eagerly as nodes are pushed; [`Graph::backward`]
//! walks the tape from the end, so node indices double as a topological
//! order and the graph is acyclic by construction.

use std::borrow::Cow;

use rand::Rng;

use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::{stable_sigmoid, Scalar};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T> {
    Leaf,
    Gather {
        table: usize,
        rows: Vec<usize>,
    },
    StackRows {
        sources: Vec<usize>,
    },
    Conv1d {
        input: usize,
        kernel: usize,
        bias: usize,
    },
    Relu(usize),
    MaxPool {
        input: usize,
        argmax: Vec<usize>,
    },
    Linear {
        input: usize,
        weight: usize,
        bias: usize,
    },
    Mask {
        input: usize,
        mask: Vec<T>,
    },
    Softmax(usize),
    WeightedSum {
        weights: usize,
        rows: usize,
    },
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Sigmoid(usize),
    Scale(usize, T),
    Square(usize),
    Sum(usize),
    Reshape(usize),
    /// Elementwise map with a caller-supplied derivative, evaluated at build time.
    Map {
        input: usize,
        deriv: Vec<T>,
    },
}

struct Node<'a, T: Scalar> {
    value: Cow<'a, Tensor<T>>,
    op: Op<T>,
}

/// Reverse-mode computation graph. Parameter leaves borrow their storage.
pub struct Graph<'a, T: Scalar> {
    nodes: Vec<Node<'a, T>>,
}

impl<T: Scalar> Default for Graph<'_, T> {
    fn default() -> Self {
        Self::new()
    }
}

fn shape_err(msg: String) -> Error {
    Error::InvalidShape(msg)
}

impl<'a, T: Scalar> Graph<'a, T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Cow<'a, Tensor<T>>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Leaf borrowing an existing tensor (typically a trainable parameter).
    pub fn leaf(&mut self, t: &'a Tensor<T>) -> Var {
        self.push(Cow::Borrowed(t), Op::Leaf)
    }

    /// Leaf owning its value (inputs, targets, constants).
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push(Cow::Owned(t), Op::Leaf)
    }

    /// Row lookup into a 2-D table: output row `k` is `table[rows[k]]`.
    pub fn gather(&mut self, table: Var, rows: &[usize]) -> Result<Var> {
        let t = self.value(table);
        if t.shape().len() != 2 {
            return Err(shape_err(format!("gather table must be 2-D, got {:?}", t.shape())));
        }
        if rows.is_empty() {
            return Err(shape_err("gather needs at least one row".into()));
        }
        let (n, d) = (t.rows(), t.cols());
        if let Some(&bad) = rows.iter().find(|&&r| r >= n) {
            return Err(Error::InvalidIndex(format!("row {bad} out of range for table of {n} rows")));
        }
        let mut out = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            out.extend_from_slice(t.row(r));
        }
        let value = Tensor::new(vec![rows.len(), d], out)?;
        Ok(self.push(
            Cow::Owned(value),
            Op::Gather {
                table: table.0,
                rows: rows.to_vec(),
            },
        ))
    }

    /// Stacks equal-length vectors into a matrix; a source may repeat.
    pub fn stack_rows(&mut self, sources: &[Var]) -> Result<Var> {
        let first = sources
            .first()
            .ok_or_else(|| shape_err("stack_rows needs at least one source".into()))?;
        let d = self.value(*first).len();
        let mut out = Vec::with_capacity(sources.len() * d);
        for s in sources {
            let v = self.value(*s);
            if v.len() != d {
                return Err(shape_err(format!("stack_rows: length {} != {d}", v.len())));
            }
            out.extend_from_slice(v.data());
        }
        let value = Tensor::new(vec![sources.len(), d], out)?;
        Ok(self.push(
            Cow::Owned(value),
            Op::StackRows {
                sources: sources.iter().map(|s| s.0).collect(),
            },
        ))
    }

    /// Valid 1-D cross-correlation: `seq [L x d_in]`, `kernel [w x d_in x d_out]`,
    /// `bias [d_out]`, output `[(L - w + 1) x d_out]`.
    pub fn conv1d(&mut self, seq: Var, kernel: Var, bias: Var) -> Result<Var> {
        let x = self.value(seq);
        let k = self.value(kernel);
        let b = self.value(bias);
        if x.shape().len() != 2 || k.shape().len() != 3 || b.shape().len() != 1 {
            return Err(shape_err(format!(
                "conv1d expects [L,d_in], [w,d_in,d_out], [d_out]; got {:?}, {:?}, {:?}",
                x.shape(),
                k.shape(),
                b.shape()
            )));
        }
        let (len, d_in) = (x.shape()[0], x.shape()[1]);
        let (w, kd_in, d_out) = (k.shape()[0], k.shape()[1], k.shape()[2]);
        if kd_in != d_in || b.shape()[0] != d_out {
            return Err(shape_err(format!(
                "conv1d channel mismatch: input {d_in}, kernel {kd_in}->{d_out}, bias {}",
                b.shape()[0]
            )));
        }
        if len < w {
            return Err(shape_err(format!("conv1d: sequence length {len} < kernel width {w}")));
        }
        let positions = len - w + 1;
        let xs = x.data();
        let ks = k.data();
        let mut out = Vec::with_capacity(positions * d_out);
        for _ in 0..positions {
            out.extend_from_slice(b.data());
        }
        for t in 0..positions {
            let acc = &mut out[t * d_out..(t + 1) * d_out];
            for j in 0..w {
                let xrow = &xs[(t + j) * d_in..(t + j + 1) * d_in];
                for (c, &xv) in xrow.iter().enumerate() {
                    if xv == T::zero() {
                        continue;
                    }
                    let krow = &ks[(j * d_in + c) * d_out..(j * d_in + c + 1) * d_out];
                    for (a, &kv) in acc.iter_mut().zip(krow) {
                        *a += xv * kv;
                    }
                }
            }
        }
        let value = Tensor::new(vec![positions, d_out], out)?;
        Ok(self.push(
            Cow::Owned(value),
            Op::Conv1d {
                input: seq.0,
                kernel: kernel.0,
                bias: bias.0,
            },
        ))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| if v > T::zero() { v } else { T::zero() });
        self.push(Cow::Owned(value), Op::Relu(x.0))
    }

    /// Per-channel windowed maximum over rows of `seq [L x d]`.
    /// Ties resolve to the earliest row, which is also where gradient flows.
    pub fn maxpool1d(&mut self, seq: Var, window: usize, stride: usize) -> Result<Var> {
        let x = self.value(seq);
        if window == 0 || stride == 0 {
            return Err(Error::InvalidArgument("maxpool window and stride must be positive".into()));
        }
        if x.shape().len() != 2 {
            return Err(shape_err(format!("maxpool1d expects [L,d], got {:?}", x.shape())));
        }
        let (len, d) = (x.shape()[0], x.shape()[1]);
        if len < window {
            return Err(shape_err(format!("maxpool1d: length {len} < window {window}")));
        }
        let positions = (len - window) / stride + 1;
        let xs = x.data();
        let mut out = Vec::with_capacity(positions * d);
        let mut argmax = Vec::with_capacity(positions * d);
        for p in 0..positions {
            let start = p * stride;
            for c in 0..d {
                let mut best = start * d + c;
                for r in start + 1..start + window {
                    let idx = r * d + c;
                    if xs[idx] > xs[best] {
                        best = idx;
                    }
                }
                out.push(xs[best]);
                argmax.push(best);
            }
        }
        let value = Tensor::new(vec![positions, d], out)?;
        Ok(self.push(Cow::Owned(value), Op::MaxPool { input: seq.0, argmax }))
    }

    /// Affine map applied per row: `x [n x a] . weight [a x b] + bias [b]`.
    pub fn linear(&mut self, x: Var, weight: Var, bias: Var) -> Result<Var> {
        let xv = self.value(x);
        let wv = self.value(weight);
        let bv = self.value(bias);
        if xv.shape().len() != 2 || wv.shape().len() != 2 || bv.shape().len() != 1 {
            return Err(shape_err(format!(
                "linear expects [n,a], [a,b], [b]; got {:?}, {:?}, {:?}",
                xv.shape(),
                wv.shape(),
                bv.shape()
            )));
        }
        let (n, a) = (xv.shape()[0], xv.shape()[1]);
        let (wa, b) = (wv.shape()[0], wv.shape()[1]);
        if wa != a || bv.shape()[0] != b {
            return Err(shape_err(format!(
                "linear mismatch: input width {a}, weight {wa}x{b}, bias {}",
                bv.shape()[0]
            )));
        }
        let xs = xv.data();
        let ws = wv.data();
        let mut out = Vec::with_capacity(n * b);
        for r in 0..n {
            let start = out.len();
            out.extend_from_slice(bv.data());
            let acc = &mut out[start..];
            for (k, &xk) in xs[r * a..(r + 1) * a].iter().enumerate() {
                if xk == T::zero() {
                    continue;
                }
                for (o, &wkj) in acc.iter_mut().zip(&ws[k * b..(k + 1) * b]) {
                    *o += xk * wkj;
                }
            }
        }
        let value = Tensor::new(vec![n, b], out)?;
        Ok(self.push(
            Cow::Owned(value),
            Op::Linear {
                input: x.0,
                weight: weight.0,
                bias: bias.0,
            },
        ))
    }

    /// Inverted dropout: each unit survives with probability `1 - rate` and is
    /// scaled by `1 / (1 - rate)`. A zero rate returns `x` unchanged.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, rate: f64, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidArgument(format!("dropout rate {rate} outside [0,1)")));
        }
        if rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 - rate;
        let scale = T::lit(1.0 / keep);
        let n = self.value(x).len();
        let mask: Vec<T> = (0..n)
            .map(|_| if rng.random::<f64>() < keep { scale } else { T::zero() })
            .collect();
        Ok(self.apply_mask(x, mask))
    }

    fn apply_mask(&mut self, x: Var, mask: Vec<T>) -> Var {
        let xv = self.value(x);
        let data = xv.data().iter().zip(&mask).map(|(&a, &m)| a * m).collect();
        let value = Tensor::new(xv.shape().to_vec(), data).expect("mask preserves shape");
        self.push(Cow::Owned(value), Op::Mask { input: x.0, mask })
    }

    /// Softmax over all elements of a vector, max-shifted.
    pub fn softmax(&mut self, v: Var) -> Result<Var> {
        let x = self.value(v);
        if x.shape().len() != 1 {
            return Err(shape_err(format!("softmax expects a vector, got {:?}", x.shape())));
        }
        let max = x.data().iter().copied().fold(T::neg_infinity(), T::max);
        let exps: Vec<T> = x.data().iter().map(|&a| (a - max).exp()).collect();
        let total: T = exps.iter().copied().sum();
        let value = Tensor::vector(exps.into_iter().map(|e| e / total).collect());
        Ok(self.push(Cow::Owned(value), Op::Softmax(v.0)))
    }

    /// `sum_k weights[k] * rows[k, :]` for `weights [n]`, `rows [n x d]`.
    pub fn weighted_sum(&mut self, weights: Var, rows: Var) -> Result<Var> {
        let w = self.value(weights);
        let r = self.value(rows);
        if w.shape().len() != 1 || r.shape().len() != 2 || r.shape()[0] != w.len() {
            return Err(shape_err(format!(
                "weighted_sum expects [n] and [n,d]; got {:?}, {:?}",
                w.shape(),
                r.shape()
            )));
        }
        let d = r.cols();
        let mut out = vec![T::zero(); d];
        for (k, &wk) in w.data().iter().enumerate() {
            for (o, &x) in out.iter_mut().zip(r.row(k)) {
                *o += wk * x;
            }
        }
        let value = Tensor::vector(out);
        Ok(self.push(
            Cow::Owned(value),
            Op::WeightedSum {
                weights: weights.0,
                rows: rows.0,
            },
        ))
    }

    fn binary(&mut self, a: Var, b: Var, name: &str, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        let av = self.value(a);
        let bv = self.value(b);
        if av.shape() != bv.shape() {
            return Err(shape_err(format!(
                "{name}: shapes {:?} and {:?} differ",
                av.shape(),
                bv.shape()
            )));
        }
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(av.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.binary(a, b, "add", |x, y| x + y)?;
        Ok(self.push(Cow::Owned(value), Op::Add(a.0, b.0)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.binary(a, b, "sub", |x, y| x - y)?;
        Ok(self.push(Cow::Owned(value), Op::Sub(a.0, b.0)))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.binary(a, b, "mul", |x, y| x * y)?;
        Ok(self.push(Cow::Owned(value), Op::Mul(a.0, b.0)))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.value(x).map(stable_sigmoid);
        self.push(Cow::Owned(value), Op::Sigmoid(x.0))
    }

    pub fn scale(&mut self, x: Var, c: T) -> Var {
        let value = self.value(x).map(|v| v * c);
        self.push(Cow::Owned(value), Op::Scale(x.0, c))
    }

    pub fn square(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v * v);
        self.push(Cow::Owned(value), Op::Square(x.0))
    }

    /// Sum of all elements, in storage order.
    pub fn sum(&mut self, x: Var) -> Var {
        let total: T = self.value(x).data().iter().copied().sum();
        self.push(Cow::Owned(Tensor::scalar(total)), Op::Sum(x.0))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let value = self.value(x).clone().reshaped(shape)?;
        Ok(self.push(Cow::Owned(value), Op::Reshape(x.0)))
    }

    /// Elementwise map with an explicit derivative rule.
    pub fn map(&mut self, x: Var, f: impl Fn(T) -> T, df: impl Fn(T) -> T) -> Var {
        let xv = self.value(x);
        let value = xv.map(&f);
        let deriv = xv.data().iter().map(|&v| df(v)).collect();
        self.push(Cow::Owned(value), Op::Map { input: x.0, deriv })
    }

    /// Back-propagates from `output`, seeding its gradient with ones.
    pub fn backward(&self, output: Var) -> Gradients<T> {
        let mut grads: Vec<Option<Tensor<T>>> = Vec::with_capacity(output.0 + 1);
        grads.resize_with(output.0 + 1, || None);
        grads[output.0] = Some(Tensor::full(self.nodes[output.0].value.shape(), T::one()));

        for i in (0..=output.0).rev() {
            let g = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Gradients { grads }
    }

    fn propagate(&self, i: usize, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let node = &self.nodes[i];
        let gs = g.data();
        match &node.op {
            Op::Leaf => {}
            Op::Gather { table, rows } => {
                let acc = slot(grads, *table, self.value(Var(*table)).shape());
                let d = acc.cols();
                for (k, &r) in rows.iter().enumerate() {
                    let dst = acc.row_mut(r);
                    for (a, &b) in dst.iter_mut().zip(&gs[k * d..(k + 1) * d]) {
                        *a += b;
                    }
                }
            }
            Op::StackRows { sources } => {
                let d = g.cols();
                for (k, &s) in sources.iter().enumerate() {
                    let acc = slot(grads, s, self.value(Var(s)).shape());
                    for (a, &b) in acc.data_mut().iter_mut().zip(&gs[k * d..(k + 1) * d]) {
                        *a += b;
                    }
                }
            }
            Op::Conv1d { input, kernel, bias } => {
                let x = self.value(Var(*input));
                let k = self.value(Var(*kernel));
                let (d_in, w, d_out) = (x.shape()[1], k.shape()[0], k.shape()[2]);
                let positions = g.rows();
                {
                    let gb = slot(grads, *bias, &[d_out]);
                    for t in 0..positions {
                        for (a, &b) in gb.data_mut().iter_mut().zip(g.row(t)) {
                            *a += b;
                        }
                    }
                }
                {
                    let gk = slot(grads, *kernel, k.shape());
                    let gks = gk.data_mut();
                    let xs = x.data();
                    for t in 0..positions {
                        let grow = g.row(t);
                        for j in 0..w {
                            for c in 0..d_in {
                                let xv = xs[(t + j) * d_in + c];
                                if xv == T::zero() {
                                    continue;
                                }
                                let dst = &mut gks[(j * d_in + c) * d_out..(j * d_in + c + 1) * d_out];
                                for (a, &b) in dst.iter_mut().zip(grow) {
                                    *a += xv * b;
                                }
                            }
                        }
                    }
                }
                if needs_grad(&self.nodes, *input) {
                    let gx = slot(grads, *input, x.shape());
                    let gxs = gx.data_mut();
                    let ks = k.data();
                    for t in 0..positions {
                        let grow = g.row(t);
                        for j in 0..w {
                            for c in 0..d_in {
                                let krow = &ks[(j * d_in + c) * d_out..(j * d_in + c + 1) * d_out];
                                let mut s = T::zero();
                                for (&kv, &b) in krow.iter().zip(grow) {
                                    s += kv * b;
                                }
                                gxs[(t + j) * d_in + c] += s;
                            }
                        }
                    }
                }
            }
            Op::Relu(x) => {
                let xv = self.value(Var(*x));
                let acc = slot(grads, *x, xv.shape());
                for ((a, &b), &v) in acc.data_mut().iter_mut().zip(gs).zip(xv.data()) {
                    if v > T::zero() {
                        *a += b;
                    }
                }
            }
            Op::MaxPool { input, argmax } => {
                let acc = slot(grads, *input, self.value(Var(*input)).shape());
                let dst = acc.data_mut();
                for (&idx, &b) in argmax.iter().zip(gs) {
                    dst[idx] += b;
                }
            }
            Op::Linear { input, weight, bias } => {
                let x = self.value(Var(*input));
                let w = self.value(Var(*weight));
                let (n, a) = (x.shape()[0], x.shape()[1]);
                let b = w.shape()[1];
                {
                    let gb = slot(grads, *bias, &[b]);
                    for r in 0..n {
                        for (acc, &v) in gb.data_mut().iter_mut().zip(&gs[r * b..(r + 1) * b]) {
                            *acc += v;
                        }
                    }
                }
                {
                    let gw = slot(grads, *weight, w.shape());
                    let gws = gw.data_mut();
                    let xs = x.data();
                    for r in 0..n {
                        let grow = &gs[r * b..(r + 1) * b];
                        for k in 0..a {
                            let xk = xs[r * a + k];
                            if xk == T::zero() {
                                continue;
                            }
                            for (acc, &v) in gws[k * b..(k + 1) * b].iter_mut().zip(grow) {
                                *acc += xk * v;
                            }
                        }
                    }
                }
                if needs_grad(&self.nodes, *input) {
                    let gx = slot(grads, *input, x.shape());
                    let gxs = gx.data_mut();
                    let ws = w.data();
                    for r in 0..n {
                        let grow = &gs[r * b..(r + 1) * b];
                        for k in 0..a {
                            let mut s = T::zero();
                            for (&wv, &v) in ws[k * b..(k + 1) * b].iter().zip(grow) {
                                s += wv * v;
                            }
                            gxs[r * a + k] += s;
                        }
                    }
                }
            }
            Op::Mask { input, mask } => {
                let acc = slot(grads, *input, g.shape());
                for ((a, &b), &m) in acc.data_mut().iter_mut().zip(gs).zip(mask) {
                    *a += b * m;
                }
            }
            Op::Softmax(x) => {
                let y = node.value.data();
                let dot: T = y.iter().zip(gs).map(|(&a, &b)| a * b).sum();
                let acc = slot(grads, *x, g.shape());
                for ((a, &yi), &gi) in acc.data_mut().iter_mut().zip(y).zip(gs) {
                    *a += yi * (gi - dot);
                }
            }
            Op::WeightedSum { weights, rows } => {
                let w = self.value(Var(*weights));
                let r = self.value(Var(*rows));
                {
                    let gw = slot(grads, *weights, w.shape());
                    for (k, a) in gw.data_mut().iter_mut().enumerate() {
                        let s: T = r.row(k).iter().zip(gs).map(|(&x, &b)| x * b).sum();
                        *a += s;
                    }
                }
                let gr = slot(grads, *rows, r.shape());
                for (k, &wk) in w.data().iter().enumerate() {
                    for (a, &b) in gr.row_mut(k).iter_mut().zip(gs) {
                        *a += wk * b;
                    }
                }
            }
            Op::Add(a, b) => {
                accumulate(slot(grads, *a, g.shape()), gs, |v| v);
                accumulate(slot(grads, *b, g.shape()), gs, |v| v);
            }
            Op::Sub(a, b) => {
                accumulate(slot(grads, *a, g.shape()), gs, |v| v);
                accumulate(slot(grads, *b, g.shape()), gs, |v| -v);
            }
            Op::Mul(a, b) => {
                let av = self.value(Var(*a));
                let bv = self.value(Var(*b));
                {
                    let acc = slot(grads, *a, g.shape());
                    for ((d, &gv), &o) in acc.data_mut().iter_mut().zip(gs).zip(bv.data()) {
                        *d += gv * o;
                    }
                }
                let acc = slot(grads, *b, g.shape());
                for ((d, &gv), &o) in acc.data_mut().iter_mut().zip(gs).zip(av.data()) {
                    *d += gv * o;
                }
            }
            Op::Sigmoid(x) => {
                let y = node.value.data();
                let acc = slot(grads, *x, g.shape());
                for ((d, &gv), &s) in acc.data_mut().iter_mut().zip(gs).zip(y) {
                    *d += gv * s * (T::one() - s);
                }
            }
            Op::Scale(x, c) => {
                let c = *c;
                accumulate(slot(grads, *x, g.shape()), gs, |v| v * c);
            }
            Op::Square(x) => {
                let xv = self.value(Var(*x));
                let acc = slot(grads, *x, g.shape());
                let two = T::lit(2.0);
                for ((d, &gv), &v) in acc.data_mut().iter_mut().zip(gs).zip(xv.data()) {
                    *d += two * v * gv;
                }
            }
            Op::Sum(x) => {
                let shape = self.value(Var(*x)).shape().to_vec();
                let gv = gs[0];
                for d in slot(grads, *x, &shape).data_mut() {
                    *d += gv;
                }
            }
            Op::Reshape(x) => {
                let shape = self.value(Var(*x)).shape().to_vec();
                accumulate(slot(grads, *x, &shape), gs, |v| v);
            }
            Op::Map { input, deriv } => {
                let acc = slot(grads, *input, g.shape());
                for ((d, &gv), &dv) in acc.data_mut().iter_mut().zip(gs).zip(deriv) {
                    *d += gv * dv;
                }
            }
        }
    }
}

/// Owned leaves are constants; their gradients are never read.
fn needs_grad<T: Scalar>(nodes: &[Node<'_, T>], i: usize) -> bool {
    !matches!((&nodes[i].op, &nodes[i].value), (Op::Leaf, Cow::Owned(_)))
}

fn slot<'g, T: Scalar>(grads: &'g mut [Option<Tensor<T>>], i: usize, shape: &[usize]) -> &'g mut Tensor<T> {
    grads[i].get_or_insert_with(|| Tensor::zeros(shape))
}

fn accumulate<T: Scalar>(acc: &mut Tensor<T>, g: &[T], f: impl Fn(T) -> T) {
    for (a, &b) in acc.data_mut().iter_mut().zip(g) {
        *a += f(b);
    }
}

/// Gradients of one backward sweep, indexed by node.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient for `v`, or `None` when `v` does not influence the output.
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient for `v`, zero-filled when it does not influence the output.
    pub fn get_or_zeros(&self, v: Var, shape: &[usize]) -> Tensor<T> {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(shape))
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}
