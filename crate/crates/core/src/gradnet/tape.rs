//! Reverse-mode differentiation over an append-only tape.
//!
//! Every forward operation appends one node holding its value and enough
//! cached state to apply the chain rule. `backward` walks the tape from the
//! root toward the leaves; parents always sit at lower indices.

use std::borrow::Cow;
use std::collections::HashMap;

use super::tensor::{matmul_acc, matmul_at_acc, matmul_bt_acc};
use super::{ParameterStore, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Conv2d {
        input: Var,
        kernel: Var,
        bias: Var,
        geom: ConvGeom,
        cols: Vec<f64>,
    },
    Linear {
        input: Var,
        weight: Var,
        bias: Var,
    },
    MatMul {
        a: Var,
        b: Var,
        transpose_b: bool,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    ClampMin(Var, f64),
    GlobalAvgPool(Var),
    Embedding {
        table: Var,
        ids: Vec<usize>,
    },
    SoftmaxRows(Var),
    LayerNormRows {
        input: Var,
        gamma: Var,
        beta: Var,
        normalized: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Log(Var),
    Dot(Var, Var),
    Norm(Var),
    Cosine(Var, Var),
    Row {
        input: Var,
        row: usize,
    },
    Cols {
        input: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    Sum(Var),
    Pick {
        input: Var,
        index: usize,
    },
}

#[derive(Debug, Clone, Copy)]
struct ConvGeom {
    channels: usize,
    height: usize,
    width: usize,
    out_channels: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    out_height: usize,
    out_width: usize,
}

#[derive(Debug)]
struct Node<'a> {
    value: Cow<'a, Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Recorded computation. Parameter leaves borrow from the store.
#[derive(Debug, Default)]
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
    params: HashMap<usize, Var>,
}

/// Per-node gradients produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}

fn checked(name: &'static str, t: Tensor) -> Result<Tensor> {
    if t.is_finite() {
        Ok(t)
    } else {
        Err(Error::NumericOverflow(name))
    }
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Cow<'a, Tensor>, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push_op(&mut self, name: &'static str, value: Tensor, op: Op, parents: &[Var]) -> Result<Var> {
        let value = checked(name, value)?;
        let rg = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        Ok(self.push(Cow::Owned(value), op, rg))
    }

    /// Constant input; no gradient is propagated into it.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(Cow::Owned(t), Op::Leaf, false)
    }

    pub fn constant_ref(&mut self, t: &'a Tensor) -> Var {
        self.push(Cow::Borrowed(t), Op::Leaf, false)
    }

    /// Differentiable leaf.
    pub fn variable(&mut self, t: Tensor) -> Var {
        self.push(Cow::Owned(t), Op::Leaf, true)
    }

    /// Leaf for a named parameter; repeated requests return the same node.
    pub fn param(&mut self, store: &'a ParameterStore, name: &str) -> Result<Var> {
        let idx = store.index_of(name)?;
        if let Some(&v) = self.params.get(&idx) {
            return Ok(v);
        }
        let (_, p) = store.by_index(idx);
        let v = self.push(Cow::Borrowed(&p.value), Op::Leaf, true);
        self.params.insert(idx, v);
        Ok(v)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// 2-D convolution of a `[C, H, W]` input with a `[O, C, K, K]` kernel
    /// and `[O]` bias; zero padding `pad` on every side.
    pub fn conv2d(&mut self, input: Var, kernel: Var, bias: Var, stride: usize, pad: usize) -> Result<Var> {
        let (xs, ks, bs) = (self.shape(input), self.shape(kernel), self.shape(bias));
        let [c, h, w] = <[usize; 3]>::try_from(xs).map_err(|_| Error::shape("conv2d", xs, ks))?;
        let [o, kc, k, k2] = <[usize; 4]>::try_from(ks).map_err(|_| Error::shape("conv2d", xs, ks))?;
        if kc != c || k != k2 || bs != [o] || stride == 0 || h + 2 * pad < k || w + 2 * pad < k {
            return Err(Error::shape("conv2d", xs, ks));
        }
        let geom = ConvGeom {
            channels: c,
            height: h,
            width: w,
            out_channels: o,
            kernel: k,
            stride,
            pad,
            out_height: (h + 2 * pad - k) / stride + 1,
            out_width: (w + 2 * pad - k) / stride + 1,
        };
        let cols = im2col(self.value(input).data(), &geom);
        let q = geom.out_height * geom.out_width;
        let r = c * k * k;
        let mut out = vec![0.0; o * q];
        for (oc, b) in self.value(bias).data().iter().enumerate() {
            out[oc * q..(oc + 1) * q].fill(*b);
        }
        matmul_acc(self.value(kernel).data(), &cols, &mut out, o, r, q);
        let value = Tensor::new(vec![o, geom.out_height, geom.out_width], out)?;
        self.push_op(
            "conv2d",
            value,
            Op::Conv2d {
                input,
                kernel,
                bias,
                geom,
                cols,
            },
            &[input, kernel, bias],
        )
    }

    /// `x · W + b` for `x` of shape `[n, in]` or `[in]`, `W` of shape
    /// `[in, out]` and `b` of shape `[out]`.
    pub fn linear(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let (xs, ws, bs) = (self.shape(input), self.shape(weight), self.shape(bias));
        let (n, fan_in) = self.value(input).rows_cols();
        let [win, wout] = <[usize; 2]>::try_from(ws).map_err(|_| Error::shape("linear", xs, ws))?;
        if xs.len() > 2 || win != fan_in || bs != [wout] {
            return Err(Error::shape("linear", xs, ws));
        }
        let mut out = Vec::with_capacity(n * wout);
        for _ in 0..n {
            out.extend_from_slice(self.value(bias).data());
        }
        matmul_acc(self.value(input).data(), self.value(weight).data(), &mut out, n, fan_in, wout);
        let shape = if xs.len() == 1 { vec![wout] } else { vec![n, wout] };
        self.push_op("linear", Tensor::new(shape, out)?, Op::Linear { input, weight, bias }, &[input, weight, bias])
    }

    /// `a · b` (or `a · bᵀ`) for matrices.
    pub fn matmul(&mut self, a: Var, b: Var, transpose_b: bool) -> Result<Var> {
        let (as_, bs) = (self.shape(a), self.shape(b));
        if as_.len() != 2 || bs.len() != 2 {
            return Err(Error::shape("matmul", as_, bs));
        }
        let (m, k) = (as_[0], as_[1]);
        let (n, kb) = if transpose_b { (bs[0], bs[1]) } else { (bs[1], bs[0]) };
        if k != kb {
            return Err(Error::shape("matmul", as_, bs));
        }
        let mut out = vec![0.0; m * n];
        if transpose_b {
            matmul_bt_acc(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        } else {
            matmul_acc(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        }
        self.push_op("matmul", Tensor::new(vec![m, n], out)?, Op::MatMul { a, b, transpose_b }, &[a, b])
    }

    fn zip_same(&self, name: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::shape(name, ta.shape(), tb.shape()));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| f(*x, *y)).collect();
        Tensor::new(ta.shape().to_vec(), data)
    }

    fn map(&self, x: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let t = self.value(x);
        Tensor::new(t.shape().to_vec(), t.data().iter().map(|v| f(*v)).collect()).expect("same shape")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.zip_same("add", a, b, |x, y| x + y)?;
        self.push_op("add", v, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.zip_same("sub", a, b, |x, y| x - y)?;
        self.push_op("sub", v, Op::Sub(a, b), &[a, b])
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        let v = self.map(x, |v| v * factor);
        self.push_op("scale", v, Op::Scale(x, factor), &[x])
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Result<Var> {
        let v = self.map(x, |v| v + c);
        self.push_op("add_scalar", v, Op::AddScalar(x), &[x])
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let v = self.map(x, |v| v.max(0.0));
        self.push_op("relu", v, Op::Relu(x), &[x])
    }

    /// Elementwise `max(0, x)`; the hinge of a ranking loss.
    pub fn hinge(&mut self, x: Var) -> Result<Var> {
        self.relu(x)
    }

    /// Elementwise `max(floor, x)`.
    pub fn clamp_min(&mut self, x: Var, floor: f64) -> Result<Var> {
        let v = self.map(x, |v| v.max(floor));
        self.push_op("clamp_min", v, Op::ClampMin(x, floor), &[x])
    }

    /// `[C, H, W]` to `[C]` by spatial mean.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let &[c, h, w] = t.shape() else {
            return Err(Error::shape("global_avg_pool", t.shape(), &[0, 0, 0]));
        };
        let hw = h * w;
        let data = t.data().chunks(hw).map(|ch| ch.iter().sum::<f64>() / hw as f64).collect();
        self.push_op("global_avg_pool", Tensor::new(vec![c], data)?, Op::GlobalAvgPool(x), &[x])
    }

    /// Rows `ids` of a `[V, D]` table.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let t = self.value(table);
        let &[vocab, dim] = t.shape() else {
            return Err(Error::shape("embedding", t.shape(), &[ids.len()]));
        };
        let mut data = Vec::with_capacity(ids.len() * dim);
        for &id in ids {
            if id >= vocab {
                return Err(Error::Parameter(format!("embedding id {id} out of range {vocab}")));
            }
            data.extend_from_slice(&t.data()[id * dim..(id + 1) * dim]);
        }
        let v = Tensor::new(vec![ids.len(), dim], data)?;
        self.push_op("embedding", v, Op::Embedding { table, ids: ids.to_vec() }, &[table])
    }

    /// Softmax over the last axis (a vector is a single row).
    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let (_, cols) = t.rows_cols();
        let mut data = t.data().to_vec();
        for row in data.chunks_mut(cols) {
            softmax_in_place(row);
        }
        let v = Tensor::new(t.shape().to_vec(), data)?;
        self.push_op("softmax", v, Op::SoftmaxRows(x), &[x])
    }

    /// Per-row normalization followed by an elementwise affine map.
    pub fn layer_norm_rows(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let t = self.value(x);
        let (rows, cols) = t.rows_cols();
        if self.shape(gamma) != [cols] || self.shape(beta) != [cols] {
            return Err(Error::shape("layer_norm", t.shape(), self.shape(gamma)));
        }
        let (g, b) = (self.value(gamma).data(), self.value(beta).data());
        let mut normalized = vec![0.0; rows * cols];
        let mut inv_std = vec![0.0; rows];
        let mut out = vec![0.0; rows * cols];
        for r in 0..rows {
            let row = &t.data()[r * cols..(r + 1) * cols];
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[r] = is;
            for j in 0..cols {
                let xh = (row[j] - mean) * is;
                normalized[r * cols + j] = xh;
                out[r * cols + j] = xh * g[j] + b[j];
            }
        }
        let v = Tensor::new(t.shape().to_vec(), out)?;
        self.push_op(
            "layer_norm",
            v,
            Op::LayerNormRows {
                input: x,
                gamma,
                beta,
                normalized,
                inv_std,
            },
            &[x, gamma, beta],
        )
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        let v = self.map(x, f64::ln);
        self.push_op("log", v, Op::Log(x), &[x])
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::shape("dot", ta.shape(), tb.shape()));
        }
        let s = dot(ta.data(), tb.data());
        self.push_op("dot", Tensor::scalar(s), Op::Dot(a, b), &[a, b])
    }

    /// Euclidean norm. The gradient at the origin is taken as zero.
    pub fn norm(&mut self, x: Var) -> Result<Var> {
        let n = dot(self.value(x).data(), self.value(x).data()).sqrt();
        self.push_op("norm", Tensor::scalar(n), Op::Norm(x), &[x])
    }

    pub fn cosine(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::shape("cosine", ta.shape(), tb.shape()));
        }
        let (na, nb) = (dot(ta.data(), ta.data()).sqrt(), dot(tb.data(), tb.data()).sqrt());
        if na == 0.0 || nb == 0.0 {
            return Err(Error::DegenerateInput("cosine similarity of a zero vector"));
        }
        let c = dot(ta.data(), tb.data()) / (na * nb);
        self.push_op("cosine", Tensor::scalar(c), Op::Cosine(a, b), &[a, b])
    }

    /// One row of a matrix, as a vector.
    pub fn row(&mut self, x: Var, row: usize) -> Result<Var> {
        let t = self.value(x);
        let (rows, cols) = t.rows_cols();
        if t.shape().len() != 2 || row >= rows {
            return Err(Error::shape("row", t.shape(), &[row]));
        }
        let v = Tensor::vector(t.data()[row * cols..(row + 1) * cols].to_vec());
        self.push_op("row", v, Op::Row { input: x, row }, &[x])
    }

    /// Columns `start..start + len` of a matrix.
    pub fn cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(x);
        let (rows, cols) = t.rows_cols();
        if t.shape().len() != 2 || start + len > cols {
            return Err(Error::shape("cols", t.shape(), &[start, len]));
        }
        let mut data = Vec::with_capacity(rows * len);
        for r in 0..rows {
            data.extend_from_slice(&t.data()[r * cols + start..r * cols + start + len]);
        }
        let v = Tensor::new(vec![rows, len], data)?;
        self.push_op("cols", v, Op::Cols { input: x, start }, &[x])
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or(Error::DegenerateInput("concat of nothing"))?;
        let rows = self.shape(*first)[0];
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            let s = self.shape(*p);
            if s.len() != 2 || s[0] != rows {
                return Err(Error::shape("concat_cols", self.shape(*first), s));
            }
            widths.push(s[1]);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (p, w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(*p).data()[r * w..(r + 1) * w]);
            }
        }
        let v = Tensor::new(vec![rows, total], data)?;
        self.push_op("concat_cols", v, Op::ConcatCols(parts.to_vec()), parts)
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).data().iter().sum();
        self.push_op("sum", Tensor::scalar(s), Op::Sum(x), &[x])
    }

    /// Sum of several scalars.
    pub fn sum_scalars(&mut self, terms: &[Var]) -> Result<Var> {
        let mut acc = *terms.first().ok_or(Error::DegenerateInput("sum of nothing"))?;
        for &t in &terms[1..] {
            acc = self.add(acc, t)?;
        }
        Ok(acc)
    }

    /// Element `index` of the flattened tensor, as a scalar.
    pub fn pick(&mut self, x: Var, index: usize) -> Result<Var> {
        let t = self.value(x);
        if index >= t.len() {
            return Err(Error::shape("pick", t.shape(), &[index]));
        }
        let v = Tensor::scalar(t.data()[index]);
        self.push_op("pick", v, Op::Pick { input: x, index }, &[x])
    }

    /// Gradient of a scalar root.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        self.backward_with(root, &Tensor::scalar(1.0))
    }

    /// Vector-Jacobian product seeded with `seed` at `root`.
    pub fn backward_with(&self, root: Var, seed: &Tensor) -> Result<Gradients> {
        if self.value(root).len() != seed.len() {
            return Err(Error::shape("backward", self.shape(root), seed.shape()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(seed.clone().reshaped(self.shape(root).to_vec())?);

        for i in (0..=root.0).rev() {
            let (lower, upper) = grads.split_at_mut(i);
            let Some(g) = upper[0].as_ref() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            self.propagate(&node.op, node.value.as_ref(), g, lower);
        }
        Ok(Gradients { grads })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn slot<'g>(&self, lower: &'g mut [Option<Tensor>], v: Var) -> &'g mut Tensor {
        lower[v.0].get_or_insert_with(|| Tensor::zeros(self.shape(v)))
    }

    fn propagate(&self, op: &Op, out: &Tensor, g: &Tensor, lower: &mut [Option<Tensor>]) {
        let gd = g.data();
        match op {
            Op::Leaf => {}
            Op::Conv2d {
                input,
                kernel,
                bias,
                geom,
                cols,
            } => {
                let q = geom.out_height * geom.out_width;
                let r = geom.channels * geom.kernel * geom.kernel;
                let o = geom.out_channels;
                if self.wants(*kernel) {
                    matmul_bt_acc(gd, cols, self.slot(lower, *kernel).data_mut(), o, q, r);
                }
                if self.wants(*bias) {
                    let db = self.slot(lower, *bias).data_mut();
                    for (oc, d) in db.iter_mut().enumerate() {
                        *d += gd[oc * q..(oc + 1) * q].iter().sum::<f64>();
                    }
                }
                if self.wants(*input) {
                    let mut dcols = vec![0.0; r * q];
                    matmul_at_acc(self.value(*kernel).data(), gd, &mut dcols, o, r, q);
                    col2im_acc(&dcols, geom, self.slot(lower, *input).data_mut());
                }
            }
            Op::Linear { input, weight, bias } => {
                let (n, fan_in) = self.value(*input).rows_cols();
                let fan_out = self.shape(*bias)[0];
                if self.wants(*input) {
                    let w = self.value(*weight).data();
                    matmul_bt_acc(gd, w, self.slot(lower, *input).data_mut(), n, fan_out, fan_in);
                }
                if self.wants(*weight) {
                    let x = self.value(*input).data();
                    matmul_at_acc(x, gd, self.slot(lower, *weight).data_mut(), n, fan_in, fan_out);
                }
                if self.wants(*bias) {
                    let db = self.slot(lower, *bias).data_mut();
                    for row in gd.chunks(fan_out) {
                        for (d, v) in db.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                }
            }
            Op::MatMul { a, b, transpose_b } => {
                let (m, k) = self.value(*a).rows_cols();
                let n = out.shape()[1];
                let (ad, bd) = (self.value(*a).data(), self.value(*b).data());
                if self.wants(*a) {
                    let da = self.slot(lower, *a).data_mut();
                    if *transpose_b {
                        matmul_acc(gd, bd, da, m, n, k);
                    } else {
                        matmul_bt_acc(gd, bd, da, m, n, k);
                    }
                }
                if self.wants(*b) {
                    let db = self.slot(lower, *b).data_mut();
                    if *transpose_b {
                        matmul_at_acc(gd, ad, db, m, n, k);
                    } else {
                        matmul_at_acc(ad, gd, db, m, k, n);
                    }
                }
            }
            Op::Add(a, b) => {
                for v in [a, b] {
                    if self.wants(*v) {
                        self.slot(lower, *v).add_assign(g);
                    }
                }
            }
            Op::Sub(a, b) => {
                if self.wants(*a) {
                    self.slot(lower, *a).add_assign(g);
                }
                if self.wants(*b) {
                    for (d, v) in self.slot(lower, *b).data_mut().iter_mut().zip(gd) {
                        *d -= v;
                    }
                }
            }
            Op::Scale(x, f) => {
                if self.wants(*x) {
                    for (d, v) in self.slot(lower, *x).data_mut().iter_mut().zip(gd) {
                        *d += f * v;
                    }
                }
            }
            Op::AddScalar(x) => {
                if self.wants(*x) {
                    self.slot(lower, *x).add_assign(g);
                }
            }
            Op::Relu(x) => {
                if self.wants(*x) {
                    let d = self.slot(lower, *x).data_mut();
                    for ((d, v), y) in d.iter_mut().zip(gd).zip(out.data()) {
                        if *y > 0.0 {
                            *d += v;
                        }
                    }
                }
            }
            Op::ClampMin(x, floor) => {
                if self.wants(*x) {
                    let xs = self.value(*x).data();
                    let d = self.slot(lower, *x).data_mut();
                    for ((d, v), xv) in d.iter_mut().zip(gd).zip(xs) {
                        if xv > floor {
                            *d += v;
                        }
                    }
                }
            }
            Op::GlobalAvgPool(x) => {
                if self.wants(*x) {
                    let s = self.shape(*x);
                    let hw = s[1] * s[2];
                    let d = self.slot(lower, *x).data_mut();
                    for (chunk, v) in d.chunks_mut(hw).zip(gd) {
                        let share = v / hw as f64;
                        for c in chunk {
                            *c += share;
                        }
                    }
                }
            }
            Op::Embedding { table, ids } => {
                if self.wants(*table) {
                    let dim = self.shape(*table)[1];
                    let d = self.slot(lower, *table).data_mut();
                    for (row, &id) in gd.chunks(dim).zip(ids) {
                        for (t, v) in d[id * dim..(id + 1) * dim].iter_mut().zip(row) {
                            *t += v;
                        }
                    }
                }
            }
            Op::SoftmaxRows(x) => {
                if self.wants(*x) {
                    let (_, cols) = out.rows_cols();
                    let d = self.slot(lower, *x).data_mut();
                    for ((drow, grow), yrow) in d.chunks_mut(cols).zip(gd.chunks(cols)).zip(out.data().chunks(cols)) {
                        let inner = dot(grow, yrow);
                        for ((dv, gv), yv) in drow.iter_mut().zip(grow).zip(yrow) {
                            *dv += yv * (gv - inner);
                        }
                    }
                }
            }
            Op::LayerNormRows {
                input,
                gamma,
                beta,
                normalized,
                inv_std,
            } => {
                let cols = self.shape(*gamma)[0];
                if self.wants(*gamma) {
                    let d = self.slot(lower, *gamma).data_mut();
                    for (grow, xrow) in gd.chunks(cols).zip(normalized.chunks(cols)) {
                        for ((dv, gv), xv) in d.iter_mut().zip(grow).zip(xrow) {
                            *dv += gv * xv;
                        }
                    }
                }
                if self.wants(*beta) {
                    let d = self.slot(lower, *beta).data_mut();
                    for grow in gd.chunks(cols) {
                        for (dv, gv) in d.iter_mut().zip(grow) {
                            *dv += gv;
                        }
                    }
                }
                if self.wants(*input) {
                    let gam = self.value(*gamma).data();
                    let n = cols as f64;
                    let d = self.slot(lower, *input).data_mut();
                    let mut dxhat = vec![0.0; cols];
                    for (r, is) in inv_std.iter().enumerate() {
                        let grow = &gd[r * cols..(r + 1) * cols];
                        let xrow = &normalized[r * cols..(r + 1) * cols];
                        for j in 0..cols {
                            dxhat[j] = grow[j] * gam[j];
                        }
                        let s1: f64 = dxhat.iter().sum();
                        let s2 = dot(&dxhat, xrow);
                        for j in 0..cols {
                            d[r * cols + j] += is / n * (n * dxhat[j] - s1 - xrow[j] * s2);
                        }
                    }
                }
            }
            Op::Log(x) => {
                if self.wants(*x) {
                    let xs = self.value(*x).data();
                    for ((d, v), xv) in self.slot(lower, *x).data_mut().iter_mut().zip(gd).zip(xs) {
                        *d += v / xv;
                    }
                }
            }
            Op::Dot(a, b) => {
                let s = gd[0];
                if self.wants(*a) {
                    let bd = self.value(*b).data();
                    for (d, v) in self.slot(lower, *a).data_mut().iter_mut().zip(bd) {
                        *d += s * v;
                    }
                }
                if self.wants(*b) {
                    let ad = self.value(*a).data();
                    for (d, v) in self.slot(lower, *b).data_mut().iter_mut().zip(ad) {
                        *d += s * v;
                    }
                }
            }
            Op::Norm(x) => {
                let n = out.item();
                if self.wants(*x) && n > 0.0 {
                    let xs = self.value(*x).data();
                    let s = gd[0] / n;
                    for (d, v) in self.slot(lower, *x).data_mut().iter_mut().zip(xs) {
                        *d += s * v;
                    }
                }
            }
            Op::Cosine(a, b) => {
                let c = out.item();
                let (ad, bd) = (self.value(*a).data(), self.value(*b).data());
                let (na, nb) = (dot(ad, ad).sqrt(), dot(bd, bd).sqrt());
                let s = gd[0];
                if self.wants(*a) {
                    for ((d, av), bv) in self.slot(lower, *a).data_mut().iter_mut().zip(ad).zip(bd) {
                        *d += s * (bv / (na * nb) - c * av / (na * na));
                    }
                }
                if self.wants(*b) {
                    for ((d, av), bv) in self.slot(lower, *b).data_mut().iter_mut().zip(ad).zip(bd) {
                        *d += s * (av / (na * nb) - c * bv / (nb * nb));
                    }
                }
            }
            Op::Row { input, row } => {
                if self.wants(*input) {
                    let cols = gd.len();
                    let d = self.slot(lower, *input).data_mut();
                    for (dv, gv) in d[row * cols..(row + 1) * cols].iter_mut().zip(gd) {
                        *dv += gv;
                    }
                }
            }
            Op::Cols { input, start } => {
                if self.wants(*input) {
                    let width = self.shape(*input)[1];
                    let len = out.shape()[1];
                    let d = self.slot(lower, *input).data_mut();
                    for (r, grow) in gd.chunks(len).enumerate() {
                        let base = r * width + start;
                        for (dv, gv) in d[base..base + len].iter_mut().zip(grow) {
                            *dv += gv;
                        }
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let total = out.shape()[1];
                let mut offset = 0;
                for p in parts {
                    let w = self.shape(*p)[1];
                    if self.wants(*p) {
                        let d = self.slot(lower, *p).data_mut();
                        for (r, drow) in d.chunks_mut(w).enumerate() {
                            for (dv, gv) in drow.iter_mut().zip(&gd[r * total + offset..]) {
                                *dv += gv;
                            }
                        }
                    }
                    offset += w;
                }
            }
            Op::Sum(x) => {
                if self.wants(*x) {
                    let s = gd[0];
                    for d in self.slot(lower, *x).data_mut() {
                        *d += s;
                    }
                }
            }
            Op::Pick { input, index } => {
                if self.wants(*input) {
                    self.slot(lower, *input).data_mut()[*index] += gd[0];
                }
            }
        }
    }

    /// Parameter-index / gradient pairs for every parameter on this tape.
    pub fn param_grads<'g>(&self, grads: &'g Gradients) -> impl Iterator<Item = (usize, &'g Tensor)> + 'g {
        let mut pairs: Vec<(usize, Var)> = self.params.iter().map(|(&i, &v)| (i, v)).collect();
        pairs.sort_unstable();
        pairs.into_iter().filter_map(move |(i, v)| grads.get(v).map(|g| (i, g)))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
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

fn im2col(x: &[f64], g: &ConvGeom) -> Vec<f64> {
    let q = g.out_height * g.out_width;
    let k = g.kernel;
    let mut cols = vec![0.0; g.channels * k * k * q];
    for c in 0..g.channels {
        let plane = &x[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..k {
            for kj in 0..k {
                let r = (c * k + ki) * k + kj;
                let dst = &mut cols[r * q..(r + 1) * q];
                for oy in 0..g.out_height {
                    let Some(iy) = (oy * g.stride + ki).checked_sub(g.pad).filter(|&y| y < g.height) else {
                        continue;
                    };
                    let src = &plane[iy * g.width..(iy + 1) * g.width];
                    for ox in 0..g.out_width {
                        if let Some(ix) = (ox * g.stride + kj).checked_sub(g.pad).filter(|&x| x < g.width) {
                            dst[oy * g.out_width + ox] = src[ix];
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im_acc(dcols: &[f64], g: &ConvGeom, dx: &mut [f64]) {
    let q = g.out_height * g.out_width;
    let k = g.kernel;
    for c in 0..g.channels {
        let plane = &mut dx[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..k {
            for kj in 0..k {
                let r = (c * k + ki) * k + kj;
                let src = &dcols[r * q..(r + 1) * q];
                for oy in 0..g.out_height {
                    let Some(iy) = (oy * g.stride + ki).checked_sub(g.pad).filter(|&y| y < g.height) else {
                        continue;
                    };
                    for ox in 0..g.out_width {
                        if let Some(ix) = (ox * g.stride + kj).checked_sub(g.pad).filter(|&x| x < g.width) {
                            plane[iy * g.width + ix] += src[oy * g.out_width + ox];
                        }
                    }
                }
            }
        }
    }
}
