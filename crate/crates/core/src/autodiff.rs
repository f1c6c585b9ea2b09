//! Tape-based reverse-mode differentiation over small dense tensors, with the
//! handful of layers the classifier, generator and discriminator need, plus Adam.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicU32, Ordering};

use crate::error::{Error, Result};

/// Row-major real tensor.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Shape(format!("shape {:?} needs {} values, got {}", shape, expected, data.len())));
        }
        Ok(Tensor { shape, data })
    }

    /// Caller guarantees `data.len()` equals the shape product.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor { shape, data: vec![0.0; n] }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor { shape: vec![1], data: vec![value] }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor { shape: vec![data.len()], data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(Error::Shape(format!("cannot reshape {:?} into {:?}", self.shape, shape)));
        }
        self.shape = shape;
        Ok(self)
    }
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    tape: u32,
    index: usize,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Conv2d { input: usize, weights: usize, stride: usize },
    Dense { x: usize, w: usize, b: usize },
    Relu(usize),
    LeakyRelu(usize, f64),
    Tanh(usize),
    Sigmoid(usize),
    Clamp(usize, f64, f64),
    Ln(usize),
    Logit(usize),
    Affine(usize, f64),
    Add(usize, usize),
    Mul(usize, usize),
    Sum(usize),
    Mean(usize),
    SoftmaxCe { logits: usize, label: usize, probs: Vec<f64> },
    Concat(Vec<usize>),
    Slice { src: usize, start: usize },
    Reshape(usize),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

static NEXT_TAPE: AtomicU32 = AtomicU32::new(1);

/// Record of one forward pass.
#[derive(Debug)]
pub struct Tape {
    id: u32,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { id: NEXT_TAPE.fetch_add(1, Ordering::Relaxed), nodes: Vec::new() }
    }

    fn idx(&self, v: Var) -> Result<usize> {
        if v.tape != self.id || v.index >= self.nodes.len() {
            return Err(Error::ForeignVar);
        }
        Ok(v.index)
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var { tape: self.id, index: self.nodes.len() - 1 }
    }

    fn rg(&self, i: usize) -> bool {
        self.nodes[i].requires_grad
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Non-differentiated leaf.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> Result<&Tensor> {
        Ok(&self.nodes[self.idx(v)?].value)
    }

    /// Scalar value of a one-element variable.
    pub fn scalar(&self, v: Var) -> Result<f64> {
        let t = self.value(v)?;
        if t.len() != 1 {
            return Err(Error::NonScalarLoss { len: t.len() });
        }
        Ok(t.data[0])
    }

    /// Valid cross-correlation of an `[H,W]` image with `[F,kh,kw]` kernels,
    /// no padding and no bias. Output `[F,H',W']`, `H' = ⌊(H−kh)/stride⌋+1`.
    pub fn conv2d(&mut self, input: Var, weights: Var, stride: usize) -> Result<Var> {
        let (i, w) = (self.idx(input)?, self.idx(weights)?);
        let x = &self.nodes[i].value;
        let k = &self.nodes[w].value;
        if x.shape.len() != 2 || k.shape.len() != 3 || stride == 0 {
            return Err(Error::Shape(format!(
                "conv2d expects [H,W] input and [F,kh,kw] kernels, got {:?} and {:?} (stride {stride})",
                x.shape, k.shape
            )));
        }
        let (h, wd) = (x.shape[0], x.shape[1]);
        let (f, kh, kw) = (k.shape[0], k.shape[1], k.shape[2]);
        if kh > h || kw > wd {
            return Err(Error::Shape(format!("kernel {kh}x{kw} larger than image {h}x{wd}")));
        }
        let (oh, ow) = ((h - kh) / stride + 1, (wd - kw) / stride + 1);
        let mut out = vec![0.0; f * oh * ow];
        for fi in 0..f {
            let kern = &k.data[fi * kh * kw..(fi + 1) * kh * kw];
            for r in 0..oh {
                for c in 0..ow {
                    let mut acc = 0.0;
                    for a in 0..kh {
                        let row = (r * stride + a) * wd + c * stride;
                        for b in 0..kw {
                            acc += kern[a * kw + b] * x.data[row + b];
                        }
                    }
                    out[(fi * oh + r) * ow + c] = acc;
                }
            }
        }
        let rg = self.rg(i) || self.rg(w);
        Ok(self.push(Tensor { shape: vec![f, oh, ow], data: out }, Op::Conv2d { input: i, weights: w, stride }, rg))
    }

    /// `W·x + b` with `x` of any shape holding `n` values, `W` `[m,n]`, `b` `[m]`.
    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xi, wi, bi) = (self.idx(x)?, self.idx(w)?, self.idx(b)?);
        let (xv, wv, bv) = (&self.nodes[xi].value, &self.nodes[wi].value, &self.nodes[bi].value);
        if wv.shape.len() != 2 || wv.shape[1] != xv.len() || bv.len() != wv.shape[0] {
            return Err(Error::Shape(format!(
                "dense: input {} values, weights {:?}, bias {:?}",
                xv.len(),
                wv.shape,
                bv.shape
            )));
        }
        let (m, n) = (wv.shape[0], wv.shape[1]);
        let out: Vec<f64> = (0..m)
            .map(|r| bv.data[r] + wv.data[r * n..(r + 1) * n].iter().zip(&xv.data).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        let rg = self.rg(xi) || self.rg(wi) || self.rg(bi);
        Ok(self.push(Tensor::vector(out), Op::Dense { x: xi, w: wi, b: bi }, rg))
    }

    fn unary(&mut self, v: Var, f: impl Fn(f64) -> f64, op: impl FnOnce(usize) -> Op) -> Result<Var> {
        let i = self.idx(v)?;
        let src = &self.nodes[i].value;
        let value = Tensor { shape: src.shape.clone(), data: src.data.iter().map(|&x| f(x)).collect() };
        let rg = self.rg(i);
        Ok(self.push(value, op(i), rg))
    }

    pub fn relu(&mut self, v: Var) -> Result<Var> {
        self.unary(v, |x| x.max(0.0), Op::Relu)
    }

    pub fn leaky_relu(&mut self, v: Var, slope: f64) -> Result<Var> {
        self.unary(v, |x| if x > 0.0 { x } else { slope * x }, |i| Op::LeakyRelu(i, slope))
    }

    pub fn tanh(&mut self, v: Var) -> Result<Var> {
        self.unary(v, libm::tanh, Op::Tanh)
    }

    pub fn sigmoid(&mut self, v: Var) -> Result<Var> {
        self.unary(v, sigmoid, Op::Sigmoid)
    }

    /// Elementwise clamp into `[lo, hi]`; gradient is zero where clamped.
    pub fn clamp(&mut self, v: Var, lo: f64, hi: f64) -> Result<Var> {
        self.unary(v, |x| x.clamp(lo, hi), |i| Op::Clamp(i, lo, hi))
    }

    pub fn ln(&mut self, v: Var) -> Result<Var> {
        self.unary(v, libm::log, Op::Ln)
    }

    /// `ln(p / (1 − p))`.
    pub fn logit(&mut self, v: Var) -> Result<Var> {
        self.unary(v, |p| libm::log(p / (1.0 - p)), Op::Logit)
    }

    /// `a·x + b` elementwise.
    pub fn affine(&mut self, v: Var, a: f64, b: f64) -> Result<Var> {
        self.unary(v, |x| a * x + b, |i| Op::Affine(i, a))
    }

    pub fn scale(&mut self, v: Var, a: f64) -> Result<Var> {
        self.affine(v, a, 0.0)
    }

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: fn(usize, usize) -> Op) -> Result<Var> {
        let (ai, bi) = (self.idx(a)?, self.idx(b)?);
        let (av, bv) = (&self.nodes[ai].value, &self.nodes[bi].value);
        if av.len() != bv.len() {
            return Err(Error::Shape(format!("elementwise op on {:?} and {:?}", av.shape, bv.shape)));
        }
        let data = av.data.iter().zip(&bv.data).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor { shape: av.shape.clone(), data };
        let rg = self.rg(ai) || self.rg(bi);
        Ok(self.push(value, op(ai, bi), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, |x, y| x + y, Op::Add)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, |x, y| x * y, Op::Mul)
    }

    pub fn sum(&mut self, v: Var) -> Result<Var> {
        let i = self.idx(v)?;
        let s = self.nodes[i].value.data.iter().sum();
        let rg = self.rg(i);
        Ok(self.push(Tensor::scalar(s), Op::Sum(i), rg))
    }

    pub fn mean(&mut self, v: Var) -> Result<Var> {
        let i = self.idx(v)?;
        let t = &self.nodes[i].value;
        if t.is_empty() {
            return Err(Error::Empty("mean over empty tensor"));
        }
        let m = t.data.iter().sum::<f64>() / t.len() as f64;
        let rg = self.rg(i);
        Ok(self.push(Tensor::scalar(m), Op::Mean(i), rg))
    }

    /// `−ln softmax(logits)[label]`, stabilised by max subtraction.
    pub fn softmax_cross_entropy(&mut self, logits: Var, label: usize) -> Result<Var> {
        let i = self.idx(logits)?;
        let z = &self.nodes[i].value.data;
        if z.len() < 2 {
            return Err(Error::Shape(format!("softmax needs at least 2 classes, got {}", z.len())));
        }
        if label >= z.len() {
            return Err(Error::LabelOutOfRange { label, classes: z.len() });
        }
        let (lse, probs) = log_softmax_parts(z);
        let loss = lse - z[label];
        let rg = self.rg(i);
        Ok(self.push(Tensor::scalar(loss), Op::SoftmaxCe { logits: i, label, probs }, rg))
    }

    /// Flat concatenation.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let idx: Vec<usize> = parts.iter().map(|&p| self.idx(p)).collect::<Result<_>>()?;
        let mut data = Vec::new();
        for &i in &idx {
            data.extend_from_slice(&self.nodes[i].value.data);
        }
        let rg = idx.iter().any(|&i| self.rg(i));
        Ok(self.push(Tensor::vector(data), Op::Concat(idx), rg))
    }

    /// Flat sub-range `[start, start+len)`.
    pub fn slice(&mut self, v: Var, start: usize, len: usize) -> Result<Var> {
        let i = self.idx(v)?;
        let src = &self.nodes[i].value;
        if start + len > src.len() {
            return Err(Error::Shape(format!("slice {start}..{} of {} values", start + len, src.len())));
        }
        let value = Tensor::vector(src.data[start..start + len].to_vec());
        let rg = self.rg(i);
        Ok(self.push(value, Op::Slice { src: i, start }, rg))
    }

    pub fn reshape(&mut self, v: Var, shape: Vec<usize>) -> Result<Var> {
        let i = self.idx(v)?;
        let value = self.nodes[i].value.clone().reshape(shape)?;
        let rg = self.rg(i);
        Ok(self.push(value, Op::Reshape(i), rg))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let root = self.idx(loss)?;
        let len = self.nodes[root].value.len();
        if len != 1 {
            return Err(Error::NonScalarLoss { len });
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; root + 1];
        grads[root] = Some(vec![1.0]);
        for n in (0..=root).rev() {
            let Some(g) = grads[n].take() else { continue };
            if !self.nodes[n].requires_grad {
                continue;
            }
            self.propagate(n, &g, &mut grads);
            grads[n] = Some(g);
        }
        let grads = grads
            .into_iter()
            .enumerate()
            .map(|(i, g)| {
                g.filter(|_| self.nodes[i].requires_grad)
                    .map(|data| Tensor { shape: self.nodes[i].value.shape.clone(), data })
            })
            .collect();
        Ok(Gradients { tape: self.id, grads })
    }

    fn propagate(&self, n: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[n];
        let out = &node.value.data;
        let mut acc = |i: usize, f: &dyn Fn(&mut [f64])| {
            if !self.nodes[i].requires_grad {
                return;
            }
            let slot = grads[i].get_or_insert_with(|| vec![0.0; self.nodes[i].value.len()]);
            f(slot);
        };
        let input = |i: usize| &self.nodes[i].value.data;
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { input: xi, weights: wi, stride } => {
                let (x, k) = (&self.nodes[*xi].value, &self.nodes[*wi].value);
                let wd = x.shape[1];
                let (f, kh, kw) = (k.shape[0], k.shape[1], k.shape[2]);
                let (oh, ow) = (node.value.shape[1], node.value.shape[2]);
                let s = *stride;
                acc(*wi, &|gw| {
                    for fi in 0..f {
                        for r in 0..oh {
                            for c in 0..ow {
                                let go = g[(fi * oh + r) * ow + c];
                                for a in 0..kh {
                                    let row = (r * s + a) * wd + c * s;
                                    for b in 0..kw {
                                        gw[(fi * kh + a) * kw + b] += go * x.data[row + b];
                                    }
                                }
                            }
                        }
                    }
                });
                acc(*xi, &|gx| {
                    for fi in 0..f {
                        for r in 0..oh {
                            for c in 0..ow {
                                let go = g[(fi * oh + r) * ow + c];
                                for a in 0..kh {
                                    let row = (r * s + a) * wd + c * s;
                                    for b in 0..kw {
                                        gx[row + b] += go * k.data[(fi * kh + a) * kw + b];
                                    }
                                }
                            }
                        }
                    }
                });
            }
            Op::Dense { x, w, b } => {
                let (xv, wv) = (input(*x), &self.nodes[*w].value);
                let n_in = wv.shape[1];
                acc(*b, &|gb| gb.iter_mut().zip(g).for_each(|(a, gi)| *a += gi));
                acc(*w, &|gw| {
                    for (r, gr) in g.iter().enumerate() {
                        for (c, xc) in xv.iter().enumerate() {
                            gw[r * n_in + c] += gr * xc;
                        }
                    }
                });
                acc(*x, &|gx| {
                    for (r, gr) in g.iter().enumerate() {
                        for (c, a) in gx.iter_mut().enumerate() {
                            *a += gr * wv.data[r * n_in + c];
                        }
                    }
                });
            }
            Op::Relu(i) => {
                let xs = input(*i);
                acc(*i, &|gx| {
                    for k in 0..gx.len() {
                        if xs[k] > 0.0 {
                            gx[k] += g[k];
                        }
                    }
                })
            }
            Op::LeakyRelu(i, slope) => {
                let xs = input(*i);
                acc(*i, &|gx| {
                    for k in 0..gx.len() {
                        gx[k] += if xs[k] > 0.0 { g[k] } else { slope * g[k] };
                    }
                })
            }
            Op::Tanh(i) => acc(*i, &|gx| {
                for k in 0..gx.len() {
                    gx[k] += g[k] * (1.0 - out[k] * out[k]);
                }
            }),
            Op::Sigmoid(i) => acc(*i, &|gx| {
                for k in 0..gx.len() {
                    gx[k] += g[k] * out[k] * (1.0 - out[k]);
                }
            }),
            Op::Clamp(i, lo, hi) => {
                let xs = input(*i);
                acc(*i, &|gx| {
                    for k in 0..gx.len() {
                        if xs[k] >= *lo && xs[k] <= *hi {
                            gx[k] += g[k];
                        }
                    }
                })
            }
            Op::Ln(i) => {
                let xs = input(*i);
                acc(*i, &|gx| {
                    for k in 0..gx.len() {
                        gx[k] += g[k] / xs[k];
                    }
                })
            }
            Op::Logit(i) => {
                let xs = input(*i);
                acc(*i, &|gx| {
                    for k in 0..gx.len() {
                        gx[k] += g[k] / (xs[k] * (1.0 - xs[k]));
                    }
                })
            }
            Op::Affine(i, a) => acc(*i, &|gx| gx.iter_mut().zip(g).for_each(|(x, gi)| *x += a * gi)),
            Op::Add(a, b) => {
                acc(*a, &|gx| gx.iter_mut().zip(g).for_each(|(x, gi)| *x += gi));
                acc(*b, &|gx| gx.iter_mut().zip(g).for_each(|(x, gi)| *x += gi));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (input(*a), input(*b));
                acc(*a, &|gx| {
                    for k in 0..gx.len() {
                        gx[k] += g[k] * bv[k];
                    }
                });
                acc(*b, &|gx| {
                    for k in 0..gx.len() {
                        gx[k] += g[k] * av[k];
                    }
                });
            }
            Op::Sum(i) => acc(*i, &|gx| gx.iter_mut().for_each(|x| *x += g[0])),
            Op::Mean(i) => {
                let inv = 1.0 / self.nodes[*i].value.len() as f64;
                acc(*i, &|gx| gx.iter_mut().for_each(|x| *x += g[0] * inv))
            }
            Op::SoftmaxCe { logits, label, probs } => acc(*logits, &|gx| {
                for k in 0..gx.len() {
                    let onehot = if k == *label { 1.0 } else { 0.0 };
                    gx[k] += g[0] * (probs[k] - onehot);
                }
            }),
            Op::Concat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.nodes[p].value.len();
                    acc(p, &|gx| gx.iter_mut().zip(&g[offset..offset + len]).for_each(|(x, gi)| *x += gi));
                    offset += len;
                }
            }
            Op::Slice { src, start } => {
                acc(*src, &|gx| gx[*start..*start + g.len()].iter_mut().zip(g).for_each(|(x, gi)| *x += gi))
            }
            Op::Reshape(i) => acc(*i, &|gx| gx.iter_mut().zip(g).for_each(|(x, gi)| *x += gi)),
        }
    }
}

/// Gradients produced by [`Tape::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    tape: u32,
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of a differentiable variable that the loss depends on.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        if v.tape != self.tape {
            return None;
        }
        self.grads.get(v.index).and_then(Option::as_ref)
    }

    /// Like [`get`](Self::get) but yields zeros of `shape_of`'s shape when the
    /// loss does not depend on `v`.
    pub fn get_or_zeros(&self, v: Var, tape: &Tape) -> Result<Tensor> {
        match self.get(v) {
            Some(t) => Ok(t.clone()),
            None => Ok(Tensor::zeros(tape.value(v)?.shape.clone())),
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

fn log_softmax_parts(z: &[f64]) -> (f64, Vec<f64>) {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|&v| libm::exp(v - m)).collect();
    let total: f64 = exps.iter().sum();
    (m + libm::log(total), exps.into_iter().map(|e| e / total).collect())
}

/// Numerically stable softmax.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    log_softmax_parts(z).1
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

impl AdamConfig {
    pub fn with_rate(rate: f64) -> Self {
        AdamConfig { rate, ..Self::default() }
    }
}

/// Adam with bias correction. Moments are allocated on the first step.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam { config, step: 0, first: Vec::new(), second: Vec::new() }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[Tensor], &[Tensor]) {
        (&self.first, &self.second)
    }

    /// Restores optimizer state, e.g. from a checkpoint.
    pub fn restore(&mut self, step: u64, first: Vec<Tensor>, second: Vec<Tensor>) -> Result<()> {
        if first.len() != second.len() || first.iter().zip(&second).any(|(a, b)| a.shape != b.shape) {
            return Err(Error::Shape(String::from("first/second moment mismatch")));
        }
        self.step = step;
        self.first = first;
        self.second = second;
        Ok(())
    }

    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != grads.len() || params.iter().zip(grads).any(|(p, g)| p.shape != g.shape) {
            return Err(Error::Shape(String::from("adam: parameter and gradient shapes differ")));
        }
        if self.first.is_empty() {
            self.first = params.iter().map(|p| Tensor::zeros(p.shape.clone())).collect();
            self.second = self.first.clone();
        } else if self.first.len() != params.len() || self.first.iter().zip(params.iter()).any(|(m, p)| m.shape != p.shape)
        {
            return Err(Error::Shape(String::from("adam: parameter shapes changed between steps")));
        }
        self.step += 1;
        let AdamConfig { rate, beta1, beta2, epsilon } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - libm::pow(beta1, t as f64);
        let c2 = 1.0 - libm::pow(beta2, t as f64);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.first.iter_mut().zip(self.second.iter_mut())) {
            for k in 0..p.data.len() {
                let gk = g.data[k];
                m.data[k] = beta1 * m.data[k] + (1.0 - beta1) * gk;
                v.data[k] = beta2 * v.data[k] + (1.0 - beta2) * gk * gk;
                let mhat = m.data[k] / c1;
                let vhat = v.data[k] / c2;
                p.data[k] -= rate * mhat / (libm::sqrt(vhat) + epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], grad: &[f64], tol: f64) {
        let h = 1e-4;
        let mut xp = x.to_vec();
        for k in 0..x.len() {
            xp[k] = x[k] + h;
            let up = f(&xp);
            xp[k] = x[k] - h;
            let dn = f(&xp);
            xp[k] = x[k];
            let fd = (up - dn) / (2.0 * h);
            let denom = fd.abs().max(grad[k].abs()).max(1e-6);
            assert!((fd - grad[k]).abs() / denom < tol, "component {k}: fd {fd} vs {}", grad[k]);
        }
    }

    #[test]
    fn square_gradient() {
        let mut t = Tape::new();
        let x = t.param(Tensor::scalar(3.0));
        let y = t.mul(x, x).unwrap();
        let g = t.backward(y).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[6.0]);
    }

    #[test]
    fn conv_examples() {
        let mut t = Tape::new();
        let img = t.constant(Tensor::new(vec![2, 2], vec![1.0; 4]).unwrap());
        let k = t.param(Tensor::new(vec![1, 2, 2], vec![1.0; 4]).unwrap());
        let out = t.conv2d(img, k, 1).unwrap();
        assert_eq!(t.value(out).unwrap().data(), &[4.0]);

        let big = t.constant(Tensor::new(vec![28, 28], (0..784).map(|i| i as f64 / 784.0).collect()).unwrap());
        let kern = t.param(Tensor::zeros(vec![16, 2, 2]));
        let out = t.conv2d(big, kern, 2).unwrap();
        assert_eq!(t.value(out).unwrap().shape(), &[16, 14, 14]);
        assert!(t.value(out).unwrap().data().iter().all(|&v| v == 0.0));

        let bad = t.param(Tensor::zeros(vec![2, 2]));
        assert!(t.conv2d(big, bad, 2).is_err());
    }

    #[test]
    fn dense_examples() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::vector(vec![1.5, -2.0]));
        let eye = t.constant(Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let zero_b = t.constant(Tensor::zeros(vec![2]));
        let y = t.dense(x, eye, zero_b).unwrap();
        assert_eq!(t.value(y).unwrap().data(), &[1.5, -2.0]);

        let zw = t.constant(Tensor::zeros(vec![3, 2]));
        let b = t.constant(Tensor::vector(vec![0.1, 0.2, 0.3]));
        let y = t.dense(x, zw, b).unwrap();
        assert_eq!(t.value(y).unwrap().data(), &[0.1, 0.2, 0.3]);

        // 3x2 by hand: rows (1,2), (3,4), (5,6) times (1.5, -2) plus (1,1,1)
        let w = t.constant(Tensor::new(vec![3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap());
        let ones = t.constant(Tensor::vector(vec![1.0; 3]));
        let y = t.dense(x, w, ones).unwrap();
        assert_eq!(t.value(y).unwrap().data(), &[-1.5, -2.5, -3.5]);
        assert!(t.dense(x, w, zero_b).is_err());
    }

    #[test]
    fn cross_entropy_examples() {
        let mut t = Tape::new();
        let z = t.constant(Tensor::vector(vec![0.0, 0.0]));
        let l = t.softmax_cross_entropy(z, 0).unwrap();
        assert!((t.scalar(l).unwrap() - core::f64::consts::LN_2).abs() < 1e-12);
        let z = t.constant(Tensor::vector(vec![10.0, -10.0]));
        let l0 = t.softmax_cross_entropy(z, 0).unwrap();
        let expect0 = libm::log1p(libm::exp(-20.0));
        assert!((t.scalar(l0).unwrap() - expect0).abs() < 1e-15);
        assert!((t.scalar(l0).unwrap() - 2.06e-9).abs() < 1e-11);
        let l1 = t.softmax_cross_entropy(z, 1).unwrap();
        let expect1 = 20.0 + expect0;
        assert!((t.scalar(l1).unwrap() - expect1).abs() < 1e-12);
        assert!(matches!(t.softmax_cross_entropy(z, 2), Err(Error::LabelOutOfRange { .. })));
    }

    #[test]
    fn softmax_sums_to_one() {
        let p = softmax(&[1000.0, -3.0, 2.5, 0.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn backward_errors() {
        let mut t = Tape::new();
        let x = t.param(Tensor::vector(vec![1.0, 2.0]));
        assert!(matches!(t.backward(x), Err(Error::NonScalarLoss { len: 2 })));
        let other = Tape::new();
        let s = t.sum(x).unwrap();
        assert!(matches!(other.backward(s), Err(Error::ForeignVar)));
    }

    fn dense_ce_loss(params: &[f64], input: &[f64]) -> (f64, Vec<f64>) {
        let mut t = Tape::new();
        let x = t.constant(Tensor::vector(input.to_vec()));
        let w = t.param(Tensor::new(vec![3, 4], params[..12].to_vec()).unwrap());
        let b = t.param(Tensor::vector(params[12..].to_vec()));
        let h = t.dense(x, w, b).unwrap();
        let l = t.softmax_cross_entropy(h, 2).unwrap();
        let g = t.backward(l).unwrap();
        let mut grad = g.get(w).unwrap().data().to_vec();
        grad.extend_from_slice(g.get(b).unwrap().data());
        (t.scalar(l).unwrap(), grad)
    }

    #[test]
    fn dense_ce_matches_finite_differences() {
        let params: Vec<f64> = (0..15).map(|i| libm::sin(i as f64 * 1.3) * 0.7).collect();
        let input = [0.3, -1.2, 0.8, 2.0];
        let (_, grad) = dense_ce_loss(&params, &input);
        fd_check(|p| dense_ce_loss(p, &input).0, &params, &grad, 1e-4);
    }

    fn conv_stack_loss(kernels: &[f64]) -> (f64, Vec<f64>) {
        let mut t = Tape::new();
        let img: Vec<f64> = (0..36).map(|i| libm::cos(i as f64 * 0.77) * 0.5 + 0.5).collect();
        let x = t.constant(Tensor::new(vec![6, 6], img).unwrap());
        let k = t.param(Tensor::new(vec![2, 2, 2], kernels.to_vec()).unwrap());
        let c = t.conv2d(x, k, 2).unwrap();
        let a = t.tanh(c).unwrap();
        let w = t.constant(Tensor::new(vec![2, 18], (0..36).map(|i| libm::sin(i as f64) * 0.3).collect()).unwrap());
        let b = t.constant(Tensor::vector(vec![0.05, -0.05]));
        let h = t.dense(a, w, b).unwrap();
        let l = t.softmax_cross_entropy(h, 1).unwrap();
        let g = t.backward(l).unwrap();
        (t.scalar(l).unwrap(), g.get(k).unwrap().data().to_vec())
    }

    #[test]
    fn conv_dense_ce_matches_finite_differences() {
        let kernels = [0.3, -0.2, 0.5, 0.1, -0.4, 0.25, 0.15, -0.35];
        let (_, grad) = conv_stack_loss(&kernels);
        fd_check(|k| conv_stack_loss(k).0, &kernels, &grad, 1e-4);
    }

    #[test]
    fn conv_input_gradient() {
        let f = |x: &[f64]| -> (f64, Vec<f64>) {
            let mut t = Tape::new();
            let xi = t.param(Tensor::new(vec![3, 3], x.to_vec()).unwrap());
            let k = t.constant(Tensor::new(vec![1, 2, 2], vec![0.5, -1.0, 0.25, 2.0]).unwrap());
            let c = t.conv2d(xi, k, 1).unwrap();
            let sq = t.mul(c, c).unwrap();
            let s = t.sum(sq).unwrap();
            let g = t.backward(s).unwrap();
            (t.scalar(s).unwrap(), g.get(xi).unwrap().data().to_vec())
        };
        let x: Vec<f64> = (0..9).map(|i| i as f64 * 0.1 - 0.3).collect();
        let (_, grad) = f(&x);
        fd_check(|p| f(p).0, &x, &grad, 1e-4);
    }

    #[test]
    fn elementwise_ops_match_finite_differences() {
        // ln(sigmoid(a·x)) + logit(clamped sigmoid) + leaky_relu, mean/concat/slice/reshape
        let f = |x: &[f64]| -> (f64, Vec<f64>) {
            let mut t = Tape::new();
            let v = t.param(Tensor::vector(x.to_vec()));
            let s = t.sigmoid(v).unwrap();
            let c = t.clamp(s, 1e-7, 1.0 - 1e-7).unwrap();
            let ln = t.ln(c).unwrap();
            let lg = t.logit(c).unwrap();
            let om = t.affine(c, -1.0, 1.0).unwrap();
            let ln1 = t.ln(om).unwrap();
            let lr = t.leaky_relu(v, 0.2).unwrap();
            let r = t.relu(v).unwrap();
            let cat = t.concat(&[ln, lg, ln1, lr, r]).unwrap();
            let sl = t.slice(cat, 2, 10).unwrap();
            let rs = t.reshape(sl, vec![2, 5]).unwrap();
            let th = t.tanh(rs).unwrap();
            let sc = t.scale(th, 1.7).unwrap();
            let m1 = t.mean(sc).unwrap();
            let m2 = t.sum(cat).unwrap();
            let total = t.add(m1, m2).unwrap();
            let g = t.backward(total).unwrap();
            (t.scalar(total).unwrap(), g.get(v).unwrap().data().to_vec())
        };
        let x = [0.4, -1.1, 2.3, -0.2];
        let (_, grad) = f(&x);
        fd_check(|p| f(p).0, &x, &grad, 1e-4);
    }

    #[test]
    fn clamp_blocks_gradient() {
        let mut t = Tape::new();
        let v = t.param(Tensor::vector(vec![50.0]));
        let s = t.sigmoid(v).unwrap();
        let c = t.clamp(s, 1e-7, 1.0 - 1e-7).unwrap();
        assert!((t.value(c).unwrap().data()[0] - (1.0 - 1e-7)).abs() < 1e-15);
        let l = t.sum(c).unwrap();
        let g = t.backward(l).unwrap();
        assert_eq!(g.get(v).unwrap().data(), &[0.0]);
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::scalar(2.0));
        let b = t.param(Tensor::scalar(5.0));
        let p = t.mul(a, b).unwrap();
        let g = t.backward(p).unwrap();
        assert!(g.get(a).is_none());
        assert_eq!(g.get(b).unwrap().data(), &[2.0]);
        assert_eq!(g.get_or_zeros(a, &t).unwrap().data(), &[0.0]);
    }

    #[test]
    fn adam_zero_gradient_keeps_params() {
        let mut adam = Adam::new(AdamConfig::default());
        let mut p = vec![Tensor::vector(vec![1.0, -2.0])];
        let g = vec![Tensor::zeros(vec![2])];
        adam.step(&mut p, &g).unwrap();
        assert_eq!(p[0].data(), &[1.0, -2.0]);
        assert_eq!(adam.steps(), 1);
    }

    #[test]
    fn adam_first_step_moves_by_rate() {
        let mut adam = Adam::new(AdamConfig::with_rate(0.01));
        let mut p = vec![Tensor::vector(vec![0.0, 0.0])];
        adam.step(&mut p, &[Tensor::vector(vec![3.0, -0.5])]).unwrap();
        assert!((p[0].data()[0] + 0.01).abs() < 1e-9);
        assert!((p[0].data()[1] - 0.01).abs() < 1e-9);
    }

    #[test]
    fn adam_is_deterministic_and_checks_shapes() {
        let run = || {
            let mut adam = Adam::new(AdamConfig::default());
            let mut p = vec![Tensor::vector(vec![0.5, 0.25, -1.0])];
            for s in 0..20 {
                let g = Tensor::vector(p[0].data().iter().map(|x| x * 2.0 + s as f64 * 0.01).collect());
                adam.step(&mut p, &[g]).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
        let mut adam = Adam::new(AdamConfig::default());
        let mut p = vec![Tensor::vector(vec![0.0; 2])];
        assert!(adam.step(&mut p, &[Tensor::zeros(vec![3])]).is_err());
    }
}
