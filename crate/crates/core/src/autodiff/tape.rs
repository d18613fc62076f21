//! Reverse-mode tape.
//!
//! Every operation appends a node holding its output value and enough saved
//! state to run its backward rule. Nodes are created after their inputs, so
//! walking the tape from the end visits each node once, after all of its
//! consumers.

use crate::autodiff::{Grads, ParamId, ParamSet, Real, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv2dSpec {
    pub stride: usize,
    pub padding: usize,
}

impl Conv2dSpec {
    /// Stride 1, zero padding that preserves spatial size for odd `kernel`.
    pub fn same(kernel: usize) -> Self {
        Conv2dSpec {
            stride: 1,
            padding: kernel / 2,
        }
    }
}

enum Op<T> {
    Leaf,
    Param(ParamId),
    Conv2d {
        x: Var,
        w: Var,
        b: Var,
        spec: Conv2dSpec,
        kernel: usize,
        /// im2col of the input, `(C k k) x (Ho Wo)`; empty when not recording.
        cols: Vec<T>,
    },
    MaxPool {
        x: Var,
        argmax: Vec<usize>,
    },
    Relu(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Reshape(Var),
    GlobalAvgPool(Var),
    MatMul {
        a: Var,
        b: Var,
        m: usize,
        k: usize,
        n: usize,
    },
    Sum(Var),
    SumSquares(Var),
    Mse(Var, Var),
    SoftmaxCe {
        logits: Var,
        label: usize,
        probs: Vec<T>,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Single-writer record of one forward pass.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    node_grads: Vec<Option<Vec<T>>>,
    recording: bool,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn check_same_shape<T: Real>(op: &str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(format!(
            "{op}: shapes {:?} and {:?} differ",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

impl<T: Real> Tape<T> {
    /// A tape that records everything needed for [`Tape::backward`].
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            node_grads: Vec::new(),
            recording: true,
        }
    }

    /// Forward-only evaluation: no saved state, nothing requires gradients.
    pub fn inference() -> Self {
        Tape {
            nodes: Vec::new(),
            node_grads: Vec::new(),
            recording: false,
        }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad: requires_grad && self.recording,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn take_value(&mut self, v: Var) -> Tensor<T> {
        std::mem::replace(&mut self.nodes[v.0].value, Tensor::zeros(&[0]))
    }

    /// Constant or input tensor. With `requires_grad`, its gradient can be
    /// read back with [`Tape::grad`] after a backward pass.
    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    /// Places a copy of a parameter on the tape.
    pub fn param(&mut self, params: &ParamSet<T>, id: ParamId) -> Var {
        self.push(params.value(id).clone(), Op::Param(id), true)
    }

    /// Cross-correlation of `x (C, H, W)` with `w (O, C, k, k)` plus bias `b (O)`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, spec: Conv2dSpec) -> Result<Var> {
        let (c, h, wd) = self.value(x).chw()?;
        let ws = self.value(w).shape().to_vec();
        let [o, wc, k, k2] = ws[..] else {
            return Err(Error::shape(format!("conv weight must be 4-d, got {ws:?}")));
        };
        if wc != c || k != k2 {
            return Err(Error::shape(format!(
                "conv weight {ws:?} incompatible with input of {c} channels"
            )));
        }
        if self.value(b).shape() != [o] {
            return Err(Error::shape(format!(
                "conv bias must have shape [{o}], got {:?}",
                self.value(b).shape()
            )));
        }
        if spec.stride == 0 {
            return Err(Error::shape("conv stride must be positive"));
        }
        if h + 2 * spec.padding < k || wd + 2 * spec.padding < k {
            return Err(Error::shape(format!(
                "kernel {k} larger than padded input {h}x{wd} (padding {})",
                spec.padding
            )));
        }
        let ho = (h + 2 * spec.padding - k) / spec.stride + 1;
        let wo = (wd + 2 * spec.padding - k) / spec.stride + 1;
        let cols = im2col(self.value(x).data(), c, h, wd, k, spec, ho, wo);
        let mut out = vec![T::ZERO; o * ho * wo];
        let bias = self.value(b).data();
        for (oc, row) in out.chunks_mut(ho * wo).enumerate() {
            row.iter_mut().for_each(|v| *v = bias[oc]);
        }
        T::gemm(
            o,
            c * k * k,
            ho * wo,
            T::ONE,
            self.value(w).data(),
            false,
            &cols,
            false,
            T::ONE,
            &mut out,
        );
        let rg = self.rg(x) || self.rg(w) || self.rg(b);
        let value = Tensor::new(vec![o, ho, wo], out)?;
        let cols = if self.recording && rg {
            cols
        } else {
            Vec::new()
        };
        Ok(self.push(
            value,
            Op::Conv2d {
                x,
                w,
                b,
                spec,
                kernel: k,
                cols,
            },
            rg,
        ))
    }

    /// Max over `window x window` patches with the given stride. Ties go to
    /// the first position in scan order.
    pub fn maxpool2d(&mut self, x: Var, window: usize, stride: usize) -> Result<Var> {
        let (c, h, w) = self.value(x).chw()?;
        if window == 0 || stride == 0 {
            return Err(Error::shape("pool window and stride must be positive"));
        }
        if window > h || window > w {
            return Err(Error::shape(format!(
                "pool window {window} larger than input {h}x{w}"
            )));
        }
        let ho = (h - window) / stride + 1;
        let wo = (w - window) / stride + 1;
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(c * ho * wo);
        let mut argmax = Vec::with_capacity(c * ho * wo);
        for ch in 0..c {
            let base = ch * h * w;
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best = base + oy * stride * w + ox * stride;
                    for dy in 0..window {
                        for dx in 0..window {
                            let i = base + (oy * stride + dy) * w + ox * stride + dx;
                            if src[i] > src[best] {
                                best = i;
                            }
                        }
                    }
                    out.push(src[best]);
                    argmax.push(best);
                }
            }
        }
        let rg = self.rg(x);
        let value = Tensor::new(vec![c, ho, wo], out)?;
        let argmax = if self.recording && rg {
            argmax
        } else {
            Vec::new()
        };
        Ok(self.push(value, Op::MaxPool { x, argmax }, rg))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let data = v.data().iter().map(|a| a.max(T::ZERO)).collect();
        let value = Tensor::new(v.shape().to_vec(), data).expect("same shape");
        let rg = self.rg(x);
        self.push(value, Op::Relu(x), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        check_same_shape("add", self.value(a), self.value(b))?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| *x + *y)
            .collect();
        let value = Tensor::new(self.value(a).shape().to_vec(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        check_same_shape("sub", self.value(a), self.value(b))?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| *x - *y)
            .collect();
        let value = Tensor::new(self.value(a).shape().to_vec(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Sub(a, b), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        check_same_shape("mul", self.value(a), self.value(b))?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| *x * *y)
            .collect();
        let value = Tensor::new(self.value(a).shape().to_vec(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, x: Var, s: T) -> Var {
        let v = self.value(x);
        let data = v.data().iter().map(|a| *a * s).collect();
        let value = Tensor::new(v.shape().to_vec(), data).expect("same shape");
        let rg = self.rg(x);
        self.push(value, Op::Scale(x, s), rg)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape.to_vec())?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::Reshape(x), rg))
    }

    /// `(C, H, W) -> (C)` spatial mean.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let (c, h, w) = self.value(x).chw()?;
        let hw = h * w;
        let inv = T::ONE / T::from_usize(hw);
        let data = self
            .value(x)
            .data()
            .chunks(hw)
            .map(|plane| plane.iter().copied().sum::<T>() * inv)
            .collect();
        let value = Tensor::new(vec![c], data)?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::GlobalAvgPool(x), rg))
    }

    /// `(m, k) x (k, n) -> (m, n)`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        let (m, k, k2, n) = match (sa, sb) {
            ([m, k], [k2, n]) => (*m, *k, *k2, *n),
            _ => {
                return Err(Error::shape(format!(
                    "matmul needs 2-d operands, got {sa:?} and {sb:?}"
                )))
            }
        };
        if k != k2 {
            return Err(Error::shape(format!(
                "matmul inner dimensions {k} and {k2} differ"
            )));
        }
        let mut out = vec![T::ZERO; m * n];
        T::gemm(
            m,
            k,
            n,
            T::ONE,
            self.value(a).data(),
            false,
            self.value(b).data(),
            false,
            T::ZERO,
            &mut out,
        );
        let value = Tensor::new(vec![m, n], out)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::MatMul { a, b, m, k, n }, rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s: T = self.value(x).data().iter().copied().sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    /// `Σ x²`.
    pub fn sum_squares(&mut self, x: Var) -> Var {
        let s: T = self.value(x).data().iter().map(|v| *v * *v).sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::SumSquares(x), rg)
    }

    /// Mean squared error over all entries.
    pub fn mse_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        check_same_shape("mse", self.value(pred), self.value(target))?;
        let n = self.value(pred).len();
        if n == 0 {
            return Err(Error::shape("mse of empty tensors"));
        }
        let s: T = self
            .value(pred)
            .data()
            .iter()
            .zip(self.value(target).data())
            .map(|(p, t)| (*p - *t) * (*p - *t))
            .sum();
        let value = Tensor::scalar(s / T::from_usize(n));
        let rg = self.rg(pred) || self.rg(target);
        Ok(self.push(value, Op::Mse(pred, target), rg))
    }

    /// `-ln softmax(logits)[label]`, computed with the max-shift for stability.
    pub fn softmax_cross_entropy(&mut self, logits: Var, label: usize) -> Result<Var> {
        let z = self.value(logits);
        if z.shape().len() != 1 || z.is_empty() {
            return Err(Error::shape(format!(
                "softmax needs a non-empty vector, got {:?}",
                z.shape()
            )));
        }
        if label >= z.len() {
            return Err(Error::shape(format!(
                "label {label} out of range for {} classes",
                z.len()
            )));
        }
        let probs = softmax(z.data());
        let zmax = z.data().iter().copied().fold(z.data()[0], T::max);
        let lse = zmax + z.data().iter().map(|v| (*v - zmax).exp()).sum::<T>().ln();
        let loss = lse - z.data()[label];
        let rg = self.rg(logits);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SoftmaxCe {
                logits,
                label,
                probs,
            },
            rg,
        ))
    }

    /// Gradient of the most recent backward pass with respect to `v`.
    /// Zero for anything the loss does not depend on.
    pub fn grad(&self, v: Var) -> Tensor<T> {
        let shape = self.value(v).shape().to_vec();
        match self.node_grads.get(v.0).and_then(|g| g.as_ref()) {
            Some(g) => Tensor::new(shape, g.clone()).expect("gradient matches value"),
            None => Tensor::zeros(&shape),
        }
    }

    /// Propagates `d loss / d loss = 1` back through the tape and adds the
    /// parameter gradients into `grads`. Repeated calls accumulate.
    pub fn backward(&mut self, loss: Var, grads: &mut Grads<T>) -> Result<()> {
        if !self.recording {
            return Err(Error::Contract("backward on an inference tape".into()));
        }
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        self.node_grads = (0..self.nodes.len()).map(|_| None).collect();
        self.node_grads[loss.0] = Some(vec![T::ONE]);
        for i in (0..=loss.0).rev() {
            let Some(g) = self.node_grads[i].take() else {
                continue;
            };
            if !self.nodes[i].requires_grad {
                self.node_grads[i] = Some(g);
                continue;
            }
            self.backward_node(i, &g, grads)?;
            self.node_grads[i] = Some(g);
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, f: impl FnOnce(&mut [T])) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        let n = self.nodes[v.0].value.len();
        let slot = self.node_grads[v.0].get_or_insert_with(|| vec![T::ZERO; n]);
        f(slot);
    }

    fn backward_node(&mut self, i: usize, g: &[T], grads: &mut Grads<T>) -> Result<()> {
        // The op is moved out while its inputs' gradients are updated.
        let op = std::mem::replace(&mut self.nodes[i].op, Op::Leaf);
        match &op {
            Op::Leaf => {}
            Op::Param(id) => {
                for (a, b) in grads.0[id.0].iter_mut().zip(g) {
                    *a += *b;
                }
            }
            Op::Conv2d {
                x,
                w,
                b,
                spec,
                kernel,
                cols,
            } => {
                let (c, h, wd) = self.value(*x).chw()?;
                let (o, ho, wo) = self.nodes[i].value.chw()?;
                let k = *kernel;
                let ckk = c * k * k;
                let hw = ho * wo;
                if self.rg(*b) {
                    self.accumulate(*b, |gb| {
                        for (oc, row) in g.chunks(hw).enumerate() {
                            gb[oc] += row.iter().copied().sum::<T>();
                        }
                    });
                }
                if self.rg(*w) {
                    self.accumulate(*w, |gw| {
                        T::gemm(o, hw, ckk, T::ONE, g, false, cols, true, T::ONE, gw);
                    });
                }
                if self.rg(*x) {
                    let mut dcols = vec![T::ZERO; ckk * hw];
                    let wv = self.value(*w).data().to_vec();
                    T::gemm(ckk, o, hw, T::ONE, &wv, true, g, false, T::ZERO, &mut dcols);
                    let spec = *spec;
                    self.accumulate(*x, |gx| col2im(&dcols, gx, c, h, wd, k, spec, ho, wo));
                }
            }
            Op::MaxPool { x, argmax } => {
                self.accumulate(*x, |gx| {
                    for (gi, &src) in g.iter().zip(argmax) {
                        gx[src] += *gi;
                    }
                });
            }
            Op::Relu(x) => {
                let xv = self.value(*x).data().to_vec();
                self.accumulate(*x, |gx| {
                    for ((a, gi), xi) in gx.iter_mut().zip(g).zip(&xv) {
                        if *xi > T::ZERO {
                            *a += *gi;
                        }
                    }
                });
            }
            Op::Add(a, b) => {
                self.accumulate(*a, |ga| ga.iter_mut().zip(g).for_each(|(s, v)| *s += *v));
                self.accumulate(*b, |gb| gb.iter_mut().zip(g).for_each(|(s, v)| *s += *v));
            }
            Op::Sub(a, b) => {
                self.accumulate(*a, |ga| ga.iter_mut().zip(g).for_each(|(s, v)| *s += *v));
                self.accumulate(*b, |gb| gb.iter_mut().zip(g).for_each(|(s, v)| *s -= *v));
            }
            Op::Mul(a, b) => {
                let av = self.value(*a).data().to_vec();
                let bv = self.value(*b).data().to_vec();
                self.accumulate(*a, |ga| {
                    for ((s, gi), y) in ga.iter_mut().zip(g).zip(&bv) {
                        *s += *gi * *y;
                    }
                });
                self.accumulate(*b, |gb| {
                    for ((s, gi), x) in gb.iter_mut().zip(g).zip(&av) {
                        *s += *gi * *x;
                    }
                });
            }
            Op::Scale(x, s) => {
                let s = *s;
                self.accumulate(*x, |gx| {
                    gx.iter_mut().zip(g).for_each(|(a, v)| *a += *v * s)
                });
            }
            Op::Reshape(x) => {
                self.accumulate(*x, |gx| gx.iter_mut().zip(g).for_each(|(a, v)| *a += *v));
            }
            Op::GlobalAvgPool(x) => {
                let (_, h, w) = self.value(*x).chw()?;
                let hw = h * w;
                let inv = T::ONE / T::from_usize(hw);
                self.accumulate(*x, |gx| {
                    for (plane, gi) in gx.chunks_mut(hw).zip(g) {
                        let v = *gi * inv;
                        plane.iter_mut().for_each(|a| *a += v);
                    }
                });
            }
            Op::MatMul { a, b, m, k, n } => {
                let (m, k, n) = (*m, *k, *n);
                if self.rg(*a) {
                    let bv = self.value(*b).data().to_vec();
                    self.accumulate(*a, |ga| {
                        T::gemm(m, n, k, T::ONE, g, false, &bv, true, T::ONE, ga)
                    });
                }
                if self.rg(*b) {
                    let av = self.value(*a).data().to_vec();
                    self.accumulate(*b, |gb| {
                        T::gemm(k, m, n, T::ONE, &av, true, g, false, T::ONE, gb)
                    });
                }
            }
            Op::Sum(x) => {
                let g0 = g[0];
                self.accumulate(*x, |gx| gx.iter_mut().for_each(|a| *a += g0));
            }
            Op::SumSquares(x) => {
                let two = T::from_f64(2.0) * g[0];
                let xv = self.value(*x).data().to_vec();
                self.accumulate(*x, |gx| {
                    gx.iter_mut().zip(&xv).for_each(|(a, v)| *a += two * *v)
                });
            }
            Op::Mse(p, t) => {
                let n = self.value(*p).len();
                let c = T::from_f64(2.0) * g[0] / T::from_usize(n);
                let diff: Vec<T> = self
                    .value(*p)
                    .data()
                    .iter()
                    .zip(self.value(*t).data())
                    .map(|(a, b)| c * (*a - *b))
                    .collect();
                self.accumulate(*p, |gp| {
                    gp.iter_mut().zip(&diff).for_each(|(a, d)| *a += *d)
                });
                self.accumulate(*t, |gt| {
                    gt.iter_mut().zip(&diff).for_each(|(a, d)| *a -= *d)
                });
            }
            Op::SoftmaxCe {
                logits,
                label,
                probs,
            } => {
                let g0 = g[0];
                let label = *label;
                self.accumulate(*logits, |gz| {
                    for (j, (a, p)) in gz.iter_mut().zip(probs).enumerate() {
                        let target = if j == label { T::ONE } else { T::ZERO };
                        *a += g0 * (*p - target);
                    }
                });
            }
        }
        self.nodes[i].op = op;
        Ok(())
    }
}

/// Numerically stable softmax.
pub fn softmax<T: Real>(z: &[T]) -> Vec<T> {
    if z.is_empty() {
        return Vec::new();
    }
    let zmax = z.iter().copied().fold(z[0], T::max);
    let e: Vec<T> = z.iter().map(|v| (*v - zmax).exp()).collect();
    let total: T = e.iter().copied().sum();
    e.into_iter().map(|v| v / total).collect()
}

#[allow(clippy::too_many_arguments)]
fn im2col<T: Real>(
    x: &[T],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    spec: Conv2dSpec,
    ho: usize,
    wo: usize,
) -> Vec<T> {
    let hw = ho * wo;
    let mut cols = vec![T::ZERO; c * k * k * hw];
    let pad = spec.padding as isize;
    for ch in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = ((ch * k + ky) * k + kx) * hw;
                for oy in 0..ho {
                    let iy = (oy * spec.stride + ky) as isize - pad;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src = ch * h * w + iy as usize * w;
                    let dst = row + oy * wo;
                    for ox in 0..wo {
                        let ix = (ox * spec.stride + kx) as isize - pad;
                        if ix >= 0 && ix < w as isize {
                            cols[dst + ox] = x[src + ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

#[allow(clippy::too_many_arguments)]
fn col2im<T: Real>(
    cols: &[T],
    gx: &mut [T],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    spec: Conv2dSpec,
    ho: usize,
    wo: usize,
) {
    let hw = ho * wo;
    let pad = spec.padding as isize;
    for ch in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = ((ch * k + ky) * k + kx) * hw;
                for oy in 0..ho {
                    let iy = (oy * spec.stride + ky) as isize - pad;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst = ch * h * w + iy as usize * w;
                    let src = row + oy * wo;
                    for ox in 0..wo {
                        let ix = (ox * spec.stride + kx) as isize - pad;
                        if ix >= 0 && ix < w as isize {
                            gx[dst + ix as usize] += cols[src + ox];
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: Vec<f64>) -> Tensor<f64> {
        Tensor::new(shape.to_vec(), data).unwrap()
    }

    #[test]
    fn identity_kernel_reproduces_input() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(t(
            &[2, 3, 3],
            (0..18).map(|v| v as f64 * 0.5 - 3.0).collect(),
        ));
        let w = tape.constant(t(&[2, 2, 1, 1], vec![1.0, 0.0, 0.0, 1.0]));
        let b = tape.constant(Tensor::zeros(&[2]));
        let y = tape.conv2d(x, w, b, Conv2dSpec::same(1)).unwrap();
        assert_eq!(tape.value(y), tape.value(x));
    }

    #[test]
    fn ones_kernel_counts_taps() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::full(&[1, 5, 5], 1.0));
        let w = tape.constant(Tensor::full(&[1, 1, 3, 3], 1.0));
        let b = tape.constant(Tensor::zeros(&[1]));
        let y = tape.conv2d(x, w, b, Conv2dSpec::same(3)).unwrap();
        let v = tape.value(y).data();
        assert_eq!(v[0], 4.0);
        assert_eq!(v[2], 6.0);
        assert_eq!(v[12], 9.0);
        assert_eq!(v[24], 4.0);
    }

    #[test]
    fn conv_output_size_formula() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::zeros(&[1, 7, 6]));
        let w = tape.constant(Tensor::zeros(&[2, 1, 3, 3]));
        let b = tape.constant(Tensor::zeros(&[2]));
        let y = tape
            .conv2d(
                x,
                w,
                b,
                Conv2dSpec {
                    stride: 2,
                    padding: 1,
                },
            )
            .unwrap();
        assert_eq!(tape.value(y).shape(), &[2, 4, 3]);
        let bad = tape.constant(Tensor::zeros(&[2, 3, 3, 3]));
        assert!(tape.conv2d(x, bad, b, Conv2dSpec::same(3)).is_err());
    }

    #[test]
    fn maxpool_basics() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(t(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]), true);
        let y = tape.maxpool2d(x, 2, 2).unwrap();
        assert_eq!(tape.value(y).data(), &[4.0]);
        let c = tape.constant(Tensor::full(&[2, 4, 4], 0.5));
        let z = tape.maxpool2d(c, 2, 2).unwrap();
        assert!(tape.value(z).data().iter().all(|v| *v == 0.5));
        assert!(tape.maxpool2d(x, 3, 3).is_err());
    }

    #[test]
    fn maxpool_ties_route_to_first() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::full(&[1, 2, 2], 1.0), true);
        let y = tape.maxpool2d(x, 2, 2).unwrap();
        let l = tape.sum(y);
        let mut g = Grads(vec![]);
        tape.backward(l, &mut g).unwrap();
        assert_eq!(tape.grad(x).data(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn relu_identity() {
        let data: Vec<f64> = vec![-2.0, -0.5, 0.0, 0.3, 4.0];
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(t(&[5], data.clone()));
        let nx = tape.scale(x, -1.0);
        let a = tape.relu(x);
        let b = tape.relu(nx);
        let s = tape.add(a, b).unwrap();
        for (v, d) in tape.value(s).data().iter().zip(&data) {
            assert_eq!(*v, d.abs());
        }
    }

    #[test]
    fn uniform_logits_give_log_c() {
        for c in [2usize, 5, 40] {
            let mut tape = Tape::<f64>::new();
            let z = tape.constant(Tensor::full(&[c], 0.3));
            let l = tape.softmax_cross_entropy(z, 1).unwrap();
            assert!((tape.value(l).data()[0] - (c as f64).ln()).abs() < 1e-12);
            for p in softmax(tape.value(z).data()) {
                assert!((p - 1.0 / c as f64).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn linear_form_gradient_is_exact_and_accumulates() {
        let mut params = ParamSet::<f64>::new();
        let xs = vec![0.25, -1.5, 3.0, 0.125];
        let id = params.add("w", t(&[4], vec![0.1, 0.2, 0.3, 0.4]));
        let mut tape = Tape::new();
        let w = tape.param(&params, id);
        let x = tape.constant(t(&[4], xs.clone()));
        let p = tape.mul(w, x).unwrap();
        let l = tape.sum(p);
        tape.backward(l, &mut params.grads).unwrap();
        assert_eq!(params.grads.get(id), &xs[..]);
        tape.backward(l, &mut params.grads).unwrap();
        let doubled: Vec<f64> = xs.iter().map(|v| 2.0 * v).collect();
        assert_eq!(params.grads.get(id), &doubled[..]);
        // the constant never receives a gradient
        assert!(tape.grad(x).data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::zeros(&[3]), true);
        let mut g = Grads(vec![]);
        assert!(matches!(tape.backward(x, &mut g), Err(Error::Contract(_))));
        let mut inf = Tape::<f64>::inference();
        let y = inf.leaf(Tensor::zeros(&[1]), true);
        assert!(inf.backward(y, &mut g).is_err());
    }

    #[test]
    fn shape_mismatches_are_errors() {
        let mut tape = Tape::<f64>::new();
        let a = tape.constant(Tensor::zeros(&[3]));
        let b = tape.constant(Tensor::zeros(&[4]));
        assert!(tape.add(a, b).is_err());
        assert!(tape.mse_loss(a, b).is_err());
        assert!(tape.matmul(a, b).is_err());
        assert!(tape.softmax_cross_entropy(a, 3).is_err());
        assert!(tape.global_avg_pool(a).is_err());
    }
}
