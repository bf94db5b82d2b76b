//! Reverse-mode automatic differentiation over a linear tape.
//!
//! A [`Graph`] borrows a [`ParamStore`] for the duration of one forward
//! pass. Every operation appends a node; [`Graph::backward`] walks the tape
//! in reverse and returns per-parameter gradients. The op set is exactly
//! what the matching networks need: convolution, 2x2 max pooling, dense
//! layers, pointwise activations, concatenation, averaging, softmax and the
//! two training losses.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{dim_err, Error, Result};
use crate::params::{ParamId, ParamStore};
use crate::tensor::{MatRef, Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pointwise {
    Relu,
    Tanh,
}

enum Value<T> {
    Owned(Vec<T>),
    Param(ParamId),
}

enum Op<T> {
    Input,
    Param(ParamId),
    Conv2d { x: NodeId, w: NodeId, b: NodeId, stride: usize, pad: usize, kh: usize, kw: usize, cols: Vec<T> },
    MaxPool2 { x: NodeId, argmax: Vec<u32> },
    Pointwise { x: NodeId, kind: Pointwise },
    Linear { x: NodeId, w: NodeId, b: Option<NodeId> },
    Concat { inputs: Vec<NodeId> },
    Mean { inputs: Vec<NodeId> },
    Reshape { x: NodeId },
    Softmax { x: NodeId },
    Hinge { x: NodeId, labels: Vec<T>, margin: T },
    CrossEntropy { x: NodeId, targets: Vec<usize>, probs: Vec<T> },
    Sum { x: NodeId },
}

struct Node<T> {
    op: Op<T>,
    value: Value<T>,
    shape: Vec<usize>,
    needs_grad: bool,
}

/// Gradients produced by one backward pass.
pub struct Gradients<T> {
    nodes: Vec<Option<Vec<T>>>,
    params: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn param(&self, id: ParamId) -> Option<&[T]> {
        self.params.get(id.index()).and_then(|g| g.as_deref())
    }

    pub fn node(&self, id: NodeId) -> Option<&[T]> {
        self.nodes.get(id.0).and_then(|g| g.as_deref())
    }

    /// Adds every parameter gradient into the store's `grad` buffers.
    pub fn accumulate_into(&self, store: &mut ParamStore<T>) -> Result<()> {
        for (i, g) in self.params.iter().enumerate() {
            if let Some(g) = g {
                let t = store.get_mut(ParamId(i));
                if t.requires_grad() {
                    t.accumulate_grad(g)?;
                }
            }
        }
        Ok(())
    }
}

pub struct Graph<'s, T> {
    store: &'s ParamStore<T>,
    nodes: Vec<Node<T>>,
    record: bool,
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

fn check_finite<T: Scalar>(op: &'static str, data: &[T]) -> Result<()> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { op })
    }
}

fn accumulate<T: Scalar>(slot: &mut Option<Vec<T>>, g: Vec<T>) {
    match slot {
        Some(buf) => buf.iter_mut().zip(g).for_each(|(a, b)| *a = *a + b),
        None => *slot = Some(g),
    }
}

impl<'s, T: Scalar> Graph<'s, T> {
    /// Training graph: intermediate buffers are kept for [`Graph::backward`].
    pub fn new(store: &'s ParamStore<T>) -> Self {
        Graph { store, nodes: Vec::new(), record: true }
    }

    /// Forward-only graph; no gradient bookkeeping is stored.
    pub fn inference(store: &'s ParamStore<T>) -> Self {
        Graph { store, nodes: Vec::new(), record: false }
    }

    pub fn store(&self) -> &'s ParamStore<T> {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &[T] {
        match &self.nodes[id.0].value {
            Value::Owned(v) => v,
            Value::Param(p) => self.store.get(*p).data(),
        }
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    pub fn to_tensor(&self, id: NodeId) -> Tensor<T> {
        Tensor::new(self.shape(id), self.value(id).to_vec()).expect("node shape is consistent")
    }

    fn needs(&self, id: NodeId) -> bool {
        self.record && self.nodes[id.0].needs_grad
    }

    fn push(&mut self, op: Op<T>, value: Vec<T>, shape: Vec<usize>, needs_grad: bool) -> NodeId {
        debug_assert_eq!(value.len(), numel(&shape));
        self.nodes.push(Node { op, value: Value::Owned(value), shape, needs_grad: needs_grad && self.record });
        NodeId(self.nodes.len() - 1)
    }

    /// Constant input; gradients are not tracked.
    pub fn input(&mut self, t: Tensor<T>) -> NodeId {
        let shape = t.shape().to_vec();
        self.push(Op::Input, t.into_data(), shape, false)
    }

    /// Input whose gradient is reported by [`Gradients::node`].
    pub fn input_with_grad(&mut self, t: Tensor<T>) -> NodeId {
        let shape = t.shape().to_vec();
        self.push(Op::Input, t.into_data(), shape, true)
    }

    pub fn param(&mut self, id: ParamId) -> NodeId {
        let t = self.store.get(id);
        self.nodes.push(Node {
            op: Op::Param(id),
            value: Value::Param(id),
            shape: t.shape().to_vec(),
            needs_grad: self.record && t.requires_grad(),
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn conv2d(&mut self, x: NodeId, w: NodeId, b: NodeId, stride: usize, pad: usize) -> Result<NodeId> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        let bs = self.shape(b).to_vec();
        if xs.len() != 4 || ws.len() != 4 {
            return dim_err("conv2d", format!("input {xs:?} and kernel {ws:?} must be 4-d"));
        }
        let (n, c, h, wd) = (xs[0], xs[1], xs[2], xs[3]);
        let (k, kc, kh, kw) = (ws[0], ws[1], ws[2], ws[3]);
        if kc != c {
            return dim_err("conv2d", format!("kernel expects {kc} channels, input has {c}"));
        }
        if numel(&bs) != k {
            return dim_err("conv2d", format!("bias {bs:?} does not match {k} filters"));
        }
        if stride == 0 {
            return Err(Error::InvalidArgument("conv2d stride must be >= 1".into()));
        }
        if kh > h + 2 * pad || kw > wd + 2 * pad {
            return dim_err("conv2d", format!("kernel {kh}x{kw} larger than padded input {h}x{wd}+{pad}"));
        }
        let ho = (h + 2 * pad - kh) / stride + 1;
        let wo = (wd + 2 * pad - kw) / stride + 1;
        let rows = c * kh * kw;
        let cols_per = rows * ho * wo;
        let mut cols = vec![T::zero(); n * cols_per];
        let mut out = vec![T::zero(); n * k * ho * wo];
        {
            let xv = self.value(x);
            let wv = self.value(w);
            let bv = self.value(b);
            for img in 0..n {
                let col = &mut cols[img * cols_per..(img + 1) * cols_per];
                im2col(&xv[img * c * h * wd..(img + 1) * c * h * wd], c, h, wd, kh, kw, stride, pad, ho, wo, col);
                let o = &mut out[img * k * ho * wo..(img + 1) * k * ho * wo];
                for (kk, chunk) in o.chunks_mut(ho * wo).enumerate() {
                    chunk.fill(bv[kk]);
                }
                T::gemm(k, rows, ho * wo, T::one(), MatRef::row_major(wv, rows), MatRef::row_major(col, ho * wo), T::one(), o);
            }
        }
        check_finite("conv2d", &out)?;
        let needs = self.needs(x) || self.needs(w) || self.needs(b);
        if !needs {
            cols = Vec::new();
        }
        Ok(self.push(Op::Conv2d { x, w, b, stride, pad, kh, kw, cols }, out, vec![n, k, ho, wo], needs))
    }

    pub fn maxpool2x2(&mut self, x: NodeId) -> Result<NodeId> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 4 {
            return dim_err("maxpool2x2", format!("input {xs:?} must be 4-d"));
        }
        let (n, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        if h % 2 != 0 || w % 2 != 0 {
            return dim_err("maxpool2x2", format!("spatial size {h}x{w} must be even"));
        }
        let (ho, wo) = (h / 2, w / 2);
        let mut out = Vec::with_capacity(n * c * ho * wo);
        let mut argmax = Vec::with_capacity(n * c * ho * wo);
        let xv = self.value(x);
        for plane in 0..n * c {
            let base = plane * h * w;
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best = base + 2 * oy * w + 2 * ox;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = base + (2 * oy + dy) * w + 2 * ox + dx;
                        if xv[idx] > xv[best] {
                            best = idx;
                        }
                    }
                    out.push(xv[best]);
                    argmax.push(best as u32);
                }
            }
        }
        let needs = self.needs(x);
        if !needs {
            argmax = Vec::new();
        }
        Ok(self.push(Op::MaxPool2 { x, argmax }, out, vec![n, c, ho, wo], needs))
    }

    pub fn pointwise(&mut self, x: NodeId, kind: Pointwise) -> Result<NodeId> {
        let out: Vec<T> = match kind {
            Pointwise::Relu => self.value(x).iter().map(|&v| if v > T::zero() { v } else { T::zero() }).collect(),
            Pointwise::Tanh => self.value(x).iter().map(|&v| v.tanh()).collect(),
        };
        check_finite("pointwise", &out)?;
        let shape = self.shape(x).to_vec();
        let needs = self.needs(x);
        Ok(self.push(Op::Pointwise { x, kind }, out, shape, needs))
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        self.pointwise(x, Pointwise::Relu)
    }

    pub fn tanh(&mut self, x: NodeId) -> Result<NodeId> {
        self.pointwise(x, Pointwise::Tanh)
    }

    /// `x · wᵀ + b` with `x: [N, Din]`, `w: [Dout, Din]`, `b: [Dout]`.
    pub fn linear(&mut self, x: NodeId, w: NodeId, b: Option<NodeId>) -> Result<NodeId> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[1] {
            return dim_err("linear", format!("input {xs:?} incompatible with weight {ws:?}"));
        }
        let (n, din, dout) = (xs[0], xs[1], ws[0]);
        let mut out = vec![T::zero(); n * dout];
        if let Some(b) = b {
            let bv = self.value(b);
            if bv.len() != dout {
                return dim_err("linear", format!("bias has {} values, expected {dout}", bv.len()));
            }
            for row in out.chunks_mut(dout) {
                row.copy_from_slice(bv);
            }
        }
        T::gemm(n, din, dout, T::one(), MatRef::row_major(self.value(x), din), MatRef::transposed(self.value(w), din), T::one(), &mut out);
        check_finite("linear", &out)?;
        let needs = self.needs(x) || self.needs(w) || b.is_some_and(|b| self.needs(b));
        Ok(self.push(Op::Linear { x, w, b }, out, vec![n, dout], needs))
    }

    /// Concatenates along axis 1; all inputs share axis 0 and trailing axes.
    pub fn concat(&mut self, inputs: &[NodeId]) -> Result<NodeId> {
        let first = match inputs.first() {
            Some(&f) => self.shape(f).to_vec(),
            None => return dim_err("concat", "no inputs".into()),
        };
        if first.len() < 2 {
            return dim_err("concat", format!("inputs must be at least 2-d, got {first:?}"));
        }
        let n = first[0];
        let tail = &first[2..];
        let mut total = 0;
        for &i in inputs {
            let s = self.shape(i);
            if s.len() != first.len() || s[0] != n || &s[2..] != tail {
                return dim_err("concat", format!("{s:?} incompatible with {first:?}"));
            }
            total += s[1];
        }
        let inner: usize = tail.iter().product();
        let mut out = Vec::with_capacity(n * total * inner);
        for row in 0..n {
            for &i in inputs {
                let chunk = self.shape(i)[1] * inner;
                out.extend_from_slice(&self.value(i)[row * chunk..(row + 1) * chunk]);
            }
        }
        let mut shape = first.clone();
        shape[1] = total;
        let needs = inputs.iter().any(|&i| self.needs(i));
        Ok(self.push(Op::Concat { inputs: inputs.to_vec() }, out, shape, needs))
    }

    /// Elementwise mean of equally shaped inputs. Each element's summands are
    /// added in sorted order, so the result is exactly invariant to the order
    /// of `inputs`.
    pub fn mean(&mut self, inputs: &[NodeId]) -> Result<NodeId> {
        let shape = match inputs.first() {
            Some(&f) => self.shape(f).to_vec(),
            None => return dim_err("mean", "no inputs".into()),
        };
        for &i in inputs {
            if self.shape(i) != shape.as_slice() {
                return dim_err("mean", format!("{:?} vs {shape:?}", self.shape(i)));
            }
        }
        let count = T::from_usize(inputs.len()).expect("small count");
        let len = numel(&shape);
        let mut out = Vec::with_capacity(len);
        let mut terms: Vec<T> = Vec::with_capacity(inputs.len());
        for e in 0..len {
            terms.clear();
            terms.extend(inputs.iter().map(|&i| self.value(i)[e]));
            terms.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
            let s = terms.iter().fold(T::zero(), |acc, &v| acc + v);
            out.push(s / count);
        }
        let needs = inputs.iter().any(|&i| self.needs(i));
        Ok(self.push(Op::Mean { inputs: inputs.to_vec() }, out, shape, needs))
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId> {
        if numel(shape) != numel(self.shape(x)) {
            return dim_err("reshape", format!("cannot view {:?} as {shape:?}", self.shape(x)));
        }
        let v = self.value(x).to_vec();
        let needs = self.needs(x);
        Ok(self.push(Op::Reshape { x }, v, shape.to_vec(), needs))
    }

    /// Flattens all axes after the first.
    pub fn flatten(&mut self, x: NodeId) -> Result<NodeId> {
        let s = self.shape(x).to_vec();
        let rest = numel(&s[1..]);
        self.reshape(x, &[s[0], rest])
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, x: NodeId) -> Result<NodeId> {
        let shape = self.shape(x).to_vec();
        let k = *shape.last().expect("non-empty shape");
        let mut out = self.value(x).to_vec();
        for row in out.chunks_mut(k) {
            softmax_in_place(row);
        }
        check_finite("softmax", &out)?;
        let needs = self.needs(x);
        Ok(self.push(Op::Softmax { x }, out, shape, needs))
    }

    /// Mean hinge loss `max(0, margin - label * score)` over a batch of scores.
    pub fn hinge(&mut self, x: NodeId, labels: &[T], margin: T) -> Result<NodeId> {
        let vals = self.value(x);
        if vals.len() != labels.len() {
            return dim_err("hinge", format!("{} scores vs {} labels", vals.len(), labels.len()));
        }
        if labels.iter().any(|&l| l != T::one() && l != -T::one()) {
            return Err(Error::InvalidArgument("hinge labels must be +1 or -1".into()));
        }
        if !(margin > T::zero()) {
            return Err(Error::InvalidArgument("hinge margin must be positive".into()));
        }
        let total = vals
            .iter()
            .zip(labels)
            .fold(T::zero(), |acc, (&s, &l)| acc + (margin - l * s).max(T::zero()));
        let loss = total / T::from_usize(labels.len()).expect("batch size");
        check_finite("hinge", &[loss])?;
        let needs = self.needs(x);
        Ok(self.push(Op::Hinge { x, labels: labels.to_vec(), margin }, vec![loss], vec![1], needs))
    }

    /// Mean cross entropy of row-wise softmax against target indices.
    pub fn cross_entropy(&mut self, x: NodeId, targets: &[usize]) -> Result<NodeId> {
        let shape = self.shape(x).to_vec();
        if shape.len() != 2 || shape[0] != targets.len() {
            return dim_err("cross_entropy", format!("logits {shape:?} vs {} targets", targets.len()));
        }
        let k = shape[1];
        if let Some(&bad) = targets.iter().find(|&&t| t >= k) {
            return Err(Error::InvalidArgument(format!("target index {bad} out of range 0..{k}")));
        }
        let mut probs = self.value(x).to_vec();
        let mut total = T::zero();
        for (row, &t) in probs.chunks_mut(k).zip(targets) {
            let m = row.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = m + row.iter().fold(T::zero(), |acc, &v| acc + (v - m).exp()).ln();
            total = total + (lse - row[t]);
            softmax_in_place(row);
        }
        let loss = total / T::from_usize(targets.len()).expect("batch size");
        check_finite("cross_entropy", &[loss])?;
        let needs = self.needs(x);
        if !needs {
            probs = Vec::new();
        }
        Ok(self.push(Op::CrossEntropy { x, targets: targets.to_vec(), probs }, vec![loss], vec![1], needs))
    }

    pub fn sum(&mut self, x: NodeId) -> Result<NodeId> {
        let s = self.value(x).iter().fold(T::zero(), |acc, &v| acc + v);
        check_finite("sum", &[s])?;
        let needs = self.needs(x);
        Ok(self.push(Op::Sum { x }, vec![s], vec![1], needs))
    }

    /// Reverse pass from a scalar node.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients<T>> {
        if numel(self.shape(loss)) != 1 {
            return dim_err("backward", format!("loss must be scalar, got {:?}", self.shape(loss)));
        }
        if !self.record {
            return Err(Error::InvalidArgument("backward on an inference graph".into()));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut params: Vec<Option<Vec<T>>> = (0..self.store.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad || matches!(node.op, Op::Input) {
                continue;
            }
            let g = match grads[idx].take() {
                Some(g) => g,
                None => continue,
            };
            self.backward_node(node, &g, &mut grads, &mut params);
        }
        Ok(Gradients { nodes: grads, params })
    }

    fn backward_node(
        &self,
        node: &Node<T>,
        g: &[T],
        grads: &mut [Option<Vec<T>>],
        params: &mut [Option<Vec<T>>],
    ) {
        let out = match &node.value {
            Value::Owned(v) => v.as_slice(),
            Value::Param(_) => &[],
        };
        match &node.op {
            Op::Input => {}
            Op::Param(p) => accumulate(&mut params[p.index()], g.to_vec()),
            Op::Conv2d { x, w, b, stride, pad, kh, kw, cols } => {
                let xs = self.shape(*x);
                let (n, c, h, wd) = (xs[0], xs[1], xs[2], xs[3]);
                let k = self.shape(*w)[0];
                let (ho, wo) = (node.shape[2], node.shape[3]);
                let rows = c * kh * kw;
                let hw = ho * wo;
                let cols_per = rows * hw;
                if self.needs(*b) {
                    let mut gb = vec![T::zero(); k];
                    for img in 0..n {
                        for (kk, chunk) in g[img * k * hw..(img + 1) * k * hw].chunks(hw).enumerate() {
                            gb[kk] = gb[kk] + chunk.iter().fold(T::zero(), |a, &v| a + v);
                        }
                    }
                    accumulate(&mut grads[b.0], gb);
                }
                if self.needs(*w) {
                    let mut gw = vec![T::zero(); k * rows];
                    for img in 0..n {
                        let go = &g[img * k * hw..(img + 1) * k * hw];
                        let col = &cols[img * cols_per..(img + 1) * cols_per];
                        T::gemm(k, hw, rows, T::one(), MatRef::row_major(go, hw), MatRef::transposed(col, hw), T::one(), &mut gw);
                    }
                    accumulate(&mut grads[w.0], gw);
                }
                if self.needs(*x) {
                    let wv = self.value(*w);
                    let mut gx = vec![T::zero(); n * c * h * wd];
                    let mut dcol = vec![T::zero(); cols_per];
                    for img in 0..n {
                        let go = &g[img * k * hw..(img + 1) * k * hw];
                        T::gemm(rows, k, hw, T::one(), MatRef::transposed(wv, rows), MatRef::row_major(go, hw), T::zero(), &mut dcol);
                        col2im(&dcol, c, h, wd, *kh, *kw, *stride, *pad, ho, wo, &mut gx[img * c * h * wd..(img + 1) * c * h * wd]);
                    }
                    accumulate(&mut grads[x.0], gx);
                }
            }
            Op::MaxPool2 { x, argmax } => {
                let mut gx = vec![T::zero(); numel(self.shape(*x))];
                for (&src, &gv) in argmax.iter().zip(g) {
                    gx[src as usize] = gx[src as usize] + gv;
                }
                accumulate(&mut grads[x.0], gx);
            }
            Op::Pointwise { x, kind } => {
                let gx: Vec<T> = match kind {
                    Pointwise::Relu => {
                        out.iter().zip(g).map(|(&y, &gv)| if y > T::zero() { gv } else { T::zero() }).collect()
                    }
                    Pointwise::Tanh => out.iter().zip(g).map(|(&y, &gv)| gv * (T::one() - y * y)).collect(),
                };
                accumulate(&mut grads[x.0], gx);
            }
            Op::Linear { x, w, b } => {
                let (n, din) = (self.shape(*x)[0], self.shape(*x)[1]);
                let dout = self.shape(*w)[0];
                if let Some(b) = b {
                    if self.needs(*b) {
                        let mut gb = vec![T::zero(); dout];
                        for row in g.chunks(dout) {
                            gb.iter_mut().zip(row).for_each(|(a, &v)| *a = *a + v);
                        }
                        accumulate(&mut grads[b.0], gb);
                    }
                }
                if self.needs(*w) {
                    let mut gw = vec![T::zero(); dout * din];
                    T::gemm(dout, n, din, T::one(), MatRef::transposed(g, dout), MatRef::row_major(self.value(*x), din), T::zero(), &mut gw);
                    accumulate(&mut grads[w.0], gw);
                }
                if self.needs(*x) {
                    let mut gx = vec![T::zero(); n * din];
                    T::gemm(n, dout, din, T::one(), MatRef::row_major(g, dout), MatRef::row_major(self.value(*w), din), T::zero(), &mut gx);
                    accumulate(&mut grads[x.0], gx);
                }
            }
            Op::Concat { inputs } => {
                let n = node.shape[0];
                let inner: usize = node.shape[2..].iter().product();
                let row_len = node.shape[1] * inner;
                let mut offset = 0;
                for &i in inputs {
                    let chunk = self.shape(i)[1] * inner;
                    if self.needs(i) {
                        let mut gi = Vec::with_capacity(n * chunk);
                        for row in 0..n {
                            let start = row * row_len + offset;
                            gi.extend_from_slice(&g[start..start + chunk]);
                        }
                        accumulate(&mut grads[i.0], gi);
                    }
                    offset += chunk;
                }
            }
            Op::Mean { inputs } => {
                let inv = T::one() / T::from_usize(inputs.len()).expect("small count");
                for &i in inputs {
                    if self.needs(i) {
                        accumulate(&mut grads[i.0], g.iter().map(|&v| v * inv).collect());
                    }
                }
            }
            Op::Reshape { x } => accumulate(&mut grads[x.0], g.to_vec()),
            Op::Softmax { x } => {
                let k = *node.shape.last().expect("non-empty shape");
                let mut gx = Vec::with_capacity(out.len());
                for (y, gy) in out.chunks(k).zip(g.chunks(k)) {
                    let dot = y.iter().zip(gy).fold(T::zero(), |a, (&p, &q)| a + p * q);
                    gx.extend(y.iter().zip(gy).map(|(&p, &q)| p * (q - dot)));
                }
                accumulate(&mut grads[x.0], gx);
            }
            Op::Hinge { x, labels, margin } => {
                let scale = g[0] / T::from_usize(labels.len()).expect("batch size");
                let gx = self
                    .value(*x)
                    .iter()
                    .zip(labels)
                    .map(|(&s, &l)| if *margin - l * s > T::zero() { -l * scale } else { T::zero() })
                    .collect();
                accumulate(&mut grads[x.0], gx);
            }
            Op::CrossEntropy { x, targets, probs } => {
                let k = self.shape(*x)[1];
                let scale = g[0] / T::from_usize(targets.len()).expect("batch size");
                let mut gx: Vec<T> = probs.iter().map(|&p| p * scale).collect();
                for (row, &t) in targets.iter().enumerate() {
                    gx[row * k + t] = gx[row * k + t] - scale;
                }
                accumulate(&mut grads[x.0], gx);
            }
            Op::Sum { x } => accumulate(&mut grads[x.0], vec![g[0]; numel(self.shape(*x))]),
        }
    }
}

pub(crate) fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let m = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for v in row.iter_mut() {
        *v = (*v - m).exp();
        total = total + *v;
    }
    for v in row.iter_mut() {
        *v = *v / total;
    }
}

#[allow(clippy::too_many_arguments)]
fn im2col<T: Scalar>(
    x: &[T],
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
    cols: &mut [T],
) {
    let hw = ho * wo;
    for ch in 0..c {
        let plane = &x[ch * h * w..(ch + 1) * h * w];
        for ki in 0..kh {
            for kj in 0..kw {
                let row = (ch * kh + ki) * kw + kj;
                let dst = &mut cols[row * hw..(row + 1) * hw];
                for oy in 0..ho {
                    let iy = (oy * stride + ki) as isize - pad as isize;
                    let line = &mut dst[oy * wo..(oy + 1) * wo];
                    if iy < 0 || iy >= h as isize {
                        line.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = (ox * stride + kj) as isize - pad as isize;
                        *v = if ix < 0 || ix >= w as isize { T::zero() } else { src[ix as usize] };
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn col2im<T: Scalar>(
    cols: &[T],
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
    x: &mut [T],
) {
    let hw = ho * wo;
    for ch in 0..c {
        for ki in 0..kh {
            for kj in 0..kw {
                let row = (ch * kh + ki) * kw + kj;
                let src = &cols[row * hw..(row + 1) * hw];
                for oy in 0..ho {
                    let iy = (oy * stride + ki) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst = &mut x[ch * h * w + iy as usize * w..ch * h * w + (iy as usize + 1) * w];
                    for ox in 0..wo {
                        let ix = (ox * stride + kj) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            dst[ix as usize] = dst[ix as usize] + src[oy * wo + ox];
                        }
                    }
                }
            }
        }
    }
}
