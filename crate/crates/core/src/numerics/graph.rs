//! Define-by-run computation graph with reverse-mode differentiation.
//!
//! Nodes are appended in topological order and evaluated eagerly as they are created, so
//! shape errors surface at construction time and name the offending node. Bound inputs and
//! parameters can later be rebound and the whole graph re-evaluated with [`Graph::forward`];
//! [`Graph::backward`] then accumulates adjoints from the scalar output.
//!
//! Binary `add`/`mul` broadcast their second operand when its shape is a trailing suffix of
//! the first operand's shape (a one-element tensor always qualifies).

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Tensor;
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    Input,
    Param,
    Constant,
    Add,
    Mul,
    MatMul,
    Conv2d,
    Relu,
    Tanh,
    Sigmoid,
    Softmax,
    Concat,
    Slice,
    Reshape,
    Sum,
    Mean,
    Log,
    Dropout,
}

#[derive(Debug, Clone)]
enum Op<T> {
    Input,
    Param,
    Constant,
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    MatMul(NodeId, NodeId),
    Conv2d { input: NodeId, kernel: NodeId, bias: Option<NodeId> },
    Relu(NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Softmax(NodeId),
    Concat { inputs: Vec<NodeId>, axis: usize },
    Slice { input: NodeId, axis: usize, start: usize, end: usize },
    Reshape { input: NodeId, shape: Vec<usize> },
    Sum(NodeId),
    Mean(NodeId),
    Log(NodeId),
    Dropout { input: NodeId, mask: Vec<T> },
}

impl<T> Op<T> {
    fn kind(&self) -> OpKind {
        match self {
            Op::Input => OpKind::Input,
            Op::Param => OpKind::Param,
            Op::Constant => OpKind::Constant,
            Op::Add(..) => OpKind::Add,
            Op::Mul(..) => OpKind::Mul,
            Op::MatMul(..) => OpKind::MatMul,
            Op::Conv2d { .. } => OpKind::Conv2d,
            Op::Relu(_) => OpKind::Relu,
            Op::Tanh(_) => OpKind::Tanh,
            Op::Sigmoid(_) => OpKind::Sigmoid,
            Op::Softmax(_) => OpKind::Softmax,
            Op::Concat { .. } => OpKind::Concat,
            Op::Slice { .. } => OpKind::Slice,
            Op::Reshape { .. } => OpKind::Reshape,
            Op::Sum(_) => OpKind::Sum,
            Op::Mean(_) => OpKind::Mean,
            Op::Log(_) => OpKind::Log,
            Op::Dropout { .. } => OpKind::Dropout,
        }
    }
}

#[derive(Debug, Clone)]
struct Node<T> {
    op: Op<T>,
    label: String,
    value: Tensor<T>,
}

#[derive(Debug, Clone, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    names: HashMap<String, NodeId>,
    adjoints: Vec<Option<Tensor<T>>>,
    output: Option<NodeId>,
}

fn gerr(label: &str, message: impl Into<String>) -> Error {
    Error::Graph { node: label.to_string(), message: message.into() }
}

/// `(outer, axis, inner)` extents of `shape` around `axis`.
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn broadcasts(a: &[usize], b: &[usize]) -> bool {
    b.iter().product::<usize>() == 1 || (b.len() <= a.len() && a[a.len() - b.len()..] == *b)
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), names: HashMap::new(), adjoints: Vec::new(), output: None }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.nodes.len()).map(NodeId)
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    pub fn kind(&self, id: NodeId) -> OpKind {
        self.nodes[id.0].op.kind()
    }

    pub fn label(&self, id: NodeId) -> &str {
        &self.nodes[id.0].label
    }

    pub fn lookup(&self, name: &str) -> Option<NodeId> {
        self.names.get(name).copied()
    }

    /// Output node: the explicitly set one, else the last node added.
    pub fn output(&self) -> Option<NodeId> {
        self.output.or_else(|| self.nodes.len().checked_sub(1).map(NodeId))
    }

    pub fn set_output(&mut self, id: NodeId) {
        self.output = Some(id);
    }

    /// Named parameter nodes in name order.
    pub fn params(&self) -> Vec<(String, NodeId)> {
        let mut v: Vec<(String, NodeId)> = self
            .names
            .iter()
            .filter(|(_, id)| matches!(self.nodes[id.0].op, Op::Param))
            .map(|(n, id)| (n.clone(), *id))
            .collect();
        v.sort();
        v
    }

    fn push(&mut self, op: Op<T>, label: Option<String>) -> Result<NodeId> {
        let id = NodeId(self.nodes.len());
        let label = label.unwrap_or_else(|| format!("{:?}#{}", op.kind(), id.0).to_lowercase());
        let value = self.eval(&op, &label)?;
        self.nodes.push(Node { op, label, value });
        Ok(id)
    }

    fn leaf(&mut self, op: Op<T>, name: &str, value: Tensor<T>) -> Result<NodeId> {
        if self.names.contains_key(name) {
            return Err(gerr(name, "duplicate node name"));
        }
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { op, label: name.to_string(), value });
        self.names.insert(name.to_string(), id);
        Ok(id)
    }

    /// Named input that can be rebound; no gradient is reported for it.
    pub fn input(&mut self, name: &str, value: Tensor<T>) -> Result<NodeId> {
        self.leaf(Op::Input, name, value)
    }

    /// Named trainable parameter.
    pub fn param(&mut self, name: &str, value: Tensor<T>) -> Result<NodeId> {
        self.leaf(Op::Param, name, value)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { op: Op::Constant, label: format!("constant#{}", id.0), value });
        id
    }

    pub fn scalar(&mut self, value: T) -> NodeId {
        self.constant(Tensor::scalar(value))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Add(a, b), None)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Mul(a, b), None)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::MatMul(a, b), None)
    }

    /// Valid-padding, stride-1 convolution of a `(C_in × H × W)` input with a
    /// `(C_out × C_in × kh × kw)` kernel and optional `(C_out)` bias.
    pub fn conv2d(&mut self, input: NodeId, kernel: NodeId, bias: Option<NodeId>) -> Result<NodeId> {
        self.push(Op::Conv2d { input, kernel, bias }, None)
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Relu(a), None)
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Tanh(a), None)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Sigmoid(a), None)
    }

    /// Softmax along the last axis.
    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Softmax(a), None)
    }

    pub fn concat(&mut self, inputs: &[NodeId], axis: usize) -> Result<NodeId> {
        self.push(Op::Concat { inputs: inputs.to_vec(), axis }, None)
    }

    pub fn slice(&mut self, input: NodeId, axis: usize, start: usize, end: usize) -> Result<NodeId> {
        self.push(Op::Slice { input, axis, start, end }, None)
    }

    pub fn reshape(&mut self, input: NodeId, shape: &[usize]) -> Result<NodeId> {
        self.push(Op::Reshape { input, shape: shape.to_vec() }, None)
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Sum(a), None)
    }

    pub fn mean(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Mean(a), None)
    }

    pub fn log(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Log(a), None)
    }

    /// Inverted dropout with a mask drawn from `seed`. `None` (evaluation mode) or a zero
    /// rate returns `a` unchanged.
    pub fn dropout(&mut self, a: NodeId, rate: f64, seed: Option<u64>) -> Result<NodeId> {
        if !(0.0..1.0).contains(&rate) {
            return Err(gerr(self.label(a), format!("dropout rate {rate} outside [0, 1)")));
        }
        let Some(seed) = seed.filter(|_| rate > 0.0) else {
            return Ok(a);
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let keep = T::of(1.0 / (1.0 - rate));
        let mask = (0..self.value(a).len())
            .map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep })
            .collect();
        self.push(Op::Dropout { input: a, mask }, None)
    }

    pub fn scale(&mut self, a: NodeId, c: T) -> Result<NodeId> {
        let s = self.scalar(c);
        self.mul(a, s)
    }

    pub fn neg(&mut self, a: NodeId) -> Result<NodeId> {
        self.scale(a, -T::one())
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let nb = self.neg(b)?;
        self.add(a, nb)
    }

    /// `|a|` expressed as `relu(a) + relu(−a)`.
    pub fn abs(&mut self, a: NodeId) -> Result<NodeId> {
        let pos = self.relu(a)?;
        let na = self.neg(a)?;
        let neg = self.relu(na)?;
        self.add(pos, neg)
    }

    /// Rebinds named inputs/parameters and re-evaluates the graph; returns the output value.
    pub fn forward(&mut self, inputs: &[(&str, Tensor<T>)]) -> Result<&Tensor<T>> {
        for (name, value) in inputs {
            self.bind(name, value.clone())?;
        }
        self.recompute()?;
        let out = self.output().ok_or_else(|| gerr("<empty>", "graph has no nodes"))?;
        Ok(&self.nodes[out.0].value)
    }

    pub fn bind(&mut self, name: &str, value: Tensor<T>) -> Result<()> {
        let id = self.lookup(name).ok_or_else(|| gerr(name, "no such input"))?;
        let node = &mut self.nodes[id.0];
        if node.value.shape() != value.shape() {
            return Err(gerr(name, format!("bound shape {:?}, expected {:?}", value.shape(), node.value.shape())));
        }
        node.value = value;
        Ok(())
    }

    /// Mutable access to a leaf value; call [`Graph::recompute`] afterwards.
    pub(crate) fn leaf_mut(&mut self, id: NodeId) -> &mut Tensor<T> {
        debug_assert!(matches!(self.nodes[id.0].op, Op::Input | Op::Param | Op::Constant));
        &mut self.nodes[id.0].value
    }

    pub fn recompute(&mut self) -> Result<()> {
        for k in 0..self.nodes.len() {
            if matches!(self.nodes[k].op, Op::Input | Op::Param | Op::Constant) {
                continue;
            }
            let value = self.eval(&self.nodes[k].op, &self.nodes[k].label)?;
            self.nodes[k].value = value;
        }
        Ok(())
    }

    /// Sign pattern of every ReLU input (`true` when strictly positive).
    pub fn relu_pattern(&self) -> Vec<bool> {
        self.nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::Relu(a) => Some(&self.nodes[a.0].value),
                _ => None,
            })
            .flat_map(|v| v.data().iter().map(|&x| x > T::zero()))
            .collect()
    }

    fn eval(&self, op: &Op<T>, label: &str) -> Result<Tensor<T>> {
        let v = |id: &NodeId| -> Result<&Tensor<T>> {
            self.nodes.get(id.0).map(|n| &n.value).ok_or_else(|| gerr(label, "input node does not precede this node"))
        };
        let unary = |a: &NodeId, f: &dyn Fn(T) -> T| -> Result<Tensor<T>> { Ok(v(a)?.map(f)) };
        match op {
            Op::Input | Op::Param | Op::Constant => Err(gerr(label, "leaf nodes are not evaluated")),
            Op::Add(a, b) | Op::Mul(a, b) => {
                let (x, y) = (v(a)?, v(b)?);
                if !broadcasts(x.shape(), y.shape()) {
                    return Err(gerr(label, format!("cannot broadcast {:?} onto {:?}", y.shape(), x.shape())));
                }
                let m = y.len();
                let yd = y.data();
                let data = x
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(k, &xv)| if matches!(op, Op::Add(..)) { xv + yd[k % m] } else { xv * yd[k % m] })
                    .collect();
                Tensor::new(x.shape().to_vec(), data)
            }
            Op::MatMul(a, b) => {
                let (x, y) = (v(a)?, v(b)?);
                let (xs, ys) = (x.shape(), y.shape());
                if xs.len() != 2 || ys.len() != 2 || xs[1] != ys[0] {
                    return Err(gerr(label, format!("matmul of {xs:?} and {ys:?}")));
                }
                let (m, k, n) = (xs[0], xs[1], ys[1]);
                let (xd, yd) = (x.data(), y.data());
                let mut out = vec![T::zero(); m * n];
                for i in 0..m {
                    for p in 0..k {
                        let xip = xd[i * k + p];
                        let row = &yd[p * n..(p + 1) * n];
                        for (o, &yv) in out[i * n..(i + 1) * n].iter_mut().zip(row) {
                            *o += xip * yv;
                        }
                    }
                }
                Tensor::new(vec![m, n], out)
            }
            Op::Conv2d { input, kernel, bias } => {
                let (x, w) = (v(input)?, v(kernel)?);
                let (xs, ws) = (x.shape(), w.shape());
                if xs.len() != 3 || ws.len() != 4 || xs[0] != ws[1] || ws[2] > xs[1] || ws[3] > xs[2] {
                    return Err(gerr(label, format!("conv2d of input {xs:?} with kernel {ws:?}")));
                }
                let b = match bias {
                    Some(b) => {
                        let b = v(b)?;
                        if b.len() != ws[0] {
                            return Err(gerr(label, format!("bias {:?} for {} output channels", b.shape(), ws[0])));
                        }
                        Some(b.data())
                    }
                    None => None,
                };
                let (cin, h, wid) = (xs[0], xs[1], xs[2]);
                let (cout, kh, kw) = (ws[0], ws[2], ws[3]);
                let (oh, ow) = (h - kh + 1, wid - kw + 1);
                let (xd, wd) = (x.data(), w.data());
                let mut out = vec![T::zero(); cout * oh * ow];
                for co in 0..cout {
                    let b0 = b.map_or(T::zero(), |b| b[co]);
                    for r in 0..oh {
                        for c in 0..ow {
                            let mut s = b0;
                            for ci in 0..cin {
                                for dr in 0..kh {
                                    let xrow = &xd[(ci * h + r + dr) * wid + c..][..kw];
                                    let wrow = &wd[((co * cin + ci) * kh + dr) * kw..][..kw];
                                    for (&xv, &wv) in xrow.iter().zip(wrow) {
                                        s += xv * wv;
                                    }
                                }
                            }
                            out[(co * oh + r) * ow + c] = s;
                        }
                    }
                }
                Tensor::new(vec![cout, oh, ow], out)
            }
            Op::Relu(a) => unary(a, &|x| if x > T::zero() { x } else { T::zero() }),
            Op::Tanh(a) => unary(a, &|x| x.tanh()),
            Op::Sigmoid(a) => unary(a, &|x| T::one() / (T::one() + (-x).exp())),
            Op::Log(a) => unary(a, &|x| x.ln()),
            Op::Softmax(a) => {
                let x = v(a)?;
                let n = *x.shape().last().expect("non-empty shape");
                let mut out = x.data().to_vec();
                for row in out.chunks_mut(n) {
                    let m = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
                    let mut z = T::zero();
                    for r in row.iter_mut() {
                        *r = (*r - m).exp();
                        z += *r;
                    }
                    for r in row.iter_mut() {
                        *r /= z;
                    }
                }
                Tensor::new(x.shape().to_vec(), out)
            }
            Op::Concat { inputs, axis } => {
                let first = v(inputs.first().ok_or_else(|| gerr(label, "concat of nothing"))?)?;
                let rank = first.shape().len();
                if *axis >= rank {
                    return Err(gerr(label, format!("axis {axis} of rank-{rank} tensor")));
                }
                let mut shape = first.shape().to_vec();
                shape[*axis] = 0;
                for id in inputs {
                    let s = v(id)?.shape();
                    let compatible = s.len() == rank && (0..rank).all(|d| d == *axis || s[d] == first.shape()[d]);
                    if !compatible {
                        return Err(gerr(label, format!("cannot concat {s:?} with {:?} on axis {axis}", first.shape())));
                    }
                    shape[*axis] += s[*axis];
                }
                let (outer, _, inner) = split_axis(&shape, *axis);
                let mut out = Vec::with_capacity(shape.iter().product());
                for o in 0..outer {
                    for id in inputs {
                        let t = v(id)?;
                        let chunk = t.shape()[*axis] * inner;
                        out.extend_from_slice(&t.data()[o * chunk..(o + 1) * chunk]);
                    }
                }
                Tensor::new(shape, out)
            }
            Op::Slice { input, axis, start, end } => {
                let x = v(input)?;
                if *axis >= x.shape().len() || start >= end || *end > x.shape()[*axis] {
                    return Err(gerr(label, format!("slice {start}..{end} on axis {axis} of {:?}", x.shape())));
                }
                let (outer, len, inner) = split_axis(x.shape(), *axis);
                let mut out = Vec::with_capacity(outer * (end - start) * inner);
                for o in 0..outer {
                    out.extend_from_slice(&x.data()[(o * len + start) * inner..(o * len + end) * inner]);
                }
                let mut shape = x.shape().to_vec();
                shape[*axis] = end - start;
                Tensor::new(shape, out)
            }
            Op::Reshape { input, shape } => v(input)?.clone().reshaped(shape).map_err(|e| gerr(label, e.to_string())),
            Op::Sum(a) => Ok(Tensor::scalar(v(a)?.data().iter().copied().sum())),
            Op::Mean(a) => {
                let x = v(a)?;
                Ok(Tensor::scalar(x.data().iter().copied().sum::<T>() / T::of(x.len() as f64)))
            }
            Op::Dropout { input, mask } => {
                let x = v(input)?;
                if x.len() != mask.len() {
                    return Err(gerr(label, "dropout mask does not match input"));
                }
                Tensor::new(x.shape().to_vec(), x.data().iter().zip(mask).map(|(&a, &m)| a * m).collect())
            }
        }
    }

    /// Reverse-mode accumulation from the scalar output. Returns the gradient of every
    /// named parameter.
    pub fn backward(&mut self) -> Result<BTreeMap<String, Tensor<T>>> {
        let out = self.output().ok_or_else(|| gerr("<empty>", "graph has no nodes"))?;
        if self.nodes[out.0].value.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar output, `{}` has shape {:?}",
                self.nodes[out.0].label,
                self.nodes[out.0].value.shape()
            )));
        }
        let mut adj: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        adj[out.0] = Some(Tensor::full(self.nodes[out.0].value.shape(), T::one()));

        for k in (0..=out.0).rev() {
            let Some(g) = adj[k].take() else { continue };
            let node = &self.nodes[k];
            let val = |id: NodeId| &self.nodes[id.0].value;
            let mut acc = |id: NodeId, delta: Vec<T>| {
                let slot = adj[id.0].get_or_insert_with(|| Tensor::zeros(self.nodes[id.0].value.shape()));
                for (s, d) in slot.data_mut().iter_mut().zip(delta) {
                    *s += d;
                }
            };
            let gd = g.data();
            match &node.op {
                Op::Input | Op::Param | Op::Constant => {}
                Op::Add(a, b) => {
                    acc(*a, gd.to_vec());
                    let m = val(*b).len();
                    let mut db = vec![T::zero(); m];
                    for (k, &gv) in gd.iter().enumerate() {
                        db[k % m] += gv;
                    }
                    acc(*b, db);
                }
                Op::Mul(a, b) => {
                    let (x, y) = (val(*a).data(), val(*b).data());
                    let m = y.len();
                    let da = gd.iter().enumerate().map(|(k, &gv)| gv * y[k % m]).collect();
                    let mut db = vec![T::zero(); m];
                    for (k, &gv) in gd.iter().enumerate() {
                        db[k % m] += gv * x[k];
                    }
                    acc(*a, da);
                    acc(*b, db);
                }
                Op::MatMul(a, b) => {
                    let (x, y) = (val(*a), val(*b));
                    let (m, kk, n) = (x.shape()[0], x.shape()[1], y.shape()[1]);
                    let (xd, yd) = (x.data(), y.data());
                    let mut da = vec![T::zero(); m * kk];
                    let mut db = vec![T::zero(); kk * n];
                    for i in 0..m {
                        for p in 0..kk {
                            let mut s = T::zero();
                            for j in 0..n {
                                let gij = gd[i * n + j];
                                s += gij * yd[p * n + j];
                                db[p * n + j] += xd[i * kk + p] * gij;
                            }
                            da[i * kk + p] = s;
                        }
                    }
                    acc(*a, da);
                    acc(*b, db);
                }
                Op::Conv2d { input, kernel, bias } => {
                    let (x, w) = (val(*input), val(*kernel));
                    let (cin, h, wid) = (x.shape()[0], x.shape()[1], x.shape()[2]);
                    let (cout, kh, kw) = (w.shape()[0], w.shape()[2], w.shape()[3]);
                    let (oh, ow) = (h - kh + 1, wid - kw + 1);
                    let (xd, wd) = (x.data(), w.data());
                    let mut dx = vec![T::zero(); xd.len()];
                    let mut dw = vec![T::zero(); wd.len()];
                    let mut dbias = vec![T::zero(); cout];
                    for co in 0..cout {
                        for r in 0..oh {
                            for c in 0..ow {
                                let gv = gd[(co * oh + r) * ow + c];
                                if gv == T::zero() {
                                    continue;
                                }
                                dbias[co] += gv;
                                for ci in 0..cin {
                                    for dr in 0..kh {
                                        let xo = (ci * h + r + dr) * wid + c;
                                        let wo = ((co * cin + ci) * kh + dr) * kw;
                                        for dc in 0..kw {
                                            dw[wo + dc] += gv * xd[xo + dc];
                                            dx[xo + dc] += gv * wd[wo + dc];
                                        }
                                    }
                                }
                            }
                        }
                    }
                    acc(*input, dx);
                    acc(*kernel, dw);
                    if let Some(b) = bias {
                        acc(*b, dbias);
                    }
                }
                Op::Relu(a) => {
                    let x = val(*a).data();
                    acc(*a, gd.iter().zip(x).map(|(&gv, &xv)| if xv > T::zero() { gv } else { T::zero() }).collect());
                }
                Op::Tanh(a) => {
                    let y = node.value.data();
                    acc(*a, gd.iter().zip(y).map(|(&gv, &yv)| gv * (T::one() - yv * yv)).collect());
                }
                Op::Sigmoid(a) => {
                    let y = node.value.data();
                    acc(*a, gd.iter().zip(y).map(|(&gv, &yv)| gv * yv * (T::one() - yv)).collect());
                }
                Op::Log(a) => {
                    let x = val(*a).data();
                    acc(*a, gd.iter().zip(x).map(|(&gv, &xv)| gv / xv).collect());
                }
                Op::Softmax(a) => {
                    let y = node.value.data();
                    let n = *node.value.shape().last().expect("non-empty");
                    let mut dx = vec![T::zero(); y.len()];
                    for ((dxr, yr), gr) in dx.chunks_mut(n).zip(y.chunks(n)).zip(gd.chunks(n)) {
                        let dotp: T = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
                        for ((d, &yv), &gv) in dxr.iter_mut().zip(yr).zip(gr) {
                            *d = yv * (gv - dotp);
                        }
                    }
                    acc(*a, dx);
                }
                Op::Concat { inputs, axis } => {
                    let (outer, _, inner) = split_axis(node.value.shape(), *axis);
                    let total: usize = node.value.shape()[*axis] * inner;
                    let mut offset = 0;
                    for id in inputs {
                        let chunk = val(*id).shape()[*axis] * inner;
                        let mut d = Vec::with_capacity(outer * chunk);
                        for o in 0..outer {
                            d.extend_from_slice(&gd[o * total + offset..o * total + offset + chunk]);
                        }
                        offset += chunk;
                        acc(*id, d);
                    }
                }
                Op::Slice { input, axis, start, end } => {
                    let (outer, len, inner) = split_axis(val(*input).shape(), *axis);
                    let width = (end - start) * inner;
                    let mut d = vec![T::zero(); outer * len * inner];
                    for o in 0..outer {
                        d[(o * len + start) * inner..(o * len + end) * inner].copy_from_slice(&gd[o * width..(o + 1) * width]);
                    }
                    acc(*input, d);
                }
                Op::Reshape { input, .. } => acc(*input, gd.to_vec()),
                Op::Sum(a) => acc(*a, vec![gd[0]; val(*a).len()]),
                Op::Mean(a) => {
                    let n = val(*a).len();
                    acc(*a, vec![gd[0] / T::of(n as f64); n]);
                }
                Op::Dropout { input, mask } => acc(*input, gd.iter().zip(mask).map(|(&gv, &m)| gv * m).collect()),
            }
            adj[k] = Some(g);
        }

        let grads = self
            .params()
            .into_iter()
            .map(|(name, id)| {
                let g = adj[id.0].clone().unwrap_or_else(|| Tensor::zeros(self.nodes[id.0].value.shape()));
                (name, g)
            })
            .collect();
        self.adjoints = adj;
        Ok(grads)
    }

    /// Adjoint of a node after [`Graph::backward`]; `None` if the output does not depend on it.
    pub fn adjoint(&self, id: NodeId) -> Option<&Tensor<T>> {
        self.adjoints.get(id.0).and_then(Option::as_ref)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    type G = Graph<f64>;

    #[test]
    fn square_and_derivative() {
        let mut g = G::new();
        let x = g.param("x", Tensor::scalar(3.0)).unwrap();
        let y = g.mul(x, x).unwrap();
        assert_eq!(g.value(y).item(), 9.0);
        let grads = g.backward().unwrap();
        assert_eq!(grads["x"].item(), 6.0);
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let mut g = G::new();
        let x = g.input("x", Tensor::zeros(&[24])).unwrap();
        let s = g.softmax(x).unwrap();
        for &v in g.value(s).data() {
            assert_relative_eq!(v, 1.0 / 24.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn conv_of_ones() {
        let mut g = G::new();
        let x = g.input("x", Tensor::full(&[1, 24, 50], 1.0)).unwrap();
        let k = g.param("k", Tensor::full(&[1, 1, 1, 3], 1.0)).unwrap();
        let y = g.conv2d(x, k, None).unwrap();
        assert_eq!(g.value(y).shape(), &[1, 24, 48]);
        assert!(g.value(y).data().iter().all(|&v| v == 3.0));
    }

    #[test]
    fn mean_softmax_gradient_rows_sum_to_zero() {
        let mut g = G::new();
        let data: Vec<f64> = (0..12).map(|k| (k as f64 * 0.7).sin()).collect();
        let x = g.param("x", Tensor::new(vec![3, 4], data).unwrap()).unwrap();
        let s = g.softmax(x).unwrap();
        let w = g.constant(Tensor::new(vec![4], vec![0.3, -1.0, 2.0, 0.5]).unwrap());
        let sw = g.mul(s, w).unwrap();
        g.mean(sw).unwrap();
        let grads = g.backward().unwrap();
        for row in grads["x"].data().chunks(4) {
            assert!(row.iter().sum::<f64>().abs() < 1e-15);
        }
    }

    #[test]
    fn shape_mismatch_names_node() {
        let mut g = G::new();
        let a = g.input("a", Tensor::zeros(&[2, 3])).unwrap();
        let b = g.input("b", Tensor::zeros(&[2])).unwrap();
        match g.add(a, b) {
            Err(Error::Graph { node, .. }) => assert_eq!(node, "add#2"),
            other => panic!("{other:?}"),
        }
        let c = g.input("c", Tensor::zeros(&[2, 2])).unwrap();
        assert!(matches!(g.matmul(a, c), Err(Error::Graph { .. })));
        assert!(matches!(g.bind("a", Tensor::zeros(&[3])), Err(Error::Graph { .. })));
    }

    #[test]
    fn non_scalar_backward_is_contract_error() {
        let mut g = G::new();
        let a = g.param("a", Tensor::zeros(&[2])).unwrap();
        g.tanh(a).unwrap();
        assert!(matches!(g.backward(), Err(Error::Contract(_))));
    }

    #[test]
    fn forward_rebinds_inputs() {
        let mut g = G::new();
        let x = g.input("x", Tensor::scalar(3.0)).unwrap();
        let y = g.mul(x, x).unwrap();
        g.sum(y).unwrap();
        assert_eq!(g.forward(&[("x", Tensor::scalar(4.0))]).unwrap().item(), 16.0);
    }

    #[test]
    fn concat_and_slice_round_trip() {
        let mut g = G::new();
        let a = g.param("a", Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap()).unwrap();
        let b = g.param("b", Tensor::new(vec![2, 1], vec![5.0, 6.0]).unwrap()).unwrap();
        let c = g.concat(&[a, b], 1).unwrap();
        assert_eq!(g.value(c).data(), &[1.0, 2.0, 5.0, 3.0, 4.0, 6.0]);
        let s = g.slice(c, 1, 1, 3).unwrap();
        assert_eq!(g.value(s).data(), &[2.0, 5.0, 4.0, 6.0]);
        let w = g.constant(Tensor::new(vec![2], vec![10.0, 100.0]).unwrap());
        let m = g.mul(s, w).unwrap();
        g.sum(m).unwrap();
        let grads = g.backward().unwrap();
        assert_eq!(grads["a"].data(), &[0.0, 10.0, 0.0, 10.0]);
        assert_eq!(grads["b"].data(), &[100.0, 100.0]);
    }

    #[test]
    fn dropout_identity_in_eval_and_seeded_in_train() {
        let mut g = G::new();
        let x = g.input("x", Tensor::full(&[100], 1.0)).unwrap();
        assert_eq!(g.dropout(x, 0.1, None).unwrap(), x);
        let d1 = g.dropout(x, 0.1, Some(5)).unwrap();
        let d2 = g.dropout(x, 0.1, Some(5)).unwrap();
        assert_eq!(g.value(d1), g.value(d2));
        let kept = g.value(d1).data().iter().filter(|&&v| v > 0.0).count();
        assert!(kept > 75 && kept < 100);
        for &v in g.value(d1).data() {
            assert!(v == 0.0 || (v - 1.0 / 0.9).abs() < 1e-15);
        }
    }
}
