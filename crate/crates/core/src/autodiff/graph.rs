use std::collections::BTreeMap;

use crate::error::{contract, Error, Result};
use crate::tensor::{matmul_at, matmul_bt, matmul_raw, Tensor};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpTag {
    Constant,
    Param,
    MatMul,
    Add,
    Mul,
    Concat,
    Slice,
    Sigmoid,
    Tanh,
    Log,
    Exp,
    Softmax,
    Sum,
    Mean,
    Gather,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Concat {
        inputs: Vec<Var>,
        axis: usize,
    },
    Slice {
        x: Var,
        axis: usize,
        start: usize,
        len: usize,
    },
    Sigmoid(Var),
    Tanh(Var),
    Log(Var),
    Exp(Var),
    Softmax {
        x: Var,
        axis: usize,
    },
    Sum {
        x: Var,
        axis: Option<usize>,
    },
    Mean {
        x: Var,
        axis: Option<usize>,
    },
    Gather {
        table: Var,
        ids: Vec<usize>,
    },
}

#[derive(Debug, Clone)]
struct Node {
    tag: OpTag,
    op: Op,
    value: Tensor,
}

/// Define-by-run tape. Nodes are appended in creation order, which is
/// therefore a topological order of the (acyclic) computation graph.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of a scalar loss with respect to every node of a graph.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
    params: Vec<usize>,
}

impl Gradients {
    /// Gradient for `v`; zeros when the loss does not depend on it.
    pub fn wrt(&self, v: Var) -> Tensor {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[v.0]),
        }
    }

    /// Parameter node id to gradient, including zero gradients.
    pub fn params(&self) -> BTreeMap<usize, Tensor> {
        self.params.iter().map(|&id| (id, self.wrt(Var(id)))).collect()
    }
}

fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn broadcast_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i + a.len() >= rank { a[i + a.len() - rank] } else { 1 };
        let db = if i + b.len() >= rank { b[i + b.len() - rank] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => {
                return Err(Error::Dimension {
                    op,
                    left: a.to_vec(),
                    right: b.to_vec(),
                })
            }
        };
    }
    Ok(out)
}

/// For each flat index of `out`, the flat index into a tensor of shape
/// `src` broadcast against it.
fn broadcast_index(src: &[usize], out: &[usize]) -> Vec<usize> {
    let n: usize = out.iter().product();
    if src == out {
        return (0..n).collect();
    }
    let rank = out.len();
    let offset = rank - src.len();
    let mut strides = vec![0usize; rank];
    let mut acc = 1;
    for i in (0..src.len()).rev() {
        strides[i + offset] = if src[i] == 1 { 0 } else { acc };
        acc *= src[i];
    }
    let mut idx = vec![0usize; rank];
    let mut res = Vec::with_capacity(n);
    let mut flat = 0usize;
    for _ in 0..n {
        res.push(flat);
        for d in (0..rank).rev() {
            idx[d] += 1;
            flat += strides[d];
            if idx[d] < out[d] {
                break;
            }
            flat -= strides[d] * idx[d];
            idx[d] = 0;
        }
    }
    res
}

fn reduce_to(grad: &[f64], map: &[usize], shape: &[usize]) -> Tensor {
    let mut out = Tensor::zeros(shape);
    let data = out.data_mut();
    for (g, &i) in grad.iter().zip(map) {
        data[i] += g;
    }
    out
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

impl Graph {
    pub fn new() -> Graph {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, tag: OpTag, op: Op, value: Tensor) -> Var {
        self.nodes.push(Node { tag, op, value });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn tag(&self, v: Var) -> OpTag {
        self.nodes[v.0].tag
    }

    /// Ids of the nodes `v` was computed from.
    pub fn inputs(&self, v: Var) -> Vec<Var> {
        match &self.nodes[v.0].op {
            Op::Leaf => vec![],
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Mul(a, b) => vec![*a, *b],
            Op::Concat { inputs, .. } => inputs.clone(),
            Op::Slice { x, .. } | Op::Softmax { x, .. } | Op::Sum { x, .. } | Op::Mean { x, .. } => vec![*x],
            Op::Sigmoid(x) | Op::Tanh(x) | Op::Log(x) | Op::Exp(x) => vec![*x],
            Op::Gather { table, .. } => vec![*table],
        }
    }

    /// A value that receives no gradient of interest.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(OpTag::Constant, Op::Leaf, t)
    }

    pub fn scalar(&mut self, v: f64) -> Var {
        self.constant(Tensor::scalar(v))
    }

    /// A trainable leaf; its gradient is reported by [`Gradients::params`].
    pub fn param(&mut self, t: Tensor) -> Var {
        self.push(OpTag::Param, Op::Leaf, t)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::Dimension {
                op: "matmul",
                left: sa.to_vec(),
                right: sb.to_vec(),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let data = matmul_raw(self.value(a).data(), self.value(b).data(), m, k, n);
        let t = Tensor::new(vec![m, n], data)?;
        Ok(self.push(OpTag::MatMul, Op::MatMul(a, b), t))
    }

    fn binary(&mut self, a: Var, b: Var, tag: OpTag, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        let name = if tag == OpTag::Add { "add" } else { "multiply" };
        let shape = broadcast_shape(name, self.shape(a), self.shape(b))?;
        let ia = broadcast_index(self.shape(a), &shape);
        let ib = broadcast_index(self.shape(b), &shape);
        let (va, vb) = (self.value(a).data(), self.value(b).data());
        let data = ia.iter().zip(&ib).map(|(&i, &j)| f(va[i], vb[j])).collect();
        let t = Tensor::new(shape, data)?;
        let op = if tag == OpTag::Add {
            Op::Add(a, b)
        } else {
            Op::Mul(a, b)
        };
        Ok(self.push(tag, op, t))
    }

    /// Elementwise sum with broadcasting.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, OpTag::Add, |x, y| x + y)
    }

    /// Elementwise product with broadcasting.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, OpTag::Mul, |x, y| x * y)
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = inputs.first().ok_or_else(|| contract("concat of zero tensors"))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(contract(format!("concat axis {axis} on rank {}", base.len())));
        }
        let mut total = 0;
        for &v in inputs {
            let s = self.shape(v);
            let compatible =
                s.len() == base.len() && s.iter().zip(&base).enumerate().all(|(d, (x, y))| d == axis || x == y);
            if !compatible {
                return Err(Error::Dimension {
                    op: "concat",
                    left: base,
                    right: s.to_vec(),
                });
            }
            total += s[axis];
        }
        let (outer, _, inner) = axis_split(&base, axis);
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &v in inputs {
                let s = self.shape(v);
                let chunk = s[axis] * inner;
                data.extend_from_slice(&self.value(v).data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let t = Tensor::new(shape, data)?;
        Ok(self.push(
            OpTag::Concat,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            t,
        ))
    }

    /// `len` entries starting at `start` along `axis`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if axis >= s.len() || len == 0 || start + len > s[axis] {
            return Err(contract(format!(
                "slice [{start}, {}) along axis {axis} of shape {s:?}",
                start + len
            )));
        }
        let (outer, n, inner) = axis_split(&s, axis);
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * n * inner + start * inner;
            data.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut shape = s;
        shape[axis] = len;
        let t = Tensor::new(shape, data)?;
        Ok(self.push(OpTag::Slice, Op::Slice { x, axis, start, len }, t))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let t = self.value(x).map(sigmoid);
        self.push(OpTag::Sigmoid, Op::Sigmoid(x), t)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let t = self.value(x).map(f64::tanh);
        self.push(OpTag::Tanh, Op::Tanh(x), t)
    }

    pub fn log(&mut self, x: Var) -> Var {
        let t = self.value(x).map(f64::ln);
        self.push(OpTag::Log, Op::Log(x), t)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let t = self.value(x).map(f64::exp);
        self.push(OpTag::Exp, Op::Exp(x), t)
    }

    /// Softmax along `axis`, shifted by the slice maximum.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if axis >= s.len() {
            return Err(contract(format!("softmax axis {axis} on shape {s:?}")));
        }
        let t = softmax_tensor(self.value(x), axis);
        Ok(self.push(OpTag::Softmax, Op::Softmax { x, axis }, t))
    }

    fn reduce(&mut self, x: Var, axis: Option<usize>, mean: bool) -> Result<Var> {
        let s = self.shape(x).to_vec();
        let src = self.value(x).data();
        let t = match axis {
            None => {
                let total: f64 = src.iter().sum();
                Tensor::scalar(if mean { total / src.len() as f64 } else { total })
            }
            Some(axis) => {
                if axis >= s.len() {
                    return Err(contract(format!("reduce axis {axis} on shape {s:?}")));
                }
                let (outer, n, inner) = axis_split(&s, axis);
                let mut data = vec![0.0; outer * inner];
                for o in 0..outer {
                    for j in 0..n {
                        for i in 0..inner {
                            data[o * inner + i] += src[(o * n + j) * inner + i];
                        }
                    }
                }
                if mean {
                    data.iter_mut().for_each(|v| *v /= n as f64);
                }
                let mut shape = s;
                shape[axis] = 1;
                Tensor::new(shape, data)?
            }
        };
        Ok(if mean {
            self.push(OpTag::Mean, Op::Mean { x, axis }, t)
        } else {
            self.push(OpTag::Sum, Op::Sum { x, axis }, t)
        })
    }

    /// Sum over everything (shape `[1]`) or along one axis (kept with size 1).
    pub fn sum(&mut self, x: Var, axis: Option<usize>) -> Result<Var> {
        self.reduce(x, axis, false)
    }

    pub fn mean(&mut self, x: Var, axis: Option<usize>) -> Result<Var> {
        self.reduce(x, axis, true)
    }

    /// Rows `ids` of a `[rows, dim]` table, as `[ids.len(), dim]`.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let s = self.shape(table).to_vec();
        if s.len() != 2 {
            return Err(contract(format!("gather from non-matrix shape {s:?}")));
        }
        if let Some(bad) = ids.iter().find(|&&i| i >= s[0]) {
            return Err(contract(format!("gather row {bad} of {} rows", s[0])));
        }
        if ids.is_empty() {
            return Err(contract("gather of zero rows"));
        }
        let src = self.value(table);
        let mut data = Vec::with_capacity(ids.len() * s[1]);
        for &i in ids {
            data.extend_from_slice(src.row(i));
        }
        let t = Tensor::new(vec![ids.len(), s[1]], data)?;
        Ok(self.push(
            OpTag::Gather,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            t,
        ))
    }

    /// Reverse-mode sweep from a one-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(contract(format!(
                "backward from non-scalar loss of shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::full(self.shape(loss), 1.0));

        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            self.propagate(node, &g, &mut grads);
            grads[id] = Some(g);
        }

        grads.resize(self.nodes.len(), None);
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
            params: self
                .nodes
                .iter()
                .enumerate()
                .filter(|(_, n)| n.tag == OpTag::Param)
                .map(|(i, _)| i)
                .collect(),
        })
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let mut acc = |v: Var, t: Tensor| match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&t),
            slot @ None => *slot = Some(t),
        };
        let gd = g.data();
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (va.rows(), va.cols(), vb.cols());
                let da = matmul_bt(gd, vb.data(), m, k, n);
                let db = matmul_at(va.data(), gd, m, k, n);
                acc(*a, Tensor::new(vec![m, k], da).expect("matmul grad"));
                acc(*b, Tensor::new(vec![k, n], db).expect("matmul grad"));
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    let map = broadcast_index(self.shape(v), out.shape());
                    acc(v, reduce_to(gd, &map, self.shape(v)));
                }
            }
            Op::Mul(a, b) => {
                let ia = broadcast_index(self.shape(*a), out.shape());
                let ib = broadcast_index(self.shape(*b), out.shape());
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                let ga: Vec<f64> = gd.iter().zip(&ib).map(|(g, &j)| g * vb[j]).collect();
                let gb: Vec<f64> = gd.iter().zip(&ia).map(|(g, &i)| g * va[i]).collect();
                acc(*a, reduce_to(&ga, &ia, self.shape(*a)));
                acc(*b, reduce_to(&gb, &ib, self.shape(*b)));
            }
            Op::Concat { inputs, axis } => {
                let (outer, total, inner) = axis_split(out.shape(), *axis);
                let mut offset = 0;
                for &v in inputs {
                    let n = self.shape(v)[*axis];
                    let mut part = Vec::with_capacity(outer * n * inner);
                    for o in 0..outer {
                        let base = o * total * inner + offset * inner;
                        part.extend_from_slice(&gd[base..base + n * inner]);
                    }
                    acc(v, Tensor::new(self.shape(v).to_vec(), part).expect("concat grad"));
                    offset += n;
                }
            }
            Op::Slice { x, axis, start, len } => {
                let s = self.shape(*x);
                let (outer, n, inner) = axis_split(s, *axis);
                let mut full = Tensor::zeros(s);
                let fd = full.data_mut();
                for o in 0..outer {
                    let base = o * n * inner + start * inner;
                    let src = o * len * inner;
                    fd[base..base + len * inner].copy_from_slice(&gd[src..src + len * inner]);
                }
                acc(*x, full);
            }
            Op::Sigmoid(x) => {
                let d = gd.iter().zip(out.data()).map(|(g, y)| g * y * (1.0 - y)).collect();
                acc(*x, Tensor::new(out.shape().to_vec(), d).expect("grad"));
            }
            Op::Tanh(x) => {
                let d = gd.iter().zip(out.data()).map(|(g, y)| g * (1.0 - y * y)).collect();
                acc(*x, Tensor::new(out.shape().to_vec(), d).expect("grad"));
            }
            Op::Log(x) => {
                let xv = self.value(*x).data();
                let d = gd.iter().zip(xv).map(|(g, x)| g / x).collect();
                acc(*x, Tensor::new(out.shape().to_vec(), d).expect("grad"));
            }
            Op::Exp(x) => {
                let d = gd.iter().zip(out.data()).map(|(g, y)| g * y).collect();
                acc(*x, Tensor::new(out.shape().to_vec(), d).expect("grad"));
            }
            Op::Softmax { x, axis } => {
                // dx = y * (g - sum(g * y)) per slice
                let (outer, n, inner) = axis_split(out.shape(), *axis);
                let y = out.data();
                let mut d = vec![0.0; y.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let idx = |j: usize| (o * n + j) * inner + i;
                        let dot: f64 = (0..n).map(|j| gd[idx(j)] * y[idx(j)]).sum();
                        for j in 0..n {
                            d[idx(j)] = y[idx(j)] * (gd[idx(j)] - dot);
                        }
                    }
                }
                acc(*x, Tensor::new(out.shape().to_vec(), d).expect("grad"));
            }
            Op::Sum { x, axis } | Op::Mean { x, axis } => {
                let s = self.shape(*x);
                let n_total: usize = s.iter().product();
                let scale = match (&node.op, axis) {
                    (Op::Mean { .. }, None) => 1.0 / n_total as f64,
                    (Op::Mean { .. }, Some(a)) => 1.0 / s[*a] as f64,
                    _ => 1.0,
                };
                let d = match axis {
                    None => vec![gd[0] * scale; n_total],
                    Some(a) => {
                        let (outer, n, inner) = axis_split(s, *a);
                        let mut d = vec![0.0; n_total];
                        for o in 0..outer {
                            for j in 0..n {
                                for i in 0..inner {
                                    d[(o * n + j) * inner + i] = gd[o * inner + i] * scale;
                                }
                            }
                        }
                        d
                    }
                };
                acc(*x, Tensor::new(s.to_vec(), d).expect("grad"));
            }
            Op::Gather { table, ids } => {
                let s = self.shape(*table);
                let dim = s[1];
                let mut full = Tensor::zeros(s);
                let fd = full.data_mut();
                for (r, &i) in ids.iter().enumerate() {
                    for c in 0..dim {
                        fd[i * dim + c] += gd[r * dim + c];
                    }
                }
                acc(*table, full);
            }
        }
    }
}

/// Numerically stable softmax along `axis`.
pub fn softmax_tensor(x: &Tensor, axis: usize) -> Tensor {
    let (outer, n, inner) = axis_split(x.shape(), axis);
    let src = x.data();
    let mut data = vec![0.0; src.len()];
    for o in 0..outer {
        for i in 0..inner {
            let idx = |j: usize| (o * n + j) * inner + i;
            let max = (0..n).map(|j| src[idx(j)]).fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for j in 0..n {
                let e = (src[idx(j)] - max).exp();
                data[idx(j)] = e;
                total += e;
            }
            for j in 0..n {
                data[idx(j)] /= total;
            }
        }
    }
    Tensor::new(x.shape().to_vec(), data).expect("same shape")
}

// Composites built only from the primitives above.
impl Graph {
    pub fn neg(&mut self, x: Var) -> Result<Var> {
        self.scale(x, -1.0)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var> {
        let k = self.scalar(c);
        self.mul(x, k)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let nb = self.neg(b)?;
        self.add(a, nb)
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Result<Var> {
        let k = self.scalar(c);
        self.add(x, k)
    }

    pub fn square(&mut self, x: Var) -> Result<Var> {
        self.mul(x, x)
    }

    /// `log(1 + exp(z))` without overflow: `relu(z) + log(1 + exp(-|z|))`.
    /// The sign pattern is read from the forward value, so both pieces are
    /// products with constant masks.
    pub fn softplus(&mut self, z: Var) -> Result<Var> {
        let v = self.value(z).clone();
        let pos = self.constant(v.map(|x| if x > 0.0 { 1.0 } else { 0.0 }));
        let sign = self.constant(v.map(|x| if x > 0.0 { -1.0 } else { 1.0 }));
        let relu = self.mul(z, pos)?;
        let neg_abs = self.mul(z, sign)?;
        let e = self.exp(neg_abs);
        let one_plus = self.add_scalar(e, 1.0)?;
        let tail = self.log(one_plus);
        self.add(relu, tail)
    }

    /// `log(sigmoid(z)) = -softplus(-z)`.
    pub fn log_sigmoid(&mut self, z: Var) -> Result<Var> {
        let nz = self.neg(z)?;
        let sp = self.softplus(nz)?;
        self.neg(sp)
    }
}
