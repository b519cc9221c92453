//! Tape-based reverse-mode autodiff.
//!
//! Ops append nodes to the tape in creation order, so parents always precede
//! children and a single reverse sweep is a valid topological order. Binary
//! elementwise ops broadcast numpy-style (right-aligned); their backward
//! reduces gradients back onto the operand shapes.

use std::cell::RefCell;

use crate::tensor::{numel, Tensor, TensorError};

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct NodeId(pub(crate) usize);

#[derive(Debug)]
#[allow(dead_code)] // some payloads exist only for Debug introspection
enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    AddScalar(NodeId, f64),
    MulScalar(NodeId, f64),
    Recip(NodeId),
    Exp(NodeId),
    Ln(NodeId),
    Sqrt(NodeId),
    Relu(NodeId),
    Sigmoid(NodeId),
    /// Softmax over the last axis.
    Softmax(NodeId),
    MatMul(NodeId, NodeId),
    Transpose2(NodeId),
    Conv2d {
        x: NodeId,
        w: NodeId,
        stride: usize,
        pad: usize,
    },
    /// Per-group standardization over a [C,H,W] tensor (affine applied by callers).
    GroupNorm {
        x: NodeId,
        groups: usize,
        eps: f64,
    },
    SumAll(NodeId),
    MeanAll(NodeId),
    Reshape(NodeId),
    Concat {
        parts: Vec<NodeId>,
        axis: usize,
    },
    Detach(NodeId),
}

struct Node {
    op: Op,
    value: Tensor,
}

/// A single-threaded tape. Create one per forward/backward pass.
#[derive(Default)]
pub struct Graph {
    nodes: RefCell<Vec<Node>>,
}

/// Gradients produced by [`Graph::backward`]; nodes the loss never touched
/// report zeros of their value shape.
pub struct Grads {
    slots: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Grads {
    pub fn get(&self, id: NodeId) -> Tensor {
        let shape = &self.shapes[id.0];
        match self.slots.get(id.0).and_then(|s| s.as_ref()) {
            Some(v) => Tensor::new(shape, v.clone()).expect("gradient shape"),
            None => Tensor::zeros(shape),
        }
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.borrow().len()
    }

    fn push(&self, op: Op, value: Tensor) -> NodeId {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { op, value });
        NodeId(nodes.len() - 1)
    }

    /// Record a tensor as a differentiable input (or constant — just never
    /// read its gradient).
    pub fn leaf(&self, t: &Tensor) -> NodeId {
        self.push(Op::Leaf, t.clone())
    }

    pub fn scalar(&self, v: f64) -> NodeId {
        self.push(Op::Leaf, Tensor::scalar(v))
    }

    pub fn value(&self, id: NodeId) -> Tensor {
        self.nodes.borrow()[id.0].value.clone()
    }

    pub fn shape(&self, id: NodeId) -> Vec<usize> {
        self.nodes.borrow()[id.0].value.shape().to_vec()
    }

    // ---- elementwise ----

    pub fn add(&self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (va, vb) = (self.value(a), self.value(b));
        let out_shape = broadcast_shapes(va.shape(), vb.shape(), "add")?;
        let out = bin_broadcast(&va, &vb, &out_shape, |x, y| x + y);
        Ok(self.push(Op::Add(a, b), out))
    }

    pub fn mul(&self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (va, vb) = (self.value(a), self.value(b));
        let out_shape = broadcast_shapes(va.shape(), vb.shape(), "mul")?;
        let out = bin_broadcast(&va, &vb, &out_shape, |x, y| x * y);
        Ok(self.push(Op::Mul(a, b), out))
    }

    pub fn sub(&self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let nb = self.mul_scalar(b, -1.0);
        self.add(a, nb)
    }

    pub fn add_scalar(&self, a: NodeId, c: f64) -> NodeId {
        let v = self.value(a).map(|x| x + c);
        self.push(Op::AddScalar(a, c), v)
    }

    pub fn mul_scalar(&self, a: NodeId, c: f64) -> NodeId {
        let v = self.value(a).map(|x| x * c);
        self.push(Op::MulScalar(a, c), v)
    }

    pub fn recip(&self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| 1.0 / x);
        self.push(Op::Recip(a), v)
    }

    pub fn exp(&self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::exp);
        self.push(Op::Exp(a), v)
    }

    pub fn ln(&self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::ln);
        self.push(Op::Ln(a), v)
    }

    pub fn sqrt(&self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::sqrt);
        self.push(Op::Sqrt(a), v)
    }

    pub fn relu(&self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        self.push(Op::Relu(a), v)
    }

    pub fn sigmoid(&self, a: NodeId) -> NodeId {
        let v = self.value(a).map(sigmoid);
        self.push(Op::Sigmoid(a), v)
    }

    pub fn silu(&self, a: NodeId) -> Result<NodeId, TensorError> {
        let s = self.sigmoid(a);
        self.mul(a, s)
    }

    /// Softmax over the last axis (any rank ≥ 1).
    pub fn softmax(&self, a: NodeId) -> Result<NodeId, TensorError> {
        let va = self.value(a);
        if va.rank() == 0 {
            return Err(TensorError::Invalid("softmax needs rank ≥ 1".into()));
        }
        let last = *va.shape().last().unwrap();
        let mut out = va.to_vec();
        for row in out.chunks_mut(last) {
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = (*v - mx).exp();
                sum += *v;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        let t = Tensor::new(va.shape(), out)?;
        Ok(self.push(Op::Softmax(a), t))
    }

    // ---- linear algebra ----

    /// 2-D matrix product: [M,K] × [K,N] → [M,N].
    pub fn matmul(&self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.rank() != 2 || vb.rank() != 2 || va.shape()[1] != vb.shape()[0] {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: va.shape().to_vec(),
                rhs: vb.shape().to_vec(),
            });
        }
        let (m, k) = (va.shape()[0], va.shape()[1]);
        let n = vb.shape()[1];
        let out = matmul_raw(va.data(), vb.data(), m, k, n);
        let t = Tensor::new(&[m, n], out)?;
        Ok(self.push(Op::MatMul(a, b), t))
    }

    pub fn transpose2(&self, a: NodeId) -> Result<NodeId, TensorError> {
        let va = self.value(a);
        if va.rank() != 2 {
            return Err(TensorError::Invalid(format!(
                "transpose2 needs rank 2, got {:?}",
                va.shape()
            )));
        }
        let (m, n) = (va.shape()[0], va.shape()[1]);
        let t = Tensor::new(&[n, m], transpose_raw(va.data(), m, n))?;
        Ok(self.push(Op::Transpose2(a), t))
    }

    /// 2-D convolution of x:[Ci,H,W] with w:[Co,Ci,Kh,Kw], zero padding.
    pub fn conv2d(
        &self,
        x: NodeId,
        w: NodeId,
        stride: usize,
        pad: usize,
    ) -> Result<NodeId, TensorError> {
        let (vx, vw) = (self.value(x), self.value(w));
        let t = conv2d_fwd(&vx, &vw, stride, pad)?;
        Ok(self.push(Op::Conv2d { x, w, stride, pad }, t))
    }

    /// Standardize each of `groups` channel groups of a [C,H,W] tensor to
    /// zero mean / unit variance. Scale and shift are composed outside.
    pub fn group_norm(&self, x: NodeId, groups: usize, eps: f64) -> Result<NodeId, TensorError> {
        let vx = self.value(x);
        if vx.rank() != 3 {
            return Err(TensorError::Invalid(format!(
                "group_norm needs [C,H,W], got {:?}",
                vx.shape()
            )));
        }
        let c = vx.shape()[0];
        if groups == 0 || c % groups != 0 {
            return Err(TensorError::Invalid(format!(
                "group_norm: {c} channels not divisible into {groups} groups"
            )));
        }
        let m = vx.len() / groups;
        let mut out = vx.to_vec();
        for slab in out.chunks_mut(m) {
            let (mean, inv) = group_stats(slab, eps);
            for v in slab.iter_mut() {
                *v = (*v - mean) * inv;
            }
        }
        let t = Tensor::new(vx.shape(), out)?;
        Ok(self.push(Op::GroupNorm { x, groups, eps }, t))
    }

    // ---- reductions / shape ----

    pub fn sum_all(&self, a: NodeId) -> NodeId {
        let s: f64 = self.value(a).data().iter().sum();
        self.push(Op::SumAll(a), Tensor::scalar(s))
    }

    pub fn mean_all(&self, a: NodeId) -> NodeId {
        let va = self.value(a);
        let s: f64 = va.data().iter().sum();
        self.push(Op::MeanAll(a), Tensor::scalar(s / va.len() as f64))
    }

    pub fn reshape(&self, a: NodeId, shape: &[usize]) -> Result<NodeId, TensorError> {
        let t = self.value(a).reshaped(shape)?;
        Ok(self.push(Op::Reshape(a), t))
    }

    pub fn concat(&self, parts: &[NodeId], axis: usize) -> Result<NodeId, TensorError> {
        if parts.is_empty() {
            return Err(TensorError::Invalid("concat of zero tensors".into()));
        }
        let vals: Vec<Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let rank = vals[0].rank();
        if axis >= rank {
            return Err(TensorError::Invalid(format!(
                "concat axis {axis} out of range for rank {rank}"
            )));
        }
        let mut out_shape = vals[0].shape().to_vec();
        for v in &vals[1..] {
            if v.rank() != rank
                || v.shape()
                    .iter()
                    .enumerate()
                    .any(|(d, &e)| d != axis && e != out_shape[d])
            {
                return Err(TensorError::ShapeMismatch {
                    op: "concat",
                    lhs: out_shape,
                    rhs: v.shape().to_vec(),
                });
            }
        }
        out_shape[axis] = vals.iter().map(|v| v.shape()[axis]).sum();
        let outer: usize = out_shape[..axis].iter().product();
        let inner: usize = out_shape[axis + 1..].iter().product();
        let total_axis = out_shape[axis];
        let mut out = vec![0.0; numel(&out_shape)];
        let mut off_axis = 0;
        for v in &vals {
            let ext = v.shape()[axis];
            let blk = ext * inner;
            for o in 0..outer {
                let dst = (o * total_axis + off_axis) * inner;
                out[dst..dst + blk].copy_from_slice(&v.data()[o * blk..(o + 1) * blk]);
            }
            off_axis += ext;
        }
        let t = Tensor::new(&out_shape, out)?;
        Ok(self.push(
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            t,
        ))
    }

    /// Identity forward; blocks gradient flow.
    pub fn detach(&self, a: NodeId) -> NodeId {
        let v = self.value(a);
        self.push(Op::Detach(a), v)
    }

    // ---- composed helpers ----

    pub fn square(&self, a: NodeId) -> Result<NodeId, TensorError> {
        self.mul(a, a)
    }

    /// Mean squared error between two same-shape nodes.
    pub fn mse(&self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let d = self.sub(a, b)?;
        let sq = self.square(d)?;
        Ok(self.mean_all(sq))
    }

    /// Euclidean distance ‖a − b‖₂ (tiny eps inside the sqrt keeps the
    /// gradient finite at coincidence).
    pub fn l2_distance(&self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let d = self.sub(a, b)?;
        let sq = self.square(d)?;
        let s = self.sum_all(sq);
        let s = self.add_scalar(s, 1e-24);
        Ok(self.sqrt(s))
    }

    /// v / ‖v‖₂.
    pub fn l2_normalize(&self, v: NodeId) -> Result<NodeId, TensorError> {
        let sq = self.square(v)?;
        let s = self.sum_all(sq);
        let s = self.add_scalar(s, 1e-24);
        let inv = self.recip(self.sqrt(s));
        self.mul(v, inv)
    }

    /// Nearest-neighbor ×2 upsample of [C,H,W], composed from reshape+concat.
    pub fn upsample2x(&self, x: NodeId) -> Result<NodeId, TensorError> {
        let sh = self.shape(x);
        if sh.len() != 3 {
            return Err(TensorError::Invalid(format!(
                "upsample2x needs [C,H,W], got {sh:?}"
            )));
        }
        let (c, h, w) = (sh[0], sh[1], sh[2]);
        let r = self.reshape(x, &[c, h, 1, w])?;
        let rows = self.concat(&[r, r], 2)?;
        let rows = self.reshape(rows, &[c, 2 * h, w])?;
        let ccol = self.reshape(rows, &[c, 2 * h, w, 1])?;
        let cols = self.concat(&[ccol, ccol], 3)?;
        self.reshape(cols, &[c, 2 * h, 2 * w])
    }

    /// Sum a non-empty list of same-shape nodes.
    pub fn sum_nodes(&self, ids: &[NodeId]) -> Result<NodeId, TensorError> {
        let mut acc = *ids
            .first()
            .ok_or_else(|| TensorError::Invalid("sum_nodes of empty list".into()))?;
        for &id in &ids[1..] {
            acc = self.add(acc, id)?;
        }
        Ok(acc)
    }

    // ---- backward ----

    /// Reverse sweep from a scalar loss. Returns ∂loss/∂node for every node
    /// on the tape (zeros where the loss does not depend on a node).
    pub fn backward(&self, loss: NodeId) -> Result<Grads, TensorError> {
        let nodes = self.nodes.borrow();
        if nodes[loss.0].value.len() != 1 {
            return Err(TensorError::Invalid(format!(
                "backward requires a scalar loss, got shape {:?}",
                nodes[loss.0].value.shape()
            )));
        }
        let shapes: Vec<Vec<usize>> = nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        let mut slots: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        slots[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(gy) = slots[idx].take() else {
                continue;
            };
            let node = &nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::Detach(_) => {}
                Op::Add(a, b) => {
                    let sa = &shapes[a.0];
                    let sb = &shapes[b.0];
                    let out_shape = node.value.shape();
                    acc(&mut slots, *a, reduce_to(&gy, out_shape, sa));
                    acc(&mut slots, *b, reduce_to(&gy, out_shape, sb));
                }
                Op::Mul(a, b) => {
                    let out_shape = node.value.shape().to_vec();
                    let va = &nodes[a.0].value;
                    let vb = &nodes[b.0].value;
                    let ga_full = mul_into_broadcast(&gy, &out_shape, vb);
                    let gb_full = mul_into_broadcast(&gy, &out_shape, va);
                    acc(&mut slots, *a, reduce_to(&ga_full, &out_shape, &shapes[a.0]));
                    acc(&mut slots, *b, reduce_to(&gb_full, &out_shape, &shapes[b.0]));
                }
                Op::AddScalar(a, _) => acc(&mut slots, *a, gy.clone()),
                Op::MulScalar(a, c) => {
                    acc(&mut slots, *a, gy.iter().map(|g| g * c).collect());
                }
                Op::Recip(a) => {
                    let y = node.value.data();
                    let gx = gy.iter().zip(y).map(|(g, y)| -g * y * y).collect();
                    acc(&mut slots, *a, gx);
                }
                Op::Exp(a) => {
                    let y = node.value.data();
                    acc(&mut slots, *a, gy.iter().zip(y).map(|(g, y)| g * y).collect());
                }
                Op::Ln(a) => {
                    let x = nodes[a.0].value.data();
                    acc(&mut slots, *a, gy.iter().zip(x).map(|(g, x)| g / x).collect());
                }
                Op::Sqrt(a) => {
                    let y = node.value.data();
                    let gx = gy.iter().zip(y).map(|(g, y)| g / (2.0 * y)).collect();
                    acc(&mut slots, *a, gx);
                }
                Op::Relu(a) => {
                    let x = nodes[a.0].value.data();
                    let gx = gy
                        .iter()
                        .zip(x)
                        .map(|(g, x)| if *x > 0.0 { *g } else { 0.0 })
                        .collect();
                    acc(&mut slots, *a, gx);
                }
                Op::Sigmoid(a) => {
                    let y = node.value.data();
                    let gx = gy.iter().zip(y).map(|(g, y)| g * y * (1.0 - y)).collect();
                    acc(&mut slots, *a, gx);
                }
                Op::Softmax(a) => {
                    let y = node.value.data();
                    let last = *node.value.shape().last().unwrap();
                    let mut gx = vec![0.0; y.len()];
                    for r in 0..y.len() / last {
                        let ys = &y[r * last..(r + 1) * last];
                        let gs = &gy[r * last..(r + 1) * last];
                        let dot: f64 = ys.iter().zip(gs).map(|(y, g)| y * g).sum();
                        for i in 0..last {
                            gx[r * last + i] = ys[i] * (gs[i] - dot);
                        }
                    }
                    acc(&mut slots, *a, gx);
                }
                Op::MatMul(a, b) => {
                    let va = &nodes[a.0].value;
                    let vb = &nodes[b.0].value;
                    let (m, k) = (va.shape()[0], va.shape()[1]);
                    let n = vb.shape()[1];
                    // dA = dY · Bᵀ ; dB = Aᵀ · dY
                    let mut da = vec![0.0; m * k];
                    for i in 0..m {
                        for p in 0..k {
                            let brow = &vb.data()[p * n..(p + 1) * n];
                            let gyrow = &gy[i * n..(i + 1) * n];
                            da[i * k + p] = brow.iter().zip(gyrow).map(|(b, g)| b * g).sum();
                        }
                    }
                    let mut db = vec![0.0; k * n];
                    for i in 0..m {
                        let gyrow = &gy[i * n..(i + 1) * n];
                        for p in 0..k {
                            let av = va.data()[i * k + p];
                            let dbrow = &mut db[p * n..(p + 1) * n];
                            for j in 0..n {
                                dbrow[j] += av * gyrow[j];
                            }
                        }
                    }
                    acc(&mut slots, *a, da);
                    acc(&mut slots, *b, db);
                }
                Op::Transpose2(a) => {
                    let sh = node.value.shape();
                    let (m, n) = (sh[0], sh[1]);
                    acc(&mut slots, *a, transpose_raw(&gy, m, n));
                }
                Op::Conv2d { x, w, stride, pad } => {
                    let vx = &nodes[x.0].value;
                    let vw = &nodes[w.0].value;
                    let (gx, gw) = conv2d_bwd(vx, vw, *stride, *pad, &gy);
                    acc(&mut slots, *x, gx);
                    acc(&mut slots, *w, gw);
                }
                Op::GroupNorm { x, groups, eps } => {
                    let vx = &nodes[x.0].value;
                    let m = vx.len() / groups;
                    let mut gx = vec![0.0; vx.len()];
                    for gi in 0..*groups {
                        let xs = &vx.data()[gi * m..(gi + 1) * m];
                        let gys = &gy[gi * m..(gi + 1) * m];
                        let (mean, inv) = group_stats(xs, *eps);
                        let mf = m as f64;
                        let mut s1 = 0.0;
                        let mut s2 = 0.0;
                        for (x, g) in xs.iter().zip(gys) {
                            let xh = (x - mean) * inv;
                            s1 += g;
                            s2 += g * xh;
                        }
                        for i in 0..m {
                            let xh = (xs[i] - mean) * inv;
                            gx[gi * m + i] = inv * (gys[i] - s1 / mf - xh * s2 / mf);
                        }
                    }
                    acc(&mut slots, *x, gx);
                }
                Op::SumAll(a) => {
                    let n = numel(&shapes[a.0]);
                    acc(&mut slots, *a, vec![gy[0]; n]);
                }
                Op::MeanAll(a) => {
                    let n = numel(&shapes[a.0]);
                    acc(&mut slots, *a, vec![gy[0] / n as f64; n]);
                }
                Op::Reshape(a) => acc(&mut slots, *a, gy.clone()),
                Op::Concat { parts, axis } => {
                    let out_shape = node.value.shape();
                    let outer: usize = out_shape[..*axis].iter().product();
                    let inner: usize = out_shape[*axis + 1..].iter().product();
                    let total_axis = out_shape[*axis];
                    let mut off_axis = 0;
                    for p in parts {
                        let ext = shapes[p.0][*axis];
                        let blk = ext * inner;
                        let mut gp = vec![0.0; numel(&shapes[p.0])];
                        for o in 0..outer {
                            let src = (o * total_axis + off_axis) * inner;
                            gp[o * blk..(o + 1) * blk].copy_from_slice(&gy[src..src + blk]);
                        }
                        acc(&mut slots, *p, gp);
                        off_axis += ext;
                    }
                }
            }
            slots[idx] = Some(gy);
        }
        Ok(Grads { slots, shapes })
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn group_stats(slab: &[f64], eps: f64) -> (f64, f64) {
    let m = slab.len() as f64;
    let mean = slab.iter().sum::<f64>() / m;
    let var = slab.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m;
    (mean, 1.0 / (var + eps).sqrt())
}

fn acc(slots: &mut [Option<Vec<f64>>], id: NodeId, contrib: Vec<f64>) {
    match &mut slots[id.0] {
        Some(existing) => {
            debug_assert_eq!(existing.len(), contrib.len());
            for (e, c) in existing.iter_mut().zip(contrib) {
                *e += c;
            }
        }
        slot @ None => *slot = Some(contrib),
    }
}

/// Right-aligned numpy-style broadcast of two shapes.
pub fn broadcast_shapes(
    a: &[usize],
    b: &[usize],
    op: &'static str,
) -> Result<Vec<usize>, TensorError> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let ea = ext_at(a, rank, i);
        let eb = ext_at(b, rank, i);
        out[i] = if ea == eb {
            ea
        } else if ea == 1 {
            eb
        } else if eb == 1 {
            ea
        } else {
            return Err(TensorError::ShapeMismatch {
                op,
                lhs: a.to_vec(),
                rhs: b.to_vec(),
            });
        };
    }
    Ok(out)
}

fn ext_at(shape: &[usize], rank: usize, i: usize) -> usize {
    let off = rank - shape.len();
    if i < off {
        1
    } else {
        shape[i - off]
    }
}

/// Row-major strides of `shape` aligned to `rank`, 0 where the extent is 1
/// (broadcast axes).
fn broadcast_strides(shape: &[usize], out_shape: &[usize]) -> Vec<usize> {
    let rank = out_shape.len();
    let mut real = vec![0usize; rank];
    let off = rank - shape.len();
    let mut stride = 1;
    for i in (0..shape.len()).rev() {
        if shape[i] != 1 {
            real[off + i] = stride;
        }
        stride *= shape[i];
    }
    real
}

fn bin_broadcast(a: &Tensor, b: &Tensor, out_shape: &[usize], f: impl Fn(f64, f64) -> f64) -> Tensor {
    if a.shape() == b.shape() {
        let data = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        return Tensor::new(out_shape, data).expect("broadcast shape");
    }
    let n = numel(out_shape);
    let rank = out_shape.len();
    let sa = broadcast_strides(a.shape(), out_shape);
    let sb = broadcast_strides(b.shape(), out_shape);
    let mut out = vec![0.0; n];
    let mut coords = vec![0usize; rank];
    let (mut oa, mut ob) = (0usize, 0usize);
    for o in out.iter_mut() {
        *o = f(a.data()[oa], b.data()[ob]);
        for d in (0..rank).rev() {
            coords[d] += 1;
            oa += sa[d];
            ob += sb[d];
            if coords[d] < out_shape[d] {
                break;
            }
            coords[d] = 0;
            oa -= sa[d] * out_shape[d];
            ob -= sb[d] * out_shape[d];
        }
    }
    Tensor::new(out_shape, out).expect("broadcast shape")
}

/// gy (laid out as `out_shape`) times `other` broadcast into `out_shape`.
fn mul_into_broadcast(gy: &[f64], out_shape: &[usize], other: &Tensor) -> Vec<f64> {
    if other.shape() == out_shape {
        return gy.iter().zip(other.data()).map(|(g, v)| g * v).collect();
    }
    let rank = out_shape.len();
    let so = broadcast_strides(other.shape(), out_shape);
    let mut out = vec![0.0; gy.len()];
    let mut coords = vec![0usize; rank];
    let mut oo = 0usize;
    for (i, o) in out.iter_mut().enumerate() {
        *o = gy[i] * other.data()[oo];
        for d in (0..rank).rev() {
            coords[d] += 1;
            oo += so[d];
            if coords[d] < out_shape[d] {
                break;
            }
            coords[d] = 0;
            oo -= so[d] * out_shape[d];
        }
    }
    out
}

/// Sum `g` (laid out as `out_shape`) onto `target` (a broadcast-compatible
/// smaller shape).
fn reduce_to(g: &[f64], out_shape: &[usize], target: &[usize]) -> Vec<f64> {
    if out_shape == target {
        return g.to_vec();
    }
    let rank = out_shape.len();
    let st = broadcast_strides(target, out_shape);
    let mut out = vec![0.0; numel(target)];
    let mut coords = vec![0usize; rank];
    let mut ot = 0usize;
    for gi in g {
        out[ot] += gi;
        for d in (0..rank).rev() {
            coords[d] += 1;
            ot += st[d];
            if coords[d] < out_shape[d] {
                break;
            }
            coords[d] = 0;
            ot -= st[d] * out_shape[d];
        }
    }
    out
}

fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let av = a[i * k + p];
            let brow = &b[p * n..(p + 1) * n];
            let crow = &mut c[i * n..(i + 1) * n];
            for j in 0..n {
                crow[j] += av * brow[j];
            }
        }
    }
    c
}

fn transpose_raw(a: &[f64], m: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a[i * n + j];
        }
    }
    out
}

fn pad3(x: &[f64], c: usize, h: usize, w: usize, p: usize) -> Vec<f64> {
    if p == 0 {
        return x.to_vec();
    }
    let (hp, wp) = (h + 2 * p, w + 2 * p);
    let mut out = vec![0.0; c * hp * wp];
    for ci in 0..c {
        for y in 0..h {
            let src = ci * h * w + y * w;
            let dst = ci * hp * wp + (y + p) * wp + p;
            out[dst..dst + w].copy_from_slice(&x[src..src + w]);
        }
    }
    out
}

fn conv_dims(
    x: &Tensor,
    w: &Tensor,
    stride: usize,
    pad: usize,
) -> Result<(usize, usize, usize, usize, usize, usize, usize, usize), TensorError> {
    if x.rank() != 3 || w.rank() != 4 || x.shape()[0] != w.shape()[1] {
        return Err(TensorError::ShapeMismatch {
            op: "conv2d",
            lhs: x.shape().to_vec(),
            rhs: w.shape().to_vec(),
        });
    }
    if stride == 0 {
        return Err(TensorError::Invalid("conv2d stride must be ≥ 1".into()));
    }
    let (ci, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (co, kh, kw) = (w.shape()[0], w.shape()[2], w.shape()[3]);
    let (hp, wp) = (h + 2 * pad, wd + 2 * pad);
    if hp < kh || wp < kw {
        return Err(TensorError::ShapeMismatch {
            op: "conv2d",
            lhs: x.shape().to_vec(),
            rhs: w.shape().to_vec(),
        });
    }
    let oh = (hp - kh) / stride + 1;
    let ow = (wp - kw) / stride + 1;
    Ok((ci, h, wd, co, kh, kw, oh, ow))
}

fn conv2d_fwd(x: &Tensor, w: &Tensor, stride: usize, pad: usize) -> Result<Tensor, TensorError> {
    let (ci, h, wd, co, kh, kw, oh, ow) = conv_dims(x, w, stride, pad)?;
    let (hp, wp) = (h + 2 * pad, wd + 2 * pad);
    let xp = pad3(x.data(), ci, h, wd, pad);
    let wdat = w.data();
    let mut out = vec![0.0; co * oh * ow];
    for oc in 0..co {
        for ic in 0..ci {
            for ky in 0..kh {
                for kx in 0..kw {
                    let wv = wdat[((oc * ci + ic) * kh + ky) * kw + kx];
                    for oy in 0..oh {
                        let xbase = ic * hp * wp + (oy * stride + ky) * wp + kx;
                        let obase = oc * oh * ow + oy * ow;
                        if stride == 1 {
                            let xr = &xp[xbase..xbase + ow];
                            let orow = &mut out[obase..obase + ow];
                            for i in 0..ow {
                                orow[i] += wv * xr[i];
                            }
                        } else {
                            for ox in 0..ow {
                                out[obase + ox] += wv * xp[xbase + ox * stride];
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new(&[co, oh, ow], out)
}

fn conv2d_bwd(
    x: &Tensor,
    w: &Tensor,
    stride: usize,
    pad: usize,
    gy: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let (ci, h, wd, co, kh, kw, oh, ow) = conv_dims(x, w, stride, pad).expect("checked at forward");
    let (hp, wp) = (h + 2 * pad, wd + 2 * pad);
    let xp = pad3(x.data(), ci, h, wd, pad);
    let wdat = w.data();

    let mut dxp = vec![0.0; ci * hp * wp];
    let mut dw = vec![0.0; wdat.len()];
    for oc in 0..co {
        for ic in 0..ci {
            for ky in 0..kh {
                for kx in 0..kw {
                    let widx = ((oc * ci + ic) * kh + ky) * kw + kx;
                    let wv = wdat[widx];
                    let mut wacc = 0.0;
                    for oy in 0..oh {
                        let xbase = ic * hp * wp + (oy * stride + ky) * wp + kx;
                        let gbase = oc * oh * ow + oy * ow;
                        if stride == 1 {
                            let gr = &gy[gbase..gbase + ow];
                            let xr = &xp[xbase..xbase + ow];
                            let dxr = &mut dxp[xbase..xbase + ow];
                            for i in 0..ow {
                                dxr[i] += wv * gr[i];
                                wacc += gr[i] * xr[i];
                            }
                        } else {
                            for ox in 0..ow {
                                let g = gy[gbase + ox];
                                dxp[xbase + ox * stride] += wv * g;
                                wacc += g * xp[xbase + ox * stride];
                            }
                        }
                    }
                    dw[widx] += wacc;
                }
            }
        }
    }
    // crop padding back off
    let dx = if pad == 0 {
        dxp
    } else {
        let mut dx = vec![0.0; ci * h * wd];
        for ic in 0..ci {
            for y in 0..h {
                let src = ic * hp * wp + (y + pad) * wp + pad;
                let dst = ic * h * wd + y * wd;
                dx[dst..dst + wd].copy_from_slice(&dxp[src..src + wd]);
            }
        }
        dx
    };
    (dx, dw)
}
