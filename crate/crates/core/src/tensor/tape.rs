//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Every operation appends a node holding its forward value and enough
//! bookkeeping to replay the chain rule. Nodes only ever reference earlier
//! nodes, so a single reverse sweep visits them in topological order.

use crate::error::{Error, Result};

use super::Tensor;

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reduction {
    Mean,
    Sum,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Affine { x: Var, w: Var, b: Option<Var> },
    MatMul { a: Var, b: Var },
    Transpose { a: Var },
    Act { x: Var, kind: Activation },
    SoftmaxRows { x: Var },
    LogSoftmaxRows { x: Var },
    Mul { a: Var, b: Var },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Scale { a: Var, factor: f64 },
    Reduce { x: Var, axis: usize, kind: Reduction },
    SumAll { x: Var },
    Concat { parts: Vec<Var>, axis: usize },
    Reshape { x: Var },
    Slice { x: Var, axis: usize, start: usize },
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Vec<f64>, inv_std: Vec<f64> },
    Conv1d { x: Var, w: Var, b: Var, kernel: usize },
    PointwiseConv { x: Var, w: Var, b: Var },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Recording of a dynamic computation graph.
///
/// Leaves created with `requires_grad = true` receive gradients from
/// [`Tape::backward`]; repeated backward calls accumulate into them until
/// [`Tape::zero_grad`] is called.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

/// (outer, axis, inner) extents of `shape` split around `axis`.
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn as_matrix(op: &'static str, t: &Tensor) -> Result<(usize, usize)> {
    match t.shape() {
        [r, c] => Ok((*r, *c)),
        s => Err(Error::dim(op, format!("expected a matrix, got shape {s:?}"))),
    }
}

/// `b` matches `a` exactly, or is a rank-1 vector spanning `a`'s last axis.
fn broadcast_kind(op: &'static str, a: &Tensor, b: &Tensor) -> Result<bool> {
    if a.shape() == b.shape() {
        Ok(false)
    } else if b.rank() == 1 && b.numel() == a.last_dim() {
        Ok(true)
    } else {
        Err(Error::dim(
            op,
            format!("shapes {:?} and {:?} are not compatible", a.shape(), b.shape()),
        ))
    }
}

fn slot<'a>(nodes: &[Node], adj: &'a mut [Option<Vec<f64>>], v: Var) -> Option<&'a mut Vec<f64>> {
    if !nodes[v.0].needs_grad {
        return None;
    }
    let n = nodes[v.0].value.numel();
    Some(adj[v.0].get_or_insert_with(|| vec![0.0; n]))
}

/// Dot product with four independent partial sums so the loop vectorises.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for j in 0..4 {
            acc[j] += x[j] * y[j];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
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

    /// Accumulated gradient of a leaf, if it requires grad and backward has run.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn zero_grad(&mut self) {
        for g in self.grads.iter_mut().flatten() {
            g.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        if cfg!(debug_assertions) && !value.is_finite() {
            let inputs_finite = self.op_inputs(&op).iter().all(|&i| self.nodes[i.0].value.is_finite());
            assert!(
                !inputs_finite,
                "non-finite output from {op:?} on finite inputs"
            );
        }
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn op_inputs(&self, op: &Op) -> Vec<Var> {
        match op {
            Op::Leaf => vec![],
            Op::Affine { x, w, b } => {
                let mut v = vec![*x, *w];
                v.extend(b);
                v
            }
            Op::MatMul { a, b } | Op::Mul { a, b } | Op::Add { a, b } | Op::Sub { a, b } => {
                vec![*a, *b]
            }
            Op::Transpose { a } | Op::Scale { a, .. } => vec![*a],
            Op::Act { x, .. }
            | Op::SoftmaxRows { x }
            | Op::LogSoftmaxRows { x }
            | Op::Reduce { x, .. }
            | Op::SumAll { x }
            | Op::Reshape { x }
            | Op::Slice { x, .. } => vec![*x],
            Op::Concat { parts, .. } => parts.clone(),
            Op::LayerNorm { x, gain, bias, .. } => vec![*x, *gain, *bias],
            Op::Conv1d { x, w, b, .. } | Op::PointwiseConv { x, w, b } => vec![*x, *w, *b],
        }
    }

    /// `x[m×k] · w[k×n] + b[n]`.
    pub fn affine(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let xv = self.value(x);
        let wv = self.value(w);
        let (m, k) = as_matrix("affine", xv)?;
        let (k2, n) = as_matrix("affine", wv)?;
        if k != k2 {
            return Err(Error::dim(
                "affine",
                format!("x {:?} and w {:?} disagree on inner dimension", xv.shape(), wv.shape()),
            ));
        }
        let mut out = vec![0.0; m * n];
        if let Some(b) = b {
            let bv = self.value(b);
            if bv.rank() != 1 || bv.numel() != n {
                return Err(Error::dim(
                    "affine",
                    format!("bias {:?} does not match output width {n}", bv.shape()),
                ));
            }
            for row in out.chunks_mut(n) {
                row.copy_from_slice(bv.data());
            }
        }
        let (xd, wd) = (xv.data(), wv.data());
        for i in 0..m {
            let orow = &mut out[i * n..(i + 1) * n];
            for l in 0..k {
                let a = xd[i * k + l];
                if a == 0.0 {
                    continue;
                }
                for (o, &wv) in orow.iter_mut().zip(&wd[l * n..(l + 1) * n]) {
                    *o += a * wv;
                }
            }
        }
        let needs = self.needs(x) || self.needs(w) || b.is_some_and(|b| self.needs(b));
        Ok(self.push(Tensor::from_parts(vec![m, n], out), Op::Affine { x, w, b }, needs))
    }

    /// Matrix product `a[m×k] · b[k×n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let av = self.value(a);
        let bv = self.value(b);
        let (m, k) = as_matrix("matmul", av)?;
        let (k2, n) = as_matrix("matmul", bv)?;
        if k != k2 {
            return Err(Error::dim(
                "matmul",
                format!("{:?} · {:?}: inner dimensions differ", av.shape(), bv.shape()),
            ));
        }
        let mut out = vec![0.0; m * n];
        let (ad, bd) = (av.data(), bv.data());
        for i in 0..m {
            for l in 0..k {
                let s = ad[i * k + l];
                for j in 0..n {
                    out[i * n + j] += s * bd[l * n + j];
                }
            }
        }
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::from_parts(vec![m, n], out), Op::MatMul { a, b }, needs))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        let (m, n) = as_matrix("transpose", av)?;
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = av.data()[i * n + j];
            }
        }
        let needs = self.needs(a);
        Ok(self.push(Tensor::from_parts(vec![n, m], out), Op::Transpose { a }, needs))
    }

    pub fn activation(&mut self, x: Var, kind: Activation) -> Var {
        let xv = self.value(x);
        let data = xv
            .data()
            .iter()
            .map(|&v| match kind {
                Activation::Relu => v.max(0.0),
                Activation::Sigmoid => sigmoid(v),
                Activation::Tanh => v.tanh(),
            })
            .collect();
        let shape = xv.shape().to_vec();
        let needs = self.needs(x);
        self.push(Tensor::from_parts(shape, data), Op::Act { x, kind }, needs)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Relu)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Sigmoid)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Tanh)
    }

    fn row_softmax(op: &'static str, t: &Tensor, log: bool) -> Result<Vec<f64>> {
        let (_, n) = as_matrix(op, t)?;
        let mut out = Vec::with_capacity(t.numel());
        for row in t.data().chunks(n) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = row.iter().map(|&v| (v - max).exp()).sum();
            if log {
                let lse = sum.ln();
                out.extend(row.iter().map(|&v| v - max - lse));
            } else {
                out.extend(row.iter().map(|&v| (v - max).exp() / sum));
            }
        }
        Ok(out)
    }

    /// Softmax over each row of a matrix, computed with max subtraction.
    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let data = Self::row_softmax("softmax_rows", xv, false)?;
        let shape = xv.shape().to_vec();
        let needs = self.needs(x);
        Ok(self.push(Tensor::from_parts(shape, data), Op::SoftmaxRows { x }, needs))
    }

    pub fn log_softmax_rows(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let data = Self::row_softmax("log_softmax_rows", xv, true)?;
        let shape = xv.shape().to_vec();
        let needs = self.needs(x);
        Ok(self.push(Tensor::from_parts(shape, data), Op::LogSoftmaxRows { x }, needs))
    }

    /// Hadamard product. `b` may also be a rank-1 vector over `a`'s last
    /// axis, in which case it multiplies every row of `a`.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("elementwise_mul", a, b, |x, y| x * y)
            .map(|(value, needs)| self.push(value, Op::Mul { a, b }, needs))
    }

    /// Elementwise sum with the same broadcast rule as [`Tape::mul`].
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y)
            .map(|(value, needs)| self.push(value, Op::Add { a, b }, needs))
    }

    /// Elementwise difference of equally shaped tensors.
    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::dim(
                "sub",
                format!("{:?} vs {:?}", self.value(a).shape(), self.value(b).shape()),
            ));
        }
        self.binary("sub", a, b, |x, y| x - y)
            .map(|(value, needs)| self.push(value, Op::Sub { a, b }, needs))
    }

    fn binary(
        &self,
        op: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<(Tensor, bool)> {
        let av = self.value(a);
        let bv = self.value(b);
        let broadcast = broadcast_kind(op, av, bv)?;
        let data = if broadcast {
            let n = bv.numel();
            av.data()
                .iter()
                .enumerate()
                .map(|(i, &x)| f(x, bv.data()[i % n]))
                .collect()
        } else {
            av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect()
        };
        Ok((
            Tensor::from_parts(av.shape().to_vec(), data),
            self.needs(a) || self.needs(b),
        ))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let av = self.value(a);
        let data = av.data().iter().map(|&v| v * factor).collect();
        let shape = av.shape().to_vec();
        let needs = self.needs(a);
        self.push(Tensor::from_parts(shape, data), Op::Scale { a, factor }, needs)
    }

    /// Sum or mean along `axis`; the axis is removed (rank-1 inputs reduce to `[1]`).
    pub fn reduce(&mut self, x: Var, axis: usize, kind: Reduction) -> Result<Var> {
        let xv = self.value(x);
        if axis >= xv.rank() {
            return Err(Error::dim(
                "reduce",
                format!("axis {axis} out of range for shape {:?}", xv.shape()),
            ));
        }
        let (outer, len, inner) = split_axis(xv.shape(), axis);
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for a in 0..len {
                let base = (o * len + a) * inner;
                for i in 0..inner {
                    out[o * inner + i] += xv.data()[base + i];
                }
            }
        }
        if kind == Reduction::Mean {
            let inv = 1.0 / len as f64;
            out.iter_mut().for_each(|v| *v *= inv);
        }
        let mut shape: Vec<usize> = xv.shape().to_vec();
        shape.remove(axis);
        if shape.is_empty() {
            shape.push(1);
        }
        let needs = self.needs(x);
        Ok(self.push(Tensor::from_parts(shape, out), Op::Reduce { x, axis, kind }, needs))
    }

    /// Sum of all elements as a `[1]` scalar.
    pub fn sum_all(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let needs = self.needs(x);
        self.push(Tensor::scalar(s), Op::SumAll { x }, needs)
    }

    /// Concatenates `parts` in order along `axis`.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Contract("concat of zero tensors".into()))?;
        let base_shape = self.value(*first).shape().to_vec();
        if axis >= base_shape.len() {
            return Err(Error::dim(
                "concat",
                format!("axis {axis} out of range for shape {base_shape:?}"),
            ));
        }
        let mut total = 0;
        for &p in parts {
            let s = self.value(p).shape();
            let agrees = s.len() == base_shape.len()
                && s.iter()
                    .zip(&base_shape)
                    .enumerate()
                    .all(|(i, (a, b))| i == axis || a == b);
            if !agrees {
                return Err(Error::dim(
                    "concat",
                    format!("part {s:?} disagrees with {base_shape:?} off axis {axis}"),
                ));
            }
            total += s[axis];
        }
        let (outer, _, inner) = split_axis(&base_shape, axis);
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &p in parts {
                let pv = self.value(p);
                let chunk = pv.shape()[axis] * inner;
                out.extend_from_slice(&pv.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut shape = base_shape;
        shape[axis] = total;
        let needs = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(
            Tensor::from_parts(shape, out),
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            needs,
        ))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).reshape(shape)?;
        let needs = self.needs(x);
        Ok(self.push(value, Op::Reshape { x }, needs))
    }

    /// `len` consecutive entries along `axis`, starting at `start`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let xv = self.value(x);
        if axis >= xv.rank() || len == 0 || start + len > xv.shape()[axis] {
            return Err(Error::dim(
                "slice",
                format!("[{start}..{}] on axis {axis} of {:?}", start + len, xv.shape()),
            ));
        }
        let (outer, alen, inner) = split_axis(xv.shape(), axis);
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * alen + start) * inner;
            out.extend_from_slice(&xv.data()[base..base + len * inner]);
        }
        let mut shape = xv.shape().to_vec();
        shape[axis] = len;
        let needs = self.needs(x);
        Ok(self.push(Tensor::from_parts(shape, out), Op::Slice { x, axis, start }, needs))
    }

    /// Normalises each row over the last axis, then applies `gain` and `bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let xv = self.value(x);
        let n = xv.last_dim();
        if n < 2 {
            return Err(Error::Contract(format!(
                "layer_norm needs at least 2 features, got {n}"
            )));
        }
        let (gv, bv) = (self.value(gain), self.value(bias));
        if gv.shape() != [n] || bv.shape() != [n] {
            return Err(Error::dim(
                "layer_norm",
                format!("gain {:?} / bias {:?} vs width {n}", gv.shape(), bv.shape()),
            ));
        }
        let rows = xv.numel() / n;
        let mut xhat = Vec::with_capacity(xv.numel());
        let mut inv_std = Vec::with_capacity(rows);
        let mut out = Vec::with_capacity(xv.numel());
        for row in xv.data().chunks(n) {
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std.push(is);
            for (j, &v) in row.iter().enumerate() {
                let h = (v - mean) * is;
                xhat.push(h);
                out.push(h * gv.data()[j] + bv.data()[j]);
            }
        }
        let shape = xv.shape().to_vec();
        let needs = self.needs(x) || self.needs(gain) || self.needs(bias);
        Ok(self.push(
            Tensor::from_parts(shape, out),
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
            needs,
        ))
    }

    /// 1-D convolution along the rows of `x[D×F]` with a `w[K×F]` kernel and
    /// scalar bias, zero padded so the output is `[D×1]`.
    pub fn conv1d_rows(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xv = self.value(x);
        let wv = self.value(w);
        let (d, f) = as_matrix("temporal_conv", xv)?;
        let (k, f2) = as_matrix("temporal_conv", wv)?;
        if f != f2 || self.value(b).numel() != 1 {
            return Err(Error::dim(
                "temporal_conv",
                format!(
                    "x {:?}, w {:?}, b {:?}",
                    xv.shape(),
                    wv.shape(),
                    self.value(b).shape()
                ),
            ));
        }
        if k % 2 == 0 {
            return Err(Error::Config(format!("kernel size {k} must be odd")));
        }
        let pad = (k - 1) / 2;
        let bias = self.value(b).item();
        let mut out = vec![bias; d];
        for (row, o) in out.iter_mut().enumerate() {
            for tap in 0..k {
                let src = row as isize + tap as isize - pad as isize;
                if src < 0 || src >= d as isize {
                    continue;
                }
                let src = src as usize;
                for j in 0..f {
                    *o += wv.data()[tap * f + j] * xv.data()[src * f + j];
                }
            }
        }
        let needs = self.needs(x) || self.needs(w) || self.needs(b);
        Ok(self.push(
            Tensor::from_parts(vec![d, 1], out),
            Op::Conv1d { x, w, b, kernel: k },
            needs,
        ))
    }

    /// 1×1 convolution of `x[C_in×H×W]` by `w[C_out×C_in]` plus `b[C_out]`.
    pub fn pointwise_conv(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xv = self.value(x);
        let wv = self.value(w);
        let bv = self.value(b);
        let (cout, cin) = as_matrix("pointwise_conv", wv)?;
        if xv.rank() != 3 || xv.shape()[0] != cin || bv.shape() != [cout] {
            return Err(Error::dim(
                "pointwise_conv",
                format!("x {:?}, w {:?}, b {:?}", xv.shape(), wv.shape(), bv.shape()),
            ));
        }
        let p = xv.shape()[1] * xv.shape()[2];
        let mut out = vec![0.0; cout * p];
        for c in 0..cout {
            let orow = &mut out[c * p..(c + 1) * p];
            orow.iter_mut().for_each(|v| *v = bv.data()[c]);
            for k in 0..cin {
                let wck = wv.data()[c * cin + k];
                for (o, &xv) in orow.iter_mut().zip(&xv.data()[k * p..(k + 1) * p]) {
                    *o += wck * xv;
                }
            }
        }
        let shape = vec![cout, xv.shape()[1], xv.shape()[2]];
        let needs = self.needs(x) || self.needs(w) || self.needs(b);
        Ok(self.push(Tensor::from_parts(shape, out), Op::PointwiseConv { x, w, b }, needs))
    }

    /// Element `index` (flat, row-major) of `x` as a `[1]` scalar.
    pub fn pick(&mut self, x: Var, index: usize) -> Result<Var> {
        let n = self.value(x).numel();
        if index >= n {
            return Err(Error::dim("pick", format!("index {index} out of {n}")));
        }
        let flat = self.reshape(x, &[n])?;
        self.slice(flat, 0, index, 1)
    }

    /// Reverse sweep from a scalar `root`, accumulating into leaf gradients.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if !self.nodes[root.0].value.is_scalar() {
            return Err(Error::Contract(format!(
                "backward root must be scalar, got shape {:?}",
                self.nodes[root.0].value.shape()
            )));
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        adj[root.0] = Some(vec![1.0]);
        for i in (0..=root.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            if let Op::Leaf = node.op {
                let slot = self.grads[i].get_or_insert_with(|| vec![0.0; g.len()]);
                slot.iter_mut().zip(&g).for_each(|(s, v)| *s += v);
                continue;
            }
            self.propagate(i, &g, &mut adj);
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f64], adj: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let nodes = &self.nodes;
        match &node.op {
            Op::Leaf => unreachable!(),
            Op::Affine { x, w, b } => {
                let xv = &nodes[x.0].value;
                let wv = &nodes[w.0].value;
                let (m, k) = (xv.shape()[0], xv.shape()[1]);
                let n = wv.shape()[1];
                if let Some(dx) = slot(nodes, adj, *x) {
                    for r in 0..m {
                        for l in 0..k {
                            let wrow = &wv.data()[l * n..(l + 1) * n];
                            let grow = &g[r * n..(r + 1) * n];
                            dx[r * k + l] += dot(wrow, grow);
                        }
                    }
                }
                if let Some(dw) = slot(nodes, adj, *w) {
                    for r in 0..m {
                        let grow = &g[r * n..(r + 1) * n];
                        for l in 0..k {
                            let a = xv.data()[r * k + l];
                            if a == 0.0 {
                                continue;
                            }
                            for (d, gv) in dw[l * n..(l + 1) * n].iter_mut().zip(grow) {
                                *d += a * gv;
                            }
                        }
                    }
                }
                if let Some(b) = b {
                    if let Some(db) = slot(nodes, adj, *b) {
                        for grow in g.chunks(n) {
                            db.iter_mut().zip(grow).for_each(|(d, v)| *d += v);
                        }
                    }
                }
            }
            Op::MatMul { a, b } => {
                let av = &nodes[a.0].value;
                let bv = &nodes[b.0].value;
                let (m, k) = (av.shape()[0], av.shape()[1]);
                let n = bv.shape()[1];
                if let Some(da) = slot(nodes, adj, *a) {
                    for r in 0..m {
                        for l in 0..k {
                            da[r * k + l] += dot(&g[r * n..(r + 1) * n], &bv.data()[l * n..(l + 1) * n]);
                        }
                    }
                }
                if let Some(db) = slot(nodes, adj, *b) {
                    for r in 0..m {
                        for l in 0..k {
                            let s = av.data()[r * k + l];
                            for j in 0..n {
                                db[l * n + j] += s * g[r * n + j];
                            }
                        }
                    }
                }
            }
            Op::Transpose { a } => {
                let (m, n) = (nodes[a.0].value.shape()[0], nodes[a.0].value.shape()[1]);
                if let Some(da) = slot(nodes, adj, *a) {
                    for r in 0..m {
                        for c in 0..n {
                            da[r * n + c] += g[c * m + r];
                        }
                    }
                }
            }
            Op::Act { x, kind } => {
                let y = node.value.data();
                let xv = nodes[x.0].value.data();
                if let Some(dx) = slot(nodes, adj, *x) {
                    for j in 0..g.len() {
                        dx[j] += g[j]
                            * match kind {
                                Activation::Relu => {
                                    if xv[j] > 0.0 {
                                        1.0
                                    } else {
                                        0.0
                                    }
                                }
                                Activation::Sigmoid => y[j] * (1.0 - y[j]),
                                Activation::Tanh => 1.0 - y[j] * y[j],
                            };
                    }
                }
            }
            Op::SoftmaxRows { x } => {
                let n = node.value.last_dim();
                let y = node.value.data();
                if let Some(dx) = slot(nodes, adj, *x) {
                    for (r, (yr, gr)) in y.chunks(n).zip(g.chunks(n)).enumerate() {
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for j in 0..n {
                            dx[r * n + j] += yr[j] * (gr[j] - dot);
                        }
                    }
                }
            }
            Op::LogSoftmaxRows { x } => {
                let n = node.value.last_dim();
                let y = node.value.data();
                if let Some(dx) = slot(nodes, adj, *x) {
                    for (r, (yr, gr)) in y.chunks(n).zip(g.chunks(n)).enumerate() {
                        let gsum: f64 = gr.iter().sum();
                        for j in 0..n {
                            dx[r * n + j] += gr[j] - yr[j].exp() * gsum;
                        }
                    }
                }
            }
            Op::Mul { a, b } => {
                let av = nodes[a.0].value.data();
                let bv = nodes[b.0].value.data();
                let nb = bv.len();
                if let Some(da) = slot(nodes, adj, *a) {
                    for j in 0..g.len() {
                        da[j] += g[j] * bv[j % nb];
                    }
                }
                if let Some(db) = slot(nodes, adj, *b) {
                    for j in 0..g.len() {
                        db[j % nb] += g[j] * av[j];
                    }
                }
            }
            Op::Add { a, b } => {
                if let Some(da) = slot(nodes, adj, *a) {
                    da.iter_mut().zip(g).for_each(|(d, v)| *d += v);
                }
                if let Some(db) = slot(nodes, adj, *b) {
                    let nb = db.len();
                    for (j, v) in g.iter().enumerate() {
                        db[j % nb] += v;
                    }
                }
            }
            Op::Sub { a, b } => {
                if let Some(da) = slot(nodes, adj, *a) {
                    da.iter_mut().zip(g).for_each(|(d, v)| *d += v);
                }
                if let Some(db) = slot(nodes, adj, *b) {
                    db.iter_mut().zip(g).for_each(|(d, v)| *d -= v);
                }
            }
            Op::Scale { a, factor } => {
                if let Some(da) = slot(nodes, adj, *a) {
                    da.iter_mut().zip(g).for_each(|(d, v)| *d += v * factor);
                }
            }
            Op::Reduce { x, axis, kind } => {
                let (outer, len, inner) = split_axis(nodes[x.0].value.shape(), *axis);
                let f = match kind {
                    Reduction::Sum => 1.0,
                    Reduction::Mean => 1.0 / len as f64,
                };
                if let Some(dx) = slot(nodes, adj, *x) {
                    for o in 0..outer {
                        for a in 0..len {
                            for k in 0..inner {
                                dx[(o * len + a) * inner + k] += g[o * inner + k] * f;
                            }
                        }
                    }
                }
            }
            Op::SumAll { x } => {
                if let Some(dx) = slot(nodes, adj, *x) {
                    dx.iter_mut().for_each(|d| *d += g[0]);
                }
            }
            Op::Concat { parts, axis } => {
                let shape = node.value.shape();
                let (outer, total, inner) = split_axis(shape, *axis);
                let mut offset = 0;
                for &p in parts {
                    let len = nodes[p.0].value.shape()[*axis];
                    if let Some(dp) = slot(nodes, adj, p) {
                        for o in 0..outer {
                            let src = (o * total + offset) * inner;
                            let dst = o * len * inner;
                            for k in 0..len * inner {
                                dp[dst + k] += g[src + k];
                            }
                        }
                    }
                    offset += len;
                }
            }
            Op::Reshape { x } => {
                if let Some(dx) = slot(nodes, adj, *x) {
                    dx.iter_mut().zip(g).for_each(|(d, v)| *d += v);
                }
            }
            Op::Slice { x, axis, start } => {
                let (outer, alen, inner) = split_axis(nodes[x.0].value.shape(), *axis);
                let len = node.value.shape()[*axis];
                if let Some(dx) = slot(nodes, adj, *x) {
                    for o in 0..outer {
                        let base = (o * alen + start) * inner;
                        for k in 0..len * inner {
                            dx[base + k] += g[o * len * inner + k];
                        }
                    }
                }
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                let n = node.value.last_dim();
                let gv = nodes[gain.0].value.data();
                if let Some(dx) = slot(nodes, adj, *x) {
                    for (r, is) in inv_std.iter().enumerate() {
                        let gr = &g[r * n..(r + 1) * n];
                        let hr = &xhat[r * n..(r + 1) * n];
                        let dh: Vec<f64> = gr.iter().zip(gv).map(|(a, b)| a * b).collect();
                        let sum_dh: f64 = dh.iter().sum();
                        let sum_dh_h: f64 = dh.iter().zip(hr).map(|(a, b)| a * b).sum();
                        for j in 0..n {
                            dx[r * n + j] +=
                                is / n as f64 * (n as f64 * dh[j] - sum_dh - hr[j] * sum_dh_h);
                        }
                    }
                }
                if let Some(dg) = slot(nodes, adj, *gain) {
                    for (gr, hr) in g.chunks(n).zip(xhat.chunks(n)) {
                        for j in 0..n {
                            dg[j] += gr[j] * hr[j];
                        }
                    }
                }
                if let Some(db) = slot(nodes, adj, *bias) {
                    for gr in g.chunks(n) {
                        db.iter_mut().zip(gr).for_each(|(d, v)| *d += v);
                    }
                }
            }
            Op::Conv1d { x, w, b, kernel } => {
                let xv = &nodes[x.0].value;
                let wv = &nodes[w.0].value;
                let (d, f) = (xv.shape()[0], xv.shape()[1]);
                let pad = (kernel - 1) / 2;
                let taps = |row: usize| {
                    (0..*kernel).filter_map(move |tap| {
                        let src = row as isize + tap as isize - pad as isize;
                        (src >= 0 && src < d as isize).then_some((tap, src as usize))
                    })
                };
                if let Some(dx) = slot(nodes, adj, *x) {
                    for (row, gr) in g.iter().enumerate().take(d) {
                        for (tap, src) in taps(row) {
                            for j in 0..f {
                                dx[src * f + j] += gr * wv.data()[tap * f + j];
                            }
                        }
                    }
                }
                if let Some(dw) = slot(nodes, adj, *w) {
                    for (row, gr) in g.iter().enumerate().take(d) {
                        for (tap, src) in taps(row) {
                            for j in 0..f {
                                dw[tap * f + j] += gr * xv.data()[src * f + j];
                            }
                        }
                    }
                }
                if let Some(db) = slot(nodes, adj, *b) {
                    db[0] += g.iter().sum::<f64>();
                }
            }
            Op::PointwiseConv { x, w, b } => {
                let xv = &nodes[x.0].value;
                let wv = &nodes[w.0].value;
                let (cout, cin) = (wv.shape()[0], wv.shape()[1]);
                let p = xv.shape()[1] * xv.shape()[2];
                if let Some(dx) = slot(nodes, adj, *x) {
                    for c in 0..cout {
                        for k in 0..cin {
                            let wck = wv.data()[c * cin + k];
                            for q in 0..p {
                                dx[k * p + q] += wck * g[c * p + q];
                            }
                        }
                    }
                }
                if let Some(dw) = slot(nodes, adj, *w) {
                    for c in 0..cout {
                        for k in 0..cin {
                            dw[c * cin + k] += (0..p).map(|q| g[c * p + q] * xv.data()[k * p + q]).sum::<f64>();
                        }
                    }
                }
                if let Some(db) = slot(nodes, adj, *b) {
                    for c in 0..cout {
                        db[c] += g[c * p..(c + 1) * p].iter().sum::<f64>();
                    }
                }
            }
        }
    }
}
