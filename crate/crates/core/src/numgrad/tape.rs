use std::collections::HashMap;

use super::kernels;
use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;
use super::{NumgradError, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Exp(Var),
    Log(Var),
    Softplus(Var),
    Sum(Var),
    Mean(Var),
    SumAxis { x: Var, axis: usize },
    MeanAxis { x: Var, axis: usize },
    Concat { parts: Vec<Var>, axis: usize },
    LogSumExp { x: Var, axis: usize },
    L2Norm(Var),
    CosineSim { a: Var, b: Var, eps: f64 },
    Mse(Var, Var),
    Conv2d { x: Var, w: Var, b: Var, stride: usize },
    Reshape(Var),
    SelectRows { x: Var, index: Vec<usize> },
    SliceCols { x: Var, start: usize },
    Minimum(Var, Var),
    Clamp { x: Var, lo: f64, hi: f64 },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Append-only record of tensor operations supporting reverse-mode
/// differentiation.
///
/// Every operation's inputs precede it, so [`Tape::backward`] simply walks the
/// nodes in reverse recording order.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    leaf_grads: HashMap<usize, Tensor>,
    bound: HashMap<ParamId, Var>,
}

fn shape_err(op: &'static str, left: &[usize], right: &[usize]) -> NumgradError {
    NumgradError::Shape {
        op,
        left: left.to_vec(),
        right: right.to_vec(),
    }
}

/// Splits `shape` around `axis` into (outer, dim, inner) extents.
fn axis_split(op: &'static str, shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(shape_err(op, shape, &[axis]));
    }
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    Ok((outer, shape[axis], inner))
}

fn reduced_shape(shape: &[usize], axis: usize) -> Vec<usize> {
    let mut out: Vec<usize> = shape.to_vec();
    out.remove(axis);
    if out.is_empty() {
        out.push(1);
    }
    out
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
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

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    /// Accumulated gradient of a leaf that requires gradients.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.leaf_grads.get(&v.0)
    }

    pub fn zero_grads(&mut self) {
        self.leaf_grads.clear();
    }

    /// Records a leaf tensor.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn variable(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    /// Binds a stored parameter as a gradient-tracking leaf. Repeated binds of
    /// the same parameter return the same handle.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.bound.get(&id) {
            return v;
        }
        let v = self.variable(store.value(id).clone());
        self.bound.insert(id, v);
        v
    }

    /// Parameters bound on this tape with their leaf handles.
    pub fn bound_params(&self) -> impl Iterator<Item = (ParamId, Var)> + '_ {
        self.bound.iter().map(|(&id, &v)| (id, v))
    }

    /// Removes and returns the accumulated gradient of a leaf.
    pub fn take_grad(&mut self, v: Var) -> Option<Tensor> {
        self.leaf_grads.remove(&v.0)
    }

    /// Copy of `x` with no gradient connection to its source.
    pub fn detach(&mut self, x: Var) -> Var {
        let value = self.value(x).clone();
        self.constant(value)
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let src = self.value(x);
        let data = src.data().iter().map(|&v| f(v)).collect();
        let value = Tensor::from_parts(src.shape().to_vec(), data);
        let rg = self.rg(x);
        self.push(value, op, rg)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(shape_err(op, sa, sb));
        }
        Ok(())
    }

    fn binary(&mut self, op_name: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        self.same_shape(op_name, a, b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::from_parts(ta.shape().to_vec(), data);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, op, rg))
    }

    /// `[m, k] x [k, n] -> [m, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(shape_err("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let out = kernels::matmul(self.value(a).data(), self.value(b).data(), m, k, n);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::from_parts(vec![m, n], out), Op::MatMul(a, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn minimum(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("minimum", a, b, f64::min, Op::Minimum(a, b))
    }

    /// Adds a bias vector `[n]` to every row of `x` (last dimension `n`).
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (sx, sb) = (self.shape(x), self.shape(bias));
        let n = *sx.last().expect("non-empty shape");
        if sb.len() != 1 || sb[0] != n {
            return Err(shape_err("add_bias", sx, sb));
        }
        let b = self.value(bias).data().to_vec();
        let mut out = self.value(x).data().to_vec();
        for row in out.chunks_mut(n) {
            for (o, bv) in row.iter_mut().zip(&b) {
                *o += bv;
            }
        }
        let value = Tensor::from_parts(sx.to_vec(), out);
        let rg = self.rg(x) || self.rg(bias);
        Ok(self.push(value, Op::AddBias(x, bias), rg))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, |v| v * c, Op::Scale(x, c))
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, |v| v + c, Op::AddScalar(x))
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.scale(x, -1.0)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, f64::exp, Op::Exp(x))
    }

    pub fn log(&mut self, x: Var) -> Var {
        self.unary(x, f64::ln, Op::Log(x))
    }

    /// `ln(1 + e^x)`, evaluated without overflow.
    pub fn softplus(&mut self, x: Var) -> Var {
        self.unary(x, softplus, Op::Softplus(x))
    }

    /// Clamps values into `[lo, hi]`; the gradient is zero where clamping is active.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        self.unary(x, |v| v.clamp(lo, hi), Op::Clamp { x, lo, hi })
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let s = t.data().iter().sum::<f64>() / t.numel() as f64;
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Mean(x), rg)
    }

    fn reduce_axis(&self, op: &'static str, x: Var, axis: usize) -> Result<(Vec<f64>, Vec<usize>, usize)> {
        let t = self.value(x);
        let (outer, dim, inner) = axis_split(op, t.shape(), axis)?;
        let mut out = vec![0.0; outer * inner];
        let d = t.data();
        for o in 0..outer {
            for k in 0..dim {
                let base = (o * dim + k) * inner;
                for i in 0..inner {
                    out[o * inner + i] += d[base + i];
                }
            }
        }
        Ok((out, reduced_shape(t.shape(), axis), dim))
    }

    /// Sum over one axis; the axis is removed from the shape.
    pub fn sum_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let (out, shape, _) = self.reduce_axis("sum_axis", x, axis)?;
        let rg = self.rg(x);
        Ok(self.push(Tensor::from_parts(shape, out), Op::SumAxis { x, axis }, rg))
    }

    pub fn mean_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let (mut out, shape, dim) = self.reduce_axis("mean_axis", x, axis)?;
        out.iter_mut().for_each(|v| *v /= dim as f64);
        let rg = self.rg(x);
        Ok(self.push(Tensor::from_parts(shape, out), Op::MeanAxis { x, axis }, rg))
    }

    /// Numerically stable `log(sum(exp(x)))` over one axis.
    pub fn logsumexp(&mut self, x: Var, axis: usize) -> Result<Var> {
        let t = self.value(x);
        let (outer, dim, inner) = axis_split("logsumexp", t.shape(), axis)?;
        let d = t.data();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for i in 0..inner {
                let at = |k: usize| d[(o * dim + k) * inner + i];
                let m = (0..dim).map(at).fold(f64::NEG_INFINITY, f64::max);
                let s: f64 = (0..dim).map(|k| (at(k) - m).exp()).sum();
                out[o * inner + i] = m + s.ln();
            }
        }
        let shape = reduced_shape(t.shape(), axis);
        let rg = self.rg(x);
        Ok(self.push(Tensor::from_parts(shape, out), Op::LogSumExp { x, axis }, rg))
    }

    /// Concatenates along `axis`; all other dimensions must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| NumgradError::InvalidTensor("concat of zero tensors".into()))?;
        let base = self.shape(first).to_vec();
        let (outer, _, inner) = axis_split("concat", &base, axis)?;
        let mut total = 0;
        for &p in parts {
            let s = self.shape(p);
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(shape_err("concat", &base, s));
            }
            total += s[axis];
        }
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &p in parts {
                let t = self.value(p);
                let chunk = t.shape()[axis] * inner;
                out.extend_from_slice(&t.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(
            Tensor::from_parts(shape, out),
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            rg,
        ))
    }

    /// Euclidean norm over the last axis.
    pub fn l2_norm(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let d = *t.shape().last().expect("non-empty shape");
        let out = t.data().chunks(d).map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
        let shape = reduced_shape(t.shape(), t.shape().len() - 1);
        let rg = self.rg(x);
        self.push(Tensor::from_parts(shape, out), Op::L2Norm(x), rg)
    }

    /// Cosine similarity over the last axis. A pair where either vector has
    /// norm below `eps` has similarity 0 and contributes no gradient.
    pub fn cosine_similarity(&mut self, a: Var, b: Var, eps: f64) -> Result<Var> {
        self.same_shape("cosine_similarity", a, b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let d = *ta.shape().last().expect("non-empty shape");
        let out = ta
            .data()
            .chunks(d)
            .zip(tb.data().chunks(d))
            .map(|(x, y)| kernels::cosine(x, y, eps).0)
            .collect();
        let shape = reduced_shape(ta.shape(), ta.shape().len() - 1);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::from_parts(shape, out), Op::CosineSim { a, b, eps }, rg))
    }

    /// Mean squared error between two same-shaped tensors.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mse", a, b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let s: f64 = ta.data().iter().zip(tb.data()).map(|(x, y)| (x - y) * (x - y)).sum();
        let v = s / ta.numel() as f64;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::scalar(v), Op::Mse(a, b), rg))
    }

    /// Valid-padding 2-D convolution: input `[N, C, H, W]`, kernel `[O, C, kh, kw]`,
    /// bias `[O]`, output `[N, O, (H-kh)/s+1, (W-kw)/s+1]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize) -> Result<Var> {
        let (sx, sw, sb) = (self.shape(x), self.shape(w), self.shape(b));
        if sx.len() != 4 || sw.len() != 4 || sx[1] != sw[1] || sx[2] < sw[2] || sx[3] < sw[3] || stride == 0 {
            return Err(shape_err("conv2d", sx, sw));
        }
        if sb.len() != 1 || sb[0] != sw[0] {
            return Err(shape_err("conv2d bias", sw, sb));
        }
        let geom = kernels::ConvGeom::new(sx, sw, stride);
        let out = kernels::conv2d_forward(&geom, self.value(x).data(), self.value(w).data(), self.value(b).data());
        let shape = vec![geom.n, geom.o, geom.ho, geom.wo];
        let rg = self.rg(x) || self.rg(w) || self.rg(b);
        Ok(self.push(Tensor::from_parts(shape, out), Op::Conv2d { x, w, b, stride }, rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x);
        if shape.iter().product::<usize>() != t.numel() || shape.contains(&0) {
            return Err(shape_err("reshape", t.shape(), shape));
        }
        let value = Tensor::from_parts(shape.to_vec(), t.data().to_vec());
        let rg = self.rg(x);
        Ok(self.push(value, Op::Reshape(x), rg))
    }

    /// Gathers rows (first-axis slices) by index; indices may repeat.
    pub fn select_rows(&mut self, x: Var, index: &[usize]) -> Result<Var> {
        let t = self.value(x);
        let rows = t.rows();
        if index.is_empty() || index.iter().any(|&i| i >= rows) {
            return Err(shape_err("select_rows", t.shape(), &[index.len()]));
        }
        let n = t.row_len();
        let mut out = Vec::with_capacity(index.len() * n);
        for &i in index {
            out.extend_from_slice(t.row(i));
        }
        let mut shape = t.shape().to_vec();
        shape[0] = index.len();
        let rg = self.rg(x);
        Ok(self.push(
            Tensor::from_parts(shape, out),
            Op::SelectRows {
                x,
                index: index.to_vec(),
            },
            rg,
        ))
    }

    /// Columns `start..start+len` of a matrix.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(x);
        let s = t.shape();
        if s.len() != 2 || len == 0 || start + len > s[1] {
            return Err(shape_err("slice_cols", s, &[start, len]));
        }
        let (r, c) = (s[0], s[1]);
        let mut out = Vec::with_capacity(r * len);
        for row in t.data().chunks(c) {
            out.extend_from_slice(&row[start..start + len]);
        }
        let rg = self.rg(x);
        Ok(self.push(Tensor::from_parts(vec![r, len], out), Op::SliceCols { x, start }, rg))
    }

    /// Reverse pass from a scalar loss. Gradients of leaves that require them
    /// are added to their accumulators, so repeated calls sum.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let lt = self.value(loss);
        if !lt.is_scalar() {
            return Err(NumgradError::NonScalarLoss(lt.shape().to_vec()));
        }
        if !self.rg(loss) {
            return Ok(());
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            if let Op::Leaf = node.op {
                let shape = node.value.shape().to_vec();
                match self.leaf_grads.get_mut(&i) {
                    Some(acc) => acc.data_mut().iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                    None => {
                        self.leaf_grads.insert(i, Tensor::from_parts(shape, g));
                    }
                }
                continue;
            }
            self.propagate(i, &g, &mut grads);
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let val = |v: Var| nodes[v.0].value.data();
        let out = nodes[i].value.data();
        // Adds `contrib` into the gradient slot of `v` when it tracks gradients.
        let mut acc = |v: Var, contrib: &dyn Fn(&mut [f64])| {
            if !nodes[v.0].requires_grad {
                return;
            }
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; nodes[v.0].value.numel()]);
            contrib(slot);
        };
        match &nodes[i].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (sa, sb) = (nodes[a.0].value.shape(), nodes[b.0].value.shape());
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                acc(*a, &|s| kernels::matmul_bt_acc(g, val(*b), m, n, k, s));
                acc(*b, &|s| kernels::matmul_at_acc(val(*a), g, m, k, n, s));
            }
            Op::Add(a, b) => {
                acc(*a, &|s| s.iter_mut().zip(g).for_each(|(x, y)| *x += y));
                acc(*b, &|s| s.iter_mut().zip(g).for_each(|(x, y)| *x += y));
            }
            Op::Sub(a, b) => {
                acc(*a, &|s| s.iter_mut().zip(g).for_each(|(x, y)| *x += y));
                acc(*b, &|s| s.iter_mut().zip(g).for_each(|(x, y)| *x -= y));
            }
            Op::Mul(a, b) => {
                acc(*a, &|s| {
                    for ((x, gy), bv) in s.iter_mut().zip(g).zip(val(*b)) {
                        *x += gy * bv;
                    }
                });
                acc(*b, &|s| {
                    for ((x, gy), av) in s.iter_mut().zip(g).zip(val(*a)) {
                        *x += gy * av;
                    }
                });
            }
            Op::Minimum(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                acc(*a, &|s| {
                    for k in 0..s.len() {
                        if va[k] <= vb[k] {
                            s[k] += g[k];
                        }
                    }
                });
                acc(*b, &|s| {
                    for k in 0..s.len() {
                        if va[k] > vb[k] {
                            s[k] += g[k];
                        }
                    }
                });
            }
            Op::AddBias(x, bias) => {
                let n = nodes[bias.0].value.numel();
                acc(*x, &|s| s.iter_mut().zip(g).for_each(|(a, b)| *a += b));
                acc(*bias, &|s| {
                    for row in g.chunks(n) {
                        s.iter_mut().zip(row).for_each(|(a, b)| *a += b);
                    }
                });
            }
            Op::Scale(x, c) => acc(*x, &|s| s.iter_mut().zip(g).for_each(|(a, b)| *a += c * b)),
            Op::AddScalar(x) => acc(*x, &|s| s.iter_mut().zip(g).for_each(|(a, b)| *a += b)),
            Op::Tanh(x) => acc(*x, &|s| {
                for ((a, gy), y) in s.iter_mut().zip(g).zip(out) {
                    *a += gy * (1.0 - y * y);
                }
            }),
            Op::Sigmoid(x) => acc(*x, &|s| {
                for ((a, gy), y) in s.iter_mut().zip(g).zip(out) {
                    *a += gy * y * (1.0 - y);
                }
            }),
            Op::Relu(x) => acc(*x, &|s| {
                for ((a, gy), xv) in s.iter_mut().zip(g).zip(val(*x)) {
                    if *xv > 0.0 {
                        *a += gy;
                    }
                }
            }),
            Op::Exp(x) => acc(*x, &|s| {
                for ((a, gy), y) in s.iter_mut().zip(g).zip(out) {
                    *a += gy * y;
                }
            }),
            Op::Log(x) => acc(*x, &|s| {
                for ((a, gy), xv) in s.iter_mut().zip(g).zip(val(*x)) {
                    *a += gy / xv;
                }
            }),
            Op::Softplus(x) => acc(*x, &|s| {
                for ((a, gy), xv) in s.iter_mut().zip(g).zip(val(*x)) {
                    *a += gy * sigmoid(*xv);
                }
            }),
            Op::Clamp { x, lo, hi } => acc(*x, &|s| {
                for ((a, gy), xv) in s.iter_mut().zip(g).zip(val(*x)) {
                    if *xv >= *lo && *xv <= *hi {
                        *a += gy;
                    }
                }
            }),
            Op::Sum(x) => acc(*x, &|s| s.iter_mut().for_each(|a| *a += g[0])),
            Op::Mean(x) => {
                let n = nodes[x.0].value.numel() as f64;
                acc(*x, &|s| s.iter_mut().for_each(|a| *a += g[0] / n));
            }
            Op::SumAxis { x, axis } | Op::MeanAxis { x, axis } => {
                let (outer, dim, inner) = axis_split("", nodes[x.0].value.shape(), *axis).expect("checked at record");
                let w = if matches!(nodes[i].op, Op::MeanAxis { .. }) { 1.0 / dim as f64 } else { 1.0 };
                acc(*x, &|s| {
                    for o in 0..outer {
                        for k in 0..dim {
                            let base = (o * dim + k) * inner;
                            for j in 0..inner {
                                s[base + j] += w * g[o * inner + j];
                            }
                        }
                    }
                });
            }
            Op::LogSumExp { x, axis } => {
                let (outer, dim, inner) = axis_split("", nodes[x.0].value.shape(), *axis).expect("checked at record");
                let xd = val(*x);
                acc(*x, &|s| {
                    for o in 0..outer {
                        for j in 0..inner {
                            let r = o * inner + j;
                            for k in 0..dim {
                                let idx = (o * dim + k) * inner + j;
                                s[idx] += g[r] * (xd[idx] - out[r]).exp();
                            }
                        }
                    }
                });
            }
            Op::Concat { parts, axis } => {
                let shape = nodes[i].value.shape();
                let (outer, total, inner) = axis_split("", shape, *axis).expect("checked at record");
                let mut offset = 0;
                for p in parts {
                    let dim = nodes[p.0].value.shape()[*axis];
                    let chunk = dim * inner;
                    let start = offset * inner;
                    acc(*p, &|s| {
                        for o in 0..outer {
                            let src = &g[o * total * inner + start..o * total * inner + start + chunk];
                            s[o * chunk..(o + 1) * chunk].iter_mut().zip(src).for_each(|(a, b)| *a += b);
                        }
                    });
                    offset += dim;
                }
            }
            Op::L2Norm(x) => {
                let xd = val(*x);
                let d = *nodes[x.0].value.shape().last().expect("non-empty");
                acc(*x, &|s| {
                    for (r, norm) in out.iter().enumerate() {
                        if *norm > 0.0 {
                            for k in 0..d {
                                s[r * d + k] += g[r] * xd[r * d + k] / norm;
                            }
                        }
                    }
                });
            }
            Op::CosineSim { a, b, eps } => {
                let (va, vb) = (val(*a), val(*b));
                let d = *nodes[a.0].value.shape().last().expect("non-empty");
                let pairs: Vec<_> = va
                    .chunks(d)
                    .zip(vb.chunks(d))
                    .map(|(x, y)| kernels::cosine(x, y, *eps))
                    .collect();
                acc(*a, &|s| {
                    for (r, (sim, norms)) in pairs.iter().enumerate() {
                        if let Some((na, nb)) = norms {
                            for k in 0..d {
                                let idx = r * d + k;
                                s[idx] += g[r] * (vb[idx] / (na * nb) - sim * va[idx] / (na * na));
                            }
                        }
                    }
                });
                acc(*b, &|s| {
                    for (r, (sim, norms)) in pairs.iter().enumerate() {
                        if let Some((na, nb)) = norms {
                            for k in 0..d {
                                let idx = r * d + k;
                                s[idx] += g[r] * (va[idx] / (na * nb) - sim * vb[idx] / (nb * nb));
                            }
                        }
                    }
                });
            }
            Op::Mse(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                let c = 2.0 * g[0] / va.len() as f64;
                acc(*a, &|s| {
                    for k in 0..s.len() {
                        s[k] += c * (va[k] - vb[k]);
                    }
                });
                acc(*b, &|s| {
                    for k in 0..s.len() {
                        s[k] -= c * (va[k] - vb[k]);
                    }
                });
            }
            Op::Conv2d { x, w, b, stride } => {
                let geom = kernels::ConvGeom::new(nodes[x.0].value.shape(), nodes[w.0].value.shape(), *stride);
                let (xd, wd) = (val(*x), val(*w));
                acc(*b, &|s| kernels::conv2d_bias_grad(&geom, g, s));
                acc(*w, &|s| kernels::conv2d_weight_grad(&geom, xd, g, s));
                acc(*x, &|s| kernels::conv2d_input_grad(&geom, wd, g, s));
            }
            Op::Reshape(x) => acc(*x, &|s| s.iter_mut().zip(g).for_each(|(a, b)| *a += b)),
            Op::SelectRows { x, index } => {
                let n = nodes[x.0].value.row_len();
                acc(*x, &|s| {
                    for (r, &src) in index.iter().enumerate() {
                        s[src * n..(src + 1) * n]
                            .iter_mut()
                            .zip(&g[r * n..(r + 1) * n])
                            .for_each(|(a, b)| *a += b);
                    }
                });
            }
            Op::SliceCols { x, start } => {
                let c = nodes[x.0].value.shape()[1];
                let len = nodes[i].value.shape()[1];
                acc(*x, &|s| {
                    for (row, grow) in s.chunks_mut(c).zip(g.chunks(len)) {
                        row[*start..start + len].iter_mut().zip(grow).for_each(|(a, b)| *a += b);
                    }
                });
            }
        }
    }
}
