use std::borrow::Cow;

use super::gemm::{gemm, View};
use super::{axis_split, Result, Tensor, TensorError};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Exp(usize),
    Log(usize),
    Tanh(usize),
    Sigmoid(usize),
    Relu(usize),
    Sqrt(usize),
    Scale(usize, f64),
    AddScalar(usize),
    ClampMin(usize, f64),
    MaxAxis { x: usize, argmax: Vec<usize> },
    SumAxis { x: usize, axis: usize },
    MeanAxis { x: usize, axis: usize },
    Concat { parts: Vec<usize>, axis: usize },
    Slice { x: usize, axis: usize, start: usize },
    Transpose(usize),
    Broadcast { x: usize, map: Vec<usize> },
    Reshape(usize),
    GatherRows { x: usize, rows: Vec<usize> },
    Softmax(usize),
}

#[derive(Debug)]
struct Node<'p> {
    value: Cow<'p, Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Append-only computation tape.
///
/// Nodes are recorded in application order, so a reverse sweep over the
/// arena visits every node after all of its consumers. Leaves may borrow
/// their value (model parameters) for the lifetime `'p`.
#[derive(Debug, Default)]
pub struct Graph<'p> {
    nodes: Vec<Node<'p>>,
    grads: Vec<Option<Vec<f64>>>,
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}

fn check_axis(op: &'static str, t: &Tensor, axis: usize) -> Result<()> {
    if axis >= t.rank() {
        return Err(TensorError::AxisOutOfRange {
            op,
            axis,
            rank: t.rank(),
        });
    }
    Ok(())
}

fn grad_slot(grads: &mut [Option<Vec<f64>>], idx: usize, len: usize) -> &mut Vec<f64> {
    grads[idx].get_or_insert_with(|| vec![0.0; len])
}

/// Flat input index for every output element when broadcasting `from` to `to`
/// with right-aligned axes.
fn broadcast_map(from: &[usize], to: &[usize]) -> Option<Vec<usize>> {
    if from.len() > to.len() {
        return None;
    }
    let offset = to.len() - from.len();
    let mut strides = vec![0usize; to.len()];
    let mut stride = 1;
    for d in (0..from.len()).rev() {
        let target = to[d + offset];
        if from[d] == target {
            strides[d + offset] = stride;
        } else if from[d] != 1 {
            return None;
        }
        stride *= from[d];
    }
    let total: usize = to.iter().product();
    let mut map = Vec::with_capacity(total);
    let mut counter = vec![0usize; to.len()];
    let mut cur = 0usize;
    for _ in 0..total {
        map.push(cur);
        for d in (0..to.len()).rev() {
            counter[d] += 1;
            cur += strides[d];
            if counter[d] < to[d] {
                break;
            }
            cur -= strides[d] * to[d];
            counter[d] = 0;
        }
    }
    Some(map)
}

impl<'p> Graph<'p> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, operands: &[usize]) -> Var {
        let requires_grad = operands.iter().any(|&i| self.nodes[i].requires_grad);
        self.push_node(Cow::Owned(value), op, requires_grad)
    }

    fn push_node(&mut self, value: Cow<'p, Tensor>, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records an owned leaf.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push_node(Cow::Owned(value), Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    /// Records a leaf that borrows its value, avoiding a copy of large
    /// parameter tensors.
    pub fn borrowed(&mut self, value: &'p Tensor, requires_grad: bool) -> Var {
        self.push_node(Cow::Borrowed(value), Op::Leaf, requires_grad)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last backward root with respect to `v`, if any flowed.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Vec<f64>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let value = self.value(x).map(f);
        self.push(value, op, &[x.0])
    }

    fn binary(&mut self, name: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(mismatch(name, ta, tb));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::new(ta.shape(), data)?;
        Ok(self.push(value, op, &[a.0, b.0]))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 2 || tb.rank() != 2 || ta.shape()[1] != tb.shape()[0] {
            return Err(mismatch("matmul", ta, tb));
        }
        let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            View::row_major(ta.data(), k),
            View::row_major(tb.data(), n),
            &mut out,
            0.0,
        );
        let value = Tensor::new(&[m, n], out)?;
        Ok(self.push(value, Op::MatMul(a.0, b.0), &[a.0, b.0]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a.0, b.0))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a.0, b.0))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a.0, b.0))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(b).data().contains(&0.0) {
            return Err(TensorError::Domain {
                op: "div",
                reason: "division by zero".into(),
            });
        }
        self.binary("div", a, b, |x, y| x / y, Op::Div(a.0, b.0))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, f64::exp, Op::Exp(x.0))
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        if let Some(bad) = self.value(x).data().iter().find(|&&v| v <= 0.0 || v.is_nan()) {
            return Err(TensorError::Domain {
                op: "log",
                reason: format!("nonpositive input {bad}"),
            });
        }
        Ok(self.unary(x, f64::ln, Op::Log(x.0)))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f64::tanh, Op::Tanh(x.0))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, |v| 1.0 / (1.0 + (-v).exp()), Op::Sigmoid(x.0))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(0.0), Op::Relu(x.0))
    }

    pub fn sqrt(&mut self, x: Var) -> Result<Var> {
        if self.value(x).data().iter().any(|&v| v <= 0.0) {
            return Err(TensorError::Domain {
                op: "sqrt",
                reason: "nonpositive input".into(),
            });
        }
        Ok(self.unary(x, f64::sqrt, Op::Sqrt(x.0)))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, |v| v * c, Op::Scale(x.0, c))
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.scale(x, -1.0)
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, |v| v + c, Op::AddScalar(x.0))
    }

    /// `max(x, floor)` elementwise; gradient is zero where the floor is active.
    pub fn clamp_min(&mut self, x: Var, floor: f64) -> Var {
        self.unary(x, |v| v.max(floor), Op::ClampMin(x.0, floor))
    }

    fn reduce(&mut self, name: &'static str, x: Var, axis: usize) -> Result<(usize, usize, usize, Vec<usize>)> {
        let t = self.value(x);
        check_axis(name, t, axis)?;
        let (outer, extent, inner) = axis_split(t.shape(), axis);
        let mut shape = t.shape().to_vec();
        shape.remove(axis);
        Ok((outer, extent, inner, shape))
    }

    /// Maximum over `axis` (removed from the shape). Ties route the gradient
    /// to the first maximal element.
    pub fn max_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let (outer, extent, inner, shape) = self.reduce("max_axis", x, axis)?;
        let data = self.value(x).data();
        let mut out = Vec::with_capacity(outer * inner);
        let mut argmax = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            for i in 0..inner {
                let mut best = o * extent * inner + i;
                for e in 1..extent {
                    let idx = (o * extent + e) * inner + i;
                    if data[idx] > data[best] {
                        best = idx;
                    }
                }
                out.push(data[best]);
                argmax.push(best);
            }
        }
        let value = Tensor::new(&shape, out)?;
        Ok(self.push(value, Op::MaxAxis { x: x.0, argmax }, &[x.0]))
    }

    pub fn sum_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let (outer, extent, inner, shape) = self.reduce("sum_axis", x, axis)?;
        let out = sum_over(self.value(x).data(), outer, extent, inner);
        let value = Tensor::new(&shape, out)?;
        Ok(self.push(value, Op::SumAxis { x: x.0, axis }, &[x.0]))
    }

    pub fn mean_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let (outer, extent, inner, shape) = self.reduce("mean_axis", x, axis)?;
        let mut out = sum_over(self.value(x).data(), outer, extent, inner);
        out.iter_mut().for_each(|v| *v /= extent as f64);
        let value = Tensor::new(&shape, out)?;
        Ok(self.push(value, Op::MeanAxis { x: x.0, axis }, &[x.0]))
    }

    /// Sum of every element, as a scalar.
    pub fn sum_all(&mut self, x: Var) -> Result<Var> {
        let n = self.value(x).len();
        let flat = self.reshape(x, &[n])?;
        self.sum_axis(flat, 0)
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = self.value(*parts.first().ok_or(TensorError::Domain {
            op: "concat",
            reason: "no operands".into(),
        })?);
        check_axis("concat", first, axis)?;
        let mut shape = first.shape().to_vec();
        let mut total = 0;
        for &p in parts {
            let t = self.value(p);
            let compatible = t.rank() == shape.len()
                && t.shape()
                    .iter()
                    .zip(&shape)
                    .enumerate()
                    .all(|(d, (a, b))| d == axis || a == b);
            if !compatible {
                return Err(mismatch("concat", first, t));
            }
            total += t.shape()[axis];
        }
        shape[axis] = total;
        let (outer, _, inner) = axis_split(&shape, axis);
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &p in parts {
                let t = self.value(p);
                let chunk = t.shape()[axis] * inner;
                out.extend_from_slice(&t.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let value = Tensor::new(&shape, out)?;
        let ids: Vec<usize> = parts.iter().map(|p| p.0).collect();
        Ok(self.push(
            value,
            Op::Concat {
                parts: ids.clone(),
                axis,
            },
            &ids,
        ))
    }

    /// Half-open range `[start, end)` along `axis`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, end: usize) -> Result<Var> {
        let t = self.value(x);
        check_axis("slice", t, axis)?;
        let (outer, extent, inner) = axis_split(t.shape(), axis);
        if start >= end || end > extent {
            return Err(TensorError::IndexOutOfBounds {
                op: "slice",
                index: end,
                extent,
            });
        }
        let len = end - start;
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * extent + start) * inner;
            out.extend_from_slice(&t.data()[base..base + len * inner]);
        }
        let mut shape = t.shape().to_vec();
        shape[axis] = len;
        let value = Tensor::new(&shape, out)?;
        Ok(self.push(value, Op::Slice { x: x.0, axis, start }, &[x.0]))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        if t.rank() != 2 {
            return Err(TensorError::InvalidShape {
                shape: t.shape().to_vec(),
                len: t.len(),
            });
        }
        let (r, c) = (t.shape()[0], t.shape()[1]);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = t.data()[i * c + j];
            }
        }
        let value = Tensor::new(&[c, r], out)?;
        Ok(self.push(value, Op::Transpose(x.0), &[x.0]))
    }

    /// Explicit expansion to `shape`: axes align from the right and each
    /// source extent must equal the target or be 1.
    pub fn broadcast(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x);
        let map = broadcast_map(t.shape(), shape).ok_or_else(|| TensorError::ShapeMismatch {
            op: "broadcast",
            lhs: t.shape().to_vec(),
            rhs: shape.to_vec(),
        })?;
        let out = map.iter().map(|&i| t.data()[i]).collect();
        let value = Tensor::new(shape, out)?;
        Ok(self.push(value, Op::Broadcast { x: x.0, map }, &[x.0]))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape)?;
        Ok(self.push(value, Op::Reshape(x.0), &[x.0]))
    }

    /// Selects entries of the first axis, with repetition allowed.
    pub fn gather_rows(&mut self, x: Var, rows: &[usize]) -> Result<Var> {
        let t = self.value(x);
        if t.rank() == 0 || rows.is_empty() {
            return Err(TensorError::InvalidShape {
                shape: t.shape().to_vec(),
                len: rows.len(),
            });
        }
        let extent = t.shape()[0];
        let width = t.len() / extent;
        let mut out = Vec::with_capacity(rows.len() * width);
        for &r in rows {
            if r >= extent {
                return Err(TensorError::IndexOutOfBounds {
                    op: "gather_rows",
                    index: r,
                    extent,
                });
            }
            out.extend_from_slice(&t.data()[r * width..(r + 1) * width]);
        }
        let mut shape = t.shape().to_vec();
        shape[0] = rows.len();
        let value = Tensor::new(&shape, out)?;
        Ok(self.push(
            value,
            Op::GatherRows {
                x: x.0,
                rows: rows.to_vec(),
            },
            &[x.0],
        ))
    }

    /// Softmax over the last axis restricted to positions where `mask` is
    /// nonzero. Masked positions are exactly 0. `None` means no mask.
    pub fn masked_softmax(&mut self, x: Var, mask: Option<&Tensor>) -> Result<Var> {
        let t = self.value(x);
        if t.rank() == 0 {
            return Err(TensorError::InvalidShape { shape: vec![], len: 1 });
        }
        if let Some(m) = mask {
            if m.shape() != t.shape() {
                return Err(mismatch("masked_softmax", t, m));
            }
        }
        let width = *t.shape().last().unwrap();
        let mut out = vec![0.0; t.len()];
        for (r, (row, dst)) in t.data().chunks(width).zip(out.chunks_mut(width)).enumerate() {
            let keep = |j: usize| mask.is_none_or(|m| m.data()[r * width + j] != 0.0);
            let max = (0..width)
                .filter(|&j| keep(j))
                .map(|j| row[j])
                .fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                return Err(TensorError::Domain {
                    op: "masked_softmax",
                    reason: format!("row {r} is fully masked"),
                });
            }
            let mut total = 0.0;
            for j in (0..width).filter(|&j| keep(j)) {
                dst[j] = (row[j] - max).exp();
                total += dst[j];
            }
            dst.iter_mut().for_each(|v| *v /= total);
        }
        let value = Tensor::new(t.shape(), out)?;
        Ok(self.push(value, Op::Softmax(x.0), &[x.0]))
    }

    /// Reverse sweep from a scalar `root`. Gradients of earlier sweeps are
    /// discarded. A root with no differentiable ancestry yields no gradients.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        let root_shape = self.shape(root);
        if root_shape.iter().product::<usize>() != 1 || !root_shape.iter().all(|&d| d == 1) {
            return Err(TensorError::NonScalarRoot(root_shape.to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        if self.nodes[root.0].requires_grad {
            grads[root.0] = Some(vec![1.0]);
        }
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if matches!(self.nodes[i].op, Op::Leaf) {
                grads[i] = Some(g);
                continue;
            }
            self.propagate(i, &g, &mut grads);
        }
        self.grads = grads;
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let y = node.value.data();
        let rg = |j: usize| self.nodes[j].requires_grad;
        let val = |j: usize| self.nodes[j].value.data();
        match &node.op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                let (ta, tb) = (&self.nodes[a].value, &self.nodes[b].value);
                let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                if rg(a) {
                    let da = grad_slot(grads, a, m * k);
                    gemm(m, n, k, View::row_major(g, n), View::transposed(tb.data(), n), da, 1.0);
                }
                if rg(b) {
                    let db = grad_slot(grads, b, k * n);
                    gemm(k, m, n, View::transposed(ta.data(), k), View::row_major(g, n), db, 1.0);
                }
            }
            &Op::Add(a, b) | &Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                if rg(a) {
                    add_into(grad_slot(grads, a, g.len()), g, 1.0);
                }
                if rg(b) {
                    add_into(grad_slot(grads, b, g.len()), g, sign);
                }
            }
            &Op::Mul(a, b) => {
                if rg(a) {
                    let vb = val(b);
                    let da = grad_slot(grads, a, g.len());
                    for ((d, &gi), &bv) in da.iter_mut().zip(g).zip(vb) {
                        *d += gi * bv;
                    }
                }
                if rg(b) {
                    let va = val(a);
                    let db = grad_slot(grads, b, g.len());
                    for ((d, &gi), &av) in db.iter_mut().zip(g).zip(va) {
                        *d += gi * av;
                    }
                }
            }
            &Op::Div(a, b) => {
                let vb = val(b);
                if rg(a) {
                    let da = grad_slot(grads, a, g.len());
                    for ((d, &gi), &bv) in da.iter_mut().zip(g).zip(vb) {
                        *d += gi / bv;
                    }
                }
                if rg(b) {
                    let va = val(a);
                    let db = grad_slot(grads, b, g.len());
                    for (((d, &gi), &av), &bv) in db.iter_mut().zip(g).zip(va).zip(vb) {
                        *d -= gi * av / (bv * bv);
                    }
                }
            }
            &Op::Exp(x) => elementwise(grads, x, g, y, |_, yv| yv, val(x)),
            &Op::Log(x) => elementwise(grads, x, g, y, |xv, _| 1.0 / xv, val(x)),
            &Op::Tanh(x) => elementwise(grads, x, g, y, |_, yv| 1.0 - yv * yv, val(x)),
            &Op::Sigmoid(x) => elementwise(grads, x, g, y, |_, yv| yv * (1.0 - yv), val(x)),
            &Op::Relu(x) => elementwise(grads, x, g, y, |xv, _| if xv > 0.0 { 1.0 } else { 0.0 }, val(x)),
            &Op::Sqrt(x) => elementwise(grads, x, g, y, |_, yv| 0.5 / yv, val(x)),
            &Op::Scale(x, c) => add_into(grad_slot(grads, x, g.len()), g, c),
            &Op::AddScalar(x) | &Op::Reshape(x) => add_into(grad_slot(grads, x, g.len()), g, 1.0),
            &Op::ClampMin(x, floor) => elementwise(grads, x, g, y, |xv, _| if xv > floor { 1.0 } else { 0.0 }, val(x)),
            Op::MaxAxis { x, argmax } => {
                let dx = grad_slot(grads, *x, val(*x).len());
                for (&src, &gi) in argmax.iter().zip(g) {
                    dx[src] += gi;
                }
            }
            &Op::SumAxis { x, axis } | &Op::MeanAxis { x, axis } => {
                let shape = self.nodes[x].value.shape();
                let (outer, extent, inner) = axis_split(shape, axis);
                let factor = if matches!(node.op, Op::MeanAxis { .. }) {
                    1.0 / extent as f64
                } else {
                    1.0
                };
                let dx = grad_slot(grads, x, outer * extent * inner);
                for o in 0..outer {
                    for e in 0..extent {
                        let dst = &mut dx[(o * extent + e) * inner..(o * extent + e + 1) * inner];
                        add_into(dst, &g[o * inner..(o + 1) * inner], factor);
                    }
                }
            }
            Op::Concat { parts, axis } => {
                let (outer, _, inner) = axis_split(node.value.shape(), *axis);
                let mut offset = 0;
                for o in 0..outer {
                    for &p in parts {
                        let chunk = self.nodes[p].value.shape()[*axis] * inner;
                        if rg(p) {
                            let len = self.nodes[p].value.len();
                            let dp = grad_slot(grads, p, len);
                            add_into(&mut dp[o * chunk..(o + 1) * chunk], &g[offset..offset + chunk], 1.0);
                        }
                        offset += chunk;
                    }
                }
            }
            &Op::Slice { x, axis, start } => {
                let src_shape = self.nodes[x].value.shape();
                let (outer, extent, inner) = axis_split(src_shape, axis);
                let len = node.value.shape()[axis];
                let dx = grad_slot(grads, x, outer * extent * inner);
                for o in 0..outer {
                    let base = (o * extent + start) * inner;
                    add_into(
                        &mut dx[base..base + len * inner],
                        &g[o * len * inner..(o + 1) * len * inner],
                        1.0,
                    );
                }
            }
            &Op::Transpose(x) => {
                let (r, c) = (self.nodes[x].value.shape()[0], self.nodes[x].value.shape()[1]);
                let dx = grad_slot(grads, x, r * c);
                for i in 0..r {
                    for j in 0..c {
                        dx[i * c + j] += g[j * r + i];
                    }
                }
            }
            Op::Broadcast { x, map } => {
                let dx = grad_slot(grads, *x, val(*x).len());
                for (&src, &gi) in map.iter().zip(g) {
                    dx[src] += gi;
                }
            }
            Op::GatherRows { x, rows } => {
                let src = &self.nodes[*x].value;
                let width = src.len() / src.shape()[0];
                let dx = grad_slot(grads, *x, src.len());
                for (k, &r) in rows.iter().enumerate() {
                    add_into(&mut dx[r * width..(r + 1) * width], &g[k * width..(k + 1) * width], 1.0);
                }
            }
            &Op::Softmax(x) => {
                let width = *node.value.shape().last().unwrap();
                let dx = grad_slot(grads, x, y.len());
                for ((yr, gr), dr) in y.chunks(width).zip(g.chunks(width)).zip(dx.chunks_mut(width)) {
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for ((d, &yv), &gv) in dr.iter_mut().zip(yr).zip(gr) {
                        *d += yv * (gv - dot);
                    }
                }
            }
        }
    }
}

fn sum_over(data: &[f64], outer: usize, extent: usize, inner: usize) -> Vec<f64> {
    let mut out = vec![0.0; outer * inner];
    for o in 0..outer {
        let dst = &mut out[o * inner..(o + 1) * inner];
        for e in 0..extent {
            add_into(dst, &data[(o * extent + e) * inner..(o * extent + e + 1) * inner], 1.0);
        }
    }
    out
}

fn add_into(dst: &mut [f64], src: &[f64], factor: f64) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += factor * s;
    }
}

fn elementwise(
    grads: &mut [Option<Vec<f64>>],
    x: usize,
    g: &[f64],
    y: &[f64],
    deriv: impl Fn(f64, f64) -> f64,
    xv: &[f64],
) {
    let dx = grad_slot(grads, x, g.len());
    for (((d, &gi), &yi), &xi) in dx.iter_mut().zip(g).zip(y).zip(xv) {
        *d += gi * deriv(xi, yi);
    }
}
