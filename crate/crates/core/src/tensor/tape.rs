//! Wengert-list reverse-mode differentiation over rank-2 tensors.
//!
//! Every op appends one node to the tape; backward walks the nodes in
//! exact reverse order of construction, so a node's adjoint is complete
//! before it is propagated to its inputs. Adjoints reaching the same node
//! through several consumers are summed.

use super::scalar::{gemm, MatView};
use super::{Scalar, Tensor, TensorError};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    MatMul { a: Var, b: Var, ta: bool, tb: bool, alpha: T },
    Add(Var, Var),
    Mul(Var, Var),
    AddRow { x: Var, row: Var },
    Scale { x: Var, factor: T },
    LayerNorm { x: Var, gain: Var, bias: Var, mean: Vec<T>, rstd: Vec<T> },
    Gelu(Var),
    Softmax { x: Var, axis: usize },
    ConcatRows(Vec<Var>),
    SliceRows { x: Var, start: usize },
    ConcatCols(Vec<Var>),
    SliceCols { x: Var, start: usize },
    MeanRows(Var),
    SumAll(Var),
    BceWithLogits { logit: Var, label: T },
}

impl<T> Op<T> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul { .. } => "matmul",
            Op::Add(..) => "add",
            Op::Mul(..) => "mul",
            Op::AddRow { .. } => "add_row",
            Op::Scale { .. } => "scale",
            Op::LayerNorm { .. } => "layer_norm",
            Op::Gelu(_) => "gelu",
            Op::Softmax { .. } => "softmax",
            Op::ConcatRows(_) => "concat_rows",
            Op::SliceRows { .. } => "slice_rows",
            Op::ConcatCols(_) => "concat_cols",
            Op::SliceCols { .. } => "slice_cols",
            Op::MeanRows(_) => "mean_rows",
            Op::SumAll(_) => "sum_all",
            Op::BceWithLogits { .. } => "bce_with_logits",
        }
    }

    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::MatMul { a, b, .. } | Op::Add(a, b) | Op::Mul(a, b) => vec![*a, *b],
            Op::AddRow { x, row } => vec![*x, *row],
            Op::LayerNorm { x, gain, bias, .. } => vec![*x, *gain, *bias],
            Op::Scale { x, .. }
            | Op::Gelu(x)
            | Op::Softmax { x, .. }
            | Op::SliceRows { x, .. }
            | Op::SliceCols { x, .. }
            | Op::MeanRows(x)
            | Op::SumAll(x) => vec![*x],
            Op::BceWithLogits { logit, .. } => vec![*logit],
            Op::ConcatRows(parts) | Op::ConcatCols(parts) => parts.clone(),
        }
    }
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Recording of one forward computation.
///
/// A tape is confined to one thread; build one tape per sample.
#[derive(Debug)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    first_nonfinite: Option<(usize, &'static str)>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn shape_err(op: &'static str, left: &[usize], right: &[usize]) -> TensorError {
    TensorError::ShapeMismatch { op, left: left.to_vec(), right: right.to_vec() }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), first_nonfinite: None }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push_leaf(value, true)
    }

    /// Non-differentiable leaf.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push_leaf(value, false)
    }

    fn push_leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.note_finite(&value, "leaf");
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        let requires_grad = op.inputs().iter().any(|v| self.nodes[v.0].requires_grad);
        self.note_finite(&value, op.name());
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn note_finite(&mut self, value: &Tensor<T>, op: &'static str) {
        if self.first_nonfinite.is_none() && !value.is_finite() {
            self.first_nonfinite = Some((self.nodes.len(), op));
        }
    }

    /// Fails if any node recorded so far holds a NaN or infinity.
    pub fn ensure_finite(&self, context: &str) -> Result<(), TensorError> {
        match self.first_nonfinite {
            Some((node, op)) => Err(TensorError::NonFinite { context: context.to_string(), op, node }),
            None => Ok(()),
        }
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn dims(&self, v: Var) -> Result<(usize, usize), TensorError> {
        self.nodes[v.0].value.dims2()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.matmul_ex(a, b, false, false, T::one())
    }

    /// `alpha * op(a) * op(b)` where `op` optionally transposes.
    pub fn matmul_ex(&mut self, a: Var, b: Var, ta: bool, tb: bool, alpha: T) -> Result<Var, TensorError> {
        let (ar, ac) = self.dims(a)?;
        let (br, bc) = self.dims(b)?;
        let av = MatView::row_major(self.value(a).data(), ar, ac).maybe_t(ta);
        let bv = MatView::row_major(self.value(b).data(), br, bc).maybe_t(tb);
        if av.cols != bv.rows {
            return Err(shape_err("matmul", &[av.rows, av.cols], &[bv.rows, bv.cols]));
        }
        let mut out = vec![T::zero(); av.rows * bv.cols];
        gemm(alpha, av, bv, T::zero(), &mut out);
        let value = Tensor::new(vec![av.rows, bv.cols], out)?;
        Ok(self.push(value, Op::MatMul { a, b, ta, tb, alpha }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(shape_err("add", va.shape(), vb.shape()));
        }
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| x + y).collect();
        let value = Tensor::new(va.shape().to_vec(), data)?;
        Ok(self.push(value, Op::Add(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(shape_err("mul", va.shape(), vb.shape()));
        }
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| x * y).collect();
        let value = Tensor::new(va.shape().to_vec(), data)?;
        Ok(self.push(value, Op::Mul(a, b)))
    }

    /// Adds a `1 x n` row to every row of an `m x n` matrix.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var, TensorError> {
        let (_, n) = self.dims(x)?;
        let (rr, rc) = self.dims(row)?;
        if rr != 1 || rc != n {
            return Err(shape_err("add_row", self.value(x).shape(), self.value(row).shape()));
        }
        let r = self.value(row).data();
        let xv = self.value(x);
        let data = xv.data().chunks(n).flat_map(|chunk| chunk.iter().zip(r).map(|(&a, &b)| a + b)).collect();
        let value = Tensor::new(xv.shape().to_vec(), data)?;
        Ok(self.push(value, Op::AddRow { x, row }))
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Result<Var, TensorError> {
        let xv = self.value(x);
        let value = Tensor::new(xv.shape().to_vec(), xv.data().iter().map(|&v| v * factor).collect())?;
        Ok(self.push(value, Op::Scale { x, factor }))
    }

    /// Normalizes each row to zero mean and unit (biased) variance, then
    /// applies the `1 x n` gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, epsilon: T) -> Result<Var, TensorError> {
        let (m, n) = self.dims(x)?;
        for p in [gain, bias] {
            if self.dims(p)? != (1, n) {
                return Err(shape_err("layer_norm", self.value(x).shape(), self.value(p).shape()));
            }
        }
        let g = self.value(gain).data();
        let b = self.value(bias).data();
        let xv = self.value(x).data();
        let inv_n = T::one() / T::lit(n as f64);
        let mut out = Vec::with_capacity(m * n);
        let mut means = Vec::with_capacity(m);
        let mut rstds = Vec::with_capacity(m);
        for row in xv.chunks(n) {
            let mean = row.iter().copied().sum::<T>() * inv_n;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_n;
            let rstd = T::one() / (var + epsilon).sqrt();
            out.extend(row.iter().zip(g).zip(b).map(|((&v, &gi), &bi)| (v - mean) * rstd * gi + bi));
            means.push(mean);
            rstds.push(rstd);
        }
        let value = Tensor::new(vec![m, n], out)?;
        Ok(self.push(value, Op::LayerNorm { x, gain, bias, mean: means, rstd: rstds }))
    }

    /// Exact GELU, `x * Phi(x)`.
    pub fn gelu(&mut self, x: Var) -> Result<Var, TensorError> {
        let xv = self.value(x);
        let data = xv.data().iter().map(|&v| v * std_normal_cdf(v)).collect();
        let value = Tensor::new(xv.shape().to_vec(), data)?;
        Ok(self.push(value, Op::Gelu(x)))
    }

    /// Max-subtracted softmax along `axis` (0 = down columns, 1 = along rows).
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var, TensorError> {
        let (m, n) = self.dims(x)?;
        if axis > 1 {
            return Err(TensorError::InvalidAxis { axis, rank: 2 });
        }
        let mut out = self.value(x).data().to_vec();
        for_each_lane(m, n, axis, |idx| {
            let max = idx.clone().map(|i| out[i]).fold(T::neg_infinity(), T::max);
            let mut sum = T::zero();
            for i in idx.clone() {
                let e = (out[i] - max).exp();
                out[i] = e;
                sum = sum + e;
            }
            for i in idx {
                out[i] = out[i] / sum;
            }
        });
        let value = Tensor::new(vec![m, n], out)?;
        Ok(self.push(value, Op::Softmax { x, axis }))
    }

    /// Stacks matrices with equal column counts vertically.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let Some(&first) = parts.first() else {
            return Err(TensorError::EmptyConcat);
        };
        let (_, n) = self.dims(first)?;
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let (r, c) = self.dims(p)?;
            if c != n {
                return Err(shape_err("concat_rows", self.value(first).shape(), self.value(p).shape()));
            }
            rows += r;
            data.extend_from_slice(self.value(p).data());
        }
        let value = Tensor::new(vec![rows, n], data)?;
        Ok(self.push(value, Op::ConcatRows(parts.to_vec())))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var, TensorError> {
        let (m, n) = self.dims(x)?;
        if len == 0 || start + len > m {
            return Err(TensorError::SliceOutOfRange { op: "slice_rows", start, len, extent: m });
        }
        let data = self.value(x).data()[start * n..(start + len) * n].to_vec();
        let value = Tensor::new(vec![len, n], data)?;
        Ok(self.push(value, Op::SliceRows { x, start }))
    }

    /// Places matrices with equal row counts side by side.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let Some(&first) = parts.first() else {
            return Err(TensorError::EmptyConcat);
        };
        let (m, _) = self.dims(first)?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.dims(p)?;
            if r != m {
                return Err(shape_err("concat_cols", self.value(first).shape(), self.value(p).shape()));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(m * total);
        for i in 0..m {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(p).data()[i * w..(i + 1) * w]);
            }
        }
        let value = Tensor::new(vec![m, total], data)?;
        Ok(self.push(value, Op::ConcatCols(parts.to_vec())))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, width: usize) -> Result<Var, TensorError> {
        let (m, n) = self.dims(x)?;
        if width == 0 || start + width > n {
            return Err(TensorError::SliceOutOfRange { op: "slice_cols", start, len: width, extent: n });
        }
        let src = self.value(x).data();
        let data = src.chunks(n).flat_map(|row| row[start..start + width].iter().copied()).collect();
        let value = Tensor::new(vec![m, width], data)?;
        Ok(self.push(value, Op::SliceCols { x, start }))
    }

    /// Column means, `m x n -> 1 x n`.
    pub fn mean_rows(&mut self, x: Var) -> Result<Var, TensorError> {
        let (m, n) = self.dims(x)?;
        let mut acc = vec![T::zero(); n];
        for row in self.value(x).data().chunks(n) {
            for (a, &v) in acc.iter_mut().zip(row) {
                *a = *a + v;
            }
        }
        let inv = T::one() / T::lit(m as f64);
        let value = Tensor::new(vec![1, n], acc.into_iter().map(|v| v * inv).collect())?;
        Ok(self.push(value, Op::MeanRows(x)))
    }

    pub fn sum_all(&mut self, x: Var) -> Result<Var, TensorError> {
        let s = self.value(x).data().iter().copied().sum::<T>();
        Ok(self.push(Tensor::scalar(s), Op::SumAll(x)))
    }

    /// Numerically stable binary cross-entropy on a `1 x 1` logit.
    pub fn bce_with_logits(&mut self, logit: Var, label: T) -> Result<Var, TensorError> {
        let lv = self.value(logit);
        if lv.len() != 1 {
            return Err(shape_err("bce_with_logits", lv.shape(), &[1, 1]));
        }
        if label != T::zero() && label != T::one() {
            return Err(TensorError::InvalidLabel(label.as_f64()));
        }
        let value = Tensor::scalar(bce_with_logits(lv.data()[0], label));
        Ok(self.push(value, Op::BceWithLogits { logit, label }))
    }

    /// Reverse pass from a scalar (`1 x 1`) node.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>, TensorError> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(TensorError::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        if !self.nodes[loss.0].requires_grad {
            return Ok(Gradients { grads });
        }
        grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            if let Op::Leaf = node.op {
                continue;
            }
            let Some(g) = grads[i].take() else {
                continue;
            };
            self.propagate(node, &g, &mut grads)?;
        }
        Ok(Gradients { grads })
    }

    fn grad_slot<'g>(&self, grads: &'g mut [Option<Vec<T>>], v: Var) -> Option<&'g mut Vec<T>> {
        let node = &self.nodes[v.0];
        if !node.requires_grad {
            return None;
        }
        Some(grads[v.0].get_or_insert_with(|| vec![T::zero(); node.value.len()]))
    }

    fn propagate(&self, node: &Node<T>, g: &[T], grads: &mut [Option<Vec<T>>]) -> Result<(), TensorError> {
        match &node.op {
            Op::Leaf => {}
            &Op::MatMul { a, b, ta, tb, alpha } => {
                let (ar, ac) = self.dims(a)?;
                let (br, bc) = self.dims(b)?;
                let (m, n) = node.value.dims2()?;
                let av = MatView::row_major(self.value(a).data(), ar, ac);
                let bv = MatView::row_major(self.value(b).data(), br, bc);
                let gv = MatView::row_major(g, m, n);
                let a_eff = av.maybe_t(ta);
                let b_eff = bv.maybe_t(tb);
                if let Some(ga) = self.grad_slot(grads, a) {
                    if ta {
                        gemm(alpha, b_eff, gv.t(), T::one(), ga);
                    } else {
                        gemm(alpha, gv, b_eff.t(), T::one(), ga);
                    }
                }
                if let Some(gb) = self.grad_slot(grads, b) {
                    if tb {
                        gemm(alpha, gv.t(), a_eff, T::one(), gb);
                    } else {
                        gemm(alpha, a_eff.t(), gv, T::one(), gb);
                    }
                }
            }
            &Op::Add(a, b) => {
                for v in [a, b] {
                    if let Some(slot) = self.grad_slot(grads, v) {
                        axpy(slot, g, T::one());
                    }
                }
            }
            &Op::Mul(a, b) => {
                let bv = self.value(b).data();
                if let Some(slot) = self.grad_slot(grads, a) {
                    for ((s, &gi), &bi) in slot.iter_mut().zip(g).zip(bv) {
                        *s = *s + gi * bi;
                    }
                }
                let av = self.value(a).data();
                if let Some(slot) = self.grad_slot(grads, b) {
                    for ((s, &gi), &ai) in slot.iter_mut().zip(g).zip(av) {
                        *s = *s + gi * ai;
                    }
                }
            }
            &Op::AddRow { x, row } => {
                if let Some(slot) = self.grad_slot(grads, x) {
                    axpy(slot, g, T::one());
                }
                let n = self.value(row).len();
                if let Some(slot) = self.grad_slot(grads, row) {
                    for chunk in g.chunks(n) {
                        axpy(slot, chunk, T::one());
                    }
                }
            }
            &Op::Scale { x, factor } => {
                if let Some(slot) = self.grad_slot(grads, x) {
                    axpy(slot, g, factor);
                }
            }
            Op::LayerNorm { x, gain, bias, mean, rstd } => {
                let (_, n) = self.dims(*x)?;
                let xv = self.value(*x).data();
                let gv = self.value(*gain).data();
                let inv_n = T::one() / T::lit(n as f64);
                if let Some(slot) = self.grad_slot(grads, *gain) {
                    for (r, (xrow, grow)) in xv.chunks(n).zip(g.chunks(n)).enumerate() {
                        for j in 0..n {
                            slot[j] = slot[j] + grow[j] * (xrow[j] - mean[r]) * rstd[r];
                        }
                    }
                }
                if let Some(slot) = self.grad_slot(grads, *bias) {
                    for grow in g.chunks(n) {
                        axpy(slot, grow, T::one());
                    }
                }
                if let Some(slot) = self.grad_slot(grads, *x) {
                    for (r, ((xrow, grow), srow)) in xv.chunks(n).zip(g.chunks(n)).zip(slot.chunks_mut(n)).enumerate()
                    {
                        let mut sum_d = T::zero();
                        let mut sum_dx = T::zero();
                        for j in 0..n {
                            let d = grow[j] * gv[j];
                            let xhat = (xrow[j] - mean[r]) * rstd[r];
                            sum_d = sum_d + d;
                            sum_dx = sum_dx + d * xhat;
                        }
                        let (mean_d, mean_dx) = (sum_d * inv_n, sum_dx * inv_n);
                        for j in 0..n {
                            let d = grow[j] * gv[j];
                            let xhat = (xrow[j] - mean[r]) * rstd[r];
                            srow[j] = srow[j] + rstd[r] * (d - mean_d - xhat * mean_dx);
                        }
                    }
                }
            }
            &Op::Gelu(x) => {
                let xv = self.value(x).data();
                if let Some(slot) = self.grad_slot(grads, x) {
                    for ((s, &gi), &v) in slot.iter_mut().zip(g).zip(xv) {
                        *s = *s + gi * (std_normal_cdf(v) + v * std_normal_pdf(v));
                    }
                }
            }
            &Op::Softmax { x, axis } => {
                let (m, n) = self.dims(x)?;
                let y = node.value.data();
                if let Some(slot) = self.grad_slot(grads, x) {
                    for_each_lane(m, n, axis, |idx| {
                        let dot = idx.clone().map(|i| g[i] * y[i]).sum::<T>();
                        for i in idx {
                            slot[i] = slot[i] + y[i] * (g[i] - dot);
                        }
                    });
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).len();
                    if let Some(slot) = self.grad_slot(grads, p) {
                        axpy(slot, &g[offset..offset + len], T::one());
                    }
                    offset += len;
                }
            }
            &Op::SliceRows { x, start } => {
                let (_, n) = self.dims(x)?;
                if let Some(slot) = self.grad_slot(grads, x) {
                    axpy(&mut slot[start * n..start * n + g.len()], g, T::one());
                }
            }
            Op::ConcatCols(parts) => {
                let (m, total) = node.value.dims2()?;
                let mut col = 0;
                for &p in parts {
                    let (_, w) = self.dims(p)?;
                    if let Some(slot) = self.grad_slot(grads, p) {
                        for i in 0..m {
                            axpy(&mut slot[i * w..(i + 1) * w], &g[i * total + col..i * total + col + w], T::one());
                        }
                    }
                    col += w;
                }
            }
            &Op::SliceCols { x, start } => {
                let (m, n) = self.dims(x)?;
                let (_, w) = node.value.dims2()?;
                if let Some(slot) = self.grad_slot(grads, x) {
                    for i in 0..m {
                        axpy(&mut slot[i * n + start..i * n + start + w], &g[i * w..(i + 1) * w], T::one());
                    }
                }
            }
            &Op::MeanRows(x) => {
                let (m, n) = self.dims(x)?;
                let inv = T::one() / T::lit(m as f64);
                if let Some(slot) = self.grad_slot(grads, x) {
                    for srow in slot.chunks_mut(n) {
                        axpy(srow, g, inv);
                    }
                }
            }
            &Op::SumAll(x) => {
                if let Some(slot) = self.grad_slot(grads, x) {
                    for s in slot.iter_mut() {
                        *s = *s + g[0];
                    }
                }
            }
            &Op::BceWithLogits { logit, label } => {
                let z = self.value(logit).data()[0];
                if let Some(slot) = self.grad_slot(grads, logit) {
                    slot[0] = slot[0] + g[0] * (sigmoid(z) - label);
                }
            }
        }
        Ok(())
    }
}

/// Adjoints produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Adjoint of `v`, or `None` when `v` does not influence the loss.
    pub fn get(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn take(&mut self, v: Var) -> Option<Vec<T>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn axpy<T: Scalar>(dst: &mut [T], src: &[T], alpha: T) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = *d + alpha * s;
    }
}

/// Visits every lane of an `m x n` row-major matrix along `axis` as a range
/// of flat indices.
fn for_each_lane(m: usize, n: usize, axis: usize, mut f: impl FnMut(std::iter::StepBy<std::ops::Range<usize>>)) {
    if axis == 1 {
        for i in 0..m {
            f((i * n..(i + 1) * n).step_by(1));
        }
    } else {
        for j in 0..n {
            f((j..m * n).step_by(n));
        }
    }
}

pub(crate) fn std_normal_cdf<T: Scalar>(x: T) -> T {
    T::lit(0.5) * (T::one() + (x * T::lit(std::f64::consts::FRAC_1_SQRT_2)).erf())
}

fn std_normal_pdf<T: Scalar>(x: T) -> T {
    T::lit(1.0 / (2.0 * std::f64::consts::PI).sqrt()) * (T::lit(-0.5) * x * x).exp()
}

pub fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// `max(z, 0) - z*y + ln(1 + e^{-|z|})`.
pub fn bce_with_logits<T: Scalar>(z: T, y: T) -> T {
    z.max(T::zero()) - z * y + (-z.abs()).exp().ln_1p()
}
