//! Reverse-mode differentiation over dense matrices.
//!
//! A [`Graph`] is an append-only tape: every operation pushes a node whose
//! inputs already exist, so creation order is a topological order and the
//! backward pass is a single reverse sweep. Parameters enter the tape as
//! named leaves read from a [`ParameterStore`]; after [`Graph::backward`]
//! their gradients are added into the store with [`Graph::accumulate_into`].

use std::collections::HashMap;

use super::matrix::{matmul_nt, matmul_tn, shape_mismatch, DenseMatrix};
use super::params::ParameterStore;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    AddBroadcast(NodeId, NodeId),
    Hadamard(NodeId, NodeId),
    ConcatCols(Vec<NodeId>),
    Transpose(NodeId),
    Affine { input: NodeId, scale: f64 },
    Sigmoid(NodeId),
    Tanh(NodeId),
    Relu(NodeId),
    RowL2Normalize { input: NodeId, norms: Vec<f64> },
    Conv1d { input: NodeId, kernel: NodeId, stride: usize, positions: usize },
    Slice { input: NodeId, row0: usize, col0: usize },
    GatherRows { input: NodeId, indices: Vec<usize> },
    Reshape(NodeId),
    Sum(NodeId),
    Mean(NodeId),
    MeanRowGroups { input: NodeId, group: usize },
    SumColGroups { input: NodeId, group: usize },
    Bce { input: NodeId, factors: DenseMatrix },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::AddBroadcast(..) => "add_broadcast",
            Op::Hadamard(..) => "hadamard",
            Op::ConcatCols(_) => "concat_cols",
            Op::Transpose(_) => "transpose",
            Op::Affine { .. } => "affine",
            Op::Sigmoid(_) => "sigmoid",
            Op::Tanh(_) => "tanh",
            Op::Relu(_) => "relu",
            Op::RowL2Normalize { .. } => "row_l2_normalize",
            Op::Conv1d { .. } => "conv1d",
            Op::Slice { .. } => "slice",
            Op::GatherRows { .. } => "gather_rows",
            Op::Reshape(_) => "reshape",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::MeanRowGroups { .. } => "mean_row_groups",
            Op::SumColGroups { .. } => "sum_col_groups",
            Op::Bce { .. } => "bce",
        }
    }

    fn inputs(&self) -> Vec<NodeId> {
        match self {
            Op::Leaf => vec![],
            Op::MatMul(a, b) | Op::Add(a, b) | Op::AddBroadcast(a, b) | Op::Hadamard(a, b) => {
                vec![*a, *b]
            }
            Op::ConcatCols(v) => v.clone(),
            Op::Conv1d { input, kernel, .. } => vec![*input, *kernel],
            Op::Transpose(a) | Op::Reshape(a) | Op::Sigmoid(a) | Op::Tanh(a) | Op::Relu(a) | Op::Sum(a) | Op::Mean(a) => {
                vec![*a]
            }
            Op::Affine { input, .. }
            | Op::RowL2Normalize { input, .. }
            | Op::Slice { input, .. }
            | Op::GatherRows { input, .. }
            | Op::MeanRowGroups { input, .. }
            | Op::SumColGroups { input, .. }
            | Op::Bce { input, .. } => vec![*input],
        }
    }
}

/// One value on the tape together with its gradient accumulator.
#[derive(Debug, Clone)]
pub struct ComputeNode {
    op: Op,
    value: DenseMatrix,
    grad: Option<DenseMatrix>,
    requires_grad: bool,
    param: Option<String>,
}

impl ComputeNode {
    pub fn value(&self) -> &DenseMatrix {
        &self.value
    }

    pub fn op_name(&self) -> &'static str {
        self.op.name()
    }

    pub fn parameter_name(&self) -> Option<&str> {
        self.param.as_deref()
    }
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<ComputeNode>,
    params: HashMap<String, NodeId>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &ComputeNode {
        &self.nodes[id.0]
    }

    pub fn value(&self, id: NodeId) -> &DenseMatrix {
        &self.nodes[id.0].value
    }

    /// Gradient of the last backward pass; `None` if the node is off the
    /// differentiable path.
    pub fn grad(&self, id: NodeId) -> Option<&DenseMatrix> {
        self.nodes[id.0].grad.as_ref()
    }

    pub fn constant(&mut self, value: DenseMatrix) -> NodeId {
        self.push_leaf(value, false, None)
    }

    /// A differentiable leaf not backed by the store (used by tests and the
    /// per-op gradient checks).
    pub fn variable(&mut self, value: DenseMatrix) -> NodeId {
        self.push_leaf(value, true, None)
    }

    /// Leaf for a named parameter. Repeated requests return the same node so
    /// gradients from every use accumulate in one place.
    pub fn param(&mut self, store: &ParameterStore, name: &str) -> Result<NodeId> {
        if let Some(&id) = self.params.get(name) {
            return Ok(id);
        }
        let value = store.value(name)?.clone();
        let id = self.push_leaf(value, true, Some(name.to_string()));
        self.params.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn param_node(&self, name: &str) -> Option<NodeId> {
        self.params.get(name).copied()
    }

    fn push_leaf(&mut self, value: DenseMatrix, requires_grad: bool, param: Option<String>) -> NodeId {
        self.nodes.push(ComputeNode {
            op: Op::Leaf,
            value,
            grad: None,
            requires_grad,
            param,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn push(&mut self, op: Op, value: DenseMatrix) -> Result<NodeId> {
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("output of {}", op.name())));
        }
        let requires_grad = op.inputs().iter().any(|i| self.nodes[i.0].requires_grad);
        self.nodes.push(ComputeNode {
            op,
            value,
            grad: None,
            requires_grad,
            param: None,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    fn same_shape(&self, op: &str, a: NodeId, b: NodeId) -> Result<()> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(shape_mismatch(op, va, vb));
        }
        Ok(())
    }

    fn unary(&mut self, op: Op, input: NodeId, f: impl Fn(f64) -> f64) -> Result<NodeId> {
        let out = self.value(input).map(f);
        self.push(op, out)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let out = self.value(a).matmul(self.value(b))?;
        self.push(Op::MatMul(a, b), out)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("add", a, b)?;
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        self.push(Op::Add(a, b), out)
    }

    /// `a + b` where `b` is a `1×cols` row repeated down `a`, or a `1×1` scalar.
    pub fn add_broadcast(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        let mut out = va.clone();
        match vb.shape() {
            (1, 1) => {
                let s = vb.get(0, 0);
                out.data_mut().iter_mut().for_each(|v| *v += s);
            }
            (1, c) if c == va.cols() => {
                for r in 0..out.rows() {
                    for (o, x) in out.row_mut(r).iter_mut().zip(vb.data()) {
                        *o += x;
                    }
                }
            }
            _ => return Err(shape_mismatch("add_broadcast", va, vb)),
        }
        self.push(Op::AddBroadcast(a, b), out)
    }

    pub fn hadamard(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("hadamard", a, b)?;
        let (va, vb) = (self.value(a), self.value(b));
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x * y).collect();
        let out = DenseMatrix::from_raw(va.rows(), va.cols(), data);
        self.push(Op::Hadamard(a, b), out)
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let Some(&first) = parts.first() else {
            return Err(Error::Shape("concat_cols: no inputs".into()));
        };
        let rows = self.value(first).rows();
        for &p in parts {
            if self.value(p).rows() != rows {
                return Err(shape_mismatch("concat_cols", self.value(first), self.value(p)));
            }
        }
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let out = DenseMatrix::from_raw(rows, cols, data);
        self.push(Op::ConcatCols(parts.to_vec()), out)
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        let out = self.value(a).transpose();
        self.push(Op::Transpose(a), out)
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> Result<NodeId> {
        self.affine(a, factor, 0.0)
    }

    /// Elementwise `scale · a + shift`.
    pub fn affine(&mut self, a: NodeId, scale: f64, shift: f64) -> Result<NodeId> {
        self.unary(Op::Affine { input: a, scale }, a, |v| scale * v + shift)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(Op::Sigmoid(a), a, sigmoid)
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(Op::Tanh(a), a, f64::tanh)
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(Op::Relu(a), a, |v| if v > 0.0 { v } else { 0.0 })
    }

    /// Scales each row to unit Euclidean norm; all-zero rows pass through.
    pub fn row_l2_normalize(&mut self, a: NodeId) -> Result<NodeId> {
        let va = self.value(a);
        let mut out = va.clone();
        let mut norms = Vec::with_capacity(va.rows());
        for r in 0..va.rows() {
            let norm = va.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                out.row_mut(r).iter_mut().for_each(|v| *v /= norm);
            }
            norms.push(norm);
        }
        self.push(Op::RowL2Normalize { input: a, norms }, out)
    }

    /// Valid 1-D convolution of every row of `input` (`R×n`) with the `F`
    /// filters stored as the columns of `kernel` (`k×F`).
    ///
    /// The result is `(R·P)×F` with `P = (n − k)/stride + 1`; row `r·P + q`
    /// holds the responses at position `q` of input row `r`.
    pub fn conv1d(&mut self, input: NodeId, kernel: NodeId, stride: usize) -> Result<NodeId> {
        if stride == 0 {
            return Err(Error::InvalidInput("conv1d: stride must be positive".into()));
        }
        let (x, w) = (self.value(input), self.value(kernel));
        let (rows, len) = x.shape();
        let (width, filters) = w.shape();
        if width == 0 {
            return Err(Error::Shape("conv1d: kernel width must be positive".into()));
        }
        if len < width {
            return Err(Error::ConvTooShort { len, kernel: width });
        }
        let positions = (len - width) / stride + 1;
        let mut out = DenseMatrix::zeros(rows * positions, filters);
        for r in 0..rows {
            let signal = x.row(r);
            for q in 0..positions {
                let out_row = out.row_mut(r * positions + q);
                for i in 0..width {
                    let s = signal[q * stride + i];
                    for (o, &k) in out_row.iter_mut().zip(w.row(i)) {
                        *o += s * k;
                    }
                }
            }
        }
        self.push(
            Op::Conv1d {
                input,
                kernel,
                stride,
                positions,
            },
            out,
        )
    }

    pub fn slice(&mut self, a: NodeId, row0: usize, col0: usize, rows: usize, cols: usize) -> Result<NodeId> {
        let va = self.value(a);
        if row0 + rows > va.rows() || col0 + cols > va.cols() {
            return Err(Error::Shape(format!(
                "slice: [{row0}..{}, {col0}..{}] out of bounds for {}x{}",
                row0 + rows,
                col0 + cols,
                va.rows(),
                va.cols()
            )));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for r in row0..row0 + rows {
            data.extend_from_slice(&va.row(r)[col0..col0 + cols]);
        }
        let out = DenseMatrix::from_raw(rows, cols, data);
        self.push(Op::Slice { input: a, row0, col0 }, out)
    }

    pub fn gather_rows(&mut self, a: NodeId, indices: &[usize]) -> Result<NodeId> {
        let va = self.value(a);
        if let Some(&bad) = indices.iter().find(|&&i| i >= va.rows()) {
            return Err(Error::Shape(format!(
                "gather_rows: index {bad} out of bounds for {} rows",
                va.rows()
            )));
        }
        let out = va.gather_rows(indices);
        self.push(
            Op::GatherRows {
                input: a,
                indices: indices.to_vec(),
            },
            out,
        )
    }

    /// Reinterprets the row-major data with a new shape of equal size.
    pub fn reshape(&mut self, a: NodeId, rows: usize, cols: usize) -> Result<NodeId> {
        let va = self.value(a);
        if va.len() != rows * cols {
            return Err(Error::Shape(format!(
                "reshape: cannot view {}x{} as {rows}x{cols}",
                va.rows(),
                va.cols()
            )));
        }
        let out = DenseMatrix::from_raw(rows, cols, va.data().to_vec());
        self.push(Op::Reshape(a), out)
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        let out = DenseMatrix::from_raw(1, 1, vec![self.value(a).sum()]);
        self.push(Op::Sum(a), out)
    }

    pub fn mean(&mut self, a: NodeId) -> Result<NodeId> {
        let va = self.value(a);
        if va.is_empty() {
            return Err(Error::Shape("mean of an empty matrix".into()));
        }
        let out = DenseMatrix::from_raw(1, 1, vec![va.sum() / va.len() as f64]);
        self.push(Op::Mean(a), out)
    }

    /// Averages each run of `group` consecutive rows: `(R·g)×F → R×F`.
    pub fn mean_row_groups(&mut self, a: NodeId, group: usize) -> Result<NodeId> {
        let va = self.value(a);
        if group == 0 || va.rows() % group != 0 {
            return Err(Error::Shape(format!(
                "mean_row_groups: {} rows not divisible into groups of {group}",
                va.rows()
            )));
        }
        let rows = va.rows() / group;
        let mut out = DenseMatrix::zeros(rows, va.cols());
        let inv = 1.0 / group as f64;
        for r in 0..rows {
            for g in 0..group {
                let src = va.row(r * group + g);
                for (o, s) in out.row_mut(r).iter_mut().zip(src) {
                    *o += s;
                }
            }
            out.row_mut(r).iter_mut().for_each(|v| *v *= inv);
        }
        self.push(Op::MeanRowGroups { input: a, group }, out)
    }

    /// Sums each run of `group` consecutive columns: `R×(C·g) → R×C`.
    pub fn sum_col_groups(&mut self, a: NodeId, group: usize) -> Result<NodeId> {
        let va = self.value(a);
        if group == 0 || va.cols() % group != 0 {
            return Err(Error::Shape(format!(
                "sum_col_groups: {} columns not divisible into groups of {group}",
                va.cols()
            )));
        }
        let cols = va.cols() / group;
        let mut out = DenseMatrix::zeros(va.rows(), cols);
        for r in 0..va.rows() {
            let src = va.row(r);
            for (c, o) in out.row_mut(r).iter_mut().enumerate() {
                *o = src[c * group..(c + 1) * group].iter().sum();
            }
        }
        self.push(Op::SumColGroups { input: a, group }, out)
    }

    /// Masked binary cross-entropy summed over entries, with predictions
    /// clamped to `[eps, 1 − eps]`.
    pub fn bce(&mut self, predictions: NodeId, labels: &DenseMatrix, mask: &DenseMatrix, eps: f64) -> Result<NodeId> {
        let p = self.value(predictions);
        if p.shape() != labels.shape() {
            return Err(shape_mismatch("bce", p, labels));
        }
        if p.shape() != mask.shape() {
            return Err(shape_mismatch("bce", p, mask));
        }
        let mut loss = 0.0;
        let mut factors = DenseMatrix::zeros(p.rows(), p.cols());
        for i in 0..p.len() {
            let m = mask.data()[i];
            if m == 0.0 {
                continue;
            }
            let y = labels.data()[i];
            let raw = p.data()[i];
            let r = raw.clamp(eps, 1.0 - eps);
            loss -= m * (y * r.ln() + (1.0 - y) * (1.0 - r).ln());
            if raw > eps && raw < 1.0 - eps {
                factors.data_mut()[i] = m * (-y / r + (1.0 - y) / (1.0 - r));
            }
        }
        let out = DenseMatrix::from_raw(1, 1, vec![loss]);
        self.push(
            Op::Bce {
                input: predictions,
                factors,
            },
            out,
        )
    }

    /// Reverse sweep from a scalar `loss`. Gradients of a previous pass are
    /// discarded; store-level accumulation happens in [`Graph::accumulate_into`].
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        let (rows, cols) = self.value(loss).shape();
        if (rows, cols) != (1, 1) {
            return Err(Error::NonScalarLoss { rows, cols });
        }
        for node in &mut self.nodes {
            node.grad = None;
        }
        self.nodes[loss.0].grad = Some(DenseMatrix::filled(1, 1, 1.0));
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(upstream) = self.nodes[i].grad.take() else {
                continue;
            };
            self.propagate(i, &upstream);
            self.nodes[i].grad = Some(upstream);
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if let Some(g) = &node.grad {
                if !g.is_finite() {
                    return Err(Error::NonFinite(format!("gradient of node {i} ({})", node.op.name())));
                }
            }
        }
        Ok(())
    }

    fn accumulate(&mut self, id: NodeId, delta: DenseMatrix) {
        let node = &mut self.nodes[id.0];
        if !node.requires_grad {
            return;
        }
        match &mut node.grad {
            Some(g) => g.add_assign(&delta),
            None => node.grad = Some(delta),
        }
    }

    fn wants(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn propagate(&mut self, i: usize, up: &DenseMatrix) {
        let op = std::mem::replace(&mut self.nodes[i].op, Op::Leaf);
        self.propagate_op(i, &op, up);
        self.nodes[i].op = op;
    }

    fn propagate_op(&mut self, i: usize, op: &Op, up: &DenseMatrix) {
        match *op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.wants(a) {
                    let d = matmul_nt(up, self.value(b));
                    self.accumulate(a, d);
                }
                if self.wants(b) {
                    let d = matmul_tn(self.value(a), up);
                    self.accumulate(b, d);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(a, up.clone());
                self.accumulate(b, up.clone());
            }
            Op::AddBroadcast(a, b) => {
                self.accumulate(a, up.clone());
                if self.wants(b) {
                    let d = if self.value(b).shape() == (1, 1) {
                        DenseMatrix::from_raw(1, 1, vec![up.sum()])
                    } else {
                        let mut col = DenseMatrix::zeros(1, up.cols());
                        for r in 0..up.rows() {
                            for (o, u) in col.data_mut().iter_mut().zip(up.row(r)) {
                                *o += u;
                            }
                        }
                        col
                    };
                    self.accumulate(b, d);
                }
            }
            Op::Hadamard(a, b) => {
                if self.wants(a) {
                    let d = zip_map(up, self.value(b), |u, y| u * y);
                    self.accumulate(a, d);
                }
                if self.wants(b) {
                    let d = zip_map(up, self.value(a), |u, x| u * x);
                    self.accumulate(b, d);
                }
            }
            Op::ConcatCols(ref parts) => {
                let mut col0 = 0;
                for &p in parts {
                    let cols = self.value(p).cols();
                    if self.wants(p) {
                        let mut d = DenseMatrix::zeros(up.rows(), cols);
                        for r in 0..up.rows() {
                            d.row_mut(r).copy_from_slice(&up.row(r)[col0..col0 + cols]);
                        }
                        self.accumulate(p, d);
                    }
                    col0 += cols;
                }
            }
            Op::Transpose(a) => self.accumulate(a, up.transpose()),
            Op::Affine { input, scale } => self.accumulate(input, up.map(|u| u * scale)),
            Op::Sigmoid(a) => {
                let d = zip_map(up, &self.nodes[i].value, |u, y| u * y * (1.0 - y));
                self.accumulate(a, d);
            }
            Op::Tanh(a) => {
                let d = zip_map(up, &self.nodes[i].value, |u, y| u * (1.0 - y * y));
                self.accumulate(a, d);
            }
            Op::Relu(a) => {
                let d = zip_map(up, self.value(a), |u, x| if x > 0.0 { u } else { 0.0 });
                self.accumulate(a, d);
            }
            Op::RowL2Normalize { input, ref norms } => {
                let y = &self.nodes[i].value;
                let mut d = up.clone();
                for (r, &norm) in norms.iter().enumerate() {
                    if norm == 0.0 {
                        continue;
                    }
                    let yr = y.row(r);
                    let dot: f64 = yr.iter().zip(up.row(r)).map(|(a, b)| a * b).sum();
                    for (o, (&u, &yv)) in d.row_mut(r).iter_mut().zip(up.row(r).iter().zip(yr)) {
                        *o = (u - yv * dot) / norm;
                    }
                }
                self.accumulate(input, d);
            }
            Op::Conv1d {
                input,
                kernel,
                stride,
                positions,
            } => {
                let (x, w) = (self.value(input), self.value(kernel));
                let (rows, len) = x.shape();
                let width = w.rows();
                if self.wants(input) {
                    let mut dx = DenseMatrix::zeros(rows, len);
                    for r in 0..rows {
                        for q in 0..positions {
                            let u = up.row(r * positions + q);
                            for t in 0..width {
                                let acc: f64 = u.iter().zip(w.row(t)).map(|(a, b)| a * b).sum();
                                dx.data_mut()[r * len + q * stride + t] += acc;
                            }
                        }
                    }
                    self.accumulate(input, dx);
                }
                if self.wants(kernel) {
                    let (x, w) = (self.value(input), self.value(kernel));
                    let mut dw = DenseMatrix::zeros(width, w.cols());
                    for r in 0..rows {
                        for q in 0..positions {
                            let u = up.row(r * positions + q);
                            for t in 0..width {
                                let s = x.get(r, q * stride + t);
                                for (o, &uv) in dw.row_mut(t).iter_mut().zip(u) {
                                    *o += s * uv;
                                }
                            }
                        }
                    }
                    self.accumulate(kernel, dw);
                }
            }
            Op::Slice { input, row0, col0 } => {
                let (r, c) = self.value(input).shape();
                let mut d = DenseMatrix::zeros(r, c);
                for rr in 0..up.rows() {
                    d.row_mut(row0 + rr)[col0..col0 + up.cols()].copy_from_slice(up.row(rr));
                }
                self.accumulate(input, d);
            }
            Op::GatherRows { input, ref indices } => {
                let (r, c) = self.value(input).shape();
                let mut d = DenseMatrix::zeros(r, c);
                for (k, &src) in indices.iter().enumerate() {
                    for (o, u) in d.row_mut(src).iter_mut().zip(up.row(k)) {
                        *o += u;
                    }
                }
                self.accumulate(input, d);
            }
            Op::Reshape(a) => {
                let (r, c) = self.value(a).shape();
                self.accumulate(a, DenseMatrix::from_raw(r, c, up.data().to_vec()));
            }
            Op::Sum(a) => {
                let (r, c) = self.value(a).shape();
                self.accumulate(a, DenseMatrix::filled(r, c, up.get(0, 0)));
            }
            Op::Mean(a) => {
                let (r, c) = self.value(a).shape();
                let g = up.get(0, 0) / (r * c) as f64;
                self.accumulate(a, DenseMatrix::filled(r, c, g));
            }
            Op::MeanRowGroups { input, group } => {
                let (r, c) = self.value(input).shape();
                let inv = 1.0 / group as f64;
                let mut d = DenseMatrix::zeros(r, c);
                for row in 0..r {
                    for (o, u) in d.row_mut(row).iter_mut().zip(up.row(row / group)) {
                        *o = u * inv;
                    }
                }
                self.accumulate(input, d);
            }
            Op::SumColGroups { input, group } => {
                let (r, c) = self.value(input).shape();
                let mut d = DenseMatrix::zeros(r, c);
                for row in 0..r {
                    let u = up.row(row);
                    for (col, o) in d.row_mut(row).iter_mut().enumerate() {
                        *o = u[col / group];
                    }
                }
                self.accumulate(input, d);
            }
            Op::Bce { input, ref factors } => {
                let g = up.get(0, 0);
                self.accumulate(input, factors.map(|f| f * g));
            }
        }
    }

    /// Adds the gradient of every parameter leaf into the store's gradient
    /// slots. Parameters that never entered this graph are left untouched.
    pub fn accumulate_into(&self, store: &mut ParameterStore) -> Result<()> {
        for (name, &id) in &self.params {
            if let Some(g) = &self.nodes[id.0].grad {
                store.add_grad(name, g)?;
            }
        }
        Ok(())
    }
}

fn zip_map(a: &DenseMatrix, b: &DenseMatrix, f: impl Fn(f64, f64) -> f64) -> DenseMatrix {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    DenseMatrix::from_raw(a.rows(), a.cols(), data)
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}
