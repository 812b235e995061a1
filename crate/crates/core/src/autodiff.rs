//! Tape-based reverse-mode automatic differentiation over small dense `f64`
//! tensors.
//!
//! A [`Tape`] records every operation applied during the forward pass. Nodes
//! are only ever appended, so operand ids are always smaller than the id of
//! the node using them and the recorded graph is acyclic by construction.
//! [`Tape::backward`] walks the nodes in reverse and accumulates gradients
//! into every node reachable from the loss.
//!
//! Tensors are at most two-dimensional. The op set is deliberately small:
//! matrix multiply, elementwise add and multiply, scalar affine, `tanh`,
//! `exp`, `log`, `relu`, log-softmax over the last axis, `sum`, `mean`, row
//! gather and per-row column pick. There is no broadcasting; a row bias is
//! added with `ones(n, 1) · b`.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: expected a {expected}-d tensor, got shape {shape:?}")]
    Rank {
        op: &'static str,
        expected: usize,
        shape: Vec<usize>,
    },
    #[error("{op}: value {value} at index {index} is outside the domain")]
    Domain { op: &'static str, index: usize, value: f64 },
    #[error("{op}: index {index} out of range for length {len}")]
    IndexOutOfRange { op: &'static str, index: usize, len: usize },
    #[error("shape {shape:?} holds {expected} values, got {actual}")]
    BadBuffer {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },
    #[error("backward needs a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
    #[error("unknown node {0}")]
    UnknownNode(usize),
}

pub type Result<T> = std::result::Result<T, AutodiffError>;

/// Dense row-major tensor with a gradient buffer of the same length.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    values: Vec<f64>,
    grad: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("values", &self.values)
            .finish()
    }
}

impl Tensor {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != values.len() {
            return Err(AutodiffError::BadBuffer {
                shape,
                expected,
                actual: values.len(),
            });
        }
        let grad = vec![0.0; values.len()];
        Ok(Self { shape, values, grad })
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: Vec::new(),
            values: vec![value],
            grad: vec![0.0],
        }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            values: vec![0.0; n],
            grad: vec![0.0; n],
        }
    }

    pub fn filled(shape: Vec<usize>, value: f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            values: vec![value; n],
            grad: vec![0.0; n],
        }
    }

    pub fn matrix(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], values)
    }

    /// Column vector of shape `[n, 1]`.
    pub fn column(values: Vec<f64>) -> Self {
        let n = values.len();
        Self {
            shape: vec![n, 1],
            grad: vec![0.0; n],
            values,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn grad(&self) -> &[f64] {
        &self.grad
    }

    pub fn grad_mut(&mut self) -> &mut [f64] {
        &mut self.grad
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> Option<f64> {
        (self.values.len() == 1).then(|| self.values[0])
    }

    /// Rows and columns, treating a 1-d tensor as a single row.
    fn rows_cols(&self) -> (usize, usize) {
        match self.shape.as_slice() {
            [] => (1, 1),
            [n] => (1, *n),
            [r, c] => (*r, *c),
            _ => unreachable!("tensors are at most 2-d"),
        }
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Affine { x: Var, scale: f64 },
    Tanh(Var),
    Exp(Var),
    Log(Var),
    Relu(Var),
    LogSoftmax(Var),
    Sum(Var),
    Mean(Var),
    GatherRows { x: Var, idx: Vec<usize> },
    Pick { x: Var, idx: Vec<usize> },
}

#[derive(Debug, Clone)]
struct Node {
    tensor: Tensor,
    op: Op,
    /// Whether any trainable leaf feeds this node.
    needs_grad: bool,
}

/// Records a computation for one forward/backward pass.
#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
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

    pub fn leaf(&mut self, tensor: Tensor) -> Var {
        self.nodes.push(Node {
            tensor,
            op: Op::Leaf,
            needs_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// A leaf that never receives a gradient (data, fixed weights). Nodes
    /// computed only from constants are skipped by `backward`.
    pub fn constant(&mut self, tensor: Tensor) -> Var {
        self.push(tensor, Op::Leaf)
    }

    pub fn needs_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn scalar(&mut self, value: f64) -> Var {
        self.leaf(Tensor::scalar(value))
    }

    pub fn column(&mut self, values: Vec<f64>) -> Var {
        self.leaf(Tensor::column(values))
    }

    pub fn tensor(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].tensor
    }

    pub fn value(&self, v: Var) -> &[f64] {
        self.nodes[v.0].tensor.values()
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].tensor.shape()
    }

    pub fn grad(&self, v: Var) -> &[f64] {
        self.nodes[v.0].tensor.grad()
    }

    /// Scalar value of a one-element node.
    pub fn item(&self, v: Var) -> Option<f64> {
        self.nodes[v.0].tensor.item()
    }

    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            node.tensor.zero_grad();
        }
    }

    fn push(&mut self, tensor: Tensor, op: Op) -> Var {
        let needs = |v: &Var| self.nodes[v.0].needs_grad;
        let needs_grad = match &op {
            Op::Leaf => false,
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Mul(a, b) => needs(a) || needs(b),
            Op::Affine { x, .. }
            | Op::Tanh(x)
            | Op::Exp(x)
            | Op::Log(x)
            | Op::Relu(x)
            | Op::LogSoftmax(x)
            | Op::Sum(x)
            | Op::Mean(x)
            | Op::GatherRows { x, .. }
            | Op::Pick { x, .. } => needs(x),
        };
        self.nodes.push(Node { tensor, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn check(&self, v: Var) -> Result<()> {
        if v.0 < self.nodes.len() {
            Ok(())
        } else {
            Err(AutodiffError::UnknownNode(v.0))
        }
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        self.check(a)?;
        self.check(b)?;
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(AutodiffError::ShapeMismatch {
                op,
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        Ok(())
    }

    fn map_unary(&mut self, x: Var, op: Op, f: impl Fn(f64) -> f64) -> Result<Var> {
        self.check(x)?;
        let t = self.tensor(x);
        let values = t.values.iter().map(|&v| f(v)).collect();
        let out = Tensor::new(t.shape.clone(), values)?;
        Ok(self.push(out, op))
    }

    /// `[m, k] · [k, n] -> [m, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let (ta, tb) = (self.tensor(a), self.tensor(b));
        if ta.shape.len() != 2 {
            return Err(AutodiffError::Rank {
                op: "matmul",
                expected: 2,
                shape: ta.shape.clone(),
            });
        }
        if tb.shape.len() != 2 {
            return Err(AutodiffError::Rank {
                op: "matmul",
                expected: 2,
                shape: tb.shape.clone(),
            });
        }
        let (m, k) = (ta.shape[0], ta.shape[1]);
        let (k2, n) = (tb.shape[0], tb.shape[1]);
        if k != k2 {
            return Err(AutodiffError::ShapeMismatch {
                op: "matmul",
                lhs: ta.shape.clone(),
                rhs: tb.shape.clone(),
            });
        }
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &ta.values[i * k..(i + 1) * k];
            let dst = &mut out[i * n..(i + 1) * n];
            for (p, &aip) in row.iter().enumerate() {
                if aip == 0.0 {
                    continue;
                }
                let brow = &tb.values[p * n..(p + 1) * n];
                for (d, &bpj) in dst.iter_mut().zip(brow) {
                    *d += aip * bpj;
                }
            }
        }
        let out = Tensor::new(vec![m, n], out)?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let (ta, tb) = (self.tensor(a), self.tensor(b));
        let values = ta.values.iter().zip(&tb.values).map(|(x, y)| x + y).collect();
        let out = Tensor::new(ta.shape.clone(), values)?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let (ta, tb) = (self.tensor(a), self.tensor(b));
        let values = ta.values.iter().zip(&tb.values).map(|(x, y)| x * y).collect();
        let out = Tensor::new(ta.shape.clone(), values)?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    /// `scale * x + shift`, elementwise.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Result<Var> {
        self.map_unary(x, Op::Affine { x, scale }, |v| scale * v + shift)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let neg = self.affine(b, -1.0, 0.0)?;
        self.add(a, neg)
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.map_unary(x, Op::Tanh(x), f64::tanh)
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        self.map_unary(x, Op::Exp(x), f64::exp)
    }

    /// Natural log. Non-positive entries are a domain error; callers clamp.
    pub fn log(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        if let Some((index, &value)) = self.value(x).iter().enumerate().find(|(_, v)| v.is_nan() || **v <= 0.0) {
            return Err(AutodiffError::Domain {
                op: "log",
                index,
                value,
            });
        }
        self.map_unary(x, Op::Log(x), f64::ln)
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.map_unary(x, Op::Relu(x), |v| v.max(0.0))
    }

    /// Log-softmax over the last axis.
    pub fn log_softmax(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let t = self.tensor(x);
        let (rows, cols) = t.rows_cols();
        let mut values = t.values.clone();
        for r in 0..rows {
            let row = &mut values[r * cols..(r + 1) * cols];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            row.iter_mut().for_each(|v| *v -= lse);
        }
        let out = Tensor::new(t.shape.clone(), values)?;
        Ok(self.push(out, Op::LogSoftmax(x)))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let s = self.value(x).iter().sum();
        Ok(self.push(Tensor::scalar(s), Op::Sum(x)))
    }

    /// Mean of all entries. The mean of an empty tensor is 0.
    pub fn mean(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let vals = self.value(x);
        let m = if vals.is_empty() {
            0.0
        } else {
            vals.iter().sum::<f64>() / vals.len() as f64
        };
        Ok(self.push(Tensor::scalar(m), Op::Mean(x)))
    }

    /// Rows `idx` of a 2-d tensor (or elements of a 1-d one), in order.
    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        self.check(x)?;
        let t = self.tensor(x);
        let (shape, width) = match t.shape.as_slice() {
            [_] => (vec![idx.len()], 1),
            [_, c] => (vec![idx.len(), *c], *c),
            _ => {
                return Err(AutodiffError::Rank {
                    op: "gather_rows",
                    expected: 2,
                    shape: t.shape.clone(),
                })
            }
        };
        let rows = t.shape[0];
        let mut values = Vec::with_capacity(idx.len() * width);
        for &i in idx {
            if i >= rows {
                return Err(AutodiffError::IndexOutOfRange {
                    op: "gather_rows",
                    index: i,
                    len: rows,
                });
            }
            values.extend_from_slice(&t.values[i * width..(i + 1) * width]);
        }
        let out = Tensor::new(shape, values)?;
        Ok(self.push(out, Op::GatherRows { x, idx: idx.to_vec() }))
    }

    /// Entry `(r, idx[r])` of every row of an `[n, c]` tensor, as `[n, 1]`.
    pub fn pick(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        self.check(x)?;
        let t = self.tensor(x);
        let [rows, cols] = t.shape.as_slice() else {
            return Err(AutodiffError::Rank {
                op: "pick",
                expected: 2,
                shape: t.shape.clone(),
            });
        };
        if idx.len() != *rows {
            return Err(AutodiffError::ShapeMismatch {
                op: "pick",
                lhs: t.shape.clone(),
                rhs: vec![idx.len()],
            });
        }
        let mut values = Vec::with_capacity(*rows);
        for (r, &c) in idx.iter().enumerate() {
            if c >= *cols {
                return Err(AutodiffError::IndexOutOfRange {
                    op: "pick",
                    index: c,
                    len: *cols,
                });
            }
            values.push(t.values[r * cols + c]);
        }
        let out = Tensor::column(values);
        Ok(self.push(out, Op::Pick { x, idx: idx.to_vec() }))
    }

    /// Accumulates `d loss / d node` into the gradient buffer of every node
    /// reachable from `loss` that depends on a trainable leaf. Gradients are
    /// added, never overwritten.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        self.check(loss)?;
        if self.tensor(loss).len() != 1 {
            return Err(AutodiffError::NonScalarLoss {
                shape: self.shape(loss).to_vec(),
            });
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            if !self.nodes[i].needs_grad {
                continue;
            }
            self.propagate(i, &g, &mut adj);
            for (dst, src) in self.nodes[i].tensor.grad.iter_mut().zip(&g) {
                *dst += src;
            }
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f64], adj: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let out = &node.tensor;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.tensor(*a), self.tensor(*b));
                let (m, k) = (ta.shape[0], ta.shape[1]);
                let n = tb.shape[1];
                let (need_a, need_b) = (self.nodes[a.0].needs_grad, self.nodes[b.0].needs_grad);
                if need_a {
                    let mut ga = vec![0.0; m * k];
                    for r in 0..m {
                        let grow = &g[r * n..(r + 1) * n];
                        for p in 0..k {
                            let brow = &tb.values[p * n..(p + 1) * n];
                            ga[r * k + p] = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
                        }
                    }
                    accumulate(adj, *a, &ga);
                }
                if need_b {
                    let mut gb = vec![0.0; k * n];
                    for r in 0..m {
                        let grow = &g[r * n..(r + 1) * n];
                        for p in 0..k {
                            let arp = ta.values[r * k + p];
                            if arp != 0.0 {
                                for (dst, &gj) in gb[p * n..(p + 1) * n].iter_mut().zip(grow) {
                                    *dst += arp * gj;
                                }
                            }
                        }
                    }
                    accumulate(adj, *b, &gb);
                }
            }
            Op::Add(a, b) => {
                accumulate(adj, *a, g);
                accumulate(adj, *b, g);
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let ga: Vec<f64> = g.iter().zip(vb).map(|(x, y)| x * y).collect();
                let gb: Vec<f64> = g.iter().zip(va).map(|(x, y)| x * y).collect();
                accumulate(adj, *a, &ga);
                accumulate(adj, *b, &gb);
            }
            Op::Affine { x, scale } => {
                let gx: Vec<f64> = g.iter().map(|v| v * scale).collect();
                accumulate(adj, *x, &gx);
            }
            Op::Tanh(x) => {
                let gx: Vec<f64> = g.iter().zip(&out.values).map(|(gi, y)| gi * (1.0 - y * y)).collect();
                accumulate(adj, *x, &gx);
            }
            Op::Exp(x) => {
                let gx: Vec<f64> = g.iter().zip(&out.values).map(|(gi, y)| gi * y).collect();
                accumulate(adj, *x, &gx);
            }
            Op::Log(x) => {
                let gx: Vec<f64> = g.iter().zip(self.value(*x)).map(|(gi, v)| gi / v).collect();
                accumulate(adj, *x, &gx);
            }
            Op::Relu(x) => {
                let gx: Vec<f64> = g
                    .iter()
                    .zip(self.value(*x))
                    .map(|(gi, v)| if *v > 0.0 { *gi } else { 0.0 })
                    .collect();
                accumulate(adj, *x, &gx);
            }
            Op::LogSoftmax(x) => {
                let (rows, cols) = out.rows_cols();
                let mut gx = vec![0.0; g.len()];
                for r in 0..rows {
                    let span = r * cols..(r + 1) * cols;
                    let total: f64 = g[span.clone()].iter().sum();
                    for j in span {
                        gx[j] = g[j] - out.values[j].exp() * total;
                    }
                }
                accumulate(adj, *x, &gx);
            }
            Op::Sum(x) => {
                let n = self.tensor(*x).len();
                accumulate(adj, *x, &vec![g[0]; n]);
            }
            Op::Mean(x) => {
                let n = self.tensor(*x).len();
                if n > 0 {
                    accumulate(adj, *x, &vec![g[0] / n as f64; n]);
                }
            }
            Op::GatherRows { x, idx } => {
                let t = self.tensor(*x);
                let width = if t.shape.len() == 2 { t.shape[1] } else { 1 };
                let mut gx = vec![0.0; t.len()];
                for (r, &src) in idx.iter().enumerate() {
                    for c in 0..width {
                        gx[src * width + c] += g[r * width + c];
                    }
                }
                accumulate(adj, *x, &gx);
            }
            Op::Pick { x, idx } => {
                let t = self.tensor(*x);
                let cols = t.shape[1];
                let mut gx = vec![0.0; t.len()];
                for (r, &c) in idx.iter().enumerate() {
                    gx[r * cols + c] += g[r];
                }
                accumulate(adj, *x, &gx);
            }
        }
    }
}

fn accumulate(adj: &mut [Option<Vec<f64>>], v: Var, g: &[f64]) {
    match &mut adj[v.0] {
        Some(existing) => existing.iter_mut().zip(g).for_each(|(e, x)| *e += x),
        slot @ None => *slot = Some(g.to_vec()),
    }
}
