//! Reverse-mode tape.
//!
//! Every operation appends one node holding its output value and enough of
//! its inputs to run the backward rule. Inputs always precede outputs, so the
//! node vector is already in topological order and backward is a single
//! reverse sweep.

use super::kernels;
use super::{default_precision, Precision, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`]. Only meaningful for the tape that made it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

/// Operation kinds accepted by [`Tape::apply`], with their attributes.
#[derive(Clone, Debug, PartialEq)]
pub enum OpKind {
    MatMul,
    Add,
    Sub,
    Mul,
    Scale(f64),
    AddScalar(f64),
    Sigmoid,
    Tanh,
    Exp,
    Log,
    Softmax,
    LogSoftmax,
    /// Row lookup into a `[rows, cols]` table.
    Gather(Vec<usize>),
    ConcatCols,
    ConcatRows,
    SliceCols {
        start: usize,
        len: usize,
    },
    Reshape(Vec<usize>),
    Sum,
    Mean,
    /// Column-wise sum over rows, `[m,n] -> [1,n]`.
    SumRows,
    /// Row-wise sum over columns, `[m,n] -> [m,1]`.
    SumCols,
    /// Weighted sum of per-row negative log-likelihoods of `targets`.
    CrossEntropy {
        targets: Vec<usize>,
        weights: Vec<f64>,
    },
    /// `sum p ln(p/q)` over all entries of two same-shape tensors.
    CategoricalKl,
    Clamp {
        lo: f64,
        hi: f64,
    },
    /// Forward the given hard value; route gradients to the input unchanged.
    StraightThrough(Tensor),
    /// Per-row Euclidean norm, `[m,n] -> [m,1]`.
    L2NormRows,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Bcast {
    Same,
    Row,
    Col,
    Scalar,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum BinKind {
    Add,
    Sub,
    Mul,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum UnKind {
    Sigmoid,
    Tanh,
    Exp,
    Log,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Binary(BinKind, usize, usize, Bcast),
    Unary(UnKind, usize),
    Scale(usize, f64),
    AddScalar(usize),
    Softmax(usize),
    LogSoftmax(usize),
    Gather {
        table: usize,
        ids: Vec<usize>,
    },
    ConcatCols(Vec<usize>),
    ConcatRows(Vec<usize>),
    SliceCols {
        x: usize,
        start: usize,
    },
    Reshape(usize),
    Sum(usize),
    Mean(usize),
    SumRows(usize),
    SumCols(usize),
    CrossEntropy {
        logits: usize,
        targets: Vec<usize>,
        weights: Vec<f64>,
        probs: Vec<f64>,
    },
    CategoricalKl(usize, usize),
    Clamp {
        x: usize,
        lo: f64,
        hi: f64,
    },
    StraightThrough(usize),
    L2NormRows(usize),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    /// Accumulated gradient; only kept for leaves.
    grad: Option<Vec<f64>>,
}

pub struct Tape {
    nodes: Vec<Node>,
    precision: Precision,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::with_precision(default_precision())
    }

    pub fn with_precision(precision: Precision) -> Self {
        Self {
            nodes: Vec::new(),
            precision,
        }
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, mut value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.precision.round(value.data_mut());
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// Trainable input; receives gradients from [`Tape::backward`].
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
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

    /// Accumulated gradient of a leaf, if backward has reached it.
    pub fn grad(&self, v: Var) -> Option<Tensor> {
        let n = &self.nodes[v.0];
        n.grad
            .as_ref()
            .map(|g| Tensor::new(n.value.shape(), g.clone()).expect("grad shape"))
    }

    pub fn zero_grads(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    fn rg(&self, ids: &[usize]) -> bool {
        ids.iter().any(|&i| self.nodes[i].requires_grad)
    }

    /// Generic entry point: run `kind` on `inputs`.
    pub fn apply(&mut self, kind: OpKind, inputs: &[Var]) -> Result<Var> {
        let arity = |n: usize| -> Result<()> {
            if inputs.len() == n {
                Ok(())
            } else {
                Err(Error::invalid(format!(
                    "{kind:?} expects {n} inputs, got {}",
                    inputs.len()
                )))
            }
        };
        match kind {
            OpKind::MatMul => arity(2).and_then(|_| self.matmul(inputs[0], inputs[1])),
            OpKind::Add => arity(2).and_then(|_| self.add(inputs[0], inputs[1])),
            OpKind::Sub => arity(2).and_then(|_| self.sub(inputs[0], inputs[1])),
            OpKind::Mul => arity(2).and_then(|_| self.mul(inputs[0], inputs[1])),
            OpKind::Scale(c) => arity(1).map(|_| self.scale(inputs[0], c)),
            OpKind::AddScalar(c) => arity(1).map(|_| self.add_scalar(inputs[0], c)),
            OpKind::Sigmoid => arity(1).map(|_| self.sigmoid(inputs[0])),
            OpKind::Tanh => arity(1).map(|_| self.tanh(inputs[0])),
            OpKind::Exp => arity(1).map(|_| self.exp(inputs[0])),
            OpKind::Log => arity(1).map(|_| self.log(inputs[0])),
            OpKind::Softmax => arity(1).map(|_| self.softmax(inputs[0])),
            OpKind::LogSoftmax => arity(1).map(|_| self.log_softmax(inputs[0])),
            OpKind::Gather(ref ids) => arity(1).and_then(|_| self.gather(inputs[0], ids)),
            OpKind::ConcatCols => self.concat_cols(inputs),
            OpKind::ConcatRows => self.concat_rows(inputs),
            OpKind::SliceCols { start, len } => arity(1).and_then(|_| self.slice_cols(inputs[0], start, len)),
            OpKind::Reshape(ref s) => arity(1).and_then(|_| self.reshape(inputs[0], s)),
            OpKind::Sum => arity(1).map(|_| self.sum(inputs[0])),
            OpKind::Mean => arity(1).map(|_| self.mean(inputs[0])),
            OpKind::SumRows => arity(1).map(|_| self.sum_rows(inputs[0])),
            OpKind::SumCols => arity(1).map(|_| self.sum_cols(inputs[0])),
            OpKind::CrossEntropy {
                ref targets,
                ref weights,
            } => arity(1).and_then(|_| self.cross_entropy(inputs[0], targets, weights)),
            OpKind::CategoricalKl => arity(2).and_then(|_| self.categorical_kl(inputs[0], inputs[1])),
            OpKind::Clamp { lo, hi } => arity(1).map(|_| self.clamp(inputs[0], lo, hi)),
            OpKind::StraightThrough(ref hard) => arity(1).and_then(|_| self.straight_through(inputs[0], hard.clone())),
            OpKind::L2NormRows => arity(1).map(|_| self.l2_norm_rows(inputs[0])),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape().len() != 2 || tb.shape().len() != 2 || ta.cols() != tb.rows() {
            return Err(Error::shape("matmul", ta.shape(), tb.shape()));
        }
        let (m, k) = ta.dims2();
        let n = tb.cols();
        let out = kernels::matmul(ta.data(), tb.data(), m, k, n);
        let rg = self.rg(&[a.0, b.0]);
        Ok(self.push(Tensor::matrix(m, n, out), Op::MatMul(a.0, b.0), rg))
    }

    fn binary(&mut self, kind: BinKind, name: &'static str, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (ma, na) = ta.dims2();
        let (mb, nb) = tb.dims2();
        let bc = if ta.shape() == tb.shape() {
            Bcast::Same
        } else if tb.numel() == 1 {
            Bcast::Scalar
        } else if mb == 1 && nb == na {
            Bcast::Row
        } else if nb == 1 && mb == ma {
            Bcast::Col
        } else {
            return Err(Error::shape(name, ta.shape(), tb.shape()));
        };
        let (ad, bd) = (ta.data(), tb.data());
        let f = |x: f64, y: f64| match kind {
            BinKind::Add => x + y,
            BinKind::Sub => x - y,
            BinKind::Mul => x * y,
        };
        let out: Vec<f64> = match bc {
            Bcast::Same => ad.iter().zip(bd).map(|(&x, &y)| f(x, y)).collect(),
            Bcast::Scalar => ad.iter().map(|&x| f(x, bd[0])).collect(),
            Bcast::Row => ad.iter().enumerate().map(|(i, &x)| f(x, bd[i % na])).collect(),
            Bcast::Col => ad.iter().enumerate().map(|(i, &x)| f(x, bd[i / na])).collect(),
        };
        let shape = ta.shape().to_vec();
        let rg = self.rg(&[a.0, b.0]);
        Ok(self.push(Tensor::new(&shape, out)?, Op::Binary(kind, a.0, b.0, bc), rg))
    }

    /// Elementwise `a + b`; `b` may broadcast as a row, column or scalar.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinKind::Add, "add", a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinKind::Sub, "sub", a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinKind::Mul, "mul", a, b)
    }

    fn map_unary(&mut self, x: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let t = self.value(x);
        let out: Vec<f64> = t.data().iter().map(|&v| f(v)).collect();
        let value = Tensor::new(t.shape(), out).expect("unary shape");
        let rg = self.nodes[x.0].requires_grad;
        self.push(value, op, rg)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.map_unary(x, Op::Scale(x.0, c), |v| v * c)
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        self.map_unary(x, Op::AddScalar(x.0), |v| v + c)
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.scale(x, -1.0)
    }

    /// `1 - x`.
    pub fn one_minus(&mut self, x: Var) -> Var {
        let n = self.neg(x);
        self.add_scalar(n, 1.0)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.map_unary(x, Op::Unary(UnKind::Sigmoid, x.0), |v| {
            if v >= 0.0 {
                1.0 / (1.0 + (-v).exp())
            } else {
                let e = v.exp();
                e / (1.0 + e)
            }
        })
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.map_unary(x, Op::Unary(UnKind::Tanh, x.0), f64::tanh)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.map_unary(x, Op::Unary(UnKind::Exp, x.0), f64::exp)
    }

    pub fn log(&mut self, x: Var) -> Var {
        self.map_unary(x, Op::Unary(UnKind::Log, x.0), f64::ln)
    }

    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        self.map_unary(x, Op::Clamp { x: x.0, lo, hi }, |v| v.clamp(lo, hi))
    }

    /// Row-wise softmax over the last dimension.
    pub fn softmax(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let out = kernels::softmax_rows(t.data(), t.cols());
        let value = Tensor::new(t.shape(), out).expect("softmax shape");
        let rg = self.nodes[x.0].requires_grad;
        self.push(value, Op::Softmax(x.0), rg)
    }

    pub fn log_softmax(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let out = kernels::log_softmax_rows(t.data(), t.cols());
        let value = Tensor::new(t.shape(), out).expect("log_softmax shape");
        let rg = self.nodes[x.0].requires_grad;
        self.push(value, Op::LogSoftmax(x.0), rg)
    }

    /// Rows `ids` of a `[rows, cols]` table, as `[ids.len(), cols]`.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let t = self.value(table);
        let (rows, cols) = t.dims2();
        if ids.is_empty() {
            return Err(Error::invalid("gather: empty index list"));
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= rows) {
            return Err(Error::Index {
                what: "gather table",
                index: bad,
                size: rows,
            });
        }
        let mut out = Vec::with_capacity(ids.len() * cols);
        for &i in ids {
            out.extend_from_slice(t.row_slice(i));
        }
        let rg = self.nodes[table.0].requires_grad;
        Ok(self.push(
            Tensor::matrix(ids.len(), cols, out),
            Op::Gather {
                table: table.0,
                ids: ids.to_vec(),
            },
            rg,
        ))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| Error::invalid("concat: no inputs"))?;
        let m = self.value(first).rows();
        for &p in parts {
            if self.value(p).rows() != m {
                return Err(Error::shape(
                    "concat_cols",
                    self.value(first).shape(),
                    self.value(p).shape(),
                ));
            }
        }
        let widths: Vec<usize> = parts.iter().map(|&p| self.value(p).cols()).collect();
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(m * total);
        for r in 0..m {
            for &p in parts {
                out.extend_from_slice(self.value(p).row_slice(r));
            }
        }
        let ids: Vec<usize> = parts.iter().map(|p| p.0).collect();
        let rg = self.rg(&ids);
        Ok(self.push(Tensor::matrix(m, total, out), Op::ConcatCols(ids), rg))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| Error::invalid("concat: no inputs"))?;
        let n = self.value(first).cols();
        let mut out = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let t = self.value(p);
            if t.cols() != n {
                return Err(Error::shape("concat_rows", self.value(first).shape(), t.shape()));
            }
            rows += t.rows();
            out.extend_from_slice(t.data());
        }
        let ids: Vec<usize> = parts.iter().map(|p| p.0).collect();
        let rg = self.rg(&ids);
        Ok(self.push(Tensor::matrix(rows, n, out), Op::ConcatRows(ids), rg))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(x);
        let (m, n) = t.dims2();
        if len == 0 || start + len > n {
            return Err(Error::shape("slice_cols", t.shape(), &[start, len]));
        }
        let mut out = Vec::with_capacity(m * len);
        for r in 0..m {
            out.extend_from_slice(&t.row_slice(r)[start..start + len]);
        }
        let rg = self.nodes[x.0].requires_grad;
        Ok(self.push(Tensor::matrix(m, len, out), Op::SliceCols { x: x.0, start }, rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x);
        let value = Tensor::new(shape, t.data().to_vec()).map_err(|_| Error::shape("reshape", t.shape(), shape))?;
        let rg = self.nodes[x.0].requires_grad;
        Ok(self.push(value, Op::Reshape(x.0), rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let rg = self.nodes[x.0].requires_grad;
        self.push(Tensor::scalar(s), Op::Sum(x.0), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let s = t.data().iter().sum::<f64>() / t.numel() as f64;
        let rg = self.nodes[x.0].requires_grad;
        self.push(Tensor::scalar(s), Op::Mean(x.0), rg)
    }

    pub fn sum_rows(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let (m, n) = t.dims2();
        let mut out = vec![0.0; n];
        for r in 0..m {
            for (o, v) in out.iter_mut().zip(t.row_slice(r)) {
                *o += v;
            }
        }
        let rg = self.nodes[x.0].requires_grad;
        self.push(Tensor::matrix(1, n, out), Op::SumRows(x.0), rg)
    }

    pub fn sum_cols(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let m = t.rows();
        let out: Vec<f64> = (0..m).map(|r| t.row_slice(r).iter().sum()).collect();
        let rg = self.nodes[x.0].requires_grad;
        self.push(Tensor::matrix(m, 1, out), Op::SumCols(x.0), rg)
    }

    /// `sum_i weights[i] * -ln softmax(logits_i)[targets[i]]`.
    ///
    /// A weight of zero masks the row out (padding positions).
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize], weights: &[f64]) -> Result<Var> {
        let t = self.value(logits);
        let (m, n) = t.dims2();
        if targets.len() != m || weights.len() != m {
            return Err(Error::shape(
                "cross_entropy",
                t.shape(),
                &[targets.len(), weights.len()],
            ));
        }
        if let Some(&bad) = targets.iter().find(|&&c| c >= n) {
            return Err(Error::Index {
                what: "cross_entropy classes",
                index: bad,
                size: n,
            });
        }
        let logp = kernels::log_softmax_rows(t.data(), n);
        let loss: f64 = (0..m)
            .filter(|&i| weights[i] != 0.0)
            .map(|i| -weights[i] * logp[i * n + targets[i]])
            .sum();
        let probs = logp.into_iter().map(f64::exp).collect();
        let rg = self.nodes[logits.0].requires_grad;
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits: logits.0,
                targets: targets.to_vec(),
                weights: weights.to_vec(),
                probs,
            },
            rg,
        ))
    }

    /// `sum p ln(p/q)` over every entry, with `0 ln 0 = 0`.
    pub fn categorical_kl(&mut self, p: Var, q: Var) -> Result<Var> {
        let (tp, tq) = (self.value(p), self.value(q));
        if tp.shape() != tq.shape() {
            return Err(Error::shape("categorical_kl", tp.shape(), tq.shape()));
        }
        let kl = tp
            .data()
            .iter()
            .zip(tq.data())
            .filter(|(&a, _)| a > 0.0)
            .map(|(&a, &b)| a * (a / b).ln())
            .sum();
        let rg = self.rg(&[p.0, q.0]);
        Ok(self.push(Tensor::scalar(kl), Op::CategoricalKl(p.0, q.0), rg))
    }

    pub fn straight_through(&mut self, relaxed: Var, hard: Tensor) -> Result<Var> {
        if hard.shape() != self.shape(relaxed) {
            return Err(Error::shape("straight_through", self.shape(relaxed), hard.shape()));
        }
        let rg = self.nodes[relaxed.0].requires_grad;
        Ok(self.push(hard, Op::StraightThrough(relaxed.0), rg))
    }

    pub fn l2_norm_rows(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let m = t.rows();
        let out: Vec<f64> = (0..m)
            .map(|r| t.row_slice(r).iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        let rg = self.nodes[x.0].requires_grad;
        self.push(Tensor::matrix(m, 1, out), Op::L2NormRows(x.0), rg)
    }

    /// Accumulate `d out / d leaf` into every gradient-requiring leaf.
    pub fn backward(&mut self, out: Var) -> Result<()> {
        let shape = self.value(out).shape().to_vec();
        if self.value(out).numel() != 1 {
            return Err(Error::NonScalar(shape));
        }
        if !self.nodes[out.0].requires_grad {
            return Ok(());
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..=out.0).map(|_| None).collect();
        grads[out.0] = Some(vec![1.0]);
        for i in (0..=out.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            if let Op::Leaf = node.op {
                grads[i] = Some(g);
                continue;
            }
            self.propagate(i, &g, &mut grads);
        }
        for (i, g) in grads.into_iter().enumerate() {
            if let Some(g) = g {
                let node = &mut self.nodes[i];
                if matches!(node.op, Op::Leaf) && node.requires_grad {
                    match &mut node.grad {
                        Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                        None => node.grad = Some(g),
                    }
                }
            }
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let val = node.value.data();
        let wants = |j: usize| self.nodes[j].requires_grad;
        let mut acc = |j: usize, contrib: Vec<f64>| match &mut grads[j] {
            Some(a) => a.iter_mut().zip(&contrib).for_each(|(x, y)| *x += y),
            slot @ None => *slot = Some(contrib),
        };
        match &node.op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                let (ta, tb) = (&self.nodes[a].value, &self.nodes[b].value);
                let (m, k) = ta.dims2();
                let n = tb.cols();
                if wants(a) {
                    acc(a, kernels::matmul_bt(g, tb.data(), m, n, k));
                }
                if wants(b) {
                    acc(b, kernels::matmul_at(ta.data(), g, m, k, n));
                }
            }
            &Op::Binary(kind, a, b, bc) => {
                let (ad, bd) = (self.nodes[a].value.data(), self.nodes[b].value.data());
                let na = self.nodes[a].value.cols();
                let bi = |idx: usize| match bc {
                    Bcast::Same => idx,
                    Bcast::Scalar => 0,
                    Bcast::Row => idx % na,
                    Bcast::Col => idx / na,
                };
                if wants(a) {
                    let ga = match kind {
                        BinKind::Add | BinKind::Sub => g.to_vec(),
                        BinKind::Mul => g.iter().enumerate().map(|(idx, &gv)| gv * bd[bi(idx)]).collect(),
                    };
                    acc(a, ga);
                }
                if wants(b) {
                    let mut gb = vec![0.0; bd.len()];
                    for (idx, &gv) in g.iter().enumerate() {
                        gb[bi(idx)] += match kind {
                            BinKind::Add => gv,
                            BinKind::Sub => -gv,
                            BinKind::Mul => gv * ad[idx],
                        };
                    }
                    acc(b, gb);
                }
            }
            &Op::Unary(kind, x) => {
                let xd = self.nodes[x].value.data();
                let gx = g
                    .iter()
                    .enumerate()
                    .map(|(idx, &gv)| {
                        gv * match kind {
                            UnKind::Sigmoid => val[idx] * (1.0 - val[idx]),
                            UnKind::Tanh => 1.0 - val[idx] * val[idx],
                            UnKind::Exp => val[idx],
                            UnKind::Log => 1.0 / xd[idx],
                        }
                    })
                    .collect();
                acc(x, gx);
            }
            &Op::Scale(x, c) => acc(x, g.iter().map(|v| v * c).collect()),
            &Op::AddScalar(x) | &Op::Reshape(x) | &Op::StraightThrough(x) => acc(x, g.to_vec()),
            &Op::Clamp { x, lo, hi } => {
                let xd = self.nodes[x].value.data();
                acc(
                    x,
                    g.iter()
                        .zip(xd)
                        .map(|(&gv, &v)| if v >= lo && v <= hi { gv } else { 0.0 })
                        .collect(),
                );
            }
            &Op::Softmax(x) => {
                let n = node.value.cols();
                let mut gx = vec![0.0; val.len()];
                for ((gr, yr), out) in g.chunks(n).zip(val.chunks(n)).zip(gx.chunks_mut(n)) {
                    let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                    for ((o, &gv), &y) in out.iter_mut().zip(gr).zip(yr) {
                        *o = y * (gv - dot);
                    }
                }
                acc(x, gx);
            }
            &Op::LogSoftmax(x) => {
                let n = node.value.cols();
                let mut gx = vec![0.0; val.len()];
                for ((gr, lr), out) in g.chunks(n).zip(val.chunks(n)).zip(gx.chunks_mut(n)) {
                    let s: f64 = gr.iter().sum();
                    for ((o, &gv), &l) in out.iter_mut().zip(gr).zip(lr) {
                        *o = gv - l.exp() * s;
                    }
                }
                acc(x, gx);
            }
            Op::Gather { table, ids } => {
                let t = &self.nodes[*table].value;
                let cols = t.cols();
                let mut gt = vec![0.0; t.numel()];
                for (r, &id) in ids.iter().enumerate() {
                    for (o, &gv) in gt[id * cols..(id + 1) * cols]
                        .iter_mut()
                        .zip(&g[r * cols..(r + 1) * cols])
                    {
                        *o += gv;
                    }
                }
                acc(*table, gt);
            }
            Op::ConcatCols(parts) => {
                let total = node.value.cols();
                let m = node.value.rows();
                let mut offset = 0;
                for &p in parts {
                    let w = self.nodes[p].value.cols();
                    if wants(p) {
                        let mut gp = Vec::with_capacity(m * w);
                        for r in 0..m {
                            gp.extend_from_slice(&g[r * total + offset..r * total + offset + w]);
                        }
                        acc(p, gp);
                    }
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.nodes[p].value.numel();
                    if wants(p) {
                        acc(p, g[offset..offset + len].to_vec());
                    }
                    offset += len;
                }
            }
            &Op::SliceCols { x, start } => {
                let tx = &self.nodes[x].value;
                let (m, n) = tx.dims2();
                let len = node.value.cols();
                let mut gx = vec![0.0; m * n];
                for r in 0..m {
                    gx[r * n + start..r * n + start + len].copy_from_slice(&g[r * len..(r + 1) * len]);
                }
                acc(x, gx);
            }
            &Op::Sum(x) => acc(x, vec![g[0]; self.nodes[x].value.numel()]),
            &Op::Mean(x) => {
                let n = self.nodes[x].value.numel();
                acc(x, vec![g[0] / n as f64; n]);
            }
            &Op::SumRows(x) => {
                let m = self.nodes[x].value.rows();
                acc(x, g.repeat(m));
            }
            &Op::SumCols(x) => {
                let n = self.nodes[x].value.cols();
                acc(x, g.iter().flat_map(|&gv| std::iter::repeat_n(gv, n)).collect());
            }
            Op::CrossEntropy {
                logits,
                targets,
                weights,
                probs,
            } => {
                let n = self.nodes[*logits].value.cols();
                let mut gx = vec![0.0; probs.len()];
                for (r, (&t, &w)) in targets.iter().zip(weights).enumerate() {
                    if w == 0.0 {
                        continue;
                    }
                    let s = g[0] * w;
                    for c in 0..n {
                        gx[r * n + c] = s * probs[r * n + c];
                    }
                    gx[r * n + t] -= s;
                }
                acc(*logits, gx);
            }
            &Op::CategoricalKl(p, q) => {
                let (pd, qd) = (self.nodes[p].value.data(), self.nodes[q].value.data());
                if wants(p) {
                    acc(
                        p,
                        pd.iter()
                            .zip(qd)
                            .map(|(&a, &b)| g[0] * ((a.max(f64::MIN_POSITIVE) / b).ln() + 1.0))
                            .collect(),
                    );
                }
                if wants(q) {
                    acc(q, pd.iter().zip(qd).map(|(&a, &b)| -g[0] * a / b).collect());
                }
            }
            &Op::L2NormRows(x) => {
                let tx = &self.nodes[x].value;
                let n = tx.cols();
                let mut gx = vec![0.0; tx.numel()];
                for (r, (&norm, &gv)) in val.iter().zip(g).enumerate() {
                    if norm > 0.0 {
                        for c in 0..n {
                            gx[r * n + c] = gv * tx.data()[r * n + c] / norm;
                        }
                    }
                }
                acc(x, gx);
            }
        }
    }
}
