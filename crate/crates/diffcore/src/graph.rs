//! Tape of tensor operations with reverse-mode gradient propagation.
//!
//! A [`Graph`] records every operation applied during one forward pass.
//! Calling [`Graph::backward`] walks the tape in reverse and accumulates
//! gradients of a scalar loss into the [`ParamStore`] the parameters came
//! from. Graphs are cheap to build and meant to be discarded after each
//! optimization step.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{DiffError, Result};
use crate::params::{ParamId, ParamStore};
use crate::tensor::{gemm, Tensor};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Copy, Debug)]
enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Copy, Debug)]
enum UnaryOp {
    Sigmoid,
    Tanh,
    Exp,
    Log,
    Abs,
    Softplus,
    Square,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Transpose(Var),
    Reshape(Var),
    Binary(BinOp, Var, Var),
    Scale(Var, f64),
    Offset(Var),
    Unary(UnaryOp, Var),
    ClampMin(Var, f64),
    SumAll(Var),
    SumCols(Var),
    MeanRows(Var),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    LogSumExpRows(Var),
    MinCols(Var, Vec<usize>),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    GatherRows(Var, Vec<usize>),
    SegmentMean(Var, Vec<Vec<usize>>),
    GatherDot(Var, Var, Vec<(usize, usize)>),
    SegmentLogSoftmax(Var, Vec<(usize, usize)>),
    PairwiseL1(Var),
    CosineMatrix(Var, Var),
    LayerNorm(Var, Vec<f64>),
    Dropout(Var, Vec<f64>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Record of one forward pass.
#[derive(Debug)]
pub struct Graph {
    nodes: Vec<Node>,
    training: bool,
    rng: ChaCha8Rng,
    params: HashMap<ParamId, Var>,
}

const COS_EPS: f64 = 1e-12;

impl Graph {
    /// `training` enables dropout; `seed` drives dropout masks.
    pub fn new(training: bool, seed: u64) -> Self {
        Self {
            nodes: Vec::new(),
            training,
            rng: ChaCha8Rng::seed_from_u64(seed),
            params: HashMap::new(),
        }
    }

    /// Evaluation-mode graph (dropout disabled).
    pub fn inference() -> Self {
        Self::new(false, 0)
    }

    pub fn is_training(&self) -> bool {
        self.training
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

    pub fn shape(&self, v: Var) -> [usize; 2] {
        self.nodes[v.0].value.shape()
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.item()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// A gradient-free input.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Copies a parameter onto the tape (once per graph).
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push(
            store.value(id).clone(),
            Op::Param(id),
            store.is_trainable(id),
        );
        self.params.insert(id, v);
        v
    }

    /// Looks a parameter up by name.
    pub fn param_named(&mut self, store: &ParamStore, name: &str) -> Result<Var> {
        let id = store.id(name)?;
        Ok(self.param(store, id))
    }

    // ----- linear algebra -------------------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa[1] != sb[0] {
            return Err(DiffError::ShapeMismatch {
                op: "matmul",
                lhs: sa,
                rhs: sb,
            });
        }
        let out = gemm(self.value(a), self.value(b), false, false);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::MatMul(a, b), ng))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        let ng = self.ng(a);
        self.push(out, Op::Transpose(a), ng)
    }

    /// Reinterprets the row-major data with a new shape of equal size.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let t = self.value(a);
        if rows * cols != t.len() {
            return Err(DiffError::InvalidArgument {
                op: "reshape",
                shape: t.shape(),
                msg: format!("cannot view as {rows}x{cols}"),
            });
        }
        let out = Tensor::from_vec(rows, cols, t.data().to_vec())?;
        let ng = self.ng(a);
        Ok(self.push(out, Op::Reshape(a), ng))
    }

    // ----- broadcasting element-wise binaries ----------------------------

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinOp::Add, "add", a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinOp::Sub, "sub", a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinOp::Mul, "mul", a, b)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinOp::Div, "div", a, b)
    }

    fn binary(&mut self, op: BinOp, name: &'static str, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let rows = broadcast_dim(sa[0], sb[0]);
        let cols = broadcast_dim(sa[1], sb[1]);
        let (Some(rows), Some(cols)) = (rows, cols) else {
            return Err(DiffError::ShapeMismatch {
                op: name,
                lhs: sa,
                rhs: sb,
            });
        };
        let (ta, tb) = (self.value(a), self.value(b));
        let mut out = Tensor::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                let x = ta.get(bi(sa[0], r), bi(sa[1], c));
                let y = tb.get(bi(sb[0], r), bi(sb[1], c));
                let z = match op {
                    BinOp::Add => x + y,
                    BinOp::Sub => x - y,
                    BinOp::Mul => x * y,
                    BinOp::Div => x / y,
                };
                out.set(r, c, z);
            }
        }
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::Binary(op, a, b), ng))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let out = self.value(a).map(|x| x * k);
        let ng = self.ng(a);
        self.push(out, Op::Scale(a, k), ng)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    /// `a + k` element-wise.
    pub fn offset(&mut self, a: Var, k: f64) -> Var {
        let out = self.value(a).map(|x| x + k);
        let ng = self.ng(a);
        self.push(out, Op::Offset(a), ng)
    }

    // ----- element-wise unaries ------------------------------------------

    fn unary(&mut self, op: UnaryOp, a: Var) -> Var {
        let f: fn(f64) -> f64 = match op {
            UnaryOp::Sigmoid => sigmoid,
            UnaryOp::Tanh => f64::tanh,
            UnaryOp::Exp => f64::exp,
            UnaryOp::Log => f64::ln,
            UnaryOp::Abs => f64::abs,
            UnaryOp::Softplus => softplus,
            UnaryOp::Square => |x| x * x,
        };
        let out = self.value(a).map(f);
        let ng = self.ng(a);
        self.push(out, Op::Unary(op, a), ng)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(UnaryOp::Sigmoid, a)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(UnaryOp::Tanh, a)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(UnaryOp::Exp, a)
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(UnaryOp::Log, a)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(UnaryOp::Abs, a)
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(UnaryOp::Softplus, a)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(UnaryOp::Square, a)
    }

    /// `max(a, floor)`; the gradient is zero where the floor is active.
    pub fn clamp_min(&mut self, a: Var, floor: f64) -> Var {
        let out = self.value(a).map(|x| x.max(floor));
        let ng = self.ng(a);
        self.push(out, Op::ClampMin(a, floor), ng)
    }

    // ----- reductions -----------------------------------------------------

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        let ng = self.ng(a);
        self.push(out, Op::SumAll(a), ng)
    }

    /// Row sums: `r x c -> r x 1`.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let col: Vec<f64> = (0..t.rows()).map(|r| t.row_slice(r).iter().sum()).collect();
        let ng = self.ng(a);
        self.push(Tensor::column(&col), Op::SumCols(a), ng)
    }

    /// Element-wise mean of the rows: `r x c -> 1 x c`.
    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if t.rows() == 0 {
            return Err(DiffError::InvalidArgument {
                op: "mean",
                shape: t.shape(),
                msg: "no rows to average".into(),
            });
        }
        let mut out = vec![0.0; t.cols()];
        for r in 0..t.rows() {
            for (o, x) in out.iter_mut().zip(t.row_slice(r)) {
                *o += x;
            }
        }
        let n = t.rows() as f64;
        out.iter_mut().for_each(|o| *o /= n);
        let ng = self.ng(a);
        Ok(self.push(Tensor::row(&out), Op::MeanRows(a), ng))
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let mut out = t.clone();
        for r in 0..t.rows() {
            let row = out.row_slice_mut(r);
            let lse = logsumexp(row);
            row.iter_mut().for_each(|x| *x = (*x - lse).exp());
        }
        let ng = self.ng(a);
        self.push(out, Op::SoftmaxRows(a), ng)
    }

    /// Row-wise log-softmax.
    pub fn log_softmax(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let mut out = t.clone();
        for r in 0..t.rows() {
            let row = out.row_slice_mut(r);
            let lse = logsumexp(row);
            row.iter_mut().for_each(|x| *x -= lse);
        }
        let ng = self.ng(a);
        self.push(out, Op::LogSoftmaxRows(a), ng)
    }

    /// Row-wise log-sum-exp: `r x c -> r x 1`.
    pub fn logsumexp_rows(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let col: Vec<f64> = (0..t.rows()).map(|r| logsumexp(t.row_slice(r))).collect();
        let ng = self.ng(a);
        self.push(Tensor::column(&col), Op::LogSumExpRows(a), ng)
    }

    /// Row-wise minimum: `r x c -> r x 1`. Gradient flows to the arg-min entry.
    pub fn min_over(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if t.cols() == 0 {
            return Err(DiffError::InvalidArgument {
                op: "min_over",
                shape: t.shape(),
                msg: "no columns".into(),
            });
        }
        let mut vals = Vec::with_capacity(t.rows());
        let mut arg = Vec::with_capacity(t.rows());
        for r in 0..t.rows() {
            let (i, m) = t
                .row_slice(r)
                .iter()
                .copied()
                .enumerate()
                .fold((0, f64::INFINITY), |acc, (i, x)| if x < acc.1 { (i, x) } else { acc });
            vals.push(m);
            arg.push(i);
        }
        let ng = self.ng(a);
        Ok(self.push(Tensor::column(&vals), Op::MinCols(a, arg), ng))
    }

    // ----- structure --------------------------------------------------------

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = parts.first().map_or(0, |&p| self.shape(p)[0]);
        for &p in parts {
            if self.shape(p)[0] != rows {
                return Err(DiffError::ShapeMismatch {
                    op: "concat_cols",
                    lhs: self.shape(parts[0]),
                    rhs: self.shape(p),
                });
            }
        }
        let cols: usize = parts.iter().map(|&p| self.shape(p)[1]).sum();
        let mut out = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for &p in parts {
                let src = self.value(p).row_slice(r);
                out.row_slice_mut(r)[off..off + src.len()].copy_from_slice(src);
                off += src.len();
            }
        }
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), ng))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = parts.first().map_or(0, |&p| self.shape(p)[1]);
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let t = self.value(p);
            if t.cols() != cols {
                return Err(DiffError::ShapeMismatch {
                    op: "concat_rows",
                    lhs: self.shape(parts[0]),
                    rhs: t.shape(),
                });
            }
            data.extend_from_slice(t.data());
            rows += t.rows();
        }
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(
            Tensor::from_vec(rows, cols, data)?,
            Op::ConcatRows(parts.to_vec()),
            ng,
        ))
    }

    /// Columns `start..end`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let t = self.value(a);
        if start > end || end > t.cols() {
            return Err(DiffError::InvalidArgument {
                op: "slice_cols",
                shape: t.shape(),
                msg: format!("range {start}..{end}"),
            });
        }
        let mut out = Tensor::zeros(t.rows(), end - start);
        for r in 0..t.rows() {
            out.row_slice_mut(r)
                .copy_from_slice(&t.row_slice(r)[start..end]);
        }
        let ng = self.ng(a);
        Ok(self.push(out, Op::SliceCols(a, start), ng))
    }

    /// Selects rows by index (repeats allowed).
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let t = self.value(a);
        let mut out = Tensor::zeros(idx.len(), t.cols());
        for (o, &i) in idx.iter().enumerate() {
            if i >= t.rows() {
                return Err(DiffError::InvalidArgument {
                    op: "gather_rows",
                    shape: t.shape(),
                    msg: format!("row {i} out of range"),
                });
            }
            out.row_slice_mut(o).copy_from_slice(t.row_slice(i));
        }
        let ng = self.ng(a);
        Ok(self.push(out, Op::GatherRows(a, idx.to_vec()), ng))
    }

    /// Output row `i` is the element-wise mean of the rows listed in `segments[i]`.
    /// An empty segment yields a zero row.
    pub fn segment_mean(&mut self, a: Var, segments: Vec<Vec<usize>>) -> Result<Var> {
        let t = self.value(a);
        let mut out = Tensor::zeros(segments.len(), t.cols());
        for (o, seg) in segments.iter().enumerate() {
            if seg.is_empty() {
                continue;
            }
            let w = 1.0 / seg.len() as f64;
            for &i in seg {
                if i >= t.rows() {
                    return Err(DiffError::InvalidArgument {
                        op: "segment_mean",
                        shape: t.shape(),
                        msg: format!("row {i} out of range"),
                    });
                }
                for (y, x) in out.row_slice_mut(o).iter_mut().zip(t.row_slice(i)) {
                    *y += w * x;
                }
            }
        }
        let ng = self.ng(a);
        Ok(self.push(out, Op::SegmentMean(a, segments), ng))
    }

    /// `out[p] = q[r_p] . v[c_p]` for each pair, as a `P x 1` column.
    pub fn gather_dot(&mut self, q: Var, v: Var, pairs: Vec<(usize, usize)>) -> Result<Var> {
        let (tq, tv) = (self.value(q), self.value(v));
        if tq.cols() != tv.cols() {
            return Err(DiffError::ShapeMismatch {
                op: "gather_dot",
                lhs: tq.shape(),
                rhs: tv.shape(),
            });
        }
        let mut out = Vec::with_capacity(pairs.len());
        for &(r, c) in &pairs {
            if r >= tq.rows() || c >= tv.rows() {
                return Err(DiffError::InvalidArgument {
                    op: "gather_dot",
                    shape: tv.shape(),
                    msg: format!("pair ({r}, {c}) out of range"),
                });
            }
            out.push(dot(tq.row_slice(r), tv.row_slice(c)));
        }
        let ng = self.ng(q) || self.ng(v);
        Ok(self.push(Tensor::column(&out), Op::GatherDot(q, v, pairs), ng))
    }

    /// Log-softmax over contiguous `[start, end)` segments of a column vector.
    pub fn segment_log_softmax(&mut self, a: Var, segments: Vec<(usize, usize)>) -> Result<Var> {
        let t = self.value(a);
        if t.cols() != 1 {
            return Err(DiffError::InvalidArgument {
                op: "segment_log_softmax",
                shape: t.shape(),
                msg: "expects a column vector".into(),
            });
        }
        let mut out = t.clone();
        for &(s, e) in &segments {
            if s >= e || e > t.rows() {
                return Err(DiffError::InvalidArgument {
                    op: "segment_log_softmax",
                    shape: t.shape(),
                    msg: format!("bad segment {s}..{e}"),
                });
            }
            let seg = &mut out.data_mut()[s..e];
            let lse = logsumexp(seg);
            seg.iter_mut().for_each(|x| *x -= lse);
        }
        let ng = self.ng(a);
        Ok(self.push(out, Op::SegmentLogSoftmax(a, segments), ng))
    }

    /// `m x d -> m x m` matrix of row-to-row L1 distances.
    pub fn pairwise_l1(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let m = t.rows();
        let mut out = Tensor::zeros(m, m);
        for i in 0..m {
            for j in (i + 1)..m {
                let d: f64 = t
                    .row_slice(i)
                    .iter()
                    .zip(t.row_slice(j))
                    .map(|(x, y)| (x - y).abs())
                    .sum();
                out.set(i, j, d);
                out.set(j, i, d);
            }
        }
        let ng = self.ng(a);
        self.push(out, Op::PairwiseL1(a), ng)
    }

    /// Cosine similarity of every row of `a` with every row of `b`.
    /// Rows with (near-)zero norm have similarity 0.
    pub fn cosine_similarity(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.cols() != tb.cols() {
            return Err(DiffError::ShapeMismatch {
                op: "cosine_similarity",
                lhs: ta.shape(),
                rhs: tb.shape(),
            });
        }
        let na: Vec<f64> = (0..ta.rows()).map(|r| norm2(ta.row_slice(r))).collect();
        let nb: Vec<f64> = (0..tb.rows()).map(|r| norm2(tb.row_slice(r))).collect();
        let mut out = Tensor::zeros(ta.rows(), tb.rows());
        for i in 0..ta.rows() {
            for j in 0..tb.rows() {
                if na[i] > COS_EPS && nb[j] > COS_EPS {
                    out.set(i, j, dot(ta.row_slice(i), tb.row_slice(j)) / (na[i] * nb[j]));
                }
            }
        }
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::CosineMatrix(a, b), ng))
    }

    /// Per-row normalization to zero mean and unit variance (no affine terms).
    pub fn layer_norm(&mut self, a: Var, eps: f64) -> Var {
        let t = self.value(a);
        let mut out = t.clone();
        let mut inv = Vec::with_capacity(t.rows());
        for r in 0..t.rows() {
            let row = out.row_slice_mut(r);
            let n = row.len().max(1) as f64;
            let mu = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / n;
            let s = 1.0 / (var + eps).sqrt();
            row.iter_mut().for_each(|x| *x = (*x - mu) * s);
            inv.push(s);
        }
        let ng = self.ng(a);
        self.push(out, Op::LayerNorm(a, inv), ng)
    }

    /// Inverted dropout with drop probability `p`; identity when not training.
    pub fn dropout(&mut self, a: Var, p: f64) -> Var {
        if !self.training || p <= 0.0 {
            return a;
        }
        let keep = 1.0 - p;
        let n = self.value(a).len();
        let mask: Vec<f64> = (0..n)
            .map(|_| if self.rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let t = self.value(a);
        let data = t.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
        let out = Tensor::from_vec(t.rows(), t.cols(), data).expect("same shape");
        let ng = self.ng(a);
        self.push(out, Op::Dropout(a, mask), ng)
    }

    // ----- composites -------------------------------------------------------

    /// Sum of absolute values.
    pub fn l1_norm(&mut self, a: Var) -> Var {
        let abs = self.abs(a);
        self.sum(abs)
    }

    /// One LSTM step for a batch of rows.
    ///
    /// `w_x: d_in x 4h`, `w_h: h x 4h`, `bias: 1 x 4h`; gate order is
    /// input, forget, cell, output. Returns the new `(hidden, cell)`.
    pub fn lstm_cell(
        &mut self,
        x: Var,
        h: Var,
        c: Var,
        w_x: Var,
        w_h: Var,
        bias: Var,
    ) -> Result<(Var, Var)> {
        let hidden = self.shape(h)[1];
        let zx = self.matmul(x, w_x)?;
        let zh = self.matmul(h, w_h)?;
        let z = self.add(zx, zh)?;
        let z = self.add(z, bias)?;
        let i = self.slice_cols(z, 0, hidden)?;
        let f = self.slice_cols(z, hidden, 2 * hidden)?;
        let g = self.slice_cols(z, 2 * hidden, 3 * hidden)?;
        let o = self.slice_cols(z, 3 * hidden, 4 * hidden)?;
        let i = self.sigmoid(i);
        let f = self.sigmoid(f);
        let g = self.tanh(g);
        let o = self.sigmoid(o);
        let fc = self.mul(f, c)?;
        let ig = self.mul(i, g)?;
        let c_next = self.add(fc, ig)?;
        let tc = self.tanh(c_next);
        let h_next = self.mul(o, tc)?;
        Ok((h_next, c_next))
    }

    // ----- backward -----------------------------------------------------------

    /// Accumulates `d loss / d param` into `store` for every trainable
    /// parameter on the tape. Parameters not reachable from `loss` are left
    /// untouched (zero after an optimizer step).
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<()> {
        let lt = self.value(loss);
        if lt.shape() != [1, 1] {
            return Err(DiffError::NonScalarLoss(lt.shape()));
        }
        if !lt.item().is_finite() {
            return Err(DiffError::NonFiniteLoss(lt.item()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            self.propagate(&node.op, &node.value, g, &mut grads, store);
        }
        Ok(())
    }

    fn acc(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(t) => t.add_assign(&g),
            slot => *slot = Some(g),
        }
    }

    fn propagate(
        &self,
        op: &Op,
        out: &Tensor,
        g: Tensor,
        grads: &mut [Option<Tensor>],
        store: &mut ParamStore,
    ) {
        match op {
            Op::Leaf => {}
            Op::Param(id) => store.grad_mut(*id).add_assign(&g),
            Op::MatMul(a, b) => {
                if self.ng(*a) {
                    let ga = gemm(&g, self.value(*b), false, true);
                    self.acc(grads, *a, ga);
                }
                if self.ng(*b) {
                    let gb = gemm(self.value(*a), &g, true, false);
                    self.acc(grads, *b, gb);
                }
            }
            Op::Transpose(a) => self.acc(grads, *a, g.transpose()),
            Op::Reshape(a) => {
                let [r, c] = self.shape(*a);
                let g = Tensor::from_vec(r, c, g.into_data()).expect("same size");
                self.acc(grads, *a, g);
            }
            Op::Binary(kind, a, b) => self.binary_backward(*kind, *a, *b, &g, grads),
            Op::Scale(a, k) => self.acc(grads, *a, g.map(|x| x * k)),
            Op::Offset(a) => self.acc(grads, *a, g),
            Op::Unary(kind, a) => {
                let x = self.value(*a);
                let data = g
                    .data()
                    .iter()
                    .zip(x.data())
                    .zip(out.data())
                    .map(|((&gi, &xi), &yi)| {
                        gi * match kind {
                            UnaryOp::Sigmoid => yi * (1.0 - yi),
                            UnaryOp::Tanh => 1.0 - yi * yi,
                            UnaryOp::Exp => yi,
                            UnaryOp::Log => 1.0 / xi,
                            UnaryOp::Abs => sign(xi),
                            UnaryOp::Softplus => sigmoid(xi),
                            UnaryOp::Square => 2.0 * xi,
                        }
                    })
                    .collect();
                self.acc(grads, *a, Tensor::from_vec(x.rows(), x.cols(), data).expect("shape"));
            }
            Op::ClampMin(a, floor) => {
                let x = self.value(*a);
                let data = g
                    .data()
                    .iter()
                    .zip(x.data())
                    .map(|(&gi, &xi)| if xi > *floor { gi } else { 0.0 })
                    .collect();
                self.acc(grads, *a, Tensor::from_vec(x.rows(), x.cols(), data).expect("shape"));
            }
            Op::SumAll(a) => {
                let [r, c] = self.shape(*a);
                self.acc(grads, *a, Tensor::filled(r, c, g.item()));
            }
            Op::SumCols(a) => {
                let [r, c] = self.shape(*a);
                let mut ga = Tensor::zeros(r, c);
                for i in 0..r {
                    ga.row_slice_mut(i).fill(g.get(i, 0));
                }
                self.acc(grads, *a, ga);
            }
            Op::MeanRows(a) => {
                let [r, c] = self.shape(*a);
                let mut ga = Tensor::zeros(r, c);
                let inv = 1.0 / r as f64;
                for i in 0..r {
                    for (y, gj) in ga.row_slice_mut(i).iter_mut().zip(g.data()) {
                        *y = gj * inv;
                    }
                }
                self.acc(grads, *a, ga);
            }
            Op::SoftmaxRows(a) => {
                let mut ga = g.clone();
                for r in 0..out.rows() {
                    let y = out.row_slice(r);
                    let s = dot(g.row_slice(r), y);
                    for ((gx, gi), yi) in ga.row_slice_mut(r).iter_mut().zip(g.row_slice(r)).zip(y) {
                        *gx = yi * (gi - s);
                    }
                }
                self.acc(grads, *a, ga);
            }
            Op::LogSoftmaxRows(a) => {
                let mut ga = g.clone();
                for r in 0..out.rows() {
                    let s: f64 = g.row_slice(r).iter().sum();
                    for (gx, yi) in ga.row_slice_mut(r).iter_mut().zip(out.row_slice(r)) {
                        *gx -= yi.exp() * s;
                    }
                }
                self.acc(grads, *a, ga);
            }
            Op::LogSumExpRows(a) => {
                let x = self.value(*a);
                let mut ga = x.clone();
                for r in 0..x.rows() {
                    let lse = out.get(r, 0);
                    let gr = g.get(r, 0);
                    ga.row_slice_mut(r)
                        .iter_mut()
                        .for_each(|v| *v = gr * (*v - lse).exp());
                }
                self.acc(grads, *a, ga);
            }
            Op::MinCols(a, arg) => {
                let [r, c] = self.shape(*a);
                let mut ga = Tensor::zeros(r, c);
                for (i, &j) in arg.iter().enumerate() {
                    ga.set(i, j, g.get(i, 0));
                }
                self.acc(grads, *a, ga);
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let [r, c] = self.shape(p);
                    if self.ng(p) {
                        let mut gp = Tensor::zeros(r, c);
                        for i in 0..r {
                            gp.row_slice_mut(i)
                                .copy_from_slice(&g.row_slice(i)[off..off + c]);
                        }
                        self.acc(grads, p, gp);
                    }
                    off += c;
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let [r, c] = self.shape(p);
                    if self.ng(p) {
                        let gp = Tensor::from_vec(r, c, g.data()[off * c..(off + r) * c].to_vec())
                            .expect("shape");
                        self.acc(grads, p, gp);
                    }
                    off += r;
                }
            }
            Op::SliceCols(a, start) => {
                let [r, c] = self.shape(*a);
                let mut ga = Tensor::zeros(r, c);
                for i in 0..r {
                    let src = g.row_slice(i);
                    ga.row_slice_mut(i)[*start..*start + src.len()].copy_from_slice(src);
                }
                self.acc(grads, *a, ga);
            }
            Op::GatherRows(a, idx) => {
                let [r, c] = self.shape(*a);
                let mut ga = Tensor::zeros(r, c);
                for (o, &i) in idx.iter().enumerate() {
                    for (y, x) in ga.row_slice_mut(i).iter_mut().zip(g.row_slice(o)) {
                        *y += x;
                    }
                }
                self.acc(grads, *a, ga);
            }
            Op::SegmentMean(a, segs) => {
                let [r, c] = self.shape(*a);
                let mut ga = Tensor::zeros(r, c);
                for (o, seg) in segs.iter().enumerate() {
                    if seg.is_empty() {
                        continue;
                    }
                    let w = 1.0 / seg.len() as f64;
                    for &i in seg {
                        for (y, x) in ga.row_slice_mut(i).iter_mut().zip(g.row_slice(o)) {
                            *y += w * x;
                        }
                    }
                }
                self.acc(grads, *a, ga);
            }
            Op::GatherDot(q, v, pairs) => {
                let (tq, tv) = (self.value(*q), self.value(*v));
                if self.ng(*q) {
                    let mut gq = Tensor::zeros(tq.rows(), tq.cols());
                    for (p, &(r, c)) in pairs.iter().enumerate() {
                        let gp = g.get(p, 0);
                        for (y, x) in gq.row_slice_mut(r).iter_mut().zip(tv.row_slice(c)) {
                            *y += gp * x;
                        }
                    }
                    self.acc(grads, *q, gq);
                }
                if self.ng(*v) {
                    let mut gv = Tensor::zeros(tv.rows(), tv.cols());
                    for (p, &(r, c)) in pairs.iter().enumerate() {
                        let gp = g.get(p, 0);
                        for (y, x) in gv.row_slice_mut(c).iter_mut().zip(tq.row_slice(r)) {
                            *y += gp * x;
                        }
                    }
                    self.acc(grads, *v, gv);
                }
            }
            Op::SegmentLogSoftmax(a, segs) => {
                let mut ga = g.clone();
                for &(s, e) in segs {
                    let total: f64 = g.data()[s..e].iter().sum();
                    for k in s..e {
                        ga.data_mut()[k] -= out.data()[k].exp() * total;
                    }
                }
                self.acc(grads, *a, ga);
            }
            Op::PairwiseL1(a) => {
                let x = self.value(*a);
                let m = x.rows();
                let mut ga = Tensor::zeros(m, x.cols());
                for i in 0..m {
                    for j in 0..m {
                        if i == j {
                            continue;
                        }
                        let w = g.get(i, j) + g.get(j, i);
                        if w == 0.0 {
                            continue;
                        }
                        let xj = x.row_slice(j);
                        for (k, y) in ga.row_slice_mut(i).iter_mut().enumerate() {
                            *y += w * sign(x.get(i, k) - xj[k]);
                        }
                    }
                }
                self.acc(grads, *a, ga);
            }
            Op::CosineMatrix(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let na: Vec<f64> = (0..ta.rows()).map(|r| norm2(ta.row_slice(r))).collect();
                let nb: Vec<f64> = (0..tb.rows()).map(|r| norm2(tb.row_slice(r))).collect();
                let mut ga = Tensor::zeros(ta.rows(), ta.cols());
                let mut gb = Tensor::zeros(tb.rows(), tb.cols());
                for i in 0..ta.rows() {
                    for j in 0..tb.rows() {
                        if na[i] <= COS_EPS || nb[j] <= COS_EPS {
                            continue;
                        }
                        let gij = g.get(i, j);
                        let cij = out.get(i, j);
                        let (ai, bj) = (ta.row_slice(i), tb.row_slice(j));
                        let inv = 1.0 / (na[i] * nb[j]);
                        for k in 0..ta.cols() {
                            let da = bj[k] * inv - cij * ai[k] / (na[i] * na[i]);
                            let db = ai[k] * inv - cij * bj[k] / (nb[j] * nb[j]);
                            ga.data_mut()[i * ta.cols() + k] += gij * da;
                            gb.data_mut()[j * tb.cols() + k] += gij * db;
                        }
                    }
                }
                self.acc(grads, *a, ga);
                self.acc(grads, *b, gb);
            }
            Op::LayerNorm(a, inv) => {
                let mut ga = g.clone();
                for r in 0..out.rows() {
                    let y = out.row_slice(r);
                    let gr = g.row_slice(r);
                    let n = y.len() as f64;
                    let mg = gr.iter().sum::<f64>() / n;
                    let mgy = dot(gr, y) / n;
                    for ((gx, gi), yi) in ga.row_slice_mut(r).iter_mut().zip(gr).zip(y) {
                        *gx = inv[r] * (gi - mg - yi * mgy);
                    }
                }
                self.acc(grads, *a, ga);
            }
            Op::Dropout(a, mask) => {
                let data = g.data().iter().zip(mask).map(|(x, m)| x * m).collect();
                self.acc(grads, *a, Tensor::from_vec(g.rows(), g.cols(), data).expect("shape"));
            }
        }
    }

    fn binary_backward(&self, kind: BinOp, a: Var, b: Var, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let (ta, tb) = (self.value(a), self.value(b));
        let (sa, sb) = (ta.shape(), tb.shape());
        let mut ga = Tensor::zeros(sa[0], sa[1]);
        let mut gb = Tensor::zeros(sb[0], sb[1]);
        for r in 0..g.rows() {
            for c in 0..g.cols() {
                let (ar, ac) = (bi(sa[0], r), bi(sa[1], c));
                let (br, bc) = (bi(sb[0], r), bi(sb[1], c));
                let x = ta.get(ar, ac);
                let y = tb.get(br, bc);
                let gi = g.get(r, c);
                let (dx, dy) = match kind {
                    BinOp::Add => (gi, gi),
                    BinOp::Sub => (gi, -gi),
                    BinOp::Mul => (gi * y, gi * x),
                    BinOp::Div => (gi / y, -gi * x / (y * y)),
                };
                ga.data_mut()[ar * sa[1] + ac] += dx;
                gb.data_mut()[br * sb[1] + bc] += dy;
            }
        }
        self.acc(grads, a, ga);
        self.acc(grads, b, gb);
    }
}

fn broadcast_dim(a: usize, b: usize) -> Option<usize> {
    if a == b {
        Some(a)
    } else if a == 1 {
        Some(b)
    } else if b == 1 {
        Some(a)
    } else {
        None
    }
}

#[inline]
fn bi(dim: usize, i: usize) -> usize {
    if dim == 1 {
        0
    } else {
        i
    }
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Inverse of [`softplus`] for positive arguments.
pub fn softplus_inverse(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
