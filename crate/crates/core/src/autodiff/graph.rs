//! Reverse-mode autodiff over a per-step computation graph.
//!
//! A [`Graph`] borrows the parameter store, records each op with its output
//! and whatever the backward pass needs, and [`Graph::backward`] walks the
//! records in reverse. Matrices are rank-2 row-major; batched sequence ops
//! lay out `B` sequences of `T` steps as `B*T` rows with row index `b*T + t`.

use super::params::{Gradients, ParamId, ParamStore};
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
}

impl Activation {
    pub fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(T::zero()),
        }
    }

    /// Derivative expressed through the activation output `y`.
    fn grad_from_output<T: Scalar>(self, y: T) -> T {
        match self {
            Activation::Sigmoid => y * (T::one() - y),
            Activation::Tanh => T::one() - y * y,
            Activation::Relu => {
                if y > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
        }
    }
}

pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Numerically stable softmax of one row.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits
        .iter()
        .copied()
        .fold(T::neg_infinity(), |a, b| a.max(b));
    let exps: Vec<T> = logits.iter().map(|&v| (v - max).exp()).collect();
    let z: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// Stable log-softmax of one row.
pub fn log_softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits
        .iter()
        .copied()
        .fold(T::neg_infinity(), |a, b| a.max(b));
    let lse = logits.iter().map(|&v| (v - max).exp()).sum::<T>().ln() + max;
    logits.iter().map(|&v| v - lse).collect()
}

#[derive(Debug)]
enum Op<T> {
    Constant,
    Param(ParamId),
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Mul(NodeId, NodeId),
    MulConst(NodeId, Vec<T>),
    RowScale(NodeId, Vec<T>),
    Activation(NodeId, Activation),
    ConcatCols(Vec<NodeId>),
    ConcatRows(Vec<NodeId>),
    SliceCols(NodeId, usize),
    Gather(NodeId, Vec<usize>),
    Conv1d {
        input: NodeId,
        filters: NodeId,
        bias: NodeId,
        seq_len: usize,
        width: usize,
    },
    MaxOverTime {
        input: NodeId,
        argmax: Vec<usize>,
    },
    SoftmaxCrossEntropy {
        logits: NodeId,
        targets: Vec<usize>,
        weights: Vec<T>,
        probs: Vec<T>,
    },
    Sum(NodeId),
    Scale(NodeId, T),
    Interleave(Vec<NodeId>),
    RepeatRows(NodeId, usize),
    SeqDot {
        query: NodeId,
        keys: NodeId,
    },
    MaskedSoftmax(NodeId),
    SeqWeightedSum {
        weights: NodeId,
        keys: NodeId,
    },
}

#[derive(Debug)]
enum Value<T> {
    Owned(Tensor<T>),
    Param(ParamId),
}

#[derive(Debug)]
struct Node<T> {
    op: Op<T>,
    value: Value<T>,
}

pub struct Graph<'p, T: Scalar = f32> {
    params: &'p ParamStore<T>,
    nodes: Vec<Node<T>>,
    param_nodes: Vec<Option<NodeId>>,
}

fn shape_err(op: &str, a: &[usize], b: &[usize]) -> Error {
    Error::Shape(format!("{op}: incompatible shapes {a:?} and {b:?}"))
}

fn check_matrix<T: Scalar>(op: &str, t: &Tensor<T>) -> Result<(usize, usize)> {
    match t.shape() {
        [r, c] => Ok((*r, *c)),
        s => Err(Error::Shape(format!("{op}: expected a matrix, got {s:?}"))),
    }
}

/// out[m×n] += a[m×k] · b[k×n]
fn gemm_nn<T: Scalar>(a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        for (p, &av) in a[i * k..(i + 1) * k].iter().enumerate() {
            if av == T::zero() {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o = *o + av * bv;
            }
        }
    }
}

/// out[m×k] += g[m×n] · b[k×n]ᵀ
fn gemm_nt<T: Scalar>(g: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let g_row = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let b_row = &b[p * n..(p + 1) * n];
            let dot: T = g_row.iter().zip(b_row).map(|(&x, &y)| x * y).sum();
            out[i * k + p] = out[i * k + p] + dot;
        }
    }
}

/// out[k×n] += a[m×k]ᵀ · g[m×n]
fn gemm_tn<T: Scalar>(a: &[T], g: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let g_row = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            let out_row = &mut out[p * n..(p + 1) * n];
            for (o, &gv) in out_row.iter_mut().zip(g_row) {
                *o = *o + av * gv;
            }
        }
    }
}

impl<'p, T: Scalar> Graph<'p, T> {
    pub fn new(params: &'p ParamStore<T>) -> Self {
        Graph {
            params,
            nodes: Vec::new(),
            param_nodes: vec![None; params.len()],
        }
    }

    pub fn params(&self) -> &'p ParamStore<T> {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        match &self.nodes[id.0].value {
            Value::Owned(t) => t,
            Value::Param(p) => self.params.get(*p),
        }
    }

    fn push(&mut self, op: Op<T>, value: Tensor<T>) -> NodeId {
        self.nodes.push(Node {
            op,
            value: Value::Owned(value),
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, t: Tensor<T>) -> NodeId {
        self.push(Op::Constant, t)
    }

    /// Leaf for a parameter; repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> NodeId {
        if let Some(n) = self.param_nodes[id.0] {
            return n;
        }
        self.nodes.push(Node {
            op: Op::Param(id),
            value: Value::Param(id),
        });
        let n = NodeId(self.nodes.len() - 1);
        self.param_nodes[id.0] = Some(n);
        n
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (m, k) = check_matrix("matmul", self.value(a))?;
        let (k2, n) = check_matrix("matmul", self.value(b))?;
        if k != k2 {
            return Err(shape_err(
                "matmul",
                self.value(a).shape(),
                self.value(b).shape(),
            ));
        }
        let mut out = vec![T::zero(); m * n];
        gemm_nn(
            self.value(a).data(),
            self.value(b).data(),
            &mut out,
            m,
            k,
            n,
        );
        Ok(self.push(Op::MatMul(a, b), Tensor::new(vec![m, n], out)?))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(shape_err("add", va.shape(), vb.shape()));
        }
        let data = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(&x, &y)| x + y)
            .collect();
        let t = Tensor::new(va.shape().to_vec(), data)?;
        Ok(self.push(Op::Add(a, b), t))
    }

    /// Adds a length-`n` bias vector to every row of an `m×n` matrix.
    pub fn add_row(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(bias));
        let n = va.cols();
        if vb.len() != n {
            return Err(shape_err("add_row", va.shape(), vb.shape()));
        }
        let mut data = va.data().to_vec();
        for row in data.chunks_mut(n) {
            for (x, &b) in row.iter_mut().zip(vb.data()) {
                *x = *x + b;
            }
        }
        let t = Tensor::new(va.shape().to_vec(), data)?;
        Ok(self.push(Op::AddRow(a, bias), t))
    }

    /// `x·W + b`
    pub fn affine(&mut self, x: NodeId, w: ParamId, b: ParamId) -> Result<NodeId> {
        let w = self.param(w);
        let b = self.param(b);
        let xw = self.matmul(x, w)?;
        self.add_row(xw, b)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(shape_err("mul", va.shape(), vb.shape()));
        }
        let data = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(&x, &y)| x * y)
            .collect();
        let t = Tensor::new(va.shape().to_vec(), data)?;
        Ok(self.push(Op::Mul(a, b), t))
    }

    /// Elementwise product with a non-differentiable mask (dropout).
    pub fn mul_const(&mut self, a: NodeId, mask: Vec<T>) -> Result<NodeId> {
        let va = self.value(a);
        if va.len() != mask.len() {
            return Err(Error::Shape(format!(
                "mul_const: tensor {:?} vs mask of {}",
                va.shape(),
                mask.len()
            )));
        }
        let data = va.data().iter().zip(&mask).map(|(&x, &m)| x * m).collect();
        let t = Tensor::new(va.shape().to_vec(), data)?;
        Ok(self.push(Op::MulConst(a, mask), t))
    }

    /// Scales row `i` of a matrix by the constant `scales[i]`.
    pub fn row_scale(&mut self, a: NodeId, scales: Vec<T>) -> Result<NodeId> {
        let va = self.value(a);
        if va.rows() != scales.len() {
            return Err(Error::Shape(format!(
                "row_scale: {} rows vs {} scales",
                va.rows(),
                scales.len()
            )));
        }
        let n = va.cols();
        let mut data = va.data().to_vec();
        for (row, &s) in data.chunks_mut(n).zip(&scales) {
            for x in row {
                *x = *x * s;
            }
        }
        let t = Tensor::new(va.shape().to_vec(), data)?;
        Ok(self.push(Op::RowScale(a, scales), t))
    }

    pub fn activation(&mut self, a: NodeId, kind: Activation) -> NodeId {
        let t = self.value(a).map(|x| kind.apply(x));
        self.push(Op::Activation(a, kind), t)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.activation(a, Activation::Sigmoid)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.activation(a, Activation::Tanh)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        self.activation(a, Activation::Relu)
    }

    /// Concatenates matrices with equal row counts side by side.
    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let rows = self.value(parts[0]).rows();
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let v = self.value(p);
            if v.rows() != rows {
                return Err(shape_err(
                    "concat_cols",
                    self.value(parts[0]).shape(),
                    v.shape(),
                ));
            }
            widths.push(v.cols());
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let t = Tensor::new(vec![rows, total], data)?;
        Ok(self.push(Op::ConcatCols(parts.to_vec()), t))
    }

    /// Stacks matrices with equal column counts vertically.
    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let cols = self.value(parts[0]).cols();
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let v = self.value(p);
            if v.cols() != cols {
                return Err(shape_err(
                    "concat_rows",
                    self.value(parts[0]).shape(),
                    v.shape(),
                ));
            }
            rows += v.rows();
            data.extend_from_slice(v.data());
        }
        let t = Tensor::new(vec![rows, cols], data)?;
        Ok(self.push(Op::ConcatRows(parts.to_vec()), t))
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let va = self.value(a);
        let (rows, cols) = (va.rows(), va.cols());
        if start + len > cols || len == 0 {
            return Err(Error::Shape(format!(
                "slice_cols: [{start}, {}) out of {cols} columns",
                start + len
            )));
        }
        let mut data = Vec::with_capacity(rows * len);
        for r in 0..rows {
            data.extend_from_slice(&va.row(r)[start..start + len]);
        }
        let t = Tensor::new(vec![rows, len], data)?;
        Ok(self.push(Op::SliceCols(a, start), t))
    }

    /// Embedding lookup: rows `ids` of a `V×E` table.
    pub fn gather(&mut self, table: NodeId, ids: &[usize]) -> Result<NodeId> {
        let vt = self.value(table);
        let (v, e) = check_matrix("gather", vt)?;
        if ids.is_empty() {
            return Err(Error::Shape("gather: no ids".into()));
        }
        let mut data = Vec::with_capacity(ids.len() * e);
        for &i in ids {
            if i >= v {
                return Err(Error::Index(format!("gather: id {i} outside table of {v}")));
            }
            data.extend_from_slice(vt.row(i));
        }
        let t = Tensor::new(vec![ids.len(), e], data)?;
        Ok(self.push(Op::Gather(table, ids.to_vec()), t))
    }

    /// Valid 1-D convolution, stride 1.
    ///
    /// `input` is `(B*L)×E` holding `B` sequences of `seq_len` rows, `filters`
    /// is `W×E×F`, `bias` has `F` entries. Output is `(B*(L-W+1))×F`.
    pub fn conv1d_valid(
        &mut self,
        input: NodeId,
        filters: NodeId,
        bias: NodeId,
        seq_len: usize,
    ) -> Result<NodeId> {
        let (vi, vf, vb) = (self.value(input), self.value(filters), self.value(bias));
        let (w, e, f) = match vf.shape() {
            [w, e, f] => (*w, *e, *f),
            s => {
                return Err(Error::Shape(format!(
                    "conv1d_valid: filters must be W×E×F, got {s:?}"
                )))
            }
        };
        let (rows, e_in) = check_matrix("conv1d_valid", vi)?;
        if e_in != e || seq_len == 0 || rows % seq_len != 0 {
            return Err(shape_err("conv1d_valid", vi.shape(), vf.shape()));
        }
        if vb.len() != f {
            return Err(shape_err("conv1d_valid", vf.shape(), vb.shape()));
        }
        if seq_len < w {
            return Err(Error::Shape(format!(
                "conv1d_valid: window {w} longer than sequence {seq_len}; pad first"
            )));
        }
        let batch = rows / seq_len;
        let out_len = seq_len - w + 1;
        let span = w * e;
        let x = vi.data();
        let k = vf.data();
        let mut out = Vec::with_capacity(batch * out_len * f);
        for b in 0..batch {
            for t in 0..out_len {
                let start = (b * seq_len + t) * e;
                let mut acc = vb.data().to_vec();
                gemm_nn(&x[start..start + span], k, &mut acc, 1, span, f);
                out.extend(acc);
            }
        }
        let t = Tensor::new(vec![batch * out_len, f], out)?;
        Ok(self.push(
            Op::Conv1d {
                input,
                filters,
                bias,
                seq_len,
                width: w,
            },
            t,
        ))
    }

    /// Column-wise max over each block of `steps` rows: `(B*T)×F → B×F`.
    /// Ties resolve to the first maximal row.
    pub fn max_over_time(&mut self, input: NodeId, steps: usize) -> Result<NodeId> {
        let v = self.value(input);
        let (rows, f) = check_matrix("max_over_time", v)?;
        if steps == 0 || rows % steps != 0 {
            return Err(Error::Shape(format!(
                "max_over_time: {rows} rows not divisible into blocks of {steps}"
            )));
        }
        let batch = rows / steps;
        let mut out = Vec::with_capacity(batch * f);
        let mut argmax = Vec::with_capacity(batch * f);
        for b in 0..batch {
            for c in 0..f {
                let mut best = b * steps;
                for r in b * steps + 1..(b + 1) * steps {
                    if v.data()[r * f + c] > v.data()[best * f + c] {
                        best = r;
                    }
                }
                out.push(v.data()[best * f + c]);
                argmax.push(best);
            }
        }
        let t = Tensor::new(vec![batch, f], out)?;
        Ok(self.push(Op::MaxOverTime { input, argmax }, t))
    }

    /// Weighted sum of per-row cross-entropies `Σ_i w_i · -log softmax(logits_i)[target_i]`.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: NodeId,
        targets: &[usize],
        weights: &[T],
    ) -> Result<NodeId> {
        let v = self.value(logits);
        let (n, c) = (v.rows(), v.cols());
        if targets.len() != n || weights.len() != n {
            return Err(Error::Shape(format!(
                "softmax_cross_entropy: {n} rows, {} targets, {} weights",
                targets.len(),
                weights.len()
            )));
        }
        let mut probs = Vec::with_capacity(n * c);
        let mut loss = T::zero();
        for (i, (&tgt, &w)) in targets.iter().zip(weights).enumerate() {
            if tgt >= c {
                return Err(Error::Index(format!(
                    "target class {tgt} out of range for {c} classes"
                )));
            }
            let row = v.row(i);
            let lsm = log_softmax(row);
            if w != T::zero() {
                loss = loss - w * lsm[tgt];
            }
            probs.extend(lsm.into_iter().map(|l| l.exp()));
        }
        let out = Tensor::scalar(loss);
        Ok(self.push(
            Op::SoftmaxCrossEntropy {
                logits,
                targets: targets.to_vec(),
                weights: weights.to_vec(),
                probs,
            },
            out,
        ))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s: T = self.value(a).data().iter().copied().sum();
        self.push(Op::Sum(a), Tensor::scalar(s))
    }

    pub fn scale(&mut self, a: NodeId, s: T) -> NodeId {
        let t = self.value(a).map(|x| x * s);
        self.push(Op::Scale(a, s), t)
    }

    /// Interleaves `T` step matrices (each `B×D`) into `(B*T)×D`, row `b*T + t`.
    pub fn interleave(&mut self, steps: &[NodeId]) -> Result<NodeId> {
        let first = self.value(steps[0]);
        let (b, d) = check_matrix("interleave", first)?;
        for &s in steps {
            if self.value(s).shape() != [b, d] {
                return Err(shape_err("interleave", &[b, d], self.value(s).shape()));
            }
        }
        let t_len = steps.len();
        let mut data = Vec::with_capacity(b * t_len * d);
        for row in 0..b {
            for &s in steps {
                data.extend_from_slice(self.value(s).row(row));
            }
        }
        let t = Tensor::new(vec![b * t_len, d], data)?;
        Ok(self.push(Op::Interleave(steps.to_vec()), t))
    }

    /// Repeats each row of a `B×D` matrix `times` times: `(B*times)×D`.
    pub fn repeat_rows(&mut self, a: NodeId, times: usize) -> Result<NodeId> {
        let v = self.value(a);
        let (b, d) = check_matrix("repeat_rows", v)?;
        let mut data = Vec::with_capacity(b * times * d);
        for r in 0..b {
            for _ in 0..times {
                data.extend_from_slice(v.row(r));
            }
        }
        let t = Tensor::new(vec![b * times, d], data)?;
        Ok(self.push(Op::RepeatRows(a, times), t))
    }

    /// Per-sequence dot products: `query` `B×D`, `keys` `(B*T)×D` → scores `B×T`.
    pub fn seq_dot(&mut self, query: NodeId, keys: NodeId) -> Result<NodeId> {
        let (vq, vk) = (self.value(query), self.value(keys));
        let (b, d) = check_matrix("seq_dot", vq)?;
        let (bt, d2) = check_matrix("seq_dot", vk)?;
        if d != d2 || bt % b != 0 {
            return Err(shape_err("seq_dot", vq.shape(), vk.shape()));
        }
        let steps = bt / b;
        let mut out = Vec::with_capacity(bt);
        for r in 0..b {
            let q = vq.row(r);
            for t in 0..steps {
                let k = vk.row(r * steps + t);
                out.push(q.iter().zip(k).map(|(&x, &y)| x * y).sum());
            }
        }
        let t = Tensor::new(vec![b, steps], out)?;
        Ok(self.push(Op::SeqDot { query, keys }, t))
    }

    /// Row-wise softmax restricted to positions where `mask` is true; masked
    /// positions get exactly zero weight. Every row needs one open position.
    pub fn masked_softmax(&mut self, scores: NodeId, mask: &[bool]) -> Result<NodeId> {
        let v = self.value(scores);
        let (b, steps) = check_matrix("masked_softmax", v)?;
        if mask.len() != b * steps {
            return Err(Error::Shape(format!(
                "masked_softmax: mask of {} for {b}×{steps} scores",
                mask.len()
            )));
        }
        let mut out = vec![T::zero(); b * steps];
        for r in 0..b {
            let m = &mask[r * steps..(r + 1) * steps];
            let row = v.row(r);
            let open: Vec<T> = row
                .iter()
                .zip(m)
                .filter(|(_, &keep)| keep)
                .map(|(&s, _)| s)
                .collect();
            if open.is_empty() {
                return Err(Error::Contract(format!(
                    "masked_softmax: row {r} has no unmasked position"
                )));
            }
            let p = softmax(&open);
            let mut it = p.into_iter();
            for (t, &keep) in m.iter().enumerate() {
                if keep {
                    out[r * steps + t] = it.next().unwrap_or_else(T::zero);
                }
            }
        }
        let t = Tensor::new(vec![b, steps], out)?;
        Ok(self.push(Op::MaskedSoftmax(scores), t))
    }

    /// `weights` `B×T`, `keys` `(B*T)×D` → `B×D` with row `b = Σ_t w[b,t]·keys[b*T+t]`.
    pub fn seq_weighted_sum(&mut self, weights: NodeId, keys: NodeId) -> Result<NodeId> {
        let (vw, vk) = (self.value(weights), self.value(keys));
        let (b, steps) = check_matrix("seq_weighted_sum", vw)?;
        let (bt, d) = check_matrix("seq_weighted_sum", vk)?;
        if bt != b * steps {
            return Err(shape_err("seq_weighted_sum", vw.shape(), vk.shape()));
        }
        let mut out = vec![T::zero(); b * d];
        for r in 0..b {
            let o = &mut out[r * d..(r + 1) * d];
            for t in 0..steps {
                let w = vw.data()[r * steps + t];
                for (x, &k) in o.iter_mut().zip(vk.row(r * steps + t)) {
                    *x = *x + w * k;
                }
            }
        }
        let t = Tensor::new(vec![b, d], out)?;
        Ok(self.push(Op::SeqWeightedSum { weights, keys }, t))
    }

    /// Reverse-mode pass from a scalar `loss`. Parameters not reachable from
    /// the loss get zero gradients.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients<T>> {
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);
        let mut out = Gradients::zeros_like(self.params);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let y = self.value(NodeId(idx));
            match &node.op {
                Op::Constant => {}
                Op::Param(p) => {
                    let dst = out.get_mut(*p);
                    for (d, &v) in dst.data_mut().iter_mut().zip(&g) {
                        *d = *d + v;
                    }
                }
                Op::MatMul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let (m, k) = (va.rows(), va.cols());
                    let n = vb.cols();
                    let ga = slot(&mut grads, *a, m * k);
                    gemm_nt(&g, vb.data(), ga, m, k, n);
                    let gb = slot(&mut grads, *b, k * n);
                    gemm_tn(va.data(), &g, gb, m, k, n);
                }
                Op::Add(a, b) => {
                    accumulate(slot(&mut grads, *a, g.len()), &g);
                    accumulate(slot(&mut grads, *b, g.len()), &g);
                }
                Op::AddRow(a, bias) => {
                    let n = self.value(*bias).len();
                    accumulate(slot(&mut grads, *a, g.len()), &g);
                    let gb = slot(&mut grads, *bias, n);
                    for row in g.chunks(n) {
                        accumulate(gb, row);
                    }
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                    let ga = slot(&mut grads, *a, g.len());
                    for ((d, &gv), &bv) in ga.iter_mut().zip(&g).zip(vb) {
                        *d = *d + gv * bv;
                    }
                    let gb = slot(&mut grads, *b, g.len());
                    for ((d, &gv), &av) in gb.iter_mut().zip(&g).zip(va) {
                        *d = *d + gv * av;
                    }
                }
                Op::MulConst(a, mask) => {
                    let ga = slot(&mut grads, *a, g.len());
                    for ((d, &gv), &m) in ga.iter_mut().zip(&g).zip(mask) {
                        *d = *d + gv * m;
                    }
                }
                Op::RowScale(a, scales) => {
                    let n = y.cols();
                    let ga = slot(&mut grads, *a, g.len());
                    for ((drow, grow), &s) in ga.chunks_mut(n).zip(g.chunks(n)).zip(scales) {
                        for (d, &gv) in drow.iter_mut().zip(grow) {
                            *d = *d + gv * s;
                        }
                    }
                }
                Op::Activation(a, kind) => {
                    let ga = slot(&mut grads, *a, g.len());
                    for ((d, &gv), &yv) in ga.iter_mut().zip(&g).zip(y.data()) {
                        *d = *d + gv * kind.grad_from_output(yv);
                    }
                }
                Op::ConcatCols(parts) => {
                    let total = y.cols();
                    let rows = y.rows();
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.value(p).cols();
                        let gp = slot(&mut grads, p, rows * w);
                        for r in 0..rows {
                            accumulate(
                                &mut gp[r * w..(r + 1) * w],
                                &g[r * total + offset..r * total + offset + w],
                            );
                        }
                        offset += w;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let n = self.value(p).len();
                        accumulate(slot(&mut grads, p, n), &g[offset..offset + n]);
                        offset += n;
                    }
                }
                Op::SliceCols(a, start) => {
                    let va = self.value(*a);
                    let (rows, cols) = (va.rows(), va.cols());
                    let len = y.cols();
                    let ga = slot(&mut grads, *a, rows * cols);
                    for r in 0..rows {
                        accumulate(
                            &mut ga[r * cols + start..r * cols + start + len],
                            &g[r * len..(r + 1) * len],
                        );
                    }
                }
                Op::Gather(table, ids) => {
                    let vt = self.value(*table);
                    let e = vt.cols();
                    let gt = slot(&mut grads, *table, vt.len());
                    for (r, &i) in ids.iter().enumerate() {
                        accumulate(&mut gt[i * e..(i + 1) * e], &g[r * e..(r + 1) * e]);
                    }
                }
                Op::Conv1d {
                    input,
                    filters,
                    bias,
                    seq_len,
                    width,
                } => {
                    let (vi, vf) = (self.value(*input), self.value(*filters));
                    let e = vi.cols();
                    let f = y.cols();
                    let span = width * e;
                    let out_len = seq_len - width + 1;
                    let batch = vi.rows() / seq_len;
                    let x = vi.data();
                    let k = vf.data();
                    {
                        let gb = slot(&mut grads, *bias, f);
                        for row in g.chunks(f) {
                            accumulate(gb, row);
                        }
                    }
                    {
                        let gk = slot(&mut grads, *filters, span * f);
                        for b in 0..batch {
                            for t in 0..out_len {
                                let start = (b * seq_len + t) * e;
                                let gr = &g[(b * out_len + t) * f..(b * out_len + t + 1) * f];
                                gemm_tn(&x[start..start + span], gr, gk, 1, span, f);
                            }
                        }
                    }
                    let gx = slot(&mut grads, *input, x.len());
                    for b in 0..batch {
                        for t in 0..out_len {
                            let start = (b * seq_len + t) * e;
                            let gr = &g[(b * out_len + t) * f..(b * out_len + t + 1) * f];
                            gemm_nt(gr, k, &mut gx[start..start + span], 1, span, f);
                        }
                    }
                }
                Op::MaxOverTime { input, argmax } => {
                    let vi = self.value(*input);
                    let f = vi.cols();
                    let gi = slot(&mut grads, *input, vi.len());
                    for (j, (&src, &gv)) in argmax.iter().zip(&g).enumerate() {
                        let c = j % f;
                        gi[src * f + c] = gi[src * f + c] + gv;
                    }
                }
                Op::SoftmaxCrossEntropy {
                    logits,
                    targets,
                    weights,
                    probs,
                } => {
                    let c = self.value(*logits).cols();
                    let up = g[0];
                    let gl = slot(&mut grads, *logits, probs.len());
                    for (i, (&tgt, &w)) in targets.iter().zip(weights).enumerate() {
                        if w == T::zero() {
                            continue;
                        }
                        let s = up * w;
                        for j in 0..c {
                            let onehot = if j == tgt { T::one() } else { T::zero() };
                            gl[i * c + j] = gl[i * c + j] + s * (probs[i * c + j] - onehot);
                        }
                    }
                }
                Op::Sum(a) => {
                    let n = self.value(*a).len();
                    let ga = slot(&mut grads, *a, n);
                    for d in ga.iter_mut() {
                        *d = *d + g[0];
                    }
                }
                Op::Scale(a, s) => {
                    let ga = slot(&mut grads, *a, g.len());
                    for (d, &gv) in ga.iter_mut().zip(&g) {
                        *d = *d + gv * *s;
                    }
                }
                Op::Interleave(steps) => {
                    let d = y.cols();
                    let t_len = steps.len();
                    let b = y.rows() / t_len;
                    for (t, &s) in steps.iter().enumerate() {
                        let gs = slot(&mut grads, s, b * d);
                        for r in 0..b {
                            let src = (r * t_len + t) * d;
                            accumulate(&mut gs[r * d..(r + 1) * d], &g[src..src + d]);
                        }
                    }
                }
                Op::RepeatRows(a, times) => {
                    let d = y.cols();
                    let b = y.rows() / times;
                    let ga = slot(&mut grads, *a, b * d);
                    for r in 0..b {
                        for k in 0..*times {
                            let src = (r * times + k) * d;
                            accumulate(&mut ga[r * d..(r + 1) * d], &g[src..src + d]);
                        }
                    }
                }
                Op::SeqDot { query, keys } => {
                    let (vq, vk) = (self.value(*query), self.value(*keys));
                    let (b, d) = (vq.rows(), vq.cols());
                    let steps = y.cols();
                    {
                        let gq = slot(&mut grads, *query, b * d);
                        for r in 0..b {
                            for t in 0..steps {
                                let s = g[r * steps + t];
                                for (x, &k) in
                                    gq[r * d..(r + 1) * d].iter_mut().zip(vk.row(r * steps + t))
                                {
                                    *x = *x + s * k;
                                }
                            }
                        }
                    }
                    let gk = slot(&mut grads, *keys, vk.len());
                    for r in 0..b {
                        for t in 0..steps {
                            let s = g[r * steps + t];
                            let row = r * steps + t;
                            for (x, &q) in gk[row * d..(row + 1) * d].iter_mut().zip(vq.row(r)) {
                                *x = *x + s * q;
                            }
                        }
                    }
                }
                Op::MaskedSoftmax(scores) => {
                    let steps = y.cols();
                    let gs = slot(&mut grads, *scores, g.len());
                    for (r, (grow, prow)) in g.chunks(steps).zip(y.data().chunks(steps)).enumerate()
                    {
                        let dot: T = grow.iter().zip(prow).map(|(&a, &b)| a * b).sum();
                        for t in 0..steps {
                            let i = r * steps + t;
                            gs[i] = gs[i] + prow[t] * (grow[t] - dot);
                        }
                    }
                }
                Op::SeqWeightedSum { weights, keys } => {
                    let (vw, vk) = (self.value(*weights), self.value(*keys));
                    let (b, steps) = (vw.rows(), vw.cols());
                    let d = vk.cols();
                    {
                        let gw = slot(&mut grads, *weights, b * steps);
                        for r in 0..b {
                            for t in 0..steps {
                                let dot: T = g[r * d..(r + 1) * d]
                                    .iter()
                                    .zip(vk.row(r * steps + t))
                                    .map(|(&a, &k)| a * k)
                                    .sum();
                                gw[r * steps + t] = gw[r * steps + t] + dot;
                            }
                        }
                    }
                    let gk = slot(&mut grads, *keys, vk.len());
                    for r in 0..b {
                        for t in 0..steps {
                            let w = vw.data()[r * steps + t];
                            let row = r * steps + t;
                            for (x, &gv) in gk[row * d..(row + 1) * d]
                                .iter_mut()
                                .zip(&g[r * d..(r + 1) * d])
                            {
                                *x = *x + w * gv;
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

fn slot<T: Scalar>(grads: &mut [Option<Vec<T>>], id: NodeId, len: usize) -> &mut Vec<T> {
    grads[id.0].get_or_insert_with(|| vec![T::zero(); len])
}

fn accumulate<T: Scalar>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = *d + s;
    }
}
