//! Reverse-mode autodiff over matrices.
//!
//! A [`Graph`] records operations eagerly; [`Graph::backward`] walks the tape
//! in reverse and returns gradients for every parameter that was used.
//! Parameter nodes borrow their values from the [`ParamStore`].

use rand::Rng;

use crate::crf::CrfScores;
use crate::params::{Gradients, ParamId, ParamStore};
use crate::tensor::{gemm, softmax_in_place, Matrix};

pub const LAYER_NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

/// Padded batch layout for attention: `batch` sequences of `max_len` rows each.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeqLayout {
    pub max_len: usize,
    pub lengths: Vec<usize>,
}

impl SeqLayout {
    pub fn batch(&self) -> usize {
        self.lengths.len()
    }

    pub fn rows(&self) -> usize {
        self.max_len * self.lengths.len()
    }
}

enum Op {
    Input,
    Param(ParamId),
    MatMul(NodeId, NodeId),
    MatMulBt(NodeId, NodeId),
    Add(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Gelu(NodeId),
    Gather { table: NodeId, ids: Vec<usize> },
    SelectRows { x: NodeId, rows: Vec<usize> },
    SliceRows { x: NodeId, start: usize },
    SliceCols { x: NodeId, start: usize },
    ConcatCols(Vec<NodeId>),
    ConcatRows(Vec<NodeId>),
    Dropout { x: NodeId, mask: Vec<f64> },
    LayerNorm { x: NodeId, gamma: NodeId, beta: NodeId, xhat: Matrix, inv_std: Vec<f64> },
    Attention { q: NodeId, k: NodeId, v: NodeId, heads: usize, layout: SeqLayout, probs: Vec<f64> },
    CrossEntropy { logits: NodeId, grad: Matrix },
    CrfNll { emissions: NodeId, transitions: NodeId, start: NodeId, stop: NodeId, grads: [Matrix; 4] },
}

struct Node {
    op: Op,
    value: Option<Matrix>,
    shape: (usize, usize),
    needs_grad: bool,
}

pub struct Graph<'p> {
    store: &'p ParamStore,
    nodes: Vec<Node>,
    param_nodes: Vec<Option<NodeId>>,
}

fn gelu(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4;
    0.5 * x * (1.0 + (C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4;
    let u = C * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * C * (1.0 + 3.0 * 0.044715 * x * x)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl<'p> Graph<'p> {
    pub fn new(store: &'p ParamStore) -> Self {
        Graph { store, nodes: Vec::new(), param_nodes: vec![None; store.len()] }
    }

    pub fn store(&self) -> &'p ParamStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        let node = &self.nodes[id.0];
        match (&node.op, &node.value) {
            (Op::Param(p), _) => self.store.get(*p),
            (_, Some(v)) => v,
            _ => unreachable!("node without value"),
        }
    }

    pub fn shape(&self, id: NodeId) -> (usize, usize) {
        self.nodes[id.0].shape
    }

    /// Attention probabilities as `[batch][head][query][key]`, row-major.
    pub fn attention_probs(&self, id: NodeId) -> Option<(&[f64], &SeqLayout, usize)> {
        match &self.nodes[id.0].op {
            Op::Attention { probs, layout, heads, .. } => Some((probs, layout, *heads)),
            _ => None,
        }
    }

    fn push(&mut self, op: Op, value: Matrix, needs_grad: bool) -> NodeId {
        let shape = value.shape();
        self.nodes.push(Node { op, value: Some(value), shape, needs_grad });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|i| self.nodes[i.0].needs_grad)
    }

    pub fn input(&mut self, value: Matrix) -> NodeId {
        self.push(Op::Input, value, false)
    }

    pub fn param(&mut self, id: ParamId) -> NodeId {
        if let Some(n) = self.param_nodes[id.0] {
            return n;
        }
        let shape = self.store.get(id).shape();
        self.nodes.push(Node { op: Op::Param(id), value: None, shape, needs_grad: true });
        let n = NodeId(self.nodes.len() - 1);
        self.param_nodes[id.0] = Some(n);
        n
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).matmul(self.value(b));
        let g = self.needs(&[a, b]);
        self.push(Op::MatMul(a, b), v, g)
    }

    /// `a · bᵀ`.
    pub fn matmul_bt(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (av, bv) = (self.value(a), self.value(b));
        let mut out = Matrix::zeros(av.rows(), bv.rows());
        gemm(1.0, av, false, bv, true, 0.0, &mut out);
        let g = self.needs(&[a, b]);
        self.push(Op::MatMulBt(a, b), out, g)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let mut v = self.value(a).clone();
        v.add_assign(self.value(b));
        let g = self.needs(&[a, b]);
        self.push(Op::Add(a, b), v, g)
    }

    /// Adds a 1×n row to every row of `x`.
    pub fn add_row(&mut self, x: NodeId, row: NodeId) -> NodeId {
        let r = self.value(row);
        assert_eq!(r.rows(), 1, "bias must be a single row");
        let mut v = self.value(x).clone();
        assert_eq!(v.cols(), r.cols(), "bias width mismatch");
        for i in 0..v.rows() {
            for (a, b) in v.row_mut(i).iter_mut().zip(r.data()) {
                *a += b;
            }
        }
        let g = self.needs(&[x, row]);
        self.push(Op::AddRow(x, row), v, g)
    }

    /// `x · w + b`.
    pub fn linear(&mut self, x: NodeId, w: ParamId, b: ParamId) -> NodeId {
        let w = self.param(w);
        let b = self.param(b);
        let h = self.matmul(x, w);
        self.add_row(h, b)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.shape(), bv.shape());
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect();
        let v = Matrix::from_vec(av.rows(), av.cols(), data);
        let g = self.needs(&[a, b]);
        self.push(Op::Mul(a, b), v, g)
    }

    pub fn scale(&mut self, x: NodeId, s: f64) -> NodeId {
        let v = self.value(x).map(|a| a * s);
        let g = self.needs(&[x]);
        self.push(Op::Scale(x, s), v, g)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).map(sigmoid);
        let g = self.needs(&[x]);
        self.push(Op::Sigmoid(x), v, g)
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).map(f64::tanh);
        let g = self.needs(&[x]);
        self.push(Op::Tanh(x), v, g)
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).map(gelu);
        let g = self.needs(&[x]);
        self.push(Op::Gelu(x), v, g)
    }

    /// Rows `ids` of `table`.
    pub fn gather(&mut self, table: NodeId, ids: Vec<usize>) -> NodeId {
        let v = take_rows(self.value(table), &ids);
        let g = self.needs(&[table]);
        self.push(Op::Gather { table, ids }, v, g)
    }

    pub fn select_rows(&mut self, x: NodeId, rows: Vec<usize>) -> NodeId {
        let v = take_rows(self.value(x), &rows);
        let g = self.needs(&[x]);
        self.push(Op::SelectRows { x, rows }, v, g)
    }

    pub fn slice_rows(&mut self, x: NodeId, start: usize, len: usize) -> NodeId {
        let xv = self.value(x);
        let v = Matrix::from_vec(len, xv.cols(), xv.data()[start * xv.cols()..(start + len) * xv.cols()].to_vec());
        let g = self.needs(&[x]);
        self.push(Op::SliceRows { x, start }, v, g)
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, len: usize) -> NodeId {
        let xv = self.value(x);
        let mut v = Matrix::zeros(xv.rows(), len);
        for r in 0..xv.rows() {
            v.row_mut(r).copy_from_slice(&xv.row(r)[start..start + len]);
        }
        let g = self.needs(&[x]);
        self.push(Op::SliceCols { x, start }, v, g)
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut v = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for &p in parts {
                let pv = self.value(p);
                assert_eq!(pv.rows(), rows, "row count mismatch in concat");
                v.row_mut(r)[off..off + pv.cols()].copy_from_slice(pv.row(r));
                off += pv.cols();
            }
        }
        let g = self.needs(parts);
        self.push(Op::ConcatCols(parts.to_vec()), v, g)
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> NodeId {
        let cols = self.value(parts[0]).cols();
        let mut data = Vec::new();
        for &p in parts {
            let pv = self.value(p);
            assert_eq!(pv.cols(), cols, "column count mismatch in concat");
            data.extend_from_slice(pv.data());
        }
        let v = Matrix::from_vec(data.len() / cols.max(1), cols, data);
        let g = self.needs(parts);
        self.push(Op::ConcatRows(parts.to_vec()), v, g)
    }

    /// Inverted dropout; identity when `p == 0`.
    pub fn dropout(&mut self, x: NodeId, p: f64, rng: &mut impl Rng) -> NodeId {
        if p <= 0.0 {
            return x;
        }
        let keep = 1.0 / (1.0 - p);
        let xv = self.value(x);
        let mask: Vec<f64> = (0..xv.len()).map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep }).collect();
        let data = xv.data().iter().zip(&mask).map(|(a, m)| a * m).collect();
        let v = Matrix::from_vec(xv.rows(), xv.cols(), data);
        let g = self.needs(&[x]);
        self.push(Op::Dropout { x, mask }, v, g)
    }

    /// Row-wise layer normalization with 1×n gain and bias.
    pub fn layer_norm(&mut self, x: NodeId, gamma: ParamId, beta: ParamId) -> NodeId {
        let gamma = self.param(gamma);
        let beta = self.param(beta);
        let xv = self.value(x);
        let (rows, cols) = xv.shape();
        let mut xhat = Matrix::zeros(rows, cols);
        let mut inv_std = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = xv.row(r);
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / cols as f64;
            let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            for (o, a) in xhat.row_mut(r).iter_mut().zip(row) {
                *o = (a - mean) * is;
            }
            inv_std.push(is);
        }
        let (gv, bv) = (self.value(gamma), self.value(beta));
        let mut v = xhat.clone();
        for r in 0..rows {
            for ((o, g), b) in v.row_mut(r).iter_mut().zip(gv.data()).zip(bv.data()) {
                *o = *o * g + b;
            }
        }
        let g = self.needs(&[x, gamma, beta]);
        self.push(Op::LayerNorm { x, gamma, beta, xhat, inv_std }, v, g)
    }

    /// Multi-head scaled dot-product attention over a padded batch. Keys past
    /// each sequence's length get zero weight.
    pub fn attention(&mut self, q: NodeId, k: NodeId, v: NodeId, heads: usize, layout: SeqLayout) -> NodeId {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let hidden = qv.cols();
        assert_eq!(hidden % heads, 0, "hidden size not divisible by heads");
        assert_eq!(qv.rows(), layout.rows(), "layout does not match input rows");
        let d = hidden / heads;
        let t = layout.max_len;
        let scale = 1.0 / (d as f64).sqrt();
        let mut out = Matrix::zeros(qv.rows(), hidden);
        let mut probs = vec![0.0; layout.batch() * heads * t * t];
        for (b, &len) in layout.lengths.iter().enumerate() {
            for h in 0..heads {
                let qb = block(qv, b * t, t, h * d, d);
                let kb = block(kv, b * t, t, h * d, d);
                let vb = block(vv, b * t, t, h * d, d);
                let mut s = Matrix::zeros(t, t);
                gemm(scale, &qb, false, &kb, true, 0.0, &mut s);
                for i in 0..t {
                    let row = s.row_mut(i);
                    softmax_in_place(&mut row[..len]);
                    row[len..].iter_mut().for_each(|x| *x = 0.0);
                }
                let o = s.matmul(&vb);
                put_block(&mut out, &o, b * t, h * d);
                let base = (b * heads + h) * t * t;
                probs[base..base + t * t].copy_from_slice(s.data());
            }
        }
        let g = self.needs(&[q, k, v]);
        self.push(Op::Attention { q, k, v, heads, layout, probs }, out, g)
    }

    /// Mean cross-entropy of `logits` rows against `targets`, as a 1×1 node.
    /// With no rows the loss is a constant 0.
    pub fn cross_entropy(&mut self, logits: NodeId, targets: &[usize]) -> NodeId {
        let lv = self.value(logits);
        assert_eq!(lv.rows(), targets.len(), "one target per row");
        let n = targets.len();
        if n == 0 {
            return self.input(Matrix::scalar(0.0));
        }
        let mut grad = lv.clone();
        let mut loss = 0.0;
        for (r, &y) in targets.iter().enumerate() {
            let row = grad.row_mut(r);
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|x| (x - m).exp()).sum();
            loss += m + z.ln() - row[y];
            softmax_in_place(row);
            row[y] -= 1.0;
        }
        grad.scale(1.0 / n as f64);
        let g = self.needs(&[logits]);
        self.push(Op::CrossEntropy { logits, grad }, Matrix::scalar(loss / n as f64), g)
    }

    /// Negative log-likelihood of `tags` under a linear-chain CRF.
    pub fn crf_nll(&mut self, emissions: NodeId, transitions: ParamId, start: ParamId, stop: ParamId, tags: &[usize]) -> NodeId {
        let (tn, sn, en) = (self.param(transitions), self.param(start), self.param(stop));
        let ev = self.value(emissions);
        let scores = CrfScores { transitions: self.value(tn), start: self.value(sn).data(), stop: self.value(en).data() };
        let m = scores.marginals(ev);
        let nll = m.log_partition - scores.score(ev, tags);
        let k = scores.start.len();
        let mut ge = m.unary;
        let mut gt = m.pairwise;
        let mut gs = Matrix::from_vec(1, k, ge.row(0).to_vec());
        let mut gp = Matrix::from_vec(1, k, ge.row(ge.rows() - 1).to_vec());
        for (t, &y) in tags.iter().enumerate() {
            ge.set(t, y, ge.get(t, y) - 1.0);
            if t > 0 {
                gt.set(tags[t - 1], y, gt.get(tags[t - 1], y) - 1.0);
            }
        }
        gs.data_mut()[tags[0]] -= 1.0;
        gp.data_mut()[tags[tags.len() - 1]] -= 1.0;
        let g = self.needs(&[emissions, tn, sn, en]);
        let op = Op::CrfNll { emissions, transitions: tn, start: sn, stop: en, grads: [ge, gt, gs, gp] };
        self.push(op, Matrix::scalar(nll), g)
    }

    /// Gradients of the scalar `loss` with respect to all parameters used.
    pub fn backward(&self, loss: NodeId) -> Gradients {
        assert_eq!(self.shape(loss), (1, 1), "loss must be a scalar");
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut out = Gradients::new(self.store.len());
        grads[loss.0] = Some(Matrix::scalar(1.0));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let mut acc = |id: NodeId, f: &mut dyn FnMut(&mut Matrix)| {
                let n = &self.nodes[id.0];
                if !n.needs_grad {
                    return;
                }
                let slot = grads[id.0].get_or_insert_with(|| Matrix::zeros(n.shape.0, n.shape.1));
                f(slot);
            };
            match &node.op {
                Op::Input => {}
                Op::Param(p) => out.accumulate_owned(*p, g),
                Op::MatMul(a, b) => {
                    acc(*a, &mut |s| gemm(1.0, &g, false, self.value(*b), true, 1.0, s));
                    acc(*b, &mut |s| gemm(1.0, self.value(*a), true, &g, false, 1.0, s));
                }
                Op::MatMulBt(a, b) => {
                    acc(*a, &mut |s| gemm(1.0, &g, false, self.value(*b), false, 1.0, s));
                    acc(*b, &mut |s| gemm(1.0, &g, true, self.value(*a), false, 1.0, s));
                }
                Op::Add(a, b) => {
                    acc(*a, &mut |s| s.add_assign(&g));
                    acc(*b, &mut |s| s.add_assign(&g));
                }
                Op::AddRow(x, row) => {
                    acc(*x, &mut |s| s.add_assign(&g));
                    acc(*row, &mut |s| {
                        for r in 0..g.rows() {
                            for (a, b) in s.data_mut().iter_mut().zip(g.row(r)) {
                                *a += b;
                            }
                        }
                    });
                }
                Op::Mul(a, b) => {
                    acc(*a, &mut |s| zip_acc(s, &g, self.value(*b), |g, y| g * y));
                    acc(*b, &mut |s| zip_acc(s, &g, self.value(*a), |g, y| g * y));
                }
                Op::Scale(x, c) => acc(*x, &mut |s| zip_acc(s, &g, &g, |g, _| g * c)),
                Op::Sigmoid(x) => {
                    let y = node.value.as_ref().unwrap();
                    acc(*x, &mut |s| zip_acc(s, &g, y, |g, y| g * y * (1.0 - y)));
                }
                Op::Tanh(x) => {
                    let y = node.value.as_ref().unwrap();
                    acc(*x, &mut |s| zip_acc(s, &g, y, |g, y| g * (1.0 - y * y)));
                }
                Op::Gelu(x) => acc(*x, &mut |s| zip_acc(s, &g, self.value(*x), |g, x| g * gelu_grad(x))),
                Op::Gather { table: x, ids } | Op::SelectRows { x, rows: ids } => acc(*x, &mut |s| {
                    for (r, &i) in ids.iter().enumerate() {
                        for (a, b) in s.row_mut(i).iter_mut().zip(g.row(r)) {
                            *a += b;
                        }
                    }
                }),
                Op::SliceRows { x, start } => acc(*x, &mut |s| {
                    let c = s.cols();
                    for (a, b) in s.data_mut()[start * c..].iter_mut().zip(g.data()) {
                        *a += b;
                    }
                }),
                Op::SliceCols { x, start } => acc(*x, &mut |s| {
                    for r in 0..g.rows() {
                        for (a, b) in s.row_mut(r)[*start..].iter_mut().zip(g.row(r)) {
                            *a += b;
                        }
                    }
                }),
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let w = self.shape(p).1;
                        acc(p, &mut |s| {
                            for r in 0..g.rows() {
                                for (a, b) in s.row_mut(r).iter_mut().zip(&g.row(r)[off..off + w]) {
                                    *a += b;
                                }
                            }
                        });
                        off += w;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let n = self.shape(p).0 * g.cols();
                        acc(p, &mut |s| {
                            for (a, b) in s.data_mut().iter_mut().zip(&g.data()[off..off + n]) {
                                *a += b;
                            }
                        });
                        off += n;
                    }
                }
                Op::Dropout { x, mask } => acc(*x, &mut |s| {
                    for ((a, b), m) in s.data_mut().iter_mut().zip(g.data()).zip(mask) {
                        *a += b * m;
                    }
                }),
                Op::LayerNorm { x, gamma, beta, xhat, inv_std } => {
                    let gv = self.value(*gamma);
                    let cols = g.cols() as f64;
                    acc(*x, &mut |s| {
                        for r in 0..g.rows() {
                            let dxhat: Vec<f64> = g.row(r).iter().zip(gv.data()).map(|(a, b)| a * b).collect();
                            let mean_d = dxhat.iter().sum::<f64>() / cols;
                            let mean_dx = dxhat.iter().zip(xhat.row(r)).map(|(a, b)| a * b).sum::<f64>() / cols;
                            for ((o, d), xh) in s.row_mut(r).iter_mut().zip(&dxhat).zip(xhat.row(r)) {
                                *o += inv_std[r] * (d - mean_d - xh * mean_dx);
                            }
                        }
                    });
                    acc(*gamma, &mut |s| {
                        for r in 0..g.rows() {
                            for ((o, a), b) in s.data_mut().iter_mut().zip(g.row(r)).zip(xhat.row(r)) {
                                *o += a * b;
                            }
                        }
                    });
                    acc(*beta, &mut |s| {
                        for r in 0..g.rows() {
                            for (o, a) in s.data_mut().iter_mut().zip(g.row(r)) {
                                *o += a;
                            }
                        }
                    });
                }
                Op::Attention { q, k, v, heads, layout, probs } => {
                    let (dq, dk, dv) = attention_backward(&g, self.value(*q), self.value(*k), self.value(*v), *heads, layout, probs);
                    acc(*q, &mut |s| s.add_assign(&dq));
                    acc(*k, &mut |s| s.add_assign(&dk));
                    acc(*v, &mut |s| s.add_assign(&dv));
                }
                Op::CrossEntropy { logits, grad } => {
                    let c = g.to_scalar();
                    acc(*logits, &mut |s| zip_acc(s, grad, grad, |a, _| a * c));
                }
                Op::CrfNll { emissions, transitions, start, stop, grads: gs } => {
                    let c = g.to_scalar();
                    for (id, gm) in [emissions, transitions, start, stop].into_iter().zip(gs) {
                        acc(*id, &mut |s| zip_acc(s, gm, gm, |a, _| a * c));
                    }
                }
            }
        }
        out
    }
}

fn zip_acc(s: &mut Matrix, g: &Matrix, y: &Matrix, f: impl Fn(f64, f64) -> f64) {
    for ((o, a), b) in s.data_mut().iter_mut().zip(g.data()).zip(y.data()) {
        *o += f(*a, *b);
    }
}

fn take_rows(m: &Matrix, ids: &[usize]) -> Matrix {
    let mut v = Matrix::zeros(ids.len(), m.cols());
    for (r, &i) in ids.iter().enumerate() {
        v.row_mut(r).copy_from_slice(m.row(i));
    }
    v
}

fn block(m: &Matrix, row: usize, rows: usize, col: usize, cols: usize) -> Matrix {
    let mut out = Matrix::zeros(rows, cols);
    for r in 0..rows {
        out.row_mut(r).copy_from_slice(&m.row(row + r)[col..col + cols]);
    }
    out
}

fn put_block(m: &mut Matrix, b: &Matrix, row: usize, col: usize) {
    for r in 0..b.rows() {
        m.row_mut(row + r)[col..col + b.cols()].copy_from_slice(b.row(r));
    }
}

fn attention_backward(
    g: &Matrix,
    q: &Matrix,
    k: &Matrix,
    v: &Matrix,
    heads: usize,
    layout: &SeqLayout,
    probs: &[f64],
) -> (Matrix, Matrix, Matrix) {
    let hidden = q.cols();
    let d = hidden / heads;
    let t = layout.max_len;
    let scale = 1.0 / (d as f64).sqrt();
    let mut dq = Matrix::zeros(q.rows(), hidden);
    let mut dk = Matrix::zeros(q.rows(), hidden);
    let mut dv = Matrix::zeros(q.rows(), hidden);
    for b in 0..layout.batch() {
        for h in 0..heads {
            let base = (b * heads + h) * t * t;
            let p = Matrix::from_vec(t, t, probs[base..base + t * t].to_vec());
            let go = block(g, b * t, t, h * d, d);
            let qb = block(q, b * t, t, h * d, d);
            let kb = block(k, b * t, t, h * d, d);
            let vb = block(v, b * t, t, h * d, d);
            let mut dvb = Matrix::zeros(t, d);
            gemm(1.0, &p, true, &go, false, 0.0, &mut dvb);
            let mut dp = Matrix::zeros(t, t);
            gemm(1.0, &go, false, &vb, true, 0.0, &mut dp);
            let mut ds = dp;
            for i in 0..t {
                let pr = p.row(i);
                let dot: f64 = ds.row(i).iter().zip(pr).map(|(a, b)| a * b).sum();
                for (x, pv) in ds.row_mut(i).iter_mut().zip(pr) {
                    *x = pv * (*x - dot) * scale;
                }
            }
            let dqb = ds.matmul(&kb);
            let mut dkb = Matrix::zeros(t, d);
            gemm(1.0, &ds, true, &qb, false, 0.0, &mut dkb);
            put_block(&mut dq, &dqb, b * t, h * d);
            put_block(&mut dk, &dkb, b * t, h * d);
            put_block(&mut dv, &dvb, b * t, h * d);
        }
    }
    (dq, dk, dv)
}
