//! Reverse-mode automatic differentiation over a dynamic tape.
//!
//! A [`Tape`] is built fresh for every forward pass. Each operation appends a
//! node holding its output value and enough context to run its backward rule.
//! Because nodes are only ever appended, the node order is a topological
//! order and [`Tape::backward`] is a single reverse sweep.

use std::collections::HashMap;

use super::params::{ParamId, ParamStore};
use super::tensor::{gemm_nn, gemm_nt, gemm_tn, Tensor};
use crate::error::{Error, Result};

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

#[derive(Debug)]
enum Op {
    Input,
    Param,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    AddBias(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    ScaleBy(Var, Var),
    AddConst(Var),
    Softmax(Var),
    LayerNorm { x: Var, gain: Var, bias: Var },
    Gelu(Var),
    Tanh(Var),
    LogSoftmaxGather { logits: Var, targets: Vec<usize> },
    Sum(Var),
    Mean(Var),
    SliceCols { x: Var, start: usize },
    ConcatCols(Vec<Var>),
    SliceRows { x: Var, start: usize },
    Stack(Vec<Var>),
    GatherRows { table: Var, ids: Vec<usize> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    /// Saved forward intermediates (normalized activations, probabilities).
    aux: Vec<f64>,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
}

/// Gradients produced by one backward sweep.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: Vec<(ParamId, Var)>,
}

impl Gradients {
    /// Gradient of the loss with respect to `var`, if it required one and
    /// the loss depends on it.
    pub fn wrt(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    /// Adds parameter gradients into the store's accumulators.
    pub fn accumulate_into(&self, store: &mut ParamStore) {
        for &(id, var) in &self.params {
            if let Some(g) = &self.grads[var.0] {
                let acc = store.get_mut(id).grad.data_mut();
                for (a, &v) in acc.iter_mut().zip(g.data()) {
                    *a += v;
                }
            }
        }
    }
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::Shape {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}

fn require_2d(op: &'static str, t: &Tensor) -> Result<(usize, usize)> {
    match *t.shape() {
        [r, c] => Ok((r, c)),
        _ => Err(Error::Shape {
            op,
            lhs: t.shape().to_vec(),
            rhs: vec![],
        }),
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

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool, aux: Vec<f64>) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            aux,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn input(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Input, requires_grad, Vec::new())
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.input(value, false)
    }

    /// Records a parameter leaf. Repeated requests for the same parameter
    /// return the same node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push(store.value(id).clone(), Op::Param, true, Vec::new());
        self.params.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, k) = require_2d("matmul", ta)?;
        let (k2, n) = require_2d("matmul", tb)?;
        if k != k2 {
            return Err(shape_err("matmul", ta, tb));
        }
        let mut out = vec![0.0; m * n];
        gemm_nn(ta.data(), tb.data(), &mut out, m, k, n);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::from_parts(vec![m, n], out), Op::MatMul(a, b), rg, Vec::new()))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        let (m, n) = require_2d("transpose", ta)?;
        let src = ta.data();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = src[i * n + j];
            }
        }
        let rg = self.rg(a);
        Ok(self.push(Tensor::from_parts(vec![n, m], out), Op::Transpose(a), rg, Vec::new()))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err("add", ta, tb));
        }
        let out: Vec<f64> = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        let shape = ta.shape().to_vec();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::from_parts(shape, out), Op::Add(a, b), rg, Vec::new()))
    }

    /// Adds a bias vector to every row (the only broadcast supported).
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(bias));
        let c = tx.cols();
        if tb.shape() != [c] {
            return Err(shape_err("add_bias", tx, tb));
        }
        let mut out = tx.data().to_vec();
        for row in out.chunks_mut(c) {
            for (o, &b) in row.iter_mut().zip(tb.data()) {
                *o += b;
            }
        }
        let shape = tx.shape().to_vec();
        let rg = self.rg(x) || self.rg(bias);
        Ok(self.push(Tensor::from_parts(shape, out), Op::AddBias(x, bias), rg, Vec::new()))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err("mul", ta, tb));
        }
        let out: Vec<f64> = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
        let shape = ta.shape().to_vec();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::from_parts(shape, out), Op::Mul(a, b), rg, Vec::new()))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let tx = self.value(x);
        let out: Vec<f64> = tx.data().iter().map(|v| v * factor).collect();
        let shape = tx.shape().to_vec();
        let rg = self.rg(x);
        self.push(Tensor::from_parts(shape, out), Op::Scale(x, factor), rg, Vec::new())
    }

    /// Multiplies every element of `x` by the one-element tensor `s`.
    pub fn scale_by(&mut self, x: Var, s: Var) -> Result<Var> {
        let (tx, ts) = (self.value(x), self.value(s));
        if ts.len() != 1 {
            return Err(shape_err("scale_by", tx, ts));
        }
        let f = ts.item();
        let out: Vec<f64> = tx.data().iter().map(|v| v * f).collect();
        let shape = tx.shape().to_vec();
        let rg = self.rg(x) || self.rg(s);
        Ok(self.push(Tensor::from_parts(shape, out), Op::ScaleBy(x, s), rg, Vec::new()))
    }

    /// Adds a constant tensor (e.g. an attention mask). No gradient flows
    /// into the constant.
    pub fn add_const(&mut self, x: Var, c: &Tensor) -> Result<Var> {
        let tx = self.value(x);
        if tx.shape() != c.shape() {
            return Err(shape_err("add_const", tx, c));
        }
        let out: Vec<f64> = tx.data().iter().zip(c.data()).map(|(a, b)| a + b).collect();
        let shape = tx.shape().to_vec();
        let rg = self.rg(x);
        Ok(self.push(Tensor::from_parts(shape, out), Op::AddConst(x), rg, Vec::new()))
    }

    /// Softmax over the last dimension, with max subtraction.
    pub fn softmax(&mut self, x: Var) -> Var {
        let tx = self.value(x);
        let c = tx.cols();
        let mut out = tx.data().to_vec();
        for row in out.chunks_mut(c) {
            softmax_in_place(row);
        }
        let shape = tx.shape().to_vec();
        let rg = self.rg(x);
        self.push(Tensor::from_parts(shape, out), Op::Softmax(x), rg, Vec::new())
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        if eps.is_nan() || eps <= 0.0 {
            return Err(Error::contract("layer_norm eps must be positive"));
        }
        let (tx, tg, tb) = (self.value(x), self.value(gain), self.value(bias));
        let d = tx.cols();
        if tg.shape() != [d] {
            return Err(shape_err("layer_norm", tx, tg));
        }
        if tb.shape() != [d] {
            return Err(shape_err("layer_norm", tx, tb));
        }
        let rows = tx.rows();
        let mut out = vec![0.0; tx.len()];
        // aux = [xhat (rows*d) | rstd (rows)]
        let mut aux = vec![0.0; tx.len() + rows];
        for r in 0..rows {
            let xr = &tx.data()[r * d..(r + 1) * d];
            let mean = xr.iter().sum::<f64>() / d as f64;
            let var = xr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let rstd = 1.0 / (var + eps).sqrt();
            for j in 0..d {
                let xh = (xr[j] - mean) * rstd;
                aux[r * d + j] = xh;
                out[r * d + j] = xh * tg.data()[j] + tb.data()[j];
            }
            aux[rows * d + r] = rstd;
        }
        let shape = tx.shape().to_vec();
        let rg = self.rg(x) || self.rg(gain) || self.rg(bias);
        Ok(self.push(Tensor::from_parts(shape, out), Op::LayerNorm { x, gain, bias }, rg, aux))
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, x: Var) -> Var {
        let tx = self.value(x);
        let out: Vec<f64> = tx
            .data()
            .iter()
            .map(|&v| 0.5 * v * (1.0 + (GELU_C * (v + GELU_A * v * v * v)).tanh()))
            .collect();
        let shape = tx.shape().to_vec();
        let rg = self.rg(x);
        self.push(Tensor::from_parts(shape, out), Op::Gelu(x), rg, Vec::new())
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let tx = self.value(x);
        let out: Vec<f64> = tx.data().iter().map(|v| v.tanh()).collect();
        let shape = tx.shape().to_vec();
        let rg = self.rg(x);
        self.push(Tensor::from_parts(shape, out), Op::Tanh(x), rg, Vec::new())
    }

    /// Row-wise log-softmax evaluated at one target column per row.
    /// Returns a vector with one entry per row.
    pub fn log_softmax_gather(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let tl = self.value(logits);
        let v = tl.cols();
        let rows = tl.rows();
        if targets.len() != rows {
            return Err(Error::Shape {
                op: "log_softmax_gather",
                lhs: tl.shape().to_vec(),
                rhs: vec![targets.len()],
            });
        }
        if let Some((position, &value)) = targets.iter().enumerate().find(|(_, &t)| t >= v) {
            return Err(Error::Index {
                what: "log_softmax_gather target",
                position,
                value,
                bound: v,
            });
        }
        let mut probs = tl.data().to_vec();
        let mut out = Vec::with_capacity(rows);
        for (r, row) in probs.chunks_mut(v).enumerate() {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|x| (x - max).exp()).sum();
            let lse = max + z.ln();
            out.push(row[targets[r]] - lse);
            for x in row.iter_mut() {
                *x = (*x - lse).exp();
            }
        }
        let rg = self.rg(logits);
        Ok(self.push(
            Tensor::from_parts(vec![rows], out),
            Op::LogSoftmaxGather {
                logits,
                targets: targets.to_vec(),
            },
            rg,
            probs,
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Sum(x), rg, Vec::new())
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let tx = self.value(x);
        let s = tx.data().iter().sum::<f64>() / tx.len() as f64;
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Mean(x), rg, Vec::new())
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let tx = self.value(x);
        let (m, n) = require_2d("slice_cols", tx)?;
        if len == 0 || start + len > n {
            return Err(Error::Shape {
                op: "slice_cols",
                lhs: tx.shape().to_vec(),
                rhs: vec![start, len],
            });
        }
        let mut out = Vec::with_capacity(m * len);
        for r in 0..m {
            out.extend_from_slice(&tx.data()[r * n + start..r * n + start + len]);
        }
        let rg = self.rg(x);
        Ok(self.push(Tensor::from_parts(vec![m, len], out), Op::SliceCols { x, start }, rg, Vec::new()))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or_else(|| Error::contract("concat_cols of nothing"))?;
        let (m, _) = require_2d("concat_cols", self.value(*first))?;
        let mut total = 0;
        for &p in parts {
            let (pm, pn) = require_2d("concat_cols", self.value(p))?;
            if pm != m {
                return Err(shape_err("concat_cols", self.value(*first), self.value(p)));
            }
            total += pn;
        }
        let mut out = vec![0.0; m * total];
        let mut offset = 0;
        for &p in parts {
            let tp = self.value(p);
            let pn = tp.cols();
            for r in 0..m {
                out[r * total + offset..r * total + offset + pn].copy_from_slice(tp.row(r));
            }
            offset += pn;
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(
            Tensor::from_parts(vec![m, total], out),
            Op::ConcatCols(parts.to_vec()),
            rg,
            Vec::new(),
        ))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let tx = self.value(x);
        let (m, n) = require_2d("slice_rows", tx)?;
        if len == 0 || start + len > m {
            return Err(Error::Shape {
                op: "slice_rows",
                lhs: tx.shape().to_vec(),
                rhs: vec![start, len],
            });
        }
        let out = tx.data()[start * n..(start + len) * n].to_vec();
        let rg = self.rg(x);
        Ok(self.push(Tensor::from_parts(vec![len, n], out), Op::SliceRows { x, start }, rg, Vec::new()))
    }

    /// Stacks one-element tensors into a vector.
    pub fn stack(&mut self, items: &[Var]) -> Result<Var> {
        if items.is_empty() {
            return Err(Error::contract("stack of nothing"));
        }
        let mut out = Vec::with_capacity(items.len());
        for &i in items {
            let t = self.value(i);
            if t.len() != 1 {
                return Err(Error::Shape {
                    op: "stack",
                    lhs: t.shape().to_vec(),
                    rhs: vec![1],
                });
            }
            out.push(t.item());
        }
        let rg = items.iter().any(|&i| self.rg(i));
        Ok(self.push(Tensor::vector(out), Op::Stack(items.to_vec()), rg, Vec::new()))
    }

    /// Row lookup (embedding).
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let tt = self.value(table);
        let (v, d) = require_2d("gather_rows", tt)?;
        if ids.is_empty() {
            return Err(Error::contract("gather_rows with no ids"));
        }
        let mut out = Vec::with_capacity(ids.len() * d);
        for (position, &id) in ids.iter().enumerate() {
            if id >= v {
                return Err(Error::Index {
                    what: "gather_rows id",
                    position,
                    value: id,
                    bound: v,
                });
            }
            out.extend_from_slice(tt.row(id));
        }
        let rg = self.rg(table);
        Ok(self.push(
            Tensor::from_parts(vec![ids.len(), d], out),
            Op::GatherRows {
                table,
                ids: ids.to_vec(),
            },
            rg,
            Vec::new(),
        ))
    }

    /// Reverse sweep from a one-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lt = self.value(loss);
        if lt.len() != 1 {
            return Err(Error::contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lt.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(node, &g, &mut grads);
            grads[i] = Some(g);
        }

        let grads: Vec<Option<Tensor>> = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, n)| {
                g.filter(|_| n.requires_grad)
                    .map(|g| Tensor::from_parts(n.value.shape().to_vec(), g))
            })
            .collect();
        let mut params: Vec<(ParamId, Var)> = self.params.iter().map(|(&k, &v)| (k, v)).collect();
        params.sort();
        Ok(Gradients { grads, params })
    }

    /// Runs [`Tape::backward`] and adds parameter gradients into `store`.
    pub fn backward_into(&self, loss: Var, store: &mut ParamStore) -> Result<()> {
        self.backward(loss)?.accumulate_into(store);
        Ok(())
    }

    fn backprop_node(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        match &node.op {
            Op::Input | Op::Param => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (&nodes[a.0].value, &nodes[b.0].value);
                let (m, k) = (ta.shape()[0], ta.shape()[1]);
                let n = tb.shape()[1];
                if let Some(ga) = grad_slot(nodes, grads, *a) {
                    gemm_nt(g, tb.data(), ga, m, n, k);
                }
                if let Some(gb) = grad_slot(nodes, grads, *b) {
                    gemm_tn(ta.data(), g, gb, m, k, n);
                }
            }
            Op::Transpose(a) => {
                let (m, n) = (nodes[a.0].value.shape()[0], nodes[a.0].value.shape()[1]);
                if let Some(ga) = grad_slot(nodes, grads, *a) {
                    for i in 0..m {
                        for j in 0..n {
                            ga[i * n + j] += g[j * m + i];
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                for v in [a, b] {
                    if let Some(gv) = grad_slot(nodes, grads, *v) {
                        add_into(gv, g);
                    }
                }
            }
            Op::AddBias(x, b) => {
                if let Some(gx) = grad_slot(nodes, grads, *x) {
                    add_into(gx, g);
                }
                if let Some(gb) = grad_slot(nodes, grads, *b) {
                    let c = gb.len();
                    for row in g.chunks(c) {
                        add_into(gb, row);
                    }
                }
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (nodes[a.0].value.data(), nodes[b.0].value.data());
                if let Some(ga) = grad_slot(nodes, grads, *a) {
                    for ((o, &gi), &bi) in ga.iter_mut().zip(g).zip(tb) {
                        *o += gi * bi;
                    }
                }
                if let Some(gb) = grad_slot(nodes, grads, *b) {
                    for ((o, &gi), &ai) in gb.iter_mut().zip(g).zip(ta) {
                        *o += gi * ai;
                    }
                }
            }
            Op::Scale(x, f) => {
                if let Some(gx) = grad_slot(nodes, grads, *x) {
                    for (o, &gi) in gx.iter_mut().zip(g) {
                        *o += gi * f;
                    }
                }
            }
            Op::ScaleBy(x, s) => {
                let f = nodes[s.0].value.item();
                let tx = nodes[x.0].value.data();
                if let Some(gx) = grad_slot(nodes, grads, *x) {
                    for (o, &gi) in gx.iter_mut().zip(g) {
                        *o += gi * f;
                    }
                }
                if let Some(gs) = grad_slot(nodes, grads, *s) {
                    gs[0] += g.iter().zip(tx).map(|(a, b)| a * b).sum::<f64>();
                }
            }
            Op::AddConst(x) => {
                if let Some(gx) = grad_slot(nodes, grads, *x) {
                    add_into(gx, g);
                }
            }
            Op::Softmax(x) => {
                let y = node.value.data();
                let c = node.value.cols();
                if let Some(gx) = grad_slot(nodes, grads, *x) {
                    for ((gr, yr), gxr) in g.chunks(c).zip(y.chunks(c)).zip(gx.chunks_mut(c)) {
                        let s: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                        for j in 0..c {
                            gxr[j] += yr[j] * (gr[j] - s);
                        }
                    }
                }
            }
            Op::LayerNorm { x, gain, bias } => {
                let d = node.value.cols();
                let rows = node.value.rows();
                let xhat = &node.aux[..rows * d];
                let rstd = &node.aux[rows * d..];
                let gain_v = nodes[gain.0].value.data();
                if let Some(gg) = grad_slot(nodes, grads, *gain) {
                    for (gr, xr) in g.chunks(d).zip(xhat.chunks(d)) {
                        for j in 0..d {
                            gg[j] += gr[j] * xr[j];
                        }
                    }
                }
                if let Some(gb) = grad_slot(nodes, grads, *bias) {
                    for gr in g.chunks(d) {
                        add_into(gb, gr);
                    }
                }
                if let Some(gx) = grad_slot(nodes, grads, *x) {
                    let mut dxhat = vec![0.0; d];
                    for r in 0..rows {
                        let gr = &g[r * d..(r + 1) * d];
                        let xr = &xhat[r * d..(r + 1) * d];
                        for j in 0..d {
                            dxhat[j] = gr[j] * gain_v[j];
                        }
                        let mean_d = dxhat.iter().sum::<f64>() / d as f64;
                        let mean_dx = dxhat.iter().zip(xr).map(|(a, b)| a * b).sum::<f64>() / d as f64;
                        let gxr = &mut gx[r * d..(r + 1) * d];
                        for j in 0..d {
                            gxr[j] += rstd[r] * (dxhat[j] - mean_d - xr[j] * mean_dx);
                        }
                    }
                }
            }
            Op::Gelu(x) => {
                let tx = nodes[x.0].value.data();
                if let Some(gx) = grad_slot(nodes, grads, *x) {
                    for ((o, &gi), &v) in gx.iter_mut().zip(g).zip(tx) {
                        let t = (GELU_C * (v + GELU_A * v * v * v)).tanh();
                        let dt = (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * v * v);
                        *o += gi * (0.5 * (1.0 + t) + 0.5 * v * dt);
                    }
                }
            }
            Op::Tanh(x) => {
                let y = node.value.data();
                if let Some(gx) = grad_slot(nodes, grads, *x) {
                    for ((o, &gi), &t) in gx.iter_mut().zip(g).zip(y) {
                        *o += gi * (1.0 - t * t);
                    }
                }
            }
            Op::LogSoftmaxGather { logits, targets } => {
                let v = nodes[logits.0].value.cols();
                let probs = &node.aux;
                if let Some(gl) = grad_slot(nodes, grads, *logits) {
                    for (r, &t) in targets.iter().enumerate() {
                        let gr = g[r];
                        let row = &mut gl[r * v..(r + 1) * v];
                        let pr = &probs[r * v..(r + 1) * v];
                        for j in 0..v {
                            row[j] -= gr * pr[j];
                        }
                        row[t] += gr;
                    }
                }
            }
            Op::Sum(x) => {
                if let Some(gx) = grad_slot(nodes, grads, *x) {
                    for o in gx.iter_mut() {
                        *o += g[0];
                    }
                }
            }
            Op::Mean(x) => {
                if let Some(gx) = grad_slot(nodes, grads, *x) {
                    let f = g[0] / gx.len() as f64;
                    for o in gx.iter_mut() {
                        *o += f;
                    }
                }
            }
            Op::SliceCols { x, start } => {
                let n = nodes[x.0].value.cols();
                let len = node.value.cols();
                if let Some(gx) = grad_slot(nodes, grads, *x) {
                    for (r, gr) in g.chunks(len).enumerate() {
                        add_into(&mut gx[r * n + start..r * n + start + len], gr);
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let total = node.value.cols();
                let mut offset = 0;
                for p in parts {
                    let pn = nodes[p.0].value.cols();
                    if let Some(gp) = grad_slot(nodes, grads, *p) {
                        for (r, gpr) in gp.chunks_mut(pn).enumerate() {
                            add_into(gpr, &g[r * total + offset..r * total + offset + pn]);
                        }
                    }
                    offset += pn;
                }
            }
            Op::SliceRows { x, start } => {
                let n = nodes[x.0].value.cols();
                if let Some(gx) = grad_slot(nodes, grads, *x) {
                    add_into(&mut gx[start * n..start * n + g.len()], g);
                }
            }
            Op::Stack(items) => {
                for (k, it) in items.iter().enumerate() {
                    if let Some(gi) = grad_slot(nodes, grads, *it) {
                        gi[0] += g[k];
                    }
                }
            }
            Op::GatherRows { table, ids } => {
                let d = node.value.cols();
                if let Some(gt) = grad_slot(nodes, grads, *table) {
                    for (r, &id) in ids.iter().enumerate() {
                        add_into(&mut gt[id * d..(id + 1) * d], &g[r * d..(r + 1) * d]);
                    }
                }
            }
        }
    }
}

fn grad_slot<'a>(nodes: &[Node], grads: &'a mut [Option<Vec<f64>>], v: Var) -> Option<&'a mut Vec<f64>> {
    let n = &nodes[v.0];
    if !n.requires_grad {
        return None;
    }
    let len = n.value.len();
    Some(grads[v.0].get_or_insert_with(|| vec![0.0; len]))
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Numerically stable softmax of one slice.
pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        z += *x;
    }
    for x in row.iter_mut() {
        *x /= z;
    }
}
