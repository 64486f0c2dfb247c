//! Tape-recorded computation graph with reverse-mode differentiation.
//!
//! Every builder method evaluates its op eagerly and appends a node to the
//! tape, so node order is a topological order and `backward` walks it in
//! reverse. Parameter nodes borrow their values from a [`ParamTree`];
//! gradients come back as a [`Gradients`] set indexed like that tree.

use super::tensor::gemm;
use super::{Gradients, NdError, ParamTree, Tensor};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param(usize),
    MatMul(Var, Var),
    Linear(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Exp(Var),
    Log(Var),
    Square(Var),
    Softmax(Var),
    LogSoftmax(Var),
    SumRows(Var),
    Sum(Var),
    Mean(Var),
    Gather(Var, Vec<usize>),
    RowDot(Var, Var),
    WeightedSum(Var, Vec<Var>),
    Clamp(Var, f64, f64),
    Minimum(Var, Var),
    Concat(Var, Var),
    PerSampleLinear(Var, Var, usize),
}

enum Value {
    Owned(Tensor),
    Param(usize),
}

struct Node {
    value: Value,
    op: Op,
    needs_grad: bool,
}

pub struct Graph<'p> {
    params: &'p ParamTree,
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> NdError {
    NdError::ShapeMismatch {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

fn require_matrix(op: &'static str, t: &Tensor) -> Result<(usize, usize), NdError> {
    if t.shape().len() != 2 {
        return Err(NdError::InvalidShape {
            shape: t.shape().to_vec(),
            reason: format!("{op} expects a matrix"),
        });
    }
    Ok((t.shape()[0], t.shape()[1]))
}

fn leading_shape(t: &Tensor) -> Vec<usize> {
    let s = t.shape();
    if s.len() == 1 {
        vec![1]
    } else {
        s[..s.len() - 1].to_vec()
    }
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamTree) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            param_vars: vec![None; params.len()],
        }
    }

    pub fn params(&self) -> &'p ParamTree {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        match &self.nodes[v.0].value {
            Value::Owned(t) => t,
            Value::Param(i) => &self.params.entry(*i).value,
        }
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, op_name: &'static str, t: Tensor, op: Op, needs_grad: bool) -> Result<Var, NdError> {
        if !t.is_finite() {
            return Err(NdError::NonFinite(op_name.to_string()));
        }
        self.nodes.push(Node {
            value: Value::Owned(t),
            op,
            needs_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Records a non-differentiable input. Non-finite data is rejected.
    pub fn input(&mut self, t: Tensor) -> Result<Var, NdError> {
        self.push("input", t, Op::Leaf, false)
    }

    /// Parameter node for the named entry; repeated calls share one node.
    pub fn param(&mut self, name: &str) -> Result<Var, NdError> {
        let idx = self.params.index_of(name)?;
        if let Some(v) = self.param_vars[idx] {
            return Ok(v);
        }
        self.nodes.push(Node {
            value: Value::Param(idx),
            op: Op::Param(idx),
            needs_grad: true,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars[idx] = Some(v);
        Ok(v)
    }

    /// `a @ b` for `a: [n, k]`, `b: [k, m]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NdError> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (n, k) = require_matrix("matmul", ta)?;
        let (k2, m) = require_matrix("matmul", tb)?;
        if k != k2 {
            return Err(mismatch("matmul", ta, tb));
        }
        let mut out = vec![0.0; n * m];
        gemm(n, k, m, ta.data(), false, tb.data(), false, &mut out, false);
        let ng = self.needs(a) || self.needs(b);
        self.push("matmul", Tensor::matrix(n, m, out), Op::MatMul(a, b), ng)
    }

    /// `x @ w^T` for `x: [n, k]`, `w: [m, k]` (weights stored output-major).
    pub fn linear(&mut self, x: Var, w: Var) -> Result<Var, NdError> {
        let (tx, tw) = (self.value(x), self.value(w));
        let (n, k) = require_matrix("linear", tx)?;
        let (m, k2) = require_matrix("linear", tw)?;
        if k != k2 {
            return Err(mismatch("linear", tx, tw));
        }
        let mut out = vec![0.0; n * m];
        gemm(n, k, m, tx.data(), false, tw.data(), true, &mut out, false);
        let ng = self.needs(x) || self.needs(w);
        self.push("linear", Tensor::matrix(n, m, out), Op::Linear(x, w), ng)
    }

    /// Adds a bias vector `[m]` to every row of `x: [.., m]`.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var, NdError> {
        let (tx, tb) = (self.value(x), self.value(b));
        if tb.shape().len() != 1 || tb.len() != tx.cols() {
            return Err(mismatch("add_bias", tx, tb));
        }
        let mut out = tx.clone();
        let m = tb.len();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v += tb.data()[i % m];
        }
        let ng = self.needs(x) || self.needs(b);
        self.push("add_bias", out, Op::AddBias(x, b), ng)
    }

    /// Affine layer `x @ w^T + b`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var, NdError> {
        let y = self.linear(x, w)?;
        self.add_bias(y, b)
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var, NdError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(mismatch(name, ta, tb));
        }
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let t = Tensor::new(ta.shape().to_vec(), data)?;
        let ng = self.needs(a) || self.needs(b);
        self.push(name, t, op, ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NdError> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NdError> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NdError> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Elementwise minimum; ties route the gradient to `a`.
    pub fn minimum(&mut self, a: Var, b: Var) -> Result<Var, NdError> {
        self.binary("minimum", a, b, f64::min, Op::Minimum(a, b))
    }

    fn unary(&mut self, name: &'static str, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var, NdError> {
        let t = self.value(a).map(f);
        let ng = self.needs(a);
        self.push(name, t, op, ng)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var, NdError> {
        self.unary("scale", a, |x| x * s, Op::Scale(a, s))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, NdError> {
        self.unary("relu", a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, NdError> {
        self.unary(
            "sigmoid",
            a,
            |x| {
                if x >= 0.0 {
                    1.0 / (1.0 + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (1.0 + e)
                }
            },
            Op::Sigmoid(a),
        )
    }

    pub fn exp(&mut self, a: Var) -> Result<Var, NdError> {
        self.unary("exp", a, f64::exp, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Result<Var, NdError> {
        self.unary("log", a, f64::ln, Op::Log(a))
    }

    pub fn square(&mut self, a: Var) -> Result<Var, NdError> {
        self.unary("square", a, |x| x * x, Op::Square(a))
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var, NdError> {
        self.unary("clamp", a, |x| x.clamp(lo, hi), Op::Clamp(a, lo, hi))
    }

    /// Softmax over the last axis, computed with max-subtraction.
    pub fn softmax(&mut self, a: Var) -> Result<Var, NdError> {
        let mut t = self.value(a).clone();
        let c = t.cols();
        for row in t.data_mut().chunks_mut(c) {
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for v in row.iter_mut() {
                *v = (*v - mx).exp();
                s += *v;
            }
            for v in row.iter_mut() {
                *v /= s;
            }
        }
        let ng = self.needs(a);
        self.push("softmax", t, Op::Softmax(a), ng)
    }

    /// Log-softmax over the last axis.
    pub fn log_softmax(&mut self, a: Var) -> Result<Var, NdError> {
        let mut t = self.value(a).clone();
        let c = t.cols();
        for row in t.data_mut().chunks_mut(c) {
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = mx + row.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
            for v in row.iter_mut() {
                *v -= lse;
            }
        }
        let ng = self.needs(a);
        self.push("log_softmax", t, Op::LogSoftmax(a), ng)
    }

    /// Sums over the last axis: `[.., m] -> [..]`.
    pub fn sum_rows(&mut self, a: Var) -> Result<Var, NdError> {
        let ta = self.value(a);
        let c = ta.cols();
        let data: Vec<f64> = ta.data().chunks(c).map(|r| r.iter().sum()).collect();
        let t = Tensor::new(leading_shape(ta), data)?;
        let ng = self.needs(a);
        self.push("sum_rows", t, Op::SumRows(a), ng)
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, NdError> {
        let t = Tensor::scalar(self.value(a).sum());
        let ng = self.needs(a);
        self.push("sum", t, Op::Sum(a), ng)
    }

    pub fn mean(&mut self, a: Var) -> Result<Var, NdError> {
        let ta = self.value(a);
        let t = Tensor::scalar(ta.sum() / ta.len() as f64);
        let ng = self.needs(a);
        self.push("mean", t, Op::Mean(a), ng)
    }

    /// Picks `a[i, idx[i]]` from every row.
    pub fn gather(&mut self, a: Var, idx: &[usize]) -> Result<Var, NdError> {
        let ta = self.value(a);
        let c = ta.cols();
        if idx.len() != ta.rows() {
            return Err(NdError::ShapeMismatch {
                op: "gather",
                left: ta.shape().to_vec(),
                right: vec![idx.len()],
            });
        }
        if let Some(&bad) = idx.iter().find(|&&j| j >= c) {
            return Err(NdError::InvalidShape {
                shape: ta.shape().to_vec(),
                reason: format!("gather index {bad} out of range"),
            });
        }
        let data: Vec<f64> = idx.iter().enumerate().map(|(i, &j)| ta.data()[i * c + j]).collect();
        let t = Tensor::new(leading_shape(ta), data)?;
        let ng = self.needs(a);
        self.push("gather", t, Op::Gather(a, idx.to_vec()), ng)
    }

    /// Row-wise dot product of two `[n, m]` tensors.
    pub fn row_dot(&mut self, a: Var, b: Var) -> Result<Var, NdError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(mismatch("row_dot", ta, tb));
        }
        let c = ta.cols();
        let data: Vec<f64> = ta
            .data()
            .chunks(c)
            .zip(tb.data().chunks(c))
            .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum())
            .collect();
        let t = Tensor::new(leading_shape(ta), data)?;
        let ng = self.needs(a) || self.needs(b);
        self.push("row_dot", t, Op::RowDot(a, b), ng)
    }

    /// Per-row interpolation `out[i] = sum_k weights[i, k] * items[k][i]`.
    pub fn weighted_sum(&mut self, weights: Var, items: &[Var]) -> Result<Var, NdError> {
        let tw = self.value(weights);
        let (n, k) = require_matrix("weighted_sum", tw)?;
        if items.len() != k {
            return Err(NdError::ShapeMismatch {
                op: "weighted_sum",
                left: tw.shape().to_vec(),
                right: vec![items.len()],
            });
        }
        let first = self.value(items[0]);
        let (n2, h) = require_matrix("weighted_sum", first)?;
        if n2 != n {
            return Err(mismatch("weighted_sum", tw, first));
        }
        let mut out = vec![0.0; n * h];
        for (j, &it) in items.iter().enumerate() {
            let ti = self.value(it);
            if ti.shape() != [n, h] {
                return Err(mismatch("weighted_sum", first, ti));
            }
            for i in 0..n {
                let w = tw.data()[i * k + j];
                let src = &ti.data()[i * h..(i + 1) * h];
                for (o, s) in out[i * h..(i + 1) * h].iter_mut().zip(src) {
                    *o += w * s;
                }
            }
        }
        let ng = self.needs(weights) || items.iter().any(|&v| self.needs(v));
        self.push(
            "weighted_sum",
            Tensor::matrix(n, h, out),
            Op::WeightedSum(weights, items.to_vec()),
            ng,
        )
    }

    /// Concatenates `[n, p]` and `[n, q]` along the last axis.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var, NdError> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (n, p) = require_matrix("concat", ta)?;
        let (n2, q) = require_matrix("concat", tb)?;
        if n != n2 {
            return Err(mismatch("concat", ta, tb));
        }
        let mut out = Vec::with_capacity(n * (p + q));
        for i in 0..n {
            out.extend_from_slice(ta.row(i));
            out.extend_from_slice(tb.row(i));
        }
        let ng = self.needs(a) || self.needs(b);
        self.push("concat", Tensor::matrix(n, p + q, out), Op::Concat(a, b), ng)
    }

    /// Applies a per-sample generated linear layer.
    ///
    /// Row `i` of `gen` holds an `[out, F]` weight matrix (row-major)
    /// followed by `out` biases; it is applied to row `i` of `feat: [n, F]`.
    pub fn per_sample_linear(&mut self, feat: Var, gen: Var, out: usize) -> Result<Var, NdError> {
        let (tf, tg) = (self.value(feat), self.value(gen));
        let (n, f) = require_matrix("per_sample_linear", tf)?;
        let (n2, gw) = require_matrix("per_sample_linear", tg)?;
        if n != n2 || gw != out * (f + 1) {
            return Err(mismatch("per_sample_linear", tf, tg));
        }
        let mut res = vec![0.0; n * out];
        for i in 0..n {
            let x = tf.row(i);
            let g = tg.row(i);
            for o in 0..out {
                let w = &g[o * f..(o + 1) * f];
                res[i * out + o] = w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + g[out * f + o];
            }
        }
        let ng = self.needs(feat) || self.needs(gen);
        self.push(
            "per_sample_linear",
            Tensor::matrix(n, out, res),
            Op::PerSampleLinear(feat, gen, out),
            ng,
        )
    }

    /// Backward pass from a scalar output with seed 1.
    pub fn backward_scalar(&self, out: Var) -> Result<Gradients, NdError> {
        let seed = Tensor::full(self.check_var(out)?.shape(), 1.0);
        self.backward(out, &seed)
    }

    fn check_var(&self, v: Var) -> Result<&Tensor, NdError> {
        if v.0 >= self.nodes.len() {
            return Err(NdError::UnknownNode(v.0));
        }
        Ok(self.value(v))
    }

    /// Propagates `seed = d(loss)/d(out)` back to every parameter node.
    pub fn backward(&self, out: Var, seed: &Tensor) -> Result<Gradients, NdError> {
        let out_val = self.check_var(out)?;
        if out_val.shape() != seed.shape() {
            return Err(mismatch("backward seed", out_val, seed));
        }
        if !seed.is_finite() {
            return Err(NdError::NonFinite("backward seed".into()));
        }
        let mut grads: Vec<Option<Tensor>> = Vec::with_capacity(out.0 + 1);
        grads.resize_with(out.0 + 1, || None);
        grads[out.0] = Some(seed.clone());
        let mut result = Gradients::empty(self.params.len());

        for id in (0..=out.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            if !node.needs_grad {
                continue;
            }
            self.propagate(node, Var(id), g, &mut grads, &mut result);
        }
        if !result.is_finite() {
            return Err(NdError::NonFinite("backward".into()));
        }
        Ok(result)
    }

    fn propagate(
        &self,
        node: &Node,
        me: Var,
        g: Tensor,
        grads: &mut [Option<Tensor>],
        result: &mut Gradients,
    ) {
        let mut send = |v: Var, t: Tensor| {
            if self.nodes[v.0].needs_grad {
                match &mut grads[v.0] {
                    Some(acc) => acc.add_scaled(&t, 1.0),
                    slot @ None => *slot = Some(t),
                }
            }
        };
        let y = self.value(me);
        match &node.op {
            Op::Leaf => {}
            Op::Param(i) => result.set_entry(*i, g),
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (n, k) = (ta.shape()[0], ta.shape()[1]);
                let m = tb.shape()[1];
                if self.needs(*a) {
                    let mut ga = vec![0.0; n * k];
                    gemm(n, m, k, g.data(), false, tb.data(), true, &mut ga, false);
                    send(*a, Tensor::matrix(n, k, ga));
                }
                if self.needs(*b) {
                    let mut gb = vec![0.0; k * m];
                    gemm(k, n, m, ta.data(), true, g.data(), false, &mut gb, false);
                    send(*b, Tensor::matrix(k, m, gb));
                }
            }
            Op::Linear(x, w) => {
                let (tx, tw) = (self.value(*x), self.value(*w));
                let (n, k) = (tx.shape()[0], tx.shape()[1]);
                let m = tw.shape()[0];
                if self.needs(*x) {
                    let mut gx = vec![0.0; n * k];
                    gemm(n, m, k, g.data(), false, tw.data(), false, &mut gx, false);
                    send(*x, Tensor::matrix(n, k, gx));
                }
                if self.needs(*w) {
                    let mut gw = vec![0.0; m * k];
                    gemm(m, n, k, g.data(), true, tx.data(), false, &mut gw, false);
                    send(*w, Tensor::matrix(m, k, gw));
                }
            }
            Op::AddBias(x, b) => {
                if self.needs(*b) {
                    let m = self.value(*b).len();
                    let mut gb = vec![0.0; m];
                    for row in g.data().chunks(m) {
                        for (o, v) in gb.iter_mut().zip(row) {
                            *o += v;
                        }
                    }
                    send(*b, Tensor::vector(gb));
                }
                send(*x, g);
            }
            Op::Add(a, b) => {
                if self.needs(*b) {
                    send(*b, g.clone());
                }
                send(*a, g);
            }
            Op::Sub(a, b) => {
                if self.needs(*b) {
                    send(*b, g.map(|v| -v));
                }
                send(*a, g);
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                if self.needs(*a) {
                    send(*a, zip_map(&g, tb, |gv, bv| gv * bv));
                }
                if self.needs(*b) {
                    send(*b, zip_map(&g, ta, |gv, av| gv * av));
                }
            }
            Op::Minimum(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let pick_a: Vec<bool> = ta.data().iter().zip(tb.data()).map(|(x, y)| x <= y).collect();
                if self.needs(*a) {
                    let d = g.data().iter().zip(&pick_a).map(|(&v, &p)| if p { v } else { 0.0 }).collect();
                    send(*a, Tensor::new(g.shape().to_vec(), d).expect("shape"));
                }
                if self.needs(*b) {
                    let d = g.data().iter().zip(&pick_a).map(|(&v, &p)| if p { 0.0 } else { v }).collect();
                    send(*b, Tensor::new(g.shape().to_vec(), d).expect("shape"));
                }
            }
            Op::Scale(a, s) => send(*a, g.map(|v| v * s)),
            Op::Relu(a) => send(*a, zip_map(&g, y, |gv, yv| if yv > 0.0 { gv } else { 0.0 })),
            Op::Sigmoid(a) => send(*a, zip_map(&g, y, |gv, yv| gv * yv * (1.0 - yv))),
            Op::Exp(a) => send(*a, zip_map(&g, y, |gv, yv| gv * yv)),
            Op::Log(a) => send(*a, zip_map(&g, self.value(*a), |gv, xv| gv / xv)),
            Op::Square(a) => send(*a, zip_map(&g, self.value(*a), |gv, xv| 2.0 * gv * xv)),
            Op::Clamp(a, lo, hi) => {
                let (lo, hi) = (*lo, *hi);
                send(
                    *a,
                    zip_map(&g, self.value(*a), |gv, xv| if xv > lo && xv < hi { gv } else { 0.0 }),
                )
            }
            Op::Softmax(a) => {
                let c = y.cols();
                let mut gx = g.clone();
                for (row_g, row_y) in gx.data_mut().chunks_mut(c).zip(y.data().chunks(c)) {
                    let dot: f64 = row_g.iter().zip(row_y).map(|(p, q)| p * q).sum();
                    for (gv, yv) in row_g.iter_mut().zip(row_y) {
                        *gv = yv * (*gv - dot);
                    }
                }
                send(*a, gx);
            }
            Op::LogSoftmax(a) => {
                let c = y.cols();
                let mut gx = g.clone();
                for (row_g, row_y) in gx.data_mut().chunks_mut(c).zip(y.data().chunks(c)) {
                    let s: f64 = row_g.iter().sum();
                    for (gv, yv) in row_g.iter_mut().zip(row_y) {
                        *gv -= yv.exp() * s;
                    }
                }
                send(*a, gx);
            }
            Op::SumRows(a) => {
                let ta = self.value(*a);
                let c = ta.cols();
                let d = (0..ta.len()).map(|i| g.data()[i / c]).collect();
                send(*a, Tensor::new(ta.shape().to_vec(), d).expect("shape"));
            }
            Op::Sum(a) => {
                let ta = self.value(*a);
                send(*a, Tensor::full(ta.shape(), g.item()));
            }
            Op::Mean(a) => {
                let ta = self.value(*a);
                send(*a, Tensor::full(ta.shape(), g.item() / ta.len() as f64));
            }
            Op::Gather(a, idx) => {
                let ta = self.value(*a);
                let c = ta.cols();
                let mut gx = Tensor::zeros(ta.shape());
                for (i, &j) in idx.iter().enumerate() {
                    gx.data_mut()[i * c + j] += g.data()[i];
                }
                send(*a, gx);
            }
            Op::RowDot(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let c = ta.cols();
                let scale_rows = |t: &Tensor| {
                    let d = t.data().iter().enumerate().map(|(i, v)| v * g.data()[i / c]).collect();
                    Tensor::new(t.shape().to_vec(), d).expect("shape")
                };
                if self.needs(*a) {
                    send(*a, scale_rows(tb));
                }
                if self.needs(*b) {
                    send(*b, scale_rows(ta));
                }
            }
            Op::WeightedSum(w, items) => {
                let tw = self.value(*w);
                let (n, k) = (tw.shape()[0], tw.shape()[1]);
                let h = g.cols();
                let mut gw = vec![0.0; n * k];
                for (j, &it) in items.iter().enumerate() {
                    let ti = self.value(it);
                    if self.needs(*w) {
                        for i in 0..n {
                            gw[i * k + j] = g.row(i).iter().zip(ti.row(i)).map(|(p, q)| p * q).sum();
                        }
                    }
                    if self.needs(it) {
                        let mut gi = vec![0.0; n * h];
                        for i in 0..n {
                            let wv = tw.data()[i * k + j];
                            for (o, gv) in gi[i * h..(i + 1) * h].iter_mut().zip(g.row(i)) {
                                *o = wv * gv;
                            }
                        }
                        send(it, Tensor::matrix(n, h, gi));
                    }
                }
                if self.needs(*w) {
                    send(*w, Tensor::matrix(n, k, gw));
                }
            }
            Op::Concat(a, b) => {
                let (p, q) = (self.value(*a).cols(), self.value(*b).cols());
                let n = g.rows();
                if self.needs(*a) {
                    let d = (0..n).flat_map(|i| g.row(i)[..p].to_vec()).collect();
                    send(*a, Tensor::matrix(n, p, d));
                }
                if self.needs(*b) {
                    let d = (0..n).flat_map(|i| g.row(i)[p..p + q].to_vec()).collect();
                    send(*b, Tensor::matrix(n, q, d));
                }
            }
            Op::PerSampleLinear(feat, gen, out) => {
                let (tf, tg) = (self.value(*feat), self.value(*gen));
                let out = *out;
                let (n, f) = (tf.shape()[0], tf.shape()[1]);
                if self.needs(*feat) {
                    let mut gf = vec![0.0; n * f];
                    for i in 0..n {
                        let gr = tg.row(i);
                        let dst = &mut gf[i * f..(i + 1) * f];
                        for o in 0..out {
                            let go = g.data()[i * out + o];
                            for (d, w) in dst.iter_mut().zip(&gr[o * f..(o + 1) * f]) {
                                *d += go * w;
                            }
                        }
                    }
                    send(*feat, Tensor::matrix(n, f, gf));
                }
                if self.needs(*gen) {
                    let width = out * (f + 1);
                    let mut gg = vec![0.0; n * width];
                    for i in 0..n {
                        let x = tf.row(i);
                        let dst = &mut gg[i * width..(i + 1) * width];
                        for o in 0..out {
                            let go = g.data()[i * out + o];
                            for (d, xv) in dst[o * f..(o + 1) * f].iter_mut().zip(x) {
                                *d = go * xv;
                            }
                            dst[out * f + o] = go;
                        }
                    }
                    send(*gen, Tensor::matrix(n, width, gg));
                }
            }
        }
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let d = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), d).expect("same shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndgrad::Owner;

    fn single(name: &str, t: Tensor) -> ParamTree {
        let mut p = ParamTree::new();
        p.insert(name, t, Owner::Actor).unwrap();
        p
    }

    #[test]
    fn relu_values() {
        let p = ParamTree::new();
        let mut g = Graph::new(&p);
        let x = g.input(Tensor::vector(vec![-1.0, 0.0, 2.0])).unwrap();
        let y = g.relu(x).unwrap();
        assert_eq!(g.value(y).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn softmax_symmetric() {
        let p = ParamTree::new();
        let mut g = Graph::new(&p);
        let x = g.input(Tensor::vector(vec![0.0, 0.0])).unwrap();
        let y = g.softmax(x).unwrap();
        assert_eq!(g.value(y).data(), &[0.5, 0.5]);
    }

    #[test]
    fn weighted_sum_interpolates_rows() {
        let p = ParamTree::new();
        let mut g = Graph::new(&p);
        let w = g.input(Tensor::matrix(1, 2, vec![0.25, 0.75])).unwrap();
        let a = g.input(Tensor::matrix(1, 2, vec![4.0, 0.0])).unwrap();
        let b = g.input(Tensor::matrix(1, 2, vec![0.0, 4.0])).unwrap();
        let y = g.weighted_sum(w, &[a, b]).unwrap();
        assert_eq!(g.value(y).data(), &[1.0, 3.0]);
    }

    #[test]
    fn square_gradient() {
        let p = single("x", Tensor::scalar(3.0));
        let mut g = Graph::new(&p);
        let x = g.param("x").unwrap();
        let y = g.square(x).unwrap();
        let grads = g.backward_scalar(y).unwrap();
        assert_eq!(grads.get(0).unwrap().data(), &[6.0]);
    }

    #[test]
    fn log_softmax_gradient() {
        let p = single("x", Tensor::matrix(1, 2, vec![0.0, 0.0]));
        let mut g = Graph::new(&p);
        let x = g.param("x").unwrap();
        let ls = g.log_softmax(x).unwrap();
        let y = g.gather(ls, &[0]).unwrap();
        let grads = g.backward_scalar(y).unwrap();
        assert_eq!(grads.get(0).unwrap().data(), &[0.5, -0.5]);

        // same through the unfused log(softmax(x)) route
        let mut g = Graph::new(&p);
        let x = g.param("x").unwrap();
        let s = g.softmax(x).unwrap();
        let l = g.log(s).unwrap();
        let y = g.gather(l, &[0]).unwrap();
        let grads = g.backward_scalar(y).unwrap();
        let d = grads.get(0).unwrap().data();
        assert!((d[0] - 0.5).abs() < 1e-15 && (d[1] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let p = ParamTree::new();
        let mut g = Graph::new(&p);
        let a = g.input(Tensor::matrix(2, 3, vec![0.0; 6])).unwrap();
        let b = g.input(Tensor::matrix(2, 2, vec![0.0; 4])).unwrap();
        let err = g.matmul(a, b).unwrap_err();
        assert_eq!(
            err,
            NdError::ShapeMismatch {
                op: "matmul",
                left: vec![2, 3],
                right: vec![2, 2]
            }
        );
        assert!(err.to_string().contains("[2, 3]") && err.to_string().contains("[2, 2]"));
    }

    #[test]
    fn non_finite_input_rejected() {
        let p = ParamTree::new();
        let mut g = Graph::new(&p);
        assert!(matches!(
            g.input(Tensor::vector(vec![1.0, f64::NAN])),
            Err(NdError::NonFinite(_))
        ));
    }

    #[test]
    fn backward_before_forward_is_an_error() {
        let p = single("x", Tensor::scalar(1.0));
        let g = Graph::new(&p);
        assert!(matches!(
            g.backward_scalar(Var(0)),
            Err(NdError::UnknownNode(0))
        ));
    }

    #[test]
    fn repeated_backward_accumulates() {
        let mut p = single("x", Tensor::scalar(3.0));
        let grads = {
            let mut g = Graph::new(&p);
            let x = g.param("x").unwrap();
            let y = g.square(x).unwrap();
            g.backward_scalar(y).unwrap()
        };
        p.accumulate(&grads, 1.0);
        p.accumulate(&grads, 1.0);
        assert_eq!(p.entries()[0].grad.data(), &[12.0]);
    }
}
