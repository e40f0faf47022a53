//! Reverse-mode autodiff over a static computation graph.
//!
//! A `Tape` is built once per model: leaves are named inputs and named
//! trainable parameters, interior nodes are whole-matrix operations. Forward
//! evaluation binds leaf names to matrices and memoizes every ancestor of the
//! requested node; backward seeds the designated scalar and accumulates
//! vector-Jacobian products in reverse node order. Shapes are checked at
//! evaluation time so the same graph serves any batch size.
//!
//! Division follows IEEE semantics (x/0 is ±inf, 0/0 is NaN); nothing here
//! masks non-finite values — the training loop treats them as a run failure.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Clone, Copy, PartialEq, Eq, Debug, Hash)]
pub struct NodeId(usize);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Input(String),
    Param(String),
    Const(Matrix),
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    AddScalar(NodeId, f64),
    MulScalar(NodeId, f64),
    Abs(NodeId),
    Relu(NodeId),
    /// Clamp to [lo, hi]; lo = -inf or hi = +inf gives one-sided min/max
    /// against a constant. Gradient is identity inside the closed interval
    /// (boundary included), zero outside.
    Clamp(NodeId, f64, f64),
    /// RxC -> Rx1, sum over each row.
    SumRows(NodeId),
    /// RxC -> 1xC, sum over each column.
    SumCols(NodeId),
    /// RxC -> 1x1, mean over all elements.
    MeanAll(NodeId),
    /// RxC -> Rx1, product over each row. Backward uses prefix/suffix
    /// products, so rows containing zeros still get exact cofactors.
    ProdRows(NodeId),
    /// (1xC, like RxC') -> RxC: repeat the single row to match `like`'s rows.
    ExpandRows(NodeId, NodeId),
    /// (Rx1, like R'xC) -> RxC: repeat the single column to match `like`'s cols.
    ExpandCols(NodeId, NodeId),
    Transpose(NodeId),
    /// RxC -> Rx1, copy of one column.
    SliceCol(NodeId, usize),
    /// Horizontal concatenation; all parts must share the row count.
    ConcatCols(Vec<NodeId>),
    /// Elementwise standard normal CDF; backward is the normal pdf.
    NormCdf(NodeId),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Input(_) => "input",
            Op::Param(_) => "param",
            Op::Const(_) => "const",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::AddScalar(..) => "add_scalar",
            Op::MulScalar(..) => "mul_scalar",
            Op::Abs(_) => "abs",
            Op::Relu(_) => "relu",
            Op::Clamp(..) => "clamp",
            Op::SumRows(_) => "sum_rows",
            Op::SumCols(_) => "sum_cols",
            Op::MeanAll(_) => "mean_all",
            Op::ProdRows(_) => "prod_rows",
            Op::ExpandRows(..) => "expand_rows",
            Op::ExpandCols(..) => "expand_cols",
            Op::Transpose(_) => "transpose",
            Op::SliceCol(..) => "slice_col",
            Op::ConcatCols(_) => "concat_cols",
            Op::NormCdf(_) => "norm_cdf",
        }
    }

    fn inputs(&self) -> Vec<NodeId> {
        match self {
            Op::Input(_) | Op::Param(_) | Op::Const(_) => vec![],
            Op::MatMul(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::Div(a, b)
            | Op::ExpandRows(a, b)
            | Op::ExpandCols(a, b) => vec![*a, *b],
            Op::AddScalar(a, _)
            | Op::MulScalar(a, _)
            | Op::Abs(a)
            | Op::Relu(a)
            | Op::Clamp(a, _, _)
            | Op::SumRows(a)
            | Op::SumCols(a)
            | Op::MeanAll(a)
            | Op::ProdRows(a)
            | Op::Transpose(a)
            | Op::SliceCol(a, _)
            | Op::NormCdf(a) => vec![*a],
            Op::ConcatCols(parts) => parts.clone(),
        }
    }
}

/// Leaf bindings for one forward pass.
#[derive(Default, Clone)]
pub struct Bindings {
    values: HashMap<String, Matrix>,
}

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(mut self, name: impl Into<String>, value: Matrix) -> Self {
        self.values.insert(name.into(), value);
        self
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Matrix) {
        self.values.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.values.get(name)
    }
}

/// Gradients keyed by node id, produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Matrix> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, id: NodeId) -> Option<Matrix> {
        self.grads.get_mut(id.0).and_then(|g| g.take())
    }
}

pub struct Tape {
    nodes: Vec<Op>,
    params: Vec<NodeId>,
    values: Vec<Option<Matrix>>,
    output: Option<NodeId>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            params: Vec::new(),
            values: Vec::new(),
            output: None,
        }
    }

    fn push(&mut self, op: Op) -> NodeId {
        self.nodes.push(op);
        NodeId(self.nodes.len() - 1)
    }

    pub fn input(&mut self, name: impl Into<String>) -> NodeId {
        self.push(Op::Input(name.into()))
    }

    pub fn param(&mut self, name: impl Into<String>) -> NodeId {
        let id = self.push(Op::Param(name.into()));
        self.params.push(id);
        id
    }

    pub fn constant(&mut self, value: Matrix) -> NodeId {
        self.push(Op::Const(value))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Mul(a, b))
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Div(a, b))
    }

    pub fn add_scalar(&mut self, a: NodeId, s: f64) -> NodeId {
        self.push(Op::AddScalar(a, s))
    }

    pub fn mul_scalar(&mut self, a: NodeId, s: f64) -> NodeId {
        self.push(Op::MulScalar(a, s))
    }

    pub fn abs(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Abs(a))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Relu(a))
    }

    pub fn clamp(&mut self, a: NodeId, lo: f64, hi: f64) -> NodeId {
        self.push(Op::Clamp(a, lo, hi))
    }

    /// min(x, c) elementwise.
    pub fn min_const(&mut self, a: NodeId, c: f64) -> NodeId {
        self.push(Op::Clamp(a, f64::NEG_INFINITY, c))
    }

    /// max(x, c) elementwise.
    pub fn max_const(&mut self, a: NodeId, c: f64) -> NodeId {
        self.push(Op::Clamp(a, c, f64::INFINITY))
    }

    pub fn sum_rows(&mut self, a: NodeId) -> NodeId {
        self.push(Op::SumRows(a))
    }

    pub fn sum_cols(&mut self, a: NodeId) -> NodeId {
        self.push(Op::SumCols(a))
    }

    pub fn mean_all(&mut self, a: NodeId) -> NodeId {
        self.push(Op::MeanAll(a))
    }

    pub fn prod_rows(&mut self, a: NodeId) -> NodeId {
        self.push(Op::ProdRows(a))
    }

    pub fn expand_rows(&mut self, src: NodeId, like: NodeId) -> NodeId {
        self.push(Op::ExpandRows(src, like))
    }

    pub fn expand_cols(&mut self, src: NodeId, like: NodeId) -> NodeId {
        self.push(Op::ExpandCols(src, like))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Transpose(a))
    }

    pub fn slice_col(&mut self, a: NodeId, col: usize) -> NodeId {
        self.push(Op::SliceCol(a, col))
    }

    pub fn concat_cols(&mut self, parts: Vec<NodeId>) -> NodeId {
        self.push(Op::ConcatCols(parts))
    }

    pub fn norm_cdf(&mut self, a: NodeId) -> NodeId {
        self.push(Op::NormCdf(a))
    }

    pub fn set_output(&mut self, id: NodeId) {
        self.output = Some(id);
    }

    pub fn output(&self) -> Option<NodeId> {
        self.output
    }

    pub fn param_ids(&self) -> &[NodeId] {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Cached forward value of `id` from the most recent forward pass.
    pub fn value(&self, id: NodeId) -> Option<&Matrix> {
        self.values.get(id.0).and_then(|v| v.as_ref())
    }

    /// Ancestors of `target` (inclusive), ascending. Node ids ascend from
    /// leaves to outputs by construction, so ascending id order is a valid
    /// evaluation order.
    fn ancestors(&self, target: NodeId) -> Vec<usize> {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![target];
        while let Some(id) = stack.pop() {
            if seen[id.0] {
                continue;
            }
            seen[id.0] = true;
            stack.extend(self.nodes[id.0].inputs());
        }
        (0..self.nodes.len()).filter(|&i| seen[i]).collect()
    }

    /// Evaluate the designated output node.
    pub fn forward(&mut self, bindings: &Bindings) -> Result<Matrix> {
        let out = self
            .output
            .ok_or_else(|| Error::invalid("tape has no designated output node"))?;
        self.forward_to(out, bindings)
    }

    /// Evaluate `target` and every ancestor, replacing any previous forward
    /// state. Besides the ancestors, every registered parameter leaf is also
    /// bound so that backward can shape exact-zero gradients for parameters
    /// that do not reach the loss.
    pub fn forward_to(&mut self, target: NodeId, bindings: &Bindings) -> Result<Matrix> {
        if target.0 >= self.nodes.len() {
            return Err(Error::invalid(format!("node id {} out of range", target.0)));
        }
        self.values = vec![None; self.nodes.len()];
        let order = self.ancestors(target);
        for idx in order {
            let value = self.eval_node(idx, bindings)?;
            self.values[idx] = Some(value);
        }
        for pid in self.params.clone() {
            if self.values[pid.0].is_none() {
                let value = self.eval_node(pid.0, bindings)?;
                self.values[pid.0] = Some(value);
            }
        }
        Ok(self.values[target.0].clone().expect("target evaluated"))
    }

    fn node_err(&self, idx: usize, detail: String) -> Error {
        Error::Node {
            node: idx,
            op: self.nodes[idx].name(),
            detail,
        }
    }

    fn val(&self, id: NodeId) -> &Matrix {
        self.values[id.0].as_ref().expect("ancestor evaluated before use")
    }

    fn eval_node(&self, idx: usize, bindings: &Bindings) -> Result<Matrix> {
        let op = &self.nodes[idx];
        let out = match op {
            Op::Input(name) | Op::Param(name) => bindings
                .get(name)
                .cloned()
                .ok_or_else(|| Error::UnboundInput(name.clone()))?,
            Op::Const(m) => m.clone(),
            Op::MatMul(a, b) => self
                .val(*a)
                .matmul(self.val(*b))
                .map_err(|e| self.node_err(idx, e.to_string()))?,
            Op::Add(a, b) => self
                .val(*a)
                .zip_map(self.val(*b), "add", |x, y| x + y)
                .map_err(|e| self.node_err(idx, e.to_string()))?,
            Op::Sub(a, b) => self
                .val(*a)
                .zip_map(self.val(*b), "sub", |x, y| x - y)
                .map_err(|e| self.node_err(idx, e.to_string()))?,
            Op::Mul(a, b) => self
                .val(*a)
                .zip_map(self.val(*b), "mul", |x, y| x * y)
                .map_err(|e| self.node_err(idx, e.to_string()))?,
            Op::Div(a, b) => self
                .val(*a)
                .zip_map(self.val(*b), "div", |x, y| x / y)
                .map_err(|e| self.node_err(idx, e.to_string()))?,
            Op::AddScalar(a, s) => self.val(*a).map(|x| x + s),
            Op::MulScalar(a, s) => self.val(*a).map(|x| x * s),
            Op::Abs(a) => self.val(*a).map(f64::abs),
            Op::Relu(a) => self.val(*a).map(|x| if x > 0.0 { x } else { 0.0 }),
            Op::Clamp(a, lo, hi) => {
                let (lo, hi) = (*lo, *hi);
                self.val(*a).map(|x| x.max(lo).min(hi))
            }
            Op::SumRows(a) => {
                let v = self.val(*a);
                let mut out = Matrix::zeros(v.rows(), 1);
                for r in 0..v.rows() {
                    out.set(r, 0, v.row(r).iter().sum());
                }
                out
            }
            Op::SumCols(a) => {
                let v = self.val(*a);
                let mut out = Matrix::zeros(1, v.cols());
                for r in 0..v.rows() {
                    for c in 0..v.cols() {
                        out.set(0, c, out.at(0, c) + v.at(r, c));
                    }
                }
                out
            }
            Op::MeanAll(a) => {
                let v = self.val(*a);
                if v.is_empty() {
                    return Err(self.node_err(idx, "mean of empty matrix".into()));
                }
                Matrix::filled(1, 1, v.mean_all())
            }
            Op::ProdRows(a) => {
                let v = self.val(*a);
                let mut out = Matrix::zeros(v.rows(), 1);
                for r in 0..v.rows() {
                    out.set(r, 0, v.row(r).iter().product());
                }
                out
            }
            Op::ExpandRows(src, like) => {
                let s = self.val(*src);
                let rows = self.val(*like).rows();
                if s.rows() != 1 {
                    return Err(self.node_err(idx, format!("source must be 1xC, got {}x{}", s.rows(), s.cols())));
                }
                let mut out = Matrix::zeros(rows, s.cols());
                for r in 0..rows {
                    for c in 0..s.cols() {
                        out.set(r, c, s.at(0, c));
                    }
                }
                out
            }
            Op::ExpandCols(src, like) => {
                let s = self.val(*src);
                let cols = self.val(*like).cols();
                if s.cols() != 1 {
                    return Err(self.node_err(idx, format!("source must be Rx1, got {}x{}", s.rows(), s.cols())));
                }
                let mut out = Matrix::zeros(s.rows(), cols);
                for r in 0..s.rows() {
                    for c in 0..cols {
                        out.set(r, c, s.at(r, 0));
                    }
                }
                out
            }
            Op::Transpose(a) => self.val(*a).transpose(),
            Op::SliceCol(a, col) => {
                let v = self.val(*a);
                if *col >= v.cols() {
                    return Err(self.node_err(idx, format!("column {} of {}x{}", col, v.rows(), v.cols())));
                }
                let mut out = Matrix::zeros(v.rows(), 1);
                for r in 0..v.rows() {
                    out.set(r, 0, v.at(r, *col));
                }
                out
            }
            Op::ConcatCols(parts) => {
                if parts.is_empty() {
                    return Err(self.node_err(idx, "no parts".into()));
                }
                let rows = self.val(parts[0]).rows();
                let total: usize = parts.iter().map(|p| self.val(*p).cols()).sum();
                let mut out = Matrix::zeros(rows, total);
                let mut off = 0;
                for p in parts {
                    let v = self.val(*p);
                    if v.rows() != rows {
                        return Err(self.node_err(idx, format!("row mismatch: {} vs {}", v.rows(), rows)));
                    }
                    for r in 0..rows {
                        for c in 0..v.cols() {
                            out.set(r, off + c, v.at(r, c));
                        }
                    }
                    off += v.cols();
                }
                out
            }
            Op::NormCdf(a) => self.val(*a).map(crate::stats::norm_cdf),
        };
        Ok(out)
    }

    /// Reverse accumulation from the scalar at `loss`. Every registered
    /// parameter receives a gradient entry; parameters with no path to the
    /// loss get exact zeros in their bound shape.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let lv = self
            .values
            .get(loss.0)
            .and_then(|v| v.as_ref())
            .ok_or(Error::NoForwardState)?;
        if lv.shape() != (1, 1) {
            return Err(Error::NonScalarLoss {
                rows: lv.rows(),
                cols: lv.cols(),
            });
        }

        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Matrix::filled(1, 1, 1.0));

        let order = self.ancestors(loss);
        for &idx in order.iter().rev() {
            let g = match grads[idx].clone() {
                Some(g) => g,
                None => continue, // not on a path from the loss
            };
            self.backprop_node(idx, &g, &mut grads);
        }

        for pid in &self.params {
            if grads[pid.0].is_none() {
                let shape = self
                    .values
                    .get(pid.0)
                    .and_then(|v| v.as_ref())
                    .ok_or(Error::NoForwardState)?
                    .shape();
                grads[pid.0] = Some(Matrix::zeros(shape.0, shape.1));
            }
        }

        Ok(Gradients { grads })
    }

    fn backprop_node(&self, idx: usize, g: &Matrix, grads: &mut [Option<Matrix>]) {
        fn acc(slot: &mut Option<Matrix>, delta: Matrix) {
            match slot {
                Some(m) => {
                    let out = m.zip_map(&delta, "acc", |a, b| a + b).expect("gradient shapes agree");
                    *m = out;
                }
                None => *slot = Some(delta),
            }
        }

        match &self.nodes[idx] {
            Op::Input(_) | Op::Param(_) | Op::Const(_) => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (self.val(*a), self.val(*b));
                let da = g.matmul(&vb.transpose()).expect("matmul backward A");
                let db = va.transpose().matmul(g).expect("matmul backward B");
                acc(&mut grads[a.0], da);
                acc(&mut grads[b.0], db);
            }
            Op::Add(a, b) => {
                acc(&mut grads[a.0], g.clone());
                acc(&mut grads[b.0], g.clone());
            }
            Op::Sub(a, b) => {
                acc(&mut grads[a.0], g.clone());
                acc(&mut grads[b.0], g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.val(*a), self.val(*b));
                acc(&mut grads[a.0], g.zip_map(vb, "mul bwd", |gi, bi| gi * bi).unwrap());
                acc(&mut grads[b.0], g.zip_map(va, "mul bwd", |gi, ai| gi * ai).unwrap());
            }
            Op::Div(a, b) => {
                let (va, vb) = (self.val(*a), self.val(*b));
                acc(&mut grads[a.0], g.zip_map(vb, "div bwd", |gi, bi| gi / bi).unwrap());
                let mut db = Matrix::zeros(vb.rows(), vb.cols());
                for i in 0..vb.len() {
                    let (gv, av, bv) = (g.data()[i], va.data()[i], vb.data()[i]);
                    db.data_mut()[i] = -gv * av / (bv * bv);
                }
                acc(&mut grads[b.0], db);
            }
            Op::AddScalar(a, _) => acc(&mut grads[a.0], g.clone()),
            Op::MulScalar(a, s) => acc(&mut grads[a.0], g.map(|x| x * s)),
            Op::Abs(a) => {
                let va = self.val(*a);
                acc(
                    &mut grads[a.0],
                    g.zip_map(va, "abs bwd", |gi, x| gi * sign(x)).unwrap(),
                );
            }
            Op::Relu(a) => {
                let va = self.val(*a);
                acc(
                    &mut grads[a.0],
                    g.zip_map(va, "relu bwd", |gi, x| if x > 0.0 { gi } else { 0.0 })
                        .unwrap(),
                );
            }
            Op::Clamp(a, lo, hi) => {
                let va = self.val(*a);
                let (lo, hi) = (*lo, *hi);
                acc(
                    &mut grads[a.0],
                    g.zip_map(va, "clamp bwd", |gi, x| if x >= lo && x <= hi { gi } else { 0.0 })
                        .unwrap(),
                );
            }
            Op::SumRows(a) => {
                let va = self.val(*a);
                let mut da = Matrix::zeros(va.rows(), va.cols());
                for r in 0..va.rows() {
                    let gr = g.at(r, 0);
                    for c in 0..va.cols() {
                        da.set(r, c, gr);
                    }
                }
                acc(&mut grads[a.0], da);
            }
            Op::SumCols(a) => {
                let va = self.val(*a);
                let mut da = Matrix::zeros(va.rows(), va.cols());
                for r in 0..va.rows() {
                    for c in 0..va.cols() {
                        da.set(r, c, g.at(0, c));
                    }
                }
                acc(&mut grads[a.0], da);
            }
            Op::MeanAll(a) => {
                let va = self.val(*a);
                let scale = g.at(0, 0) / va.len() as f64;
                acc(&mut grads[a.0], va.map(|_| scale));
            }
            Op::ProdRows(a) => {
                let va = self.val(*a);
                let c = va.cols();
                let mut da = Matrix::zeros(va.rows(), c);
                let mut prefix = vec![0.0; c];
                let mut suffix = vec![0.0; c];
                for r in 0..va.rows() {
                    let row = va.row(r);
                    let mut p = 1.0;
                    for j in 0..c {
                        prefix[j] = p;
                        p *= row[j];
                    }
                    let mut s = 1.0;
                    for j in (0..c).rev() {
                        suffix[j] = s;
                        s *= row[j];
                    }
                    let gr = g.at(r, 0);
                    for j in 0..c {
                        da.set(r, j, gr * prefix[j] * suffix[j]);
                    }
                }
                acc(&mut grads[a.0], da);
            }
            Op::ExpandRows(src, _) => {
                let vs = self.val(*src);
                let mut ds = Matrix::zeros(1, vs.cols());
                for r in 0..g.rows() {
                    for c in 0..g.cols() {
                        ds.set(0, c, ds.at(0, c) + g.at(r, c));
                    }
                }
                acc(&mut grads[src.0], ds);
            }
            Op::ExpandCols(src, _) => {
                let vs = self.val(*src);
                let mut ds = Matrix::zeros(vs.rows(), 1);
                for r in 0..g.rows() {
                    let mut sum = 0.0;
                    for c in 0..g.cols() {
                        sum += g.at(r, c);
                    }
                    ds.set(r, 0, ds.at(r, 0) + sum);
                }
                acc(&mut grads[src.0], ds);
            }
            Op::Transpose(a) => acc(&mut grads[a.0], g.transpose()),
            Op::SliceCol(a, col) => {
                let va = self.val(*a);
                let mut da = Matrix::zeros(va.rows(), va.cols());
                for r in 0..va.rows() {
                    da.set(r, *col, g.at(r, 0));
                }
                acc(&mut grads[a.0], da);
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for p in parts {
                    let vp = self.val(*p);
                    let mut dp = Matrix::zeros(vp.rows(), vp.cols());
                    for r in 0..vp.rows() {
                        for c in 0..vp.cols() {
                            dp.set(r, c, g.at(r, off + c));
                        }
                    }
                    acc(&mut grads[p.0], dp);
                    off += vp.cols();
                }
            }
            Op::NormCdf(a) => {
                let va = self.val(*a);
                acc(
                    &mut grads[a.0],
                    g.zip_map(va, "norm_cdf bwd", |gi, x| gi * crate::stats::norm_pdf(x))
                        .unwrap(),
                );
            }
        }
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

/// Central-difference gradients of `f` with respect to every element of every
/// matrix in `params`. This is the independent oracle the tape is tested
/// against: it never touches the tape machinery.
pub fn finite_diff_grad<F>(mut f: F, params: &[Matrix], h: f64) -> Vec<Matrix>
where
    F: FnMut(&[Matrix]) -> f64,
{
    let mut work: Vec<Matrix> = params.to_vec();
    let mut out = Vec::with_capacity(params.len());
    for k in 0..params.len() {
        let mut grad = Matrix::zeros(params[k].rows(), params[k].cols());
        for i in 0..params[k].len() {
            let orig = work[k].data()[i];
            work[k].data_mut()[i] = orig + h;
            let up = f(&work);
            work[k].data_mut()[i] = orig - h;
            let down = f(&work);
            work[k].data_mut()[i] = orig;
            grad.data_mut()[i] = (up - down) / (2.0 * h);
        }
        out.push(grad);
    }
    out
}
