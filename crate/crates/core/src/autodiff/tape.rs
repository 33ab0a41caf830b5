//! Reverse-mode tape.
//!
//! Every primitive appends one node holding its output value; `backward`
//! walks the nodes in exact reverse order of recording. Primitives return
//! `Result` so that shape errors and non-finite outputs surface at the op
//! that produced them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::tensor::{self, ensure_rank2, Tensor};
use crate::error::{Error, Result};
use crate::nn::ParameterStore;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Smooth rectifiers available inside every FFN.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Silu,
    Gelu,
    Softplus,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Silu => x * sigmoid(x),
            Activation::Gelu => 0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh()),
            Activation::Softplus => softplus(x),
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Silu => {
                let s = sigmoid(x);
                s + x * s * (1.0 - s)
            }
            Activation::Gelu => {
                let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
                0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
            }
            Activation::Softplus => sigmoid(x),
        }
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    ScaleConst(Var, f64),
    ScaleVar(Var, Var),
    Act(Var, Activation),
    Sigmoid(Var),
    SoftmaxRows(Var),
    LayerNormRows {
        x: Var,
        gain: Var,
        bias: Var,
        normalized: Vec<f64>,
        inv_std: Vec<f64>,
    },
    ConcatCols(Var, Var),
    ConcatRows(Var, Var),
    SumRows(Var),
    SumAll(Var),
    Mean(Var),
    GatherRows(Var, Vec<usize>),
    ScatterAddRows(Var, Vec<usize>),
    SliceCols(Var, usize),
    Transpose(Var),
    Reshape(Var),
    SqDist(Var, Var),
    RecipOnePlus(Var),
    Abs(Var),
    BceLogits(Var, Vec<f64>),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::AddRow(..) => "add_row",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::ScaleConst(..) => "scale",
            Op::ScaleVar(..) => "scale_by",
            Op::Act(..) => "activation",
            Op::Sigmoid(..) => "sigmoid",
            Op::SoftmaxRows(..) => "softmax_rows",
            Op::LayerNormRows { .. } => "layer_norm_rows",
            Op::ConcatCols(..) => "concat_cols",
            Op::ConcatRows(..) => "concat_rows",
            Op::SumRows(..) => "sum_rows",
            Op::SumAll(..) => "sum_all",
            Op::Mean(..) => "mean",
            Op::GatherRows(..) => "gather_rows",
            Op::ScatterAddRows(..) => "scatter_add_rows",
            Op::SliceCols(..) => "slice_cols",
            Op::Transpose(..) => "transpose",
            Op::Reshape(..) => "reshape",
            Op::SqDist(..) => "sq_dist",
            Op::RecipOnePlus(..) => "recip_one_plus",
            Op::Abs(..) => "abs",
            Op::BceLogits(..) => "bce_logits",
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: BTreeMap<String, Var>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient of `v`; zeros when the loss does not depend on it.
    pub fn get(&self, v: Var) -> Tensor {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let shape = self.shapes[v.0].clone();
                let n = shape.iter().product();
                Tensor::new(shape, vec![0.0; n]).expect("shape matches")
            }
        }
    }

    /// Gradients of every parameter registered through [`Tape::param`].
    pub fn params(&self) -> BTreeMap<String, Tensor> {
        self.params
            .iter()
            .map(|(name, &v)| (name.clone(), self.get(v)))
            .collect()
    }

    pub fn ensure_finite(&self) -> Result<()> {
        for g in self.grads.iter().flatten() {
            g.ensure_finite("backward")?;
        }
        Ok(())
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: BTreeMap<String, Var>,
    fault: Option<&'static str>,
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

    /// Test hook: flips the sign of the backward rule of the named primitive.
    #[doc(hidden)]
    pub fn inject_backward_fault(&mut self, op_name: &'static str) {
        self.fault = Some(op_name);
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    fn push(&mut self, value: Tensor, op: Op) -> Result<Var> {
        value.ensure_finite(op.name())?;
        let requires_grad = match &op {
            Op::Leaf => false,
            _ => self.inputs(&op).iter().any(|v| self.nodes[v.0].requires_grad),
        };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn inputs(&self, op: &Op) -> Vec<Var> {
        match *op {
            Op::Leaf => vec![],
            Op::MatMul(a, b)
            | Op::Add(a, b)
            | Op::AddRow(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::ScaleVar(a, b)
            | Op::ConcatCols(a, b)
            | Op::ConcatRows(a, b)
            | Op::SqDist(a, b) => vec![a, b],
            Op::LayerNormRows { x, gain, bias, .. } => vec![x, gain, bias],
            Op::ScaleConst(a, _)
            | Op::Act(a, _)
            | Op::Sigmoid(a)
            | Op::SoftmaxRows(a)
            | Op::SumRows(a)
            | Op::SumAll(a)
            | Op::Mean(a)
            | Op::GatherRows(a, _)
            | Op::ScatterAddRows(a, _)
            | Op::SliceCols(a, _)
            | Op::Transpose(a)
            | Op::Reshape(a)
            | Op::RecipOnePlus(a)
            | Op::Abs(a)
            | Op::BceLogits(a, _) => vec![a],
        }
    }

    /// A leaf that receives gradients.
    pub fn variable(&mut self, value: Tensor) -> Result<Var> {
        let v = self.push(value, Op::Leaf)?;
        self.nodes[v.0].requires_grad = true;
        Ok(v)
    }

    /// A leaf that never receives gradients.
    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.push(value, Op::Leaf)
    }

    /// Loads a named parameter as a variable; repeated calls return the same node.
    pub fn param(&mut self, store: &ParameterStore, name: &str) -> Result<Var> {
        if let Some(&v) = self.params.get(name) {
            return Ok(v);
        }
        let value = store
            .get(name)
            .ok_or_else(|| Error::Config(format!("missing parameter `{name}`")))?
            .clone();
        let v = self.variable(value)?;
        self.params.insert(name.to_string(), v);
        Ok(v)
    }

    pub fn param_vars(&self) -> &BTreeMap<String, Var> {
        &self.params
    }

    fn shape2(&self, v: Var) -> (usize, usize) {
        let t = &self.nodes[v.0].value;
        (t.rows(), t.cols())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = tensor::matmul(self.value(a), self.value(b))?;
        self.push(out, Op::MatMul(a, b))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::shape(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    fn zip_with(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape().to_vec(), data).expect("same shape")
    }

    fn map(&self, a: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let ta = self.value(a);
        Tensor::new(ta.shape().to_vec(), ta.data().iter().map(|&x| f(x)).collect())
            .expect("same shape")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self.zip_with(a, b, |x, y| x + y);
        self.push(out, Op::Add(a, b))
    }

    /// Adds a `1×C` row to every row of an `R×C` matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (r, c) = self.shape2(a);
        if self.shape2(row) != (1, c) {
            return Err(Error::shape(
                "add_row",
                format!("{:?} + {:?}", self.value(a).shape(), self.value(row).shape()),
            ));
        }
        let rv = self.value(row).data().to_vec();
        let mut data = self.value(a).data().to_vec();
        for i in 0..r {
            for (x, y) in data[i * c..(i + 1) * c].iter_mut().zip(&rv) {
                *x += y;
            }
        }
        self.push(Tensor::matrix(r, c, data)?, Op::AddRow(a, row))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let out = self.zip_with(a, b, |x, y| x - y);
        self.push(out, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = self.zip_with(a, b, |x, y| x * y);
        self.push(out, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Result<Var> {
        let out = self.map(a, |x| x * k);
        self.push(out, Op::ScaleConst(a, k))
    }

    /// Multiplies `a` by the `1×1` variable `s`.
    pub fn scale_by(&mut self, a: Var, s: Var) -> Result<Var> {
        if self.value(s).len() != 1 {
            return Err(Error::shape("scale_by", "scale must be 1x1"));
        }
        let k = self.scalar(s);
        let out = self.map(a, |x| x * k);
        self.push(out, Op::ScaleVar(a, s))
    }

    pub fn activation(&mut self, a: Var, act: Activation) -> Result<Var> {
        let out = self.map(a, |x| act.apply(x));
        self.push(out, Op::Act(a, act))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let out = self.map(a, sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let out = tensor::softmax_rows(self.value(a))?;
        self.push(out, Op::SoftmaxRows(a))
    }

    /// Layer norm applied to every row independently, with `1×C` gain and bias.
    pub fn layer_norm_rows(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let (r, c) = self.shape2(x);
        if self.shape2(gain) != (1, c) || self.shape2(bias) != (1, c) {
            return Err(Error::shape("layer_norm_rows", "gain/bias must be 1xC"));
        }
        if eps <= 0.0 {
            return Err(Error::Config("layer norm eps must be positive".into()));
        }
        let xv = self.value(x);
        let g = self.value(gain).data();
        let b = self.value(bias).data();
        let mut out = Vec::with_capacity(r * c);
        let mut normalized = Vec::with_capacity(r * c);
        let mut inv_std = Vec::with_capacity(r);
        for i in 0..r {
            let row = xv.row_slice(i);
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / c as f64;
            let inv = 1.0 / (var + eps).sqrt();
            inv_std.push(inv);
            for (j, v) in row.iter().enumerate() {
                let n = (v - mean) * inv;
                normalized.push(n);
                out.push(n * g[j] + b[j]);
            }
        }
        let out = Tensor::matrix(r, c, out)?;
        self.push(
            out,
            Op::LayerNormRows {
                x,
                gain,
                bias,
                normalized,
                inv_std,
            },
        )
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let ((ra, ca), (rb, cb)) = (self.shape2(a), self.shape2(b));
        if ra != rb {
            return Err(Error::shape("concat_cols", format!("{ra} rows vs {rb} rows")));
        }
        let (ta, tb) = (self.value(a), self.value(b));
        let mut data = Vec::with_capacity(ra * (ca + cb));
        for i in 0..ra {
            data.extend_from_slice(ta.row_slice(i));
            data.extend_from_slice(tb.row_slice(i));
        }
        self.push(Tensor::matrix(ra, ca + cb, data)?, Op::ConcatCols(a, b))
    }

    pub fn concat_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        let ((ra, ca), (rb, cb)) = (self.shape2(a), self.shape2(b));
        if ca != cb {
            return Err(Error::shape("concat_rows", format!("{ca} cols vs {cb} cols")));
        }
        let mut data = self.value(a).data().to_vec();
        data.extend_from_slice(self.value(b).data());
        self.push(Tensor::matrix(ra + rb, ca, data)?, Op::ConcatRows(a, b))
    }

    /// Column sums: `R×C → 1×C`. Each column is accumulated in ascending
    /// value order, so the result is bit-identical under any row permutation.
    pub fn sum_rows(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.shape2(a);
        let t = self.value(a);
        let mut column = Vec::with_capacity(r);
        let out = (0..c)
            .map(|j| {
                column.clear();
                column.extend((0..r).map(|i| t.at(i, j)));
                column.sort_by(f64::total_cmp);
                column.iter().sum()
            })
            .collect();
        self.push(Tensor::row(out), Op::SumRows(a))
    }

    pub fn sum_all(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::SumAll(a))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if t.is_empty() {
            return Err(Error::shape("mean", "empty tensor"));
        }
        let s = t.data().iter().sum::<f64>() / t.len() as f64;
        self.push(Tensor::scalar(s), Op::Mean(a))
    }

    /// Selects rows by index (embedding lookup); repeated indices allowed.
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let (r, c) = self.shape2(a);
        let t = self.value(a);
        let mut data = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            if i >= r {
                return Err(Error::shape("gather_rows", format!("row {i} of {r}")));
            }
            data.extend_from_slice(t.row_slice(i));
        }
        self.push(
            Tensor::matrix(idx.len(), c, data)?,
            Op::GatherRows(a, idx.to_vec()),
        )
    }

    /// Sums row `k` of `a` into output row `idx[k]`; output has `n_out` rows.
    /// Accumulation follows the order of `idx`.
    pub fn scatter_add_rows(&mut self, a: Var, idx: &[usize], n_out: usize) -> Result<Var> {
        let (r, c) = self.shape2(a);
        if idx.len() != r {
            return Err(Error::shape(
                "scatter_add_rows",
                format!("{} indices for {r} rows", idx.len()),
            ));
        }
        let t = self.value(a);
        let mut data = vec![0.0; n_out * c];
        for (k, &i) in idx.iter().enumerate() {
            if i >= n_out {
                return Err(Error::shape("scatter_add_rows", format!("row {i} of {n_out}")));
            }
            for (o, v) in data[i * c..(i + 1) * c].iter_mut().zip(t.row_slice(k)) {
                *o += v;
            }
        }
        self.push(
            Tensor::matrix(n_out, c, data)?,
            Op::ScatterAddRows(a, idx.to_vec()),
        )
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.shape2(a);
        if start + len > c {
            return Err(Error::shape("slice_cols", format!("{start}+{len} > {c}")));
        }
        let t = self.value(a);
        let mut data = Vec::with_capacity(r * len);
        for i in 0..r {
            data.extend_from_slice(&t.row_slice(i)[start..start + len]);
        }
        self.push(Tensor::matrix(r, len, data)?, Op::SliceCols(a, start))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        ensure_rank2("transpose", self.value(a))?;
        let out = self.value(a).transpose();
        self.push(out, Op::Transpose(a))
    }

    /// Row-major reshape; `R×C → 1×RC` is the flatten used by the prediction head.
    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let out = Tensor::new(shape, self.value(a).data().to_vec())?;
        self.push(out, Op::Reshape(a))
    }

    /// Squared Euclidean distances between rows: `(N×d, M×d) → N×M`.
    pub fn sq_dist(&mut self, a: Var, b: Var) -> Result<Var> {
        let ((n, da), (m, db)) = (self.shape2(a), self.shape2(b));
        if da != db {
            return Err(Error::shape("sq_dist", format!("dims {da} vs {db}")));
        }
        let (ta, tb) = (self.value(a), self.value(b));
        let mut out = Vec::with_capacity(n * m);
        for i in 0..n {
            let ra = ta.row_slice(i);
            for j in 0..m {
                let rb = tb.row_slice(j);
                out.push(ra.iter().zip(rb).map(|(x, y)| (x - y) * (x - y)).sum());
            }
        }
        self.push(Tensor::matrix(n, m, out)?, Op::SqDist(a, b))
    }

    /// Elementwise `1 / (1 + x)`.
    pub fn recip_one_plus(&mut self, a: Var) -> Result<Var> {
        let out = self.map(a, |x| 1.0 / (1.0 + x));
        self.push(out, Op::RecipOnePlus(a))
    }

    pub fn abs(&mut self, a: Var) -> Result<Var> {
        let out = self.map(a, f64::abs);
        self.push(out, Op::Abs(a))
    }

    /// Elementwise binary cross-entropy on logits against fixed targets in {0,1}.
    pub fn bce_logits(&mut self, logits: Var, targets: &[f64]) -> Result<Var> {
        if self.value(logits).len() != targets.len() {
            return Err(Error::shape("bce_logits", "target count mismatch"));
        }
        let t = self.value(logits);
        let data = t
            .data()
            .iter()
            .zip(targets)
            .map(|(&z, &y)| softplus(z) - y * z)
            .collect();
        let out = Tensor::new(t.shape().to_vec(), data)?;
        self.push(out, Op::BceLogits(logits, targets.to_vec()))
    }

    /// Reverse pass from a `1×1` output.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        if self.value(output).len() != 1 {
            return Err(Error::shape("backward", "output must be scalar"));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(Tensor::scalar(1.0));
        for idx in (0..=output.0).rev() {
            let Some(upstream) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if node.requires_grad {
                let sign = if self.fault == Some(node.op.name()) { -1.0 } else { 1.0 };
                for (input, mut g) in self.local_grads(node, &upstream)? {
                    if !self.nodes[input.0].requires_grad {
                        continue;
                    }
                    if sign < 0.0 {
                        g.data_mut().iter_mut().for_each(|v| *v = -*v);
                    }
                    match &mut grads[input.0] {
                        Some(acc) => acc
                            .data_mut()
                            .iter_mut()
                            .zip(g.data())
                            .for_each(|(a, b)| *a += b),
                        slot @ None => *slot = Some(g),
                    }
                }
            }
            grads[idx] = Some(upstream);
        }
        let out = Gradients {
            grads,
            params: self.params.clone(),
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        };
        out.ensure_finite()?;
        Ok(out)
    }

    fn local_grads(&self, node: &Node, up: &Tensor) -> Result<Vec<(Var, Tensor)>> {
        let val = |v: Var| &self.nodes[v.0].value;
        let like = |v: Var, data: Vec<f64>| Tensor::new(val(v).shape().to_vec(), data);
        Ok(match &node.op {
            Op::Leaf => vec![],
            &Op::MatMul(a, b) => {
                let ga = tensor::matmul_nt(up, val(b));
                let gb = tensor::matmul_tn(val(a), up);
                vec![(a, ga), (b, gb)]
            }
            &Op::Add(a, b) => vec![(a, up.clone()), (b, up.clone())],
            &Op::AddRow(a, row) => {
                let c = up.cols();
                let mut gr = vec![0.0; c];
                for i in 0..up.rows() {
                    for (g, u) in gr.iter_mut().zip(up.row_slice(i)) {
                        *g += u;
                    }
                }
                vec![(a, up.clone()), (row, Tensor::row(gr))]
            }
            &Op::Sub(a, b) => {
                let neg = up.data().iter().map(|v| -v).collect();
                vec![(a, up.clone()), (b, like(b, neg)?)]
            }
            &Op::Mul(a, b) => {
                let ga = up.data().iter().zip(val(b).data()).map(|(u, y)| u * y).collect();
                let gb = up.data().iter().zip(val(a).data()).map(|(u, x)| u * x).collect();
                vec![(a, like(a, ga)?), (b, like(b, gb)?)]
            }
            &Op::ScaleConst(a, k) => {
                vec![(a, like(a, up.data().iter().map(|u| u * k).collect())?)]
            }
            &Op::ScaleVar(a, s) => {
                let k = val(s).data()[0];
                let ga = up.data().iter().map(|u| u * k).collect();
                let gs: f64 = up.data().iter().zip(val(a).data()).map(|(u, x)| u * x).sum();
                vec![(a, like(a, ga)?), (s, Tensor::scalar(gs))]
            }
            &Op::Act(a, act) => {
                let g = up
                    .data()
                    .iter()
                    .zip(val(a).data())
                    .map(|(u, &x)| u * act.derivative(x))
                    .collect();
                vec![(a, like(a, g)?)]
            }
            &Op::Sigmoid(a) => {
                let g = up
                    .data()
                    .iter()
                    .zip(node.value.data())
                    .map(|(u, s)| u * s * (1.0 - s))
                    .collect();
                vec![(a, like(a, g)?)]
            }
            &Op::SoftmaxRows(a) => {
                let c = up.cols();
                let y = node.value.data();
                let mut g = vec![0.0; y.len()];
                for i in 0..up.rows() {
                    let yr = &y[i * c..(i + 1) * c];
                    let ur = &up.data()[i * c..(i + 1) * c];
                    let dot: f64 = yr.iter().zip(ur).map(|(a, b)| a * b).sum();
                    for j in 0..c {
                        g[i * c + j] = yr[j] * (ur[j] - dot);
                    }
                }
                vec![(a, like(a, g)?)]
            }
            Op::LayerNormRows {
                x,
                gain,
                bias,
                normalized,
                inv_std,
            } => {
                let (r, c) = (up.rows(), up.cols());
                let gv = val(*gain).data();
                let mut gx = vec![0.0; r * c];
                let mut gg = vec![0.0; c];
                let mut gb = vec![0.0; c];
                for i in 0..r {
                    let ur = up.row_slice(i);
                    let nr = &normalized[i * c..(i + 1) * c];
                    let mut dn = vec![0.0; c];
                    for j in 0..c {
                        gg[j] += ur[j] * nr[j];
                        gb[j] += ur[j];
                        dn[j] = ur[j] * gv[j];
                    }
                    let mean_dn = dn.iter().sum::<f64>() / c as f64;
                    let mean_dn_n = dn.iter().zip(nr).map(|(a, b)| a * b).sum::<f64>() / c as f64;
                    for j in 0..c {
                        gx[i * c + j] = inv_std[i] * (dn[j] - mean_dn - nr[j] * mean_dn_n);
                    }
                }
                vec![
                    (*x, like(*x, gx)?),
                    (*gain, Tensor::row(gg)),
                    (*bias, Tensor::row(gb)),
                ]
            }
            &Op::ConcatCols(a, b) => {
                let ca = val(a).cols();
                let cb = val(b).cols();
                let mut ga = Vec::with_capacity(up.rows() * ca);
                let mut gb = Vec::with_capacity(up.rows() * cb);
                for i in 0..up.rows() {
                    let ur = up.row_slice(i);
                    ga.extend_from_slice(&ur[..ca]);
                    gb.extend_from_slice(&ur[ca..]);
                }
                vec![(a, like(a, ga)?), (b, like(b, gb)?)]
            }
            &Op::ConcatRows(a, b) => {
                let na = val(a).len();
                vec![
                    (a, like(a, up.data()[..na].to_vec())?),
                    (b, like(b, up.data()[na..].to_vec())?),
                ]
            }
            &Op::SumRows(a) => {
                let r = val(a).rows();
                let g = (0..r).flat_map(|_| up.data().iter().copied()).collect();
                vec![(a, like(a, g)?)]
            }
            &Op::SumAll(a) => {
                let u = up.data()[0];
                vec![(a, like(a, vec![u; val(a).len()])?)]
            }
            &Op::Mean(a) => {
                let n = val(a).len();
                let u = up.data()[0] / n as f64;
                vec![(a, like(a, vec![u; n])?)]
            }
            Op::GatherRows(a, idx) => {
                let c = up.cols();
                let mut g = vec![0.0; val(*a).len()];
                for (k, &i) in idx.iter().enumerate() {
                    for (o, u) in g[i * c..(i + 1) * c].iter_mut().zip(up.row_slice(k)) {
                        *o += u;
                    }
                }
                vec![(*a, like(*a, g)?)]
            }
            Op::ScatterAddRows(a, idx) => {
                let mut g = Vec::with_capacity(val(*a).len());
                for &i in idx {
                    g.extend_from_slice(up.row_slice(i));
                }
                vec![(*a, like(*a, g)?)]
            }
            &Op::SliceCols(a, start) => {
                let (r, c) = (val(a).rows(), val(a).cols());
                let len = up.cols();
                let mut g = vec![0.0; r * c];
                for i in 0..r {
                    g[i * c + start..i * c + start + len].copy_from_slice(up.row_slice(i));
                }
                vec![(a, like(a, g)?)]
            }
            &Op::Transpose(a) => vec![(a, up.transpose())],
            &Op::Reshape(a) => vec![(a, like(a, up.data().to_vec())?)],
            &Op::SqDist(a, b) => {
                let (ta, tb) = (val(a), val(b));
                let (n, m, d) = (ta.rows(), tb.rows(), ta.cols());
                let mut ga = vec![0.0; n * d];
                let mut gb = vec![0.0; m * d];
                for i in 0..n {
                    for j in 0..m {
                        let u = up.data()[i * m + j];
                        if u == 0.0 {
                            continue;
                        }
                        for k in 0..d {
                            let diff = 2.0 * u * (ta.data()[i * d + k] - tb.data()[j * d + k]);
                            ga[i * d + k] += diff;
                            gb[j * d + k] -= diff;
                        }
                    }
                }
                vec![(a, like(a, ga)?), (b, like(b, gb)?)]
            }
            &Op::RecipOnePlus(a) => {
                let g = up
                    .data()
                    .iter()
                    .zip(node.value.data())
                    .map(|(u, y)| -u * y * y)
                    .collect();
                vec![(a, like(a, g)?)]
            }
            &Op::Abs(a) => {
                let g = up
                    .data()
                    .iter()
                    .zip(val(a).data())
                    .map(|(u, &x)| if x > 0.0 { *u } else if x < 0.0 { -u } else { 0.0 })
                    .collect();
                vec![(a, like(a, g)?)]
            }
            Op::BceLogits(a, targets) => {
                let g = up
                    .data()
                    .iter()
                    .zip(val(*a).data())
                    .zip(targets)
                    .map(|((u, &z), y)| u * (sigmoid(z) - y))
                    .collect();
                vec![(*a, like(*a, g)?)]
            }
        })
    }
}
