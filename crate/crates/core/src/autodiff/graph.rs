//! Reverse-mode tape over [`Tensor`] values.
//!
//! A [`Graph`] records every operation applied to its variables. Calling
//! [`Graph::backward`] on a scalar node walks the tape in reverse and
//! returns the gradient of that scalar with respect to every trainable
//! parameter registered through [`Graph::param`].

use crate::error::{dim_err, Error, Result};

use super::params::{Gradients, ParamStore};
use super::tensor::gemm;
use super::Tensor;

/// Negative-side slope of the leaky ReLU.
pub const LEAKY_SLOPE: f64 = 0.01;
/// Added inside the logarithm of the cross-entropy loss.
pub const CE_EPS: f64 = 1e-12;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Logistic,
    Silu,
    LeakyRelu,
    Identity,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul { a: usize, b: usize, transpose_b: bool },
    Add { a: usize, b: usize, broadcast: bool },
    Sub { a: usize, b: usize },
    Mul { a: usize, b: usize },
    Affine { a: usize, scale: f64 },
    Concat { parts: Vec<usize> },
    SliceCols { a: usize, start: usize },
    Tanh(usize),
    Logistic(usize),
    Silu(usize),
    LeakyRelu(usize),
    Softmax(usize),
    Abs(usize),
    Sum(usize),
    Mean(usize),
    Mse { pred: usize, target: usize },
    CrossEntropy { pred: usize, target: usize },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug)]
pub struct Graph {
    nodes: Vec<Node>,
    taping: bool,
    params: Vec<(usize, String)>,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn silu(x: f64) -> f64 {
    x * logistic(x)
}

pub fn leaky_relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        LEAKY_SLOPE * x
    }
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Logistic => logistic(x),
            Activation::Silu => silu(x),
            Activation::LeakyRelu => leaky_relu(x),
            Activation::Identity => x,
        }
    }
}

fn same_shape(what: &str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return dim_err(format!("{what}: shapes {:?} and {:?}", a.shape(), b.shape()));
    }
    Ok(())
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("same shape")
}

impl Graph {
    /// A graph that records operations for [`Graph::backward`].
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            taping: true,
            params: Vec::new(),
        }
    }

    /// A graph for pure evaluation: values are computed but nothing is taped.
    pub fn untaped() -> Self {
        Self {
            taping: false,
            ..Self::new()
        }
    }

    pub fn is_taping(&self) -> bool {
        self.taping
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

    pub fn take_value(&self, v: Var) -> Tensor {
        self.nodes[v.0].value.clone()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool, what: &str) -> Result<Var> {
        value.ensure_finite(what)?;
        let (op, requires_grad) = if self.taping {
            (op, requires_grad)
        } else {
            (Op::Leaf, false)
        };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Input data; never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.push(value, Op::Leaf, false, "constant")
    }

    /// Registers `name` from `store`. Trainable parameters receive gradients,
    /// frozen ones behave as constants.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<Var> {
        let p = store.param(name)?;
        let trainable = p.trainable && self.taping;
        let v = self.push(p.value.clone(), Op::Leaf, trainable, name)?;
        if trainable {
            self.params.push((v.0, name.to_string()));
        }
        Ok(v)
    }

    /// Registers `name` as a constant regardless of its trainable flag.
    pub fn frozen(&mut self, store: &ParamStore, name: &str) -> Result<Var> {
        let p = store.param(name)?;
        self.push(p.value.clone(), Op::Leaf, false, name)
    }

    fn matmul_impl(&mut self, a: Var, b: Var, transpose_b: bool) -> Result<Var> {
        let (m, k) = self.value(a).dims2()?;
        let (br, bc) = self.value(b).dims2()?;
        let (k2, n) = if transpose_b { (bc, br) } else { (br, bc) };
        if k != k2 {
            return dim_err(format!(
                "matmul{}: {m}x{k} by {br}x{bc}",
                if transpose_b { "_t" } else { "" }
            ));
        }
        let mut out = vec![0.0; m * n];
        let b_strides = if transpose_b {
            (1, k as isize)
        } else {
            (n as isize, 1)
        };
        gemm(
            m,
            k,
            n,
            self.value(a).data(),
            (k as isize, 1),
            self.value(b).data(),
            b_strides,
            &mut out,
            0.0,
        );
        let rg = self.rg(a) || self.rg(b);
        self.push(
            Tensor::matrix(m, n, out)?,
            Op::MatMul {
                a: a.0,
                b: b.0,
                transpose_b,
            },
            rg,
            "matmul",
        )
    }

    /// `a · b`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, false)
    }

    /// `a · bᵀ`; lets weights be stored as `out × in`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, true)
    }

    /// Elementwise sum. `b` may also be a single row broadcast over the rows of `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let av = self.value(a);
        let bv = self.value(b);
        let (value, broadcast) = if av.shape() == bv.shape() {
            (zip_map(av, bv, |x, y| x + y), false)
        } else {
            let (m, n) = av.dims2()?;
            let (br, bc) = bv.dims2()?;
            if br != 1 || bc != n {
                return dim_err(format!("add: shapes {:?} and {:?}", av.shape(), bv.shape()));
            }
            let mut data = av.data().to_vec();
            for i in 0..m {
                for (d, &bb) in data[i * n..(i + 1) * n].iter_mut().zip(bv.data()) {
                    *d += bb;
                }
            }
            (Tensor::new(av.shape().to_vec(), data)?, true)
        };
        let rg = self.rg(a) || self.rg(b);
        self.push(
            value,
            Op::Add {
                a: a.0,
                b: b.0,
                broadcast,
            },
            rg,
            "add",
        )
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("sub", self.value(a), self.value(b))?;
        let value = zip_map(self.value(a), self.value(b), |x, y| x - y);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Sub { a: a.0, b: b.0 }, rg, "sub")
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("mul", self.value(a), self.value(b))?;
        let value = zip_map(self.value(a), self.value(b), |x, y| x * y);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Mul { a: a.0, b: b.0 }, rg, "mul")
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Result<Var> {
        self.affine(a, k, 0.0)
    }

    /// `k·a + c` elementwise.
    pub fn affine(&mut self, a: Var, k: f64, c: f64) -> Result<Var> {
        let value = self.value(a).map(|x| k * x + c);
        let rg = self.rg(a);
        self.push(value, Op::Affine { a: a.0, scale: k }, rg, "affine")
    }

    /// Horizontal concatenation.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let tensors: Vec<&Tensor> = parts.iter().map(|v| self.value(*v)).collect();
        let value = Tensor::concat_cols(&tensors)?;
        let rg = parts.iter().any(|v| self.rg(*v));
        self.push(
            value,
            Op::Concat {
                parts: parts.iter().map(|v| v.0).collect(),
            },
            rg,
            "concat",
        )
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let value = self.value(a).slice_cols(start, len)?;
        let rg = self.rg(a);
        self.push(value, Op::SliceCols { a: a.0, start }, rg, "slice_cols")
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op, what: &str) -> Result<Var> {
        let value = self.value(a).map(f);
        let rg = self.rg(a);
        self.push(value, op, rg, what)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary(a, f64::tanh, Op::Tanh(a.0), "tanh")
    }

    pub fn logistic(&mut self, a: Var) -> Result<Var> {
        self.unary(a, logistic, Op::Logistic(a.0), "logistic")
    }

    pub fn silu(&mut self, a: Var) -> Result<Var> {
        self.unary(a, silu, Op::Silu(a.0), "silu")
    }

    pub fn leaky_relu(&mut self, a: Var) -> Result<Var> {
        self.unary(a, leaky_relu, Op::LeakyRelu(a.0), "leaky_relu")
    }

    pub fn abs(&mut self, a: Var) -> Result<Var> {
        self.unary(a, f64::abs, Op::Abs(a.0), "abs")
    }

    pub fn activation(&mut self, a: Var, act: Activation) -> Result<Var> {
        match act {
            Activation::Tanh => self.tanh(a),
            Activation::Logistic => self.logistic(a),
            Activation::Silu => self.silu(a),
            Activation::LeakyRelu => self.leaky_relu(a),
            Activation::Identity => Ok(a),
        }
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        let (m, n) = av.dims2()?;
        let mut data = av.data().to_vec();
        for row in data.chunks_mut(n.max(1)).take(m) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            for v in row.iter_mut() {
                *v /= total;
            }
        }
        let value = Tensor::new(av.shape().to_vec(), data)?;
        let rg = self.rg(a);
        self.push(value, Op::Softmax(a.0), rg, "softmax")
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let value = Tensor::scalar(self.value(a).sum());
        let rg = self.rg(a);
        self.push(value, Op::Sum(a.0), rg, "sum")
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if t.is_empty() {
            return dim_err("mean of empty tensor");
        }
        let value = Tensor::scalar(t.sum() / t.len() as f64);
        let rg = self.rg(a);
        self.push(value, Op::Mean(a.0), rg, "mean")
    }

    /// Mean of squared errors over all entries.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        let p = self.value(pred);
        let t = self.value(target);
        same_shape("mse", p, t)?;
        if p.is_empty() {
            return dim_err("mse of empty tensors");
        }
        let total: f64 = p
            .data()
            .iter()
            .zip(t.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let value = Tensor::scalar(total / p.len() as f64);
        let rg = self.rg(pred) || self.rg(target);
        self.push(
            value,
            Op::Mse {
                pred: pred.0,
                target: target.0,
            },
            rg,
            "mse",
        )
    }

    /// Batch mean of `-Σ_k target_k · ln(pred_k + 1e-12)`; rows of `pred` are probability vectors.
    pub fn cross_entropy(&mut self, pred: Var, target: Var) -> Result<Var> {
        let p = self.value(pred);
        let t = self.value(target);
        same_shape("cross_entropy", p, t)?;
        let (rows, _) = p.dims2()?;
        if rows == 0 {
            return dim_err("cross_entropy of empty batch");
        }
        if let Some(v) = p.data().iter().find(|v| **v < 0.0) {
            return Err(Error::Numeric(format!(
                "cross_entropy: negative probability {v}"
            )));
        }
        let total: f64 = p
            .data()
            .iter()
            .zip(t.data())
            .map(|(pp, tt)| -tt * (pp + CE_EPS).ln())
            .sum();
        let value = Tensor::scalar(total / rows as f64);
        let rg = self.rg(pred) || self.rg(target);
        self.push(
            value,
            Op::CrossEntropy {
                pred: pred.0,
                target: target.0,
            },
            rg,
            "cross_entropy",
        )
    }

    /// Gradients of the scalar `root` with respect to every trainable
    /// parameter registered on this graph.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        if !self.taping {
            return Err(Error::Usage("backward on an untaped graph".into()));
        }
        if self.value(root).len() != 1 {
            return dim_err(format!(
                "backward needs a scalar root, got shape {:?}",
                self.value(root).shape()
            ));
        }
        let mut grads: Vec<Option<Tensor>> = (0..=root.0).map(|_| None).collect();
        grads[root.0] = Some(Tensor::filled(self.value(root).shape(), 1.0));
        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            if !self.nodes[idx].requires_grad {
                grads[idx] = Some(g);
                continue;
            }
            self.propagate(idx, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        let mut out = Gradients::new();
        for (idx, name) in &self.params {
            let g = grads
                .get(*idx)
                .and_then(|g| g.clone())
                .unwrap_or_else(|| Tensor::zeros(self.nodes[*idx].value.shape()));
            match out.get_mut(name) {
                Some(acc) => {
                    for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                        *a += b;
                    }
                }
                None => {
                    out.insert(name.clone(), g);
                }
            }
        }
        Ok(out)
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], idx: usize, g: Tensor) {
        if !self.nodes[idx].requires_grad {
            return;
        }
        match &mut grads[idx] {
            Some(acc) => {
                for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                    *a += b;
                }
            }
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let node = &self.nodes[idx];
        let val = |i: usize| &self.nodes[i].value;
        let needs = |i: usize| self.nodes[i].requires_grad;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul { a, b, transpose_b } => {
                let (m, k) = val(*a).dims2()?;
                let n = g.cols();
                if needs(*a) {
                    // dA = dC · Bᵀ, or dC · B when B was transposed.
                    let b_strides = if *transpose_b {
                        (k as isize, 1)
                    } else {
                        (1, n as isize)
                    };
                    let mut da = vec![0.0; m * k];
                    gemm(m, n, k, g.data(), (n as isize, 1), val(*b).data(), b_strides, &mut da, 0.0);
                    let da = Tensor::new(val(*a).shape().to_vec(), da)?;
                    self.accumulate(grads, *a, da);
                }
                if needs(*b) {
                    let db = if *transpose_b {
                        // dB = dCᵀ · A  (n × k)
                        let mut db = vec![0.0; n * k];
                        gemm(n, m, k, g.data(), (1, n as isize), val(*a).data(), (k as isize, 1), &mut db, 0.0);
                        db
                    } else {
                        // dB = Aᵀ · dC  (k × n)
                        let mut db = vec![0.0; k * n];
                        gemm(k, m, n, val(*a).data(), (1, k as isize), g.data(), (n as isize, 1), &mut db, 0.0);
                        db
                    };
                    let db = Tensor::new(val(*b).shape().to_vec(), db)?;
                    self.accumulate(grads, *b, db);
                }
            }
            Op::Add { a, b, broadcast } => {
                self.accumulate(grads, *a, g.clone());
                if needs(*b) {
                    if *broadcast {
                        let n = val(*b).len();
                        let mut db = vec![0.0; n];
                        for row in g.data().chunks(n) {
                            for (d, v) in db.iter_mut().zip(row) {
                                *d += v;
                            }
                        }
                        self.accumulate(grads, *b, Tensor::new(val(*b).shape().to_vec(), db)?);
                    } else {
                        self.accumulate(grads, *b, g.clone());
                    }
                }
            }
            Op::Sub { a, b } => {
                self.accumulate(grads, *a, g.clone());
                if needs(*b) {
                    self.accumulate(grads, *b, g.map(|x| -x));
                }
            }
            Op::Mul { a, b } => {
                if needs(*a) {
                    self.accumulate(grads, *a, zip_map(g, val(*b), |x, y| x * y));
                }
                if needs(*b) {
                    self.accumulate(grads, *b, zip_map(g, val(*a), |x, y| x * y));
                }
            }
            Op::Affine { a, scale } => {
                let s = *scale;
                self.accumulate(grads, *a, g.map(|x| s * x));
            }
            Op::Concat { parts } => {
                let mut start = 0;
                for &p in parts {
                    let w = val(p).cols();
                    if needs(p) {
                        let piece = g.slice_cols(start, w)?;
                        let piece = Tensor::new(val(p).shape().to_vec(), piece.into_data())?;
                        self.accumulate(grads, p, piece);
                    }
                    start += w;
                }
            }
            Op::SliceCols { a, start } => {
                let (rows, cols) = val(*a).dims2()?;
                let w = g.cols();
                let mut da = vec![0.0; rows * cols];
                for i in 0..rows {
                    da[i * cols + start..i * cols + start + w].copy_from_slice(g.row_slice(i));
                }
                self.accumulate(grads, *a, Tensor::new(val(*a).shape().to_vec(), da)?);
            }
            Op::Tanh(a) => {
                let d = zip_map(g, &node.value, |gg, y| gg * (1.0 - y * y));
                self.accumulate(grads, *a, d);
            }
            Op::Logistic(a) => {
                let d = zip_map(g, &node.value, |gg, y| gg * y * (1.0 - y));
                self.accumulate(grads, *a, d);
            }
            Op::Silu(a) => {
                let d = zip_map(g, val(*a), |gg, x| {
                    let s = logistic(x);
                    gg * s * (1.0 + x * (1.0 - s))
                });
                self.accumulate(grads, *a, d);
            }
            Op::LeakyRelu(a) => {
                let d = zip_map(g, val(*a), |gg, x| if x > 0.0 { gg } else { LEAKY_SLOPE * gg });
                self.accumulate(grads, *a, d);
            }
            Op::Abs(a) => {
                let d = zip_map(g, val(*a), |gg, x| {
                    if x > 0.0 {
                        gg
                    } else if x < 0.0 {
                        -gg
                    } else {
                        0.0
                    }
                });
                self.accumulate(grads, *a, d);
            }
            Op::Softmax(a) => {
                let y = &node.value;
                let n = y.cols().max(1);
                let mut d = vec![0.0; y.len()];
                for ((drow, yrow), grow) in d.chunks_mut(n).zip(y.data().chunks(n)).zip(g.data().chunks(n)) {
                    let dot: f64 = yrow.iter().zip(grow).map(|(a, b)| a * b).sum();
                    for ((dd, yy), gg) in drow.iter_mut().zip(yrow).zip(grow) {
                        *dd = yy * (gg - dot);
                    }
                }
                self.accumulate(grads, *a, Tensor::new(y.shape().to_vec(), d)?);
            }
            Op::Sum(a) => {
                let s = g.item()?;
                self.accumulate(grads, *a, Tensor::filled(val(*a).shape(), s));
            }
            Op::Mean(a) => {
                let s = g.item()? / val(*a).len() as f64;
                self.accumulate(grads, *a, Tensor::filled(val(*a).shape(), s));
            }
            Op::Mse { pred, target } => {
                let s = 2.0 * g.item()? / val(*pred).len() as f64;
                let diff = zip_map(val(*pred), val(*target), |p, t| s * (p - t));
                if needs(*target) {
                    self.accumulate(grads, *target, diff.map(|x| -x));
                }
                self.accumulate(grads, *pred, diff);
            }
            Op::CrossEntropy { pred, target } => {
                let rows = val(*pred).rows() as f64;
                let s = g.item()? / rows;
                if needs(*pred) {
                    let d = zip_map(val(*pred), val(*target), |p, t| -s * t / (p + CE_EPS));
                    self.accumulate(grads, *pred, d);
                }
                if needs(*target) {
                    let d = val(*pred).map(|p| -s * (p + CE_EPS).ln());
                    self.accumulate(grads, *target, d);
                }
            }
        }
        Ok(())
    }
}
