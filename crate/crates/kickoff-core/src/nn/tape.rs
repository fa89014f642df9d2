//! Reverse-mode automatic differentiation on a dynamically built tape.
//!
//! Ops evaluate eagerly when recorded, so every intermediate value is checked
//! for finiteness at the moment it is produced and shape errors point at the
//! offending op. `backward` runs one reverse sweep from a scalar output and
//! returns per-variable gradients.

use crate::error::{Error, Result};
use crate::nn::kernels;
use crate::nn::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Const,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Min(Var, Var),
    Max(Var, Var),
    Matmul(Var, Var),
    AddBias(Var, Var),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    Affine(Var, f64),
    Clip(Var, f64, f64),
    LogSoftmaxRows(Var),
    GatherCols(Var, Vec<usize>),
    SumAll(Var),
    WeightedSum(Var, Vec<f64>),
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    rows: usize,
    cols: usize,
    value: Vec<f64>,
}

/// Gradients from one backward sweep, indexed by [`Var`].
pub struct Grads {
    grads: Vec<Option<Vec<f64>>>,
}

impl Grads {
    /// Gradient for `v`, or None if the loss does not depend on it.
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }
}

/// Dynamically built computation tape.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Tape {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Raw value of a node as a flat slice.
    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    /// Value of a node that must be a single scalar.
    pub fn scalar_value(&self, v: Var) -> f64 {
        debug_assert_eq!(self.nodes[v.0].value.len(), 1);
        self.nodes[v.0].value[0]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    /// Differentiable input node. Gradients accumulate for leaves.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.push_node(Op::Leaf, t.rows(), t.cols(), t.data().to_vec())
    }

    /// Non-differentiable input node.
    pub fn constant(&mut self, t: &Tensor) -> Var {
        self.push_node(Op::Const, t.rows(), t.cols(), t.data().to_vec())
    }

    pub fn constant_from(&mut self, rows: usize, cols: usize, data: Vec<f64>) -> Var {
        debug_assert_eq!(data.len(), rows * cols);
        self.push_node(Op::Const, rows, cols, data)
    }

    fn push_node(&mut self, op: Op, rows: usize, cols: usize, value: Vec<f64>) -> Var {
        self.nodes.push(Node {
            op,
            rows,
            cols,
            value,
        });
        Var(self.nodes.len() - 1)
    }

    fn check_same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(b);
        if ar != br || ac != bc {
            return Err(Error::ShapeMismatch {
                op,
                lhs: vec![ar, ac],
                rhs: vec![br, bc],
            });
        }
        Ok(())
    }

    fn finish(&mut self, op: Op, rows: usize, cols: usize, value: Vec<f64>) -> Result<Var> {
        if !value.iter().all(|v| v.is_finite()) {
            return Err(Error::NumericalFailure {
                op: op_name(&op),
            });
        }
        Ok(self.push_node(op, rows, cols, value))
    }

    fn binary_elementwise(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: impl Fn(Var, Var) -> Op,
    ) -> Result<Var> {
        self.check_same_shape(name, a, b)?;
        let (rows, cols) = self.shape(a);
        let value: Vec<f64> = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(&x, &y)| f(x, y))
            .collect();
        self.finish(op(a, b), rows, cols, value)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_elementwise("add", a, b, |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_elementwise("sub", a, b, |x, y| x - y, Op::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_elementwise("mul", a, b, |x, y| x * y, Op::Mul)
    }

    pub fn min(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_elementwise("min", a, b, f64::min, Op::Min)
    }

    pub fn max(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_elementwise("max", a, b, f64::max, Op::Max)
    }

    /// Matrix product of [m, k] and [k, n].
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        if k != k2 {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: vec![m, k],
                rhs: vec![k2, n],
            });
        }
        let mut value = vec![0.0; m * n];
        kernels::matmul(
            &self.nodes[a.0].value,
            &self.nodes[b.0].value,
            &mut value,
            m,
            k,
            n,
        );
        self.finish(Op::Matmul(a, b), m, n, value)
    }

    /// Broadcast-add a [n]-shaped bias to every row of a [rows, n] matrix.
    pub fn add_bias(&mut self, m: Var, bias: Var) -> Result<Var> {
        let (rows, n) = self.shape(m);
        let (br, bc) = self.shape(bias);
        if br * bc != n {
            return Err(Error::ShapeMismatch {
                op: "add_bias",
                lhs: vec![rows, n],
                rhs: vec![br, bc],
            });
        }
        let mut value = self.nodes[m.0].value.clone();
        kernels::add_row_bias(&mut value, &self.nodes[bias.0].value, rows);
        self.finish(Op::AddBias(m, bias), rows, n, value)
    }

    fn unary(
        &mut self,
        a: Var,
        f: impl Fn(f64) -> f64,
        op: impl Fn(Var) -> Op,
    ) -> Result<Var> {
        let (rows, cols) = self.shape(a);
        let value: Vec<f64> = self.nodes[a.0].value.iter().map(|&x| f(x)).collect();
        self.finish(op(a), rows, cols, value)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary(a, |x| x.max(0.0), Op::Relu)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary(a, f64::tanh, Op::Tanh)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary(a, kernels::sigmoid, Op::Sigmoid)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.unary(a, f64::exp, Op::Exp)
    }

    /// Elementwise scale * x + shift with constant coefficients.
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Result<Var> {
        self.unary(a, |x| scale * x + shift, |v| Op::Affine(v, scale))
    }

    pub fn scale(&mut self, a: Var, scale: f64) -> Result<Var> {
        self.affine(a, scale, 0.0)
    }

    /// Elementwise clamp to [lo, hi]. Gradient passes through strictly
    /// interior elements only.
    pub fn clip(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        if !(lo <= hi) {
            return Err(Error::invalid(format!("clip bounds inverted: [{lo}, {hi}]")));
        }
        self.unary(a, |x| x.clamp(lo, hi), |v| Op::Clip(v, lo, hi))
    }

    /// Row-wise log-softmax of a [rows, n] matrix.
    pub fn log_softmax_rows(&mut self, a: Var) -> Result<Var> {
        let (rows, n) = self.shape(a);
        let mut value = vec![0.0; rows * n];
        kernels::log_softmax_rows(&self.nodes[a.0].value, &mut value, rows, n);
        self.finish(Op::LogSoftmaxRows(a), rows, n, value)
    }

    /// out[r] = x[r, idx[r]] for a [rows, n] input; result is [rows, 1].
    pub fn gather_cols(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let (rows, n) = self.shape(a);
        if idx.len() != rows {
            return Err(Error::ShapeMismatch {
                op: "gather_cols",
                lhs: vec![rows, n],
                rhs: vec![idx.len()],
            });
        }
        if let Some(&bad) = idx.iter().find(|&&j| j >= n) {
            return Err(Error::invalid(format!(
                "gather_cols index {bad} out of range for {n} columns"
            )));
        }
        let value: Vec<f64> = idx
            .iter()
            .enumerate()
            .map(|(r, &j)| self.nodes[a.0].value[r * n + j])
            .collect();
        self.finish(Op::GatherCols(a, idx.to_vec()), rows, 1, value)
    }

    /// Sum of all elements, as a [1, 1] scalar.
    pub fn sum_all(&mut self, a: Var) -> Result<Var> {
        let value = vec![self.nodes[a.0].value.iter().sum()];
        self.finish(Op::SumAll(a), 1, 1, value)
    }

    /// Dot product with a constant coefficient vector, as a [1, 1] scalar.
    /// This is the reduction used to fold per-element weights, masks, and
    /// normalizers into a loss in one step.
    pub fn weighted_sum(&mut self, a: Var, coeffs: &[f64]) -> Result<Var> {
        let (rows, cols) = self.shape(a);
        if coeffs.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                op: "weighted_sum",
                lhs: vec![rows, cols],
                rhs: vec![coeffs.len()],
            });
        }
        let value = vec![self.nodes[a.0]
            .value
            .iter()
            .zip(coeffs)
            .map(|(&x, &c)| x * c)
            .sum()];
        self.finish(Op::WeightedSum(a, coeffs.to_vec()), 1, 1, value)
    }

    /// Reverse sweep from scalar `output`; returns gradients for every node
    /// the output depends on.
    pub fn backward(&self, output: Var) -> Result<Grads> {
        let out_node = &self.nodes[output.0];
        if out_node.value.len() != 1 {
            return Err(Error::invalid(format!(
                "backward needs a scalar output, got shape [{}, {}]",
                out_node.rows, out_node.cols
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(vec![1.0]);

        for i in (0..=output.0).rev() {
            let g = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf | Op::Const => {
                    grads[i] = Some(g);
                    continue;
                }
                Op::Add(a, b) => {
                    self.accumulate(&mut grads, *a, &g);
                    self.accumulate(&mut grads, *b, &g);
                }
                Op::Sub(a, b) => {
                    self.accumulate(&mut grads, *a, &g);
                    let neg: Vec<f64> = g.iter().map(|&v| -v).collect();
                    self.accumulate(&mut grads, *b, &neg);
                }
                Op::Mul(a, b) => {
                    let da: Vec<f64> = g
                        .iter()
                        .zip(&self.nodes[b.0].value)
                        .map(|(&gv, &bv)| gv * bv)
                        .collect();
                    let db: Vec<f64> = g
                        .iter()
                        .zip(&self.nodes[a.0].value)
                        .map(|(&gv, &av)| gv * av)
                        .collect();
                    self.accumulate(&mut grads, *a, &da);
                    self.accumulate(&mut grads, *b, &db);
                }
                Op::Min(a, b) | Op::Max(a, b) => {
                    let take_a: Vec<bool> = {
                        let av = &self.nodes[a.0].value;
                        let bv = &self.nodes[b.0].value;
                        let is_min = matches!(node.op, Op::Min(..));
                        av.iter()
                            .zip(bv)
                            .map(|(&x, &y)| if is_min { x <= y } else { x >= y })
                            .collect()
                    };
                    let da: Vec<f64> = g
                        .iter()
                        .zip(&take_a)
                        .map(|(&gv, &t)| if t { gv } else { 0.0 })
                        .collect();
                    let db: Vec<f64> = g
                        .iter()
                        .zip(&take_a)
                        .map(|(&gv, &t)| if t { 0.0 } else { gv })
                        .collect();
                    self.accumulate(&mut grads, *a, &da);
                    self.accumulate(&mut grads, *b, &db);
                }
                Op::Matmul(a, b) => {
                    let (m, k) = self.shape(*a);
                    let n = self.nodes[b.0].cols;
                    let mut da = vec![0.0; m * k];
                    kernels::matmul_a_bt(&g, &self.nodes[b.0].value, &mut da, m, n, k);
                    let mut db = vec![0.0; k * n];
                    kernels::matmul_at_b(&self.nodes[a.0].value, &g, &mut db, m, k, n);
                    self.accumulate(&mut grads, *a, &da);
                    self.accumulate(&mut grads, *b, &db);
                }
                Op::AddBias(m, bias) => {
                    self.accumulate(&mut grads, *m, &g);
                    let n = self.nodes[bias.0].value.len();
                    let rows = node.rows;
                    let mut db = vec![0.0; n];
                    for r in 0..rows {
                        for (d, &gv) in db.iter_mut().zip(&g[r * n..(r + 1) * n]) {
                            *d += gv;
                        }
                    }
                    self.accumulate(&mut grads, *bias, &db);
                }
                Op::Relu(a) => {
                    let da: Vec<f64> = g
                        .iter()
                        .zip(&node.value)
                        .map(|(&gv, &y)| if y > 0.0 { gv } else { 0.0 })
                        .collect();
                    self.accumulate(&mut grads, *a, &da);
                }
                Op::Tanh(a) => {
                    let da: Vec<f64> = g
                        .iter()
                        .zip(&node.value)
                        .map(|(&gv, &y)| gv * (1.0 - y * y))
                        .collect();
                    self.accumulate(&mut grads, *a, &da);
                }
                Op::Sigmoid(a) => {
                    let da: Vec<f64> = g
                        .iter()
                        .zip(&node.value)
                        .map(|(&gv, &y)| gv * y * (1.0 - y))
                        .collect();
                    self.accumulate(&mut grads, *a, &da);
                }
                Op::Exp(a) => {
                    let da: Vec<f64> = g
                        .iter()
                        .zip(&node.value)
                        .map(|(&gv, &y)| gv * y)
                        .collect();
                    self.accumulate(&mut grads, *a, &da);
                }
                Op::Affine(a, scale) => {
                    let da: Vec<f64> = g.iter().map(|&gv| gv * scale).collect();
                    self.accumulate(&mut grads, *a, &da);
                }
                Op::Clip(a, lo, hi) => {
                    let da: Vec<f64> = g
                        .iter()
                        .zip(&self.nodes[a.0].value)
                        .map(|(&gv, &x)| if x > *lo && x < *hi { gv } else { 0.0 })
                        .collect();
                    self.accumulate(&mut grads, *a, &da);
                }
                Op::LogSoftmaxRows(a) => {
                    let (rows, n) = (node.rows, node.cols);
                    let mut da = vec![0.0; rows * n];
                    for r in 0..rows {
                        let g_row = &g[r * n..(r + 1) * n];
                        let y_row = &node.value[r * n..(r + 1) * n];
                        let g_sum: f64 = g_row.iter().sum();
                        for j in 0..n {
                            da[r * n + j] = g_row[j] - y_row[j].exp() * g_sum;
                        }
                    }
                    self.accumulate(&mut grads, *a, &da);
                }
                Op::GatherCols(a, idx) => {
                    let n = self.nodes[a.0].cols;
                    let mut da = vec![0.0; self.nodes[a.0].value.len()];
                    for (r, &j) in idx.iter().enumerate() {
                        da[r * n + j] += g[r];
                    }
                    self.accumulate(&mut grads, *a, &da);
                }
                Op::SumAll(a) => {
                    let da = vec![g[0]; self.nodes[a.0].value.len()];
                    self.accumulate(&mut grads, *a, &da);
                }
                Op::WeightedSum(a, coeffs) => {
                    let da: Vec<f64> = coeffs.iter().map(|&c| c * g[0]).collect();
                    self.accumulate(&mut grads, *a, &da);
                }
            }
            grads[i] = Some(g);
        }

        Ok(Grads { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], v: Var, delta: &[f64]) {
        match &mut grads[v.0] {
            Some(g) => {
                for (gv, &d) in g.iter_mut().zip(delta) {
                    *gv += d;
                }
            }
            None => grads[v.0] = Some(delta.to_vec()),
        }
    }
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::Const => "const",
        Op::Add(..) => "add",
        Op::Sub(..) => "sub",
        Op::Mul(..) => "mul",
        Op::Min(..) => "min",
        Op::Max(..) => "max",
        Op::Matmul(..) => "matmul",
        Op::AddBias(..) => "add_bias",
        Op::Relu(..) => "relu",
        Op::Tanh(..) => "tanh",
        Op::Sigmoid(..) => "sigmoid",
        Op::Exp(..) => "exp",
        Op::Affine(..) => "affine",
        Op::Clip(..) => "clip",
        Op::LogSoftmaxRows(..) => "log_softmax_rows",
        Op::GatherCols(..) => "gather_cols",
        Op::SumAll(..) => "sum_all",
        Op::WeightedSum(..) => "weighted_sum",
    }
}
