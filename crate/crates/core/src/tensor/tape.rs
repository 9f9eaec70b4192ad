//! Define-by-run reverse-mode differentiation over [`Matrix`] values.
//!
//! Every operation appends a node holding its forward value and the ids of
//! its parents. Nodes are only ever appended, so parents always precede
//! their children and a single reverse sweep visits the graph in a valid
//! order.

use crate::error::{Error, Result};

use super::Matrix;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Scale(Var, f64),
    RowSoftmax(Var),
    MeanRows(Var),
    Gather(Var, Vec<usize>),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    Tanh(Var),
    Sum(Var),
    BceWithLogits(Var, Vec<f64>),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

/// Deliberate gradient corruption, used to prove that the gradient checker
/// notices a broken backward rule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Fault {
    /// Multiplies the softmax input gradient by `1 + delta`.
    SoftmaxGradScale(f64),
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    fault: Option<Fault>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn with_fault(fault: Fault) -> Self {
        Tape {
            nodes: Vec::new(),
            fault: Some(fault),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    /// Trainable leaf; receives a gradient on `backward`.
    pub fn param(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Constant leaf; no gradient flows into it.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        let rg = self.needs(&[a]);
        self.push(value, Op::Transpose(a), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).scale(s);
        let rg = self.needs(&[a]);
        self.push(value, Op::Scale(a, s), rg)
    }

    pub fn row_softmax(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).row_softmax()?;
        let rg = self.needs(&[a]);
        Ok(self.push(value, Op::RowSoftmax(a), rg))
    }

    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).mean_rows()?;
        let rg = self.needs(&[a]);
        Ok(self.push(value, Op::MeanRows(a), rg))
    }

    pub fn gather_rows(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        let value = self.value(a).gather_rows(indices)?;
        let rg = self.needs(&[a]);
        Ok(self.push(value, Op::Gather(a, indices.to_vec()), rg))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let value = {
            let mats: Vec<&Matrix> = parts.iter().map(|&p| self.value(p)).collect();
            Matrix::concat_cols(&mats)?
        };
        let rg = self.needs(parts);
        Ok(self.push(value, Op::ConcatCols(parts.to_vec()), rg))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let value = {
            let mats: Vec<&Matrix> = parts.iter().map(|&p| self.value(p)).collect();
            Matrix::concat_rows(&mats)?
        };
        let rg = self.needs(parts);
        Ok(self.push(value, Op::ConcatRows(parts.to_vec()), rg))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::tanh);
        let rg = self.needs(&[a]);
        self.push(value, Op::Tanh(a), rg)
    }

    /// Sum of all entries as a `1 x 1` node.
    pub fn sum(&mut self, a: Var) -> Var {
        let value = Matrix::scalar(self.value(a).sum());
        let rg = self.needs(&[a]);
        self.push(value, Op::Sum(a), rg)
    }

    /// Mean binary cross-entropy of every entry of `logits` against
    /// `labels` (row-major order), as a `1 x 1` node.
    pub fn bce_with_logits(&mut self, logits: Var, labels: &[f64]) -> Result<Var> {
        let loss = crate::training::bce_loss_values(self.value(logits).data(), labels)?;
        let rg = self.needs(&[logits]);
        Ok(self.push(
            Matrix::scalar(loss),
            Op::BceWithLogits(logits, labels.to_vec()),
            rg,
        ))
    }

    /// Reverse sweep from a `1 x 1` node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let shape = self.shape(loss);
        if shape != (1, 1) {
            return Err(Error::Contract(format!(
                "backward needs a 1x1 loss, got {}x{}",
                shape.0, shape.1
            )));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Matrix::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(upstream) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    if self.nodes[a.0].requires_grad {
                        let g = upstream.matmul(&self.value(*b).transpose())?;
                        accumulate(&mut grads, *a, g)?;
                    }
                    if self.nodes[b.0].requires_grad {
                        let g = self.value(*a).transpose().matmul(&upstream)?;
                        accumulate(&mut grads, *b, g)?;
                    }
                }
                Op::Transpose(a) => accumulate(&mut grads, *a, upstream.transpose())?,
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, upstream.clone())?;
                    accumulate(&mut grads, *b, upstream.clone())?;
                }
                Op::Scale(a, s) => accumulate(&mut grads, *a, upstream.scale(*s))?,
                Op::RowSoftmax(a) => {
                    let mut g = softmax_backward(&node.value, &upstream);
                    if let Some(Fault::SoftmaxGradScale(delta)) = self.fault {
                        g = g.scale(1.0 + delta);
                    }
                    accumulate(&mut grads, *a, g)?;
                }
                Op::MeanRows(a) => {
                    let (rows, cols) = self.shape(*a);
                    let inv = 1.0 / rows as f64;
                    let mut g = Matrix::zeros(rows, cols);
                    for r in 0..rows {
                        for (o, u) in g.row_mut(r).iter_mut().zip(upstream.data()) {
                            *o = u * inv;
                        }
                    }
                    accumulate(&mut grads, *a, g)?;
                }
                Op::Gather(a, indices) => {
                    let (rows, cols) = self.shape(*a);
                    let mut g = Matrix::zeros(rows, cols);
                    for (k, &i) in indices.iter().enumerate() {
                        for (o, u) in g.row_mut(i).iter_mut().zip(upstream.row(k)) {
                            *o += u;
                        }
                    }
                    accumulate(&mut grads, *a, g)?;
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let (rows, cols) = self.shape(*p);
                        let mut g = Matrix::zeros(rows, cols);
                        for r in 0..rows {
                            g.row_mut(r)
                                .copy_from_slice(&upstream.row(r)[offset..offset + cols]);
                        }
                        offset += cols;
                        accumulate(&mut grads, *p, g)?;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let (rows, cols) = self.shape(*p);
                        let start = offset * cols;
                        let g = Matrix::new(
                            rows,
                            cols,
                            upstream.data()[start..start + rows * cols].to_vec(),
                        )?;
                        offset += rows;
                        accumulate(&mut grads, *p, g)?;
                    }
                }
                Op::Tanh(a) => {
                    let data = node
                        .value
                        .data()
                        .iter()
                        .zip(upstream.data())
                        .map(|(y, u)| u * (1.0 - y * y))
                        .collect();
                    let (r, c) = node.value.shape();
                    accumulate(&mut grads, *a, Matrix::new(r, c, data)?)?;
                }
                Op::Sum(a) => {
                    let (r, c) = self.shape(*a);
                    accumulate(&mut grads, *a, Matrix::filled(r, c, upstream.data()[0]))?;
                }
                Op::BceWithLogits(a, labels) => {
                    let logits = self.value(*a);
                    let n = labels.len() as f64;
                    let u = upstream.data()[0];
                    let data = logits
                        .data()
                        .iter()
                        .zip(labels)
                        .map(|(&x, &y)| u * (sigmoid(x) - y) / n)
                        .collect();
                    let (r, c) = logits.shape();
                    accumulate(&mut grads, *a, Matrix::new(r, c, data)?)?;
                }
            }
            if matches!(node.op, Op::Leaf) {
                grads[idx] = Some(upstream);
            }
        }

        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape()).collect(),
        })
    }
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient of the loss with respect to a leaf. Leaves the loss does not
    /// depend on get an all-zero matrix of their own shape.
    pub fn wrt(&self, v: Var) -> Matrix {
        match self.grads.get(v.0).and_then(Option::as_ref) {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Matrix::zeros(r, c)
            }
        }
    }

    /// Moves the gradient out, leaving zeros behind.
    pub fn take(&mut self, v: Var) -> Matrix {
        match self.grads.get_mut(v.0).and_then(Option::take) {
            Some(g) => g,
            None => {
                let (r, c) = self.shapes[v.0];
                Matrix::zeros(r, c)
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: Matrix) -> Result<()> {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

// dx_j = y_j * (dy_j - sum_k dy_k y_k), row by row.
fn softmax_backward(y: &Matrix, dy: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(y.rows(), y.cols());
    for r in 0..y.rows() {
        let (yr, dr) = (y.row(r), dy.row(r));
        let dot: f64 = yr.iter().zip(dr).map(|(a, b)| a * b).sum();
        for ((o, &yj), &dj) in out.row_mut(r).iter_mut().zip(yr).zip(dr) {
            *o = yj * (dj - dot);
        }
    }
    out
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
