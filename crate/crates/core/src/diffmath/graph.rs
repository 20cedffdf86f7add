//! Reverse-mode differentiation tape.
//!
//! Every operation appends a node referencing earlier nodes, so walking the
//! tape backwards from the root visits nodes in reverse topological order.
//! [`Graph::backward`] computes adjoints for one root into a scratch buffer
//! and then adds them into each node's persistent `grad`, so repeated calls
//! accumulate additively. Forward results are checked for finiteness as they
//! are produced; a non-finite intermediate is reported instead of propagated.

use crate::diffmath::array::DenseArray;
use crate::diffmath::optim::ParameterSet;
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`] tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf { param: Option<String> },
    Matmul(NodeId, NodeId),
    Add(NodeId, NodeId),
    AddBias(NodeId, NodeId),
    Tanh(NodeId),
    Relu(NodeId),
    Exp(NodeId),
    Scale(NodeId, f64),
    MulElem(NodeId, NodeId),
    LogSoftmax(NodeId),
    PickPerRow(NodeId, Vec<usize>),
    /// x + c with constant c (identity adjoint).
    AddConst(NodeId),
    /// Σᵢ xᵢ·wᵢ with constant weights w.
    DotConst(NodeId, DenseArray),
    SumAll(NodeId),
    MeanAll(NodeId),
}

#[derive(Debug)]
struct Node {
    value: DenseArray,
    grad: DenseArray,
    op: Op,
}

/// Append-only computation tape.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &DenseArray {
        &self.nodes[id.0].value
    }

    /// Accumulated gradient of the most recent `backward` roots wrt this node.
    pub fn grad(&self, id: NodeId) -> &DenseArray {
        &self.nodes[id.0].grad
    }

    fn push(&mut self, value: DenseArray, op: Op, context: &str) -> Result<NodeId> {
        value.ensure_finite(context)?;
        let grad = DenseArray::zeros_like(&value);
        self.nodes.push(Node { value, grad, op });
        Ok(NodeId(self.nodes.len() - 1))
    }

    /// Constant or input leaf.
    pub fn leaf(&mut self, value: DenseArray) -> Result<NodeId> {
        self.push(value, Op::Leaf { param: None }, "leaf")
    }

    /// Leaf holding a copy of a named parameter; `scatter_grads` routes its
    /// gradient back into the [`ParameterSet`].
    pub fn param(&mut self, params: &ParameterSet, name: &str) -> Result<NodeId> {
        let value = params.get(name)?.value.clone();
        self.push(value, Op::Leaf { param: Some(name.to_string()) }, "param")
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).matmul(self.value(b))?;
        self.push(value, Op::Matmul(a, b), "matmul")
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).add(self.value(b))?;
        self.push(value, Op::Add(a, b), "add")
    }

    pub fn add_bias(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId> {
        let value = self.value(a).add_bias(self.value(bias))?;
        self.push(value, Op::AddBias(a, bias), "add_bias")
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        let value = self.value(a).map(f64::tanh);
        self.push(value, Op::Tanh(a), "tanh")
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        let value = self.value(a).map(|v| if v > 0.0 { v } else { 0.0 });
        self.push(value, Op::Relu(a), "relu")
    }

    pub fn exp(&mut self, a: NodeId) -> Result<NodeId> {
        let value = self.value(a).map(f64::exp);
        self.push(value, Op::Exp(a), "exp")
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        let value = self.value(a).scale(c);
        self.push(value, Op::Scale(a, c), "scale")
    }

    pub fn mul_elem(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).mul_elem(self.value(b))?;
        self.push(value, Op::MulElem(a, b), "mul_elem")
    }

    pub fn log_softmax(&mut self, a: NodeId) -> Result<NodeId> {
        let value = self.value(a).log_softmax_rows()?;
        self.push(value, Op::LogSoftmax(a), "log_softmax")
    }

    pub fn pick_per_row(&mut self, a: NodeId, idx: Vec<usize>) -> Result<NodeId> {
        let value = self.value(a).pick_per_row(&idx)?;
        self.push(value, Op::PickPerRow(a, idx), "pick_per_row")
    }

    /// Elementwise addition of a constant array (same shape).
    pub fn add_const(&mut self, a: NodeId, c: &DenseArray) -> Result<NodeId> {
        let value = self.value(a).add(c)?;
        self.push(value, Op::AddConst(a), "add_const")
    }

    /// Scalar Σᵢ xᵢ·wᵢ with constant weights (no gradient through `w`).
    pub fn dot_const(&mut self, a: NodeId, w: DenseArray) -> Result<NodeId> {
        let value = DenseArray::scalar(self.value(a).dot(&w)?);
        self.push(value, Op::DotConst(a, w), "dot_const")
    }

    pub fn sum_all(&mut self, a: NodeId) -> Result<NodeId> {
        let value = DenseArray::scalar(self.value(a).sum());
        self.push(value, Op::SumAll(a), "sum_all")
    }

    pub fn mean_all(&mut self, a: NodeId) -> Result<NodeId> {
        let value = DenseArray::scalar(self.value(a).mean());
        self.push(value, Op::MeanAll(a), "mean_all")
    }

    /// Reverse sweep from a scalar root. Adjoints are accumulated additively
    /// into each node's persistent gradient, so calling twice doubles them.
    pub fn backward(&mut self, root: NodeId) -> Result<()> {
        if !self.nodes[root.0].value.is_scalar() {
            return Err(Error::Contract(format!(
                "backward root must be scalar, got shape {:?}",
                self.nodes[root.0].value.shape()
            )));
        }
        let mut adjoint: Vec<DenseArray> =
            self.nodes[..=root.0].iter().map(|n| DenseArray::zeros_like(&n.value)).collect();
        adjoint[root.0].fill(1.0);

        for i in (0..=root.0).rev() {
            let (lower, upper) = adjoint.split_at_mut(i);
            let up = &upper[0];
            match &self.nodes[i].op {
                Op::Leaf { .. } => {}
                Op::Matmul(a, b) => {
                    let da = up.matmul(&self.nodes[b.0].value.transpose()?)?;
                    let db = self.nodes[a.0].value.transpose()?.matmul(up)?;
                    lower[a.0].axpy(1.0, &da);
                    lower[b.0].axpy(1.0, &db);
                }
                Op::Add(a, b) => {
                    lower[a.0].axpy(1.0, up);
                    lower[b.0].axpy(1.0, up);
                }
                Op::AddBias(a, bias) => {
                    lower[a.0].axpy(1.0, up);
                    lower[bias.0].axpy(1.0, &up.col_sum()?);
                }
                Op::Tanh(a) => {
                    // tanh' = 1 - tanh², using the stored output
                    let local = self.nodes[i].value.map(|y| 1.0 - y * y);
                    lower[a.0].axpy(1.0, &up.mul_elem(&local)?);
                }
                Op::Relu(a) => {
                    let local = self.nodes[a.0].value.map(|x| if x > 0.0 { 1.0 } else { 0.0 });
                    lower[a.0].axpy(1.0, &up.mul_elem(&local)?);
                }
                Op::Exp(a) => {
                    lower[a.0].axpy(1.0, &up.mul_elem(&self.nodes[i].value)?);
                }
                Op::Scale(a, c) => {
                    lower[a.0].axpy(*c, up);
                }
                Op::MulElem(a, b) => {
                    let da = up.mul_elem(&self.nodes[b.0].value)?;
                    lower[a.0].axpy(1.0, &da);
                    let db = up.mul_elem(&self.nodes[a.0].value)?;
                    lower[b.0].axpy(1.0, &db);
                }
                Op::LogSoftmax(a) => {
                    // dx_rj = g_rj - softmax_rj · Σ_k g_rk, softmax = exp(output)
                    let out = &self.nodes[i].value;
                    let (r, c) = (out.rows(), out.cols());
                    let mut dx = DenseArray::zeros_like(out);
                    for row in 0..r {
                        let gsum: f64 = (0..c).map(|j| up.at(row, j)).sum();
                        for j in 0..c {
                            dx.data_mut()[row * c + j] = up.at(row, j) - out.at(row, j).exp() * gsum;
                        }
                    }
                    lower[a.0].axpy(1.0, &dx);
                }
                Op::PickPerRow(a, idx) => {
                    let cols = self.nodes[a.0].value.cols();
                    for (row, &col) in idx.iter().enumerate() {
                        lower[a.0].data_mut()[row * cols + col] += up.data()[row];
                    }
                }
                Op::AddConst(a) => {
                    lower[a.0].axpy(1.0, up);
                }
                Op::DotConst(a, w) => {
                    lower[a.0].axpy(up.item(), w);
                }
                Op::SumAll(a) => {
                    let g = up.item();
                    lower[a.0].data_mut().iter_mut().for_each(|v| *v += g);
                }
                Op::MeanAll(a) => {
                    let g = up.item() / self.nodes[a.0].value.len() as f64;
                    lower[a.0].data_mut().iter_mut().for_each(|v| *v += g);
                }
            }
        }

        for (node, adj) in self.nodes.iter_mut().zip(adjoint.iter()) {
            node.grad.axpy(1.0, adj);
        }
        Ok(())
    }

    /// Add the gradients of every named-parameter leaf into the set.
    pub fn scatter_grads(&self, params: &mut ParameterSet) -> Result<()> {
        for node in &self.nodes {
            if let Op::Leaf { param: Some(name) } = &node.op {
                params.accumulate_grad(name, &node.grad)?;
            }
        }
        Ok(())
    }
}
