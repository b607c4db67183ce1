use std::collections::HashMap;

use super::kernels::gemm;
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum OpKind {
    Input,
    Const,
    Add,
    Sub,
    Mul,
    Scale(f64),
    MatMul,
    /// `x · (w ⊙ mask)`
    MaskedLinear,
    /// Adds a `[n]` or `[1, n]` row to every row of a `[m, n]` operand.
    AddRow,
    Tanh,
    Relu,
    Exp,
    Log,
    Sum,
    /// Reduces the last axis, keeping it with length 1.
    SumRows,
    Mean,
    /// Concatenation of 2-D operands along the last axis.
    Concat,
    /// Column selection on a 2-D operand.
    Gather(Vec<usize>),
}

impl OpKind {
    fn name(&self) -> &'static str {
        match self {
            OpKind::Input => "input",
            OpKind::Const => "const",
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::Scale(_) => "scale",
            OpKind::MatMul => "matmul",
            OpKind::MaskedLinear => "masked_linear",
            OpKind::AddRow => "add_row",
            OpKind::Tanh => "tanh",
            OpKind::Relu => "relu",
            OpKind::Exp => "exp",
            OpKind::Log => "log",
            OpKind::Sum => "sum",
            OpKind::SumRows => "sum_rows",
            OpKind::Mean => "mean",
            OpKind::Concat => "concat",
            OpKind::Gather(_) => "gather",
        }
    }
}

struct Node {
    op: OpKind,
    inputs: Vec<usize>,
    mask: Option<Vec<f64>>,
    // masked weights cached by the forward pass of a MaskedLinear node
    masked: Vec<f64>,
    requires_grad: bool,
}

/// A static computation graph with named inputs.
///
/// Nodes are appended in topological order. Shapes are fixed when a node is
/// added; `forward` only re-evaluates values.
pub struct Graph {
    nodes: Vec<Node>,
    values: Vec<Tensor>,
    grads: Vec<Tensor>,
    names: HashMap<String, usize>,
    input_order: Vec<(String, usize)>,
    bound: Vec<bool>,
    output: Option<usize>,
    evaluated: bool,
    scratch: Vec<f64>,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            values: Vec::new(),
            grads: Vec::new(),
            names: HashMap::new(),
            input_order: Vec::new(),
            bound: Vec::new(),
            output: None,
            evaluated: false,
            scratch: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: OpKind, inputs: Vec<usize>, shape: Vec<usize>) -> NodeId {
        let requires_grad = match op {
            OpKind::Input => true,
            OpKind::Const => false,
            _ => inputs.iter().any(|&i| self.nodes[i].requires_grad),
        };
        self.nodes.push(Node {
            op,
            inputs,
            mask: None,
            masked: Vec::new(),
            requires_grad,
        });
        self.values.push(Tensor::zeros(&shape));
        self.grads.push(Tensor::zeros(&shape));
        self.bound.push(false);
        self.evaluated = false;
        NodeId(self.nodes.len() - 1)
    }

    fn shape_of(&self, id: NodeId) -> &[usize] {
        self.values[id.0].shape()
    }

    pub fn input(&mut self, name: &str, shape: &[usize]) -> Result<NodeId> {
        if self.names.contains_key(name) {
            return Err(Error::invalid(format!("duplicate input name `{name}`")));
        }
        let id = self.push(OpKind::Input, Vec::new(), shape.to_vec());
        self.names.insert(name.to_string(), id.0);
        self.input_order.push((name.to_string(), id.0));
        Ok(id)
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        let id = self.push(OpKind::Const, Vec::new(), value.shape().to_vec());
        self.values[id.0] = value;
        self.bound[id.0] = true;
        id
    }

    fn same_shape(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<Vec<usize>> {
        if self.shape_of(a) != self.shape_of(b) {
            return Err(Error::shape(
                op,
                format!("{:?} vs {:?}", self.shape_of(a), self.shape_of(b)),
            ));
        }
        Ok(self.shape_of(a).to_vec())
    }

    fn binary(&mut self, op: OpKind, a: NodeId, b: NodeId) -> Result<NodeId> {
        let shape = self.same_shape(op.name(), a, b)?;
        Ok(self.push(op, vec![a.0, b.0], shape))
    }

    fn unary(&mut self, op: OpKind, a: NodeId) -> NodeId {
        let shape = self.shape_of(a).to_vec();
        self.push(op, vec![a.0], shape)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(OpKind::Add, a, b)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(OpKind::Sub, a, b)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(OpKind::Mul, a, b)
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        self.unary(OpKind::Scale(factor), a)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.unary(OpKind::Tanh, a)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        self.unary(OpKind::Relu, a)
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        self.unary(OpKind::Exp, a)
    }

    pub fn log(&mut self, a: NodeId) -> NodeId {
        self.unary(OpKind::Log, a)
    }

    fn matrix_dims(&self, op: &'static str, a: NodeId) -> Result<(usize, usize)> {
        match self.shape_of(a) {
            [r, c] => Ok((*r, *c)),
            s => Err(Error::shape(op, format!("expected a matrix, got {s:?}"))),
        }
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (m, k) = self.matrix_dims("matmul", a)?;
        let (k2, n) = self.matrix_dims("matmul", b)?;
        if k != k2 {
            return Err(Error::shape("matmul", format!("[{m}, {k}] x [{k2}, {n}]")));
        }
        Ok(self.push(OpKind::MatMul, vec![a.0, b.0], vec![m, n]))
    }

    /// `x · (w ⊙ mask)` where `mask` has the shape of `w`.
    pub fn masked_linear(&mut self, x: NodeId, w: NodeId, mask: &Tensor) -> Result<NodeId> {
        let (m, k) = self.matrix_dims("masked_linear", x)?;
        let (k2, n) = self.matrix_dims("masked_linear", w)?;
        if k != k2 || mask.shape() != [k2, n] {
            return Err(Error::shape(
                "masked_linear",
                format!("[{m}, {k}] x [{k2}, {n}] with mask {:?}", mask.shape()),
            ));
        }
        let id = self.push(OpKind::MaskedLinear, vec![x.0, w.0], vec![m, n]);
        let node = &mut self.nodes[id.0];
        node.mask = Some(mask.data().to_vec());
        node.masked = vec![0.0; k * n];
        Ok(id)
    }

    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> Result<NodeId> {
        let (_, n) = self.matrix_dims("add_row", a)?;
        let rs = self.shape_of(row);
        let ok = matches!(rs, [c] if *c == n) || matches!(rs, [1, c] if *c == n);
        if !ok {
            return Err(Error::shape(
                "add_row",
                format!("row {:?} for matrix with {n} columns", rs),
            ));
        }
        let shape = self.shape_of(a).to_vec();
        Ok(self.push(OpKind::AddRow, vec![a.0, row.0], shape))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        self.push(OpKind::Sum, vec![a.0], Vec::new())
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        self.push(OpKind::Mean, vec![a.0], Vec::new())
    }

    pub fn sum_rows(&mut self, a: NodeId) -> NodeId {
        let mut shape = self.shape_of(a).to_vec();
        match shape.last_mut() {
            Some(last) => *last = 1,
            None => shape = vec![1],
        }
        self.push(OpKind::SumRows, vec![a.0], shape)
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::shape("concat", "no operands"));
        }
        let (rows, _) = self.matrix_dims("concat", parts[0])?;
        let mut cols = 0;
        for &p in parts {
            let (r, c) = self.matrix_dims("concat", p)?;
            if r != rows {
                return Err(Error::shape("concat", format!("row counts {rows} vs {r}")));
            }
            cols += c;
        }
        Ok(self.push(
            OpKind::Concat,
            parts.iter().map(|p| p.0).collect(),
            vec![rows, cols],
        ))
    }

    pub fn gather(&mut self, a: NodeId, columns: &[usize]) -> Result<NodeId> {
        let (rows, cols) = self.matrix_dims("gather", a)?;
        if let Some(&bad) = columns.iter().find(|&&c| c >= cols) {
            return Err(Error::shape(
                "gather",
                format!("column {bad} out of range for {cols} columns"),
            ));
        }
        Ok(self.push(
            OpKind::Gather(columns.to_vec()),
            vec![a.0],
            vec![rows, columns.len()],
        ))
    }

    /// Marks the node returned by `forward`; defaults to the last node.
    pub fn set_output(&mut self, id: NodeId) {
        self.output = Some(id.0);
    }

    fn output_index(&self) -> usize {
        self.output.unwrap_or(self.nodes.len().saturating_sub(1))
    }

    pub fn input_names(&self) -> impl Iterator<Item = &str> {
        self.input_order.iter().map(|(n, _)| n.as_str())
    }

    pub fn input_id(&self, name: &str) -> Result<NodeId> {
        self.names
            .get(name)
            .map(|&i| NodeId(i))
            .ok_or_else(|| Error::UnknownInput(name.to_string()))
    }

    pub fn bind(&mut self, name: &str, value: &Tensor) -> Result<()> {
        let id = self.input_id(name)?.0;
        self.values[id].copy_from(value).map_err(|_| {
            Error::shape(
                "bind",
                format!(
                    "input `{name}` declared {:?}, bound {:?}",
                    self.values[id].shape(),
                    value.shape()
                ),
            )
        })?;
        self.bound[id] = true;
        self.evaluated = false;
        Ok(())
    }

    /// Binds raw row-major data to an input of matching length.
    pub fn bind_slice(&mut self, name: &str, data: &[f64]) -> Result<()> {
        let id = self.input_id(name)?.0;
        let slot = self.values[id].data_mut();
        if slot.len() != data.len() {
            return Err(Error::shape(
                "bind",
                format!("input `{name}` holds {} values, got {}", slot.len(), data.len()),
            ));
        }
        slot.copy_from_slice(data);
        self.bound[id] = true;
        self.evaluated = false;
        Ok(())
    }

    /// Binds every entry of `inputs` and evaluates the graph.
    pub fn forward(&mut self, inputs: &HashMap<String, Tensor>) -> Result<&Tensor> {
        for (name, value) in inputs {
            self.bind(name, value)?;
        }
        self.run()
    }

    /// Evaluates the graph with the currently bound inputs.
    pub fn run(&mut self) -> Result<&Tensor> {
        if let Some((name, _)) = self.input_order.iter().find(|(_, i)| !self.bound[*i]) {
            return Err(Error::Unbound(name.clone()));
        }
        let out = self.output_index();
        for i in 0..=out {
            self.eval_node(i)?;
        }
        self.evaluated = true;
        Ok(&self.values[out])
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.values[id.0]
    }

    fn eval_node(&mut self, i: usize) -> Result<()> {
        let (before, rest) = self.values.split_at_mut(i);
        let out = &mut rest[0];
        let node = &mut self.nodes[i];
        let arg = |k: usize| &before[node.inputs[k]];
        match &node.op {
            OpKind::Input | OpKind::Const => return Ok(()),
            OpKind::Add => zip2(out, arg(0), arg(1), |a, b| a + b),
            OpKind::Sub => zip2(out, arg(0), arg(1), |a, b| a - b),
            OpKind::Mul => zip2(out, arg(0), arg(1), |a, b| a * b),
            OpKind::Scale(c) => {
                let c = *c;
                map1(out, arg(0), |a| c * a)
            }
            OpKind::Tanh => map1(out, arg(0), f64::tanh),
            OpKind::Relu => map1(out, arg(0), |a| a.max(0.0)),
            OpKind::Exp => map1(out, arg(0), f64::exp),
            OpKind::Log => {
                if arg(0).data().iter().any(|&v| v <= 0.0) {
                    return Err(Error::LogDomain { node: i });
                }
                map1(out, arg(0), f64::ln)
            }
            OpKind::MatMul => {
                let (a, b) = (arg(0), arg(1));
                let (m, k, n) = (a.rows(), a.cols(), b.cols());
                gemm(m, k, n, a.data(), false, b.data(), false, 0.0, out.data_mut());
            }
            OpKind::MaskedLinear => {
                let x = &before[node.inputs[0]];
                let w = &before[node.inputs[1]];
                let mask = node.mask.as_ref().expect("masked_linear without mask");
                for ((mw, &wv), &mv) in node.masked.iter_mut().zip(w.data()).zip(mask) {
                    *mw = wv * mv;
                }
                let (m, k, n) = (x.rows(), x.cols(), w.cols());
                gemm(m, k, n, x.data(), false, &node.masked, false, 0.0, out.data_mut());
            }
            OpKind::AddRow => {
                let (a, row) = (arg(0), arg(1));
                let n = a.cols();
                for (orow, arow) in out.data_mut().chunks_mut(n).zip(a.data().chunks(n)) {
                    for ((o, &av), &rv) in orow.iter_mut().zip(arow).zip(row.data()) {
                        *o = av + rv;
                    }
                }
            }
            OpKind::Sum => {
                let total = ordered_sum(arg(0));
                out.data_mut()[0] = total;
            }
            OpKind::Mean => {
                let a = arg(0);
                out.data_mut()[0] = ordered_sum(a) / a.len() as f64;
            }
            OpKind::SumRows => {
                let a = arg(0);
                let n = a.cols();
                for (o, row) in out.data_mut().iter_mut().zip(a.data().chunks(n)) {
                    *o = row.iter().sum();
                }
            }
            OpKind::Concat => {
                let cols = out.cols();
                let mut offset = 0;
                for &p in &node.inputs {
                    let part = &before[p];
                    let c = part.cols();
                    for (orow, prow) in out.data_mut().chunks_mut(cols).zip(part.data().chunks(c)) {
                        orow[offset..offset + c].copy_from_slice(prow);
                    }
                    offset += c;
                }
            }
            OpKind::Gather(idx) => {
                let a = arg(0);
                let (n_in, n_out) = (a.cols(), idx.len());
                for (orow, arow) in out.data_mut().chunks_mut(n_out).zip(a.data().chunks(n_in)) {
                    for (o, &j) in orow.iter_mut().zip(idx) {
                        *o = arow[j];
                    }
                }
            }
        }
        if !out.is_finite() {
            return Err(Error::NonFinite {
                op: node.op.name(),
                node: i,
            });
        }
        Ok(())
    }

    /// Reverse accumulation of `output · seed`; gradients for every named
    /// input are returned.
    pub fn backward(&mut self, seed: &Tensor) -> Result<HashMap<String, Tensor>> {
        self.backward_in_place(seed)?;
        Ok(self
            .input_order
            .iter()
            .map(|(name, i)| (name.clone(), self.grads[*i].clone()))
            .collect())
    }

    /// Like [`Graph::backward`] but leaves gradients in the graph, to be read
    /// with [`Graph::grad`].
    pub fn backward_in_place(&mut self, seed: &Tensor) -> Result<()> {
        if !self.evaluated {
            return Err(Error::BackwardBeforeForward);
        }
        let out = self.output_index();
        if seed.shape() != self.values[out].shape() {
            return Err(Error::shape(
                "backward",
                format!(
                    "seed {:?} for output {:?}",
                    seed.shape(),
                    self.values[out].shape()
                ),
            ));
        }
        for g in &mut self.grads[..=out] {
            g.fill(0.0);
        }
        self.grads[out].copy_from(seed)?;
        for i in (0..=out).rev() {
            if self.nodes[i].requires_grad {
                self.backprop_node(i);
            }
        }
        Ok(())
    }

    pub fn grad(&self, name: &str) -> Result<&Tensor> {
        Ok(&self.grads[self.input_id(name)?.0])
    }

    pub fn grad_of(&self, id: NodeId) -> &Tensor {
        &self.grads[id.0]
    }

    fn backprop_node(&mut self, i: usize) {
        let (lower, upper) = self.grads.split_at_mut(i);
        let g = &upper[0];
        let node = &self.nodes[i];
        let vals = &self.values;
        let wants = |k: usize| self.nodes[node.inputs[k]].requires_grad;
        let ins = &node.inputs;
        match &node.op {
            OpKind::Input | OpKind::Const => {}
            OpKind::Add => {
                if wants(0) {
                    lower[ins[0]].axpy(1.0, g);
                }
                if wants(1) {
                    lower[ins[1]].axpy(1.0, g);
                }
            }
            OpKind::Sub => {
                if wants(0) {
                    lower[ins[0]].axpy(1.0, g);
                }
                if wants(1) {
                    lower[ins[1]].axpy(-1.0, g);
                }
            }
            OpKind::Mul => {
                let (a, b) = (&vals[ins[0]], &vals[ins[1]]);
                if wants(0) {
                    acc_zip(&mut lower[ins[0]], g, b, |g, b| g * b);
                }
                if wants(1) {
                    acc_zip(&mut lower[ins[1]], g, a, |g, a| g * a);
                }
            }
            OpKind::Scale(c) => {
                if wants(0) {
                    lower[ins[0]].axpy(*c, g);
                }
            }
            OpKind::Tanh => {
                if wants(0) {
                    acc_zip(&mut lower[ins[0]], g, &vals[i], |g, y| g * (1.0 - y * y));
                }
            }
            OpKind::Relu => {
                if wants(0) {
                    let x = &vals[ins[0]];
                    acc_zip(&mut lower[ins[0]], g, x, |g, x| if x > 0.0 { g } else { 0.0 });
                }
            }
            OpKind::Exp => {
                if wants(0) {
                    acc_zip(&mut lower[ins[0]], g, &vals[i], |g, y| g * y);
                }
            }
            OpKind::Log => {
                if wants(0) {
                    let x = &vals[ins[0]];
                    acc_zip(&mut lower[ins[0]], g, x, |g, x| g / x);
                }
            }
            OpKind::MatMul => {
                let (a, b) = (&vals[ins[0]], &vals[ins[1]]);
                let (m, k, n) = (a.rows(), a.cols(), b.cols());
                if wants(0) {
                    gemm(m, n, k, g.data(), false, b.data(), true, 1.0, lower[ins[0]].data_mut());
                }
                if wants(1) {
                    gemm(k, m, n, a.data(), true, g.data(), false, 1.0, lower[ins[1]].data_mut());
                }
            }
            OpKind::MaskedLinear => {
                let x = &vals[ins[0]];
                let (m, k, n) = (x.rows(), x.cols(), vals[ins[1]].cols());
                if wants(0) {
                    gemm(m, n, k, g.data(), false, &node.masked, true, 1.0, lower[ins[0]].data_mut());
                }
                if wants(1) {
                    let scratch = &mut self.scratch;
                    scratch.resize(k * n, 0.0);
                    gemm(k, m, n, x.data(), true, g.data(), false, 0.0, scratch);
                    let mask = node.mask.as_ref().expect("masked_linear without mask");
                    for ((gw, &s), &mv) in lower[ins[1]].data_mut().iter_mut().zip(scratch.iter()).zip(mask) {
                        *gw += s * mv;
                    }
                }
            }
            OpKind::AddRow => {
                if wants(0) {
                    lower[ins[0]].axpy(1.0, g);
                }
                if wants(1) {
                    let n = g.cols();
                    let grow = lower[ins[1]].data_mut();
                    for grow_src in g.data().chunks(n) {
                        for (r, &v) in grow.iter_mut().zip(grow_src) {
                            *r += v;
                        }
                    }
                }
            }
            OpKind::Sum | OpKind::Mean => {
                if wants(0) {
                    let a = &mut lower[ins[0]];
                    let scale = match node.op {
                        OpKind::Mean => 1.0 / a.len() as f64,
                        _ => 1.0,
                    };
                    let gv = g.item() * scale;
                    a.data_mut().iter_mut().for_each(|v| *v += gv);
                }
            }
            OpKind::SumRows => {
                if wants(0) {
                    let a = &mut lower[ins[0]];
                    let n = a.cols();
                    for (row, &gv) in a.data_mut().chunks_mut(n).zip(g.data()) {
                        row.iter_mut().for_each(|v| *v += gv);
                    }
                }
            }
            OpKind::Concat => {
                let cols = g.cols();
                let mut offset = 0;
                for &p in ins {
                    let c = vals[p].cols();
                    if self.nodes[p].requires_grad {
                        let part = &mut lower[p];
                        for (prow, grow) in part.data_mut().chunks_mut(c).zip(g.data().chunks(cols)) {
                            for (pv, &gv) in prow.iter_mut().zip(&grow[offset..offset + c]) {
                                *pv += gv;
                            }
                        }
                    }
                    offset += c;
                }
            }
            OpKind::Gather(idx) => {
                if wants(0) {
                    let a = &mut lower[ins[0]];
                    let n_in = a.cols();
                    for (arow, grow) in a.data_mut().chunks_mut(n_in).zip(g.data().chunks(idx.len())) {
                        for (&j, &gv) in idx.iter().zip(grow) {
                            arow[j] += gv;
                        }
                    }
                }
            }
        }
    }
}

/// Sums the last axis first, then the per-row totals in order.
fn ordered_sum(t: &Tensor) -> f64 {
    let n = t.cols().max(1);
    t.data()
        .chunks(n)
        .map(|row| row.iter().sum::<f64>())
        .fold(0.0, |acc, r| acc + r)
}

fn zip2(out: &mut Tensor, a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) {
    for ((o, &x), &y) in out.data_mut().iter_mut().zip(a.data()).zip(b.data()) {
        *o = f(x, y);
    }
}

fn map1(out: &mut Tensor, a: &Tensor, f: impl Fn(f64) -> f64) {
    for (o, &x) in out.data_mut().iter_mut().zip(a.data()) {
        *o = f(x);
    }
}

fn acc_zip(acc: &mut Tensor, g: &Tensor, other: &Tensor, f: impl Fn(f64, f64) -> f64) {
    for ((a, &gv), &ov) in acc.data_mut().iter_mut().zip(g.data()).zip(other.data()) {
        *a += f(gv, ov);
    }
}
