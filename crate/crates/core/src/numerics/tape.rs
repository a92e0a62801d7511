use super::{kernels, Backend, NumericsError, Result, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    Exp(Var),
    Log(Var),
    Relu(Var),
    MeanRows(Var),
    RowSums(Var),
    Sum(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    ConcatRows(Vec<Var>),
    Gather(Var, Vec<usize>),
    Scatter(Var, Vec<usize>),
    Reshape(Var),
    SoftmaxRows(Var),
    SegmentSoftmax(Var, Vec<usize>, usize),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records operations in execution order for reverse-mode differentiation.
///
/// Inputs are always recorded before their consumers, so walking the node list
/// backwards is a valid reverse topological order.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar loss with respect to every recorded value.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient for `v`; zeros when the loss does not depend on it.
    pub fn get(&self, v: Var) -> Tensor {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Tensor::zeros(r, c)
            }
        }
    }

    pub fn take(&mut self, v: Var) -> Tensor {
        match self.grads[v.0].take() {
            Some(g) => g,
            None => {
                let (r, c) = self.shapes[v.0];
                Tensor::zeros(r, c)
            }
        }
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

    /// Registers a trainable leaf.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.push_leaf(t, true)
    }

    fn push_leaf(&mut self, t: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn val(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Back-propagates from a `1 × 1` loss.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let (rows, cols) = self.val(loss).shape();
        if (rows, cols) != (1, 1) {
            return Err(NumericsError::NotScalarLoss { rows, cols });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::filled(1, 1, 1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            self.propagate(node, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape()).collect(),
        })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.nodes[a.0].requires_grad {
                    self.accumulate(grads, *a, kernels::matmul_nt(g, self.val(*b))?);
                }
                if self.nodes[b.0].requires_grad {
                    self.accumulate(grads, *b, kernels::matmul_tn(self.val(*a), g)?);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, kernels::scale(g, -1.0));
            }
            Op::Mul(a, b) => {
                self.accumulate(grads, *a, kernels::mul(g, self.val(*b))?);
                self.accumulate(grads, *b, kernels::mul(g, self.val(*a))?);
            }
            Op::AddRow(x, row) => {
                self.accumulate(grads, *x, g.clone());
                let mut gr = Tensor::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for (o, &v) in gr.data_mut().iter_mut().zip(g.row(r)) {
                        *o += v;
                    }
                }
                self.accumulate(grads, *row, gr);
            }
            Op::MulCol(x, col) => {
                self.accumulate(grads, *x, kernels::mul_col(g, self.val(*col))?);
                let xv = self.val(*x);
                let mut gc = Tensor::zeros(g.rows(), 1);
                for r in 0..g.rows() {
                    gc.data_mut()[r] = g.row(r).iter().zip(xv.row(r)).map(|(a, b)| a * b).sum();
                }
                self.accumulate(grads, *col, gc);
            }
            Op::Scale(x, c) => self.accumulate(grads, *x, kernels::scale(g, *c)),
            Op::Exp(x) => self.accumulate(grads, *x, kernels::mul(g, &node.value)?),
            Op::Log(x) => {
                let xv = self.val(*x);
                let data = g.data().iter().zip(xv.data()).map(|(gv, xv)| gv / xv).collect();
                self.accumulate(grads, *x, Tensor::from_vec(g.rows(), g.cols(), data)?);
            }
            Op::Relu(x) => {
                let xv = self.val(*x);
                let data = g
                    .data()
                    .iter()
                    .zip(xv.data())
                    .map(|(&gv, &xv)| if xv > 0.0 { gv } else { 0.0 })
                    .collect();
                self.accumulate(grads, *x, Tensor::from_vec(g.rows(), g.cols(), data)?);
            }
            Op::MeanRows(x) | Op::RowSums(x) => {
                let (rows, cols) = self.val(*x).shape();
                let factor = match node.op {
                    Op::MeanRows(_) if cols > 0 => 1.0 / cols as f64,
                    _ => 1.0,
                };
                let mut gx = Tensor::zeros(rows, cols);
                for r in 0..rows {
                    let v = g.data()[r] * factor;
                    gx.row_mut(r).iter_mut().for_each(|o| *o = v);
                }
                self.accumulate(grads, *x, gx);
            }
            Op::Sum(x) => {
                let (rows, cols) = self.val(*x).shape();
                self.accumulate(grads, *x, Tensor::filled(rows, cols, g.data()[0]));
            }
            Op::ConcatCols(parts) => {
                let mut lo = 0;
                for p in parts {
                    let hi = lo + self.val(*p).cols();
                    if self.nodes[p.0].requires_grad {
                        self.accumulate(grads, *p, kernels::slice_cols(g, lo, hi)?);
                    }
                    lo = hi;
                }
            }
            Op::SliceCols(x, lo) => {
                let (rows, cols) = self.val(*x).shape();
                let mut gx = Tensor::zeros(rows, cols);
                for r in 0..rows {
                    gx.row_mut(r)[*lo..*lo + g.cols()].copy_from_slice(g.row(r));
                }
                self.accumulate(grads, *x, gx);
            }
            Op::ConcatRows(parts) => {
                let cols = g.cols();
                let mut offset = 0;
                for p in parts {
                    let rows = self.val(*p).rows();
                    if self.nodes[p.0].requires_grad {
                        let data = g.data()[offset * cols..(offset + rows) * cols].to_vec();
                        self.accumulate(grads, *p, Tensor::from_vec(rows, cols, data)?);
                    }
                    offset += rows;
                }
            }
            Op::Gather(x, index) => {
                let n = self.val(*x).rows();
                self.accumulate(grads, *x, kernels::scatter_add_rows(g, index, n)?);
            }
            Op::Scatter(x, index) => {
                self.accumulate(grads, *x, kernels::gather_rows(g, index)?);
            }
            Op::Reshape(x) => {
                let (rows, cols) = self.val(*x).shape();
                self.accumulate(grads, *x, g.clone().reshaped(rows, cols)?);
            }
            Op::SoftmaxRows(x) => {
                let y = &node.value;
                let mut gx = Tensor::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let dot: f64 = g.row(r).iter().zip(y.row(r)).map(|(a, b)| a * b).sum();
                    for c in 0..y.cols() {
                        gx.set(r, c, y.get(r, c) * (g.get(r, c) - dot));
                    }
                }
                self.accumulate(grads, *x, gx);
            }
            Op::SegmentSoftmax(x, segment, n_segments) => {
                let y = &node.value;
                let cols = y.cols();
                let mut dots = Tensor::zeros(*n_segments, cols);
                for (i, &s) in segment.iter().enumerate() {
                    for c in 0..cols {
                        dots.data_mut()[s * cols + c] += g.get(i, c) * y.get(i, c);
                    }
                }
                let mut gx = Tensor::zeros(y.rows(), cols);
                for (i, &s) in segment.iter().enumerate() {
                    for c in 0..cols {
                        gx.set(i, c, y.get(i, c) * (g.get(i, c) - dots.get(s, c)));
                    }
                }
                self.accumulate(grads, *x, gx);
            }
        }
        Ok(())
    }
}

impl Backend for Tape {
    type Value = Var;

    fn constant(&mut self, t: Tensor) -> Var {
        self.push_leaf(t, false)
    }

    fn value<'a>(&'a self, v: &'a Var) -> &'a Tensor {
        self.val(*v)
    }

    fn matmul(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let out = kernels::matmul(self.val(*a), self.val(*b))?;
        Ok(self.push(out, Op::MatMul(*a, *b), &[*a, *b]))
    }
    fn add(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let out = kernels::add(self.val(*a), self.val(*b))?;
        Ok(self.push(out, Op::Add(*a, *b), &[*a, *b]))
    }
    fn sub(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let out = kernels::sub(self.val(*a), self.val(*b))?;
        Ok(self.push(out, Op::Sub(*a, *b), &[*a, *b]))
    }
    fn mul(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let out = kernels::mul(self.val(*a), self.val(*b))?;
        Ok(self.push(out, Op::Mul(*a, *b), &[*a, *b]))
    }
    fn add_row(&mut self, x: &Var, row: &Var) -> Result<Var> {
        let out = kernels::add_row(self.val(*x), self.val(*row))?;
        Ok(self.push(out, Op::AddRow(*x, *row), &[*x, *row]))
    }
    fn mul_col(&mut self, x: &Var, col: &Var) -> Result<Var> {
        let out = kernels::mul_col(self.val(*x), self.val(*col))?;
        Ok(self.push(out, Op::MulCol(*x, *col), &[*x, *col]))
    }
    fn scale(&mut self, x: &Var, c: f64) -> Var {
        let out = kernels::scale(self.val(*x), c);
        self.push(out, Op::Scale(*x, c), &[*x])
    }
    fn exp(&mut self, x: &Var) -> Result<Var> {
        let out = kernels::exp(self.val(*x))?;
        Ok(self.push(out, Op::Exp(*x), &[*x]))
    }
    fn log(&mut self, x: &Var) -> Result<Var> {
        let out = kernels::log(self.val(*x))?;
        Ok(self.push(out, Op::Log(*x), &[*x]))
    }
    fn relu(&mut self, x: &Var) -> Var {
        let out = kernels::relu(self.val(*x));
        self.push(out, Op::Relu(*x), &[*x])
    }
    fn mean_rows(&mut self, x: &Var) -> Var {
        let out = kernels::mean_rows(self.val(*x));
        self.push(out, Op::MeanRows(*x), &[*x])
    }
    fn row_sums(&mut self, x: &Var) -> Var {
        let out = kernels::row_sums(self.val(*x));
        self.push(out, Op::RowSums(*x), &[*x])
    }
    fn sum(&mut self, x: &Var) -> Var {
        let out = Tensor::filled(1, 1, self.val(*x).sum());
        self.push(out, Op::Sum(*x), &[*x])
    }
    fn concat_cols(&mut self, parts: &[&Var]) -> Result<Var> {
        let values: Vec<&Tensor> = parts.iter().map(|v| self.val(**v)).collect();
        let out = kernels::concat_cols(&values)?;
        let vars: Vec<Var> = parts.iter().map(|v| **v).collect();
        Ok(self.push(out, Op::ConcatCols(vars.clone()), &vars))
    }
    fn slice_cols(&mut self, x: &Var, lo: usize, hi: usize) -> Result<Var> {
        let out = kernels::slice_cols(self.val(*x), lo, hi)?;
        Ok(self.push(out, Op::SliceCols(*x, lo), &[*x]))
    }
    fn concat_rows(&mut self, parts: &[&Var]) -> Result<Var> {
        let values: Vec<&Tensor> = parts.iter().map(|v| self.val(**v)).collect();
        let out = kernels::concat_rows(&values)?;
        let vars: Vec<Var> = parts.iter().map(|v| **v).collect();
        Ok(self.push(out, Op::ConcatRows(vars.clone()), &vars))
    }
    fn gather_rows(&mut self, x: &Var, index: &[usize]) -> Result<Var> {
        let out = kernels::gather_rows(self.val(*x), index)?;
        Ok(self.push(out, Op::Gather(*x, index.to_vec()), &[*x]))
    }
    fn scatter_add_rows(&mut self, x: &Var, index: &[usize], n_out: usize) -> Result<Var> {
        let out = kernels::scatter_add_rows(self.val(*x), index, n_out)?;
        Ok(self.push(out, Op::Scatter(*x, index.to_vec()), &[*x]))
    }
    fn reshape(&mut self, x: &Var, rows: usize, cols: usize) -> Result<Var> {
        let out = self.val(*x).clone().reshaped(rows, cols)?;
        Ok(self.push(out, Op::Reshape(*x), &[*x]))
    }
    fn softmax_rows(&mut self, x: &Var) -> Var {
        let out = kernels::softmax_rows(self.val(*x));
        self.push(out, Op::SoftmaxRows(*x), &[*x])
    }
    fn segment_softmax(&mut self, x: &Var, segment: &[usize], n: usize) -> Result<Var> {
        let out = kernels::segment_softmax(self.val(*x), segment, n)?;
        Ok(self.push(out, Op::SegmentSoftmax(*x, segment.to_vec(), n), &[*x]))
    }
}
