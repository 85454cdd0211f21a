use super::{softmax, Matrix, NumericsError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Hadamard(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    /// out[i] = x[idx[i]]
    Gather(Var, Vec<usize>),
    /// out[idx[i]] += x[i]
    ScatterSum(Var, Vec<usize>),
    /// out[i] = w[i] * x[i]
    ScaleRows(Var, Vec<f64>),
    /// out[i] = x[i] + b  (b is a single row)
    AddRow(Var, Var),
    Sum(Var),
    /// Reinterprets row `row` of `x` as a `rows × cols` matrix.
    RowAsMatrix(Var, usize),
    /// Mean cross-entropy of row-wise softmax against class targets.
    SoftmaxCrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: Matrix,
    },
}

#[derive(Debug, Clone)]
struct Node {
    value: Matrix,
    op: Op,
}

/// Records primitive operations in evaluation order so that `backward`
/// can replay them in reverse.
#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients indexed by [`Var`]; `None` for values the loss does not
/// depend on.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Matrix> {
        self.grads.get_mut(v.0).and_then(Option::take)
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

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Matrix, op: Op, name: &'static str) -> Result<Var, NumericsError> {
        let value = value.ensure_finite(name)?;
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn leaf(&mut self, value: Matrix) -> Result<Var, NumericsError> {
        self.push(value, Op::Leaf, "leaf")
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let v = self.value(a).matmul(self.value(b))?;
        self.push(v, Op::MatMul(a, b), "matmul")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let v = self.value(a).add(self.value(b))?;
        self.push(v, Op::Add(a, b), "add")
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let v = self.value(a).hadamard(self.value(b))?;
        self.push(v, Op::Hadamard(a, b), "hadamard")
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var, NumericsError> {
        let v = self.value(a).scale(c);
        self.push(v, Op::Scale(a, c), "scale")
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, NumericsError> {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(v, Op::Relu(a), "relu")
    }

    pub fn gather(&mut self, a: Var, idx: Vec<usize>) -> Result<Var, NumericsError> {
        let x = self.value(a);
        let mut out = Matrix::zeros(idx.len(), x.cols());
        for (i, &j) in idx.iter().enumerate() {
            if j >= x.rows() {
                return Err(NumericsError::IndexOutOfRange {
                    op: "gather",
                    index: j,
                    len: x.rows(),
                });
            }
            out.row_mut(i).copy_from_slice(x.row(j));
        }
        self.push(out, Op::Gather(a, idx), "gather")
    }

    /// Sums row `i` of `a` into row `idx[i]` of an `n_out`-row result.
    /// Accumulation follows `idx` order, so results are reproducible.
    pub fn scatter_sum(
        &mut self,
        a: Var,
        idx: Vec<usize>,
        n_out: usize,
    ) -> Result<Var, NumericsError> {
        let x = self.value(a);
        if idx.len() != x.rows() {
            return Err(NumericsError::ShapeMismatch {
                op: "scatter_sum",
                left: x.shape(),
                right: (idx.len(), 1),
            });
        }
        let mut out = Matrix::zeros(n_out, x.cols());
        for (i, &j) in idx.iter().enumerate() {
            if j >= n_out {
                return Err(NumericsError::IndexOutOfRange {
                    op: "scatter_sum",
                    index: j,
                    len: n_out,
                });
            }
            for (o, v) in out.row_mut(j).iter_mut().zip(x.row(i)) {
                *o += v;
            }
        }
        self.push(out, Op::ScatterSum(a, idx), "scatter_sum")
    }

    pub fn scale_rows(&mut self, a: Var, w: Vec<f64>) -> Result<Var, NumericsError> {
        let x = self.value(a);
        if w.len() != x.rows() {
            return Err(NumericsError::ShapeMismatch {
                op: "scale_rows",
                left: x.shape(),
                right: (w.len(), 1),
            });
        }
        let mut out = x.clone();
        for (i, &wi) in w.iter().enumerate() {
            out.row_mut(i).iter_mut().for_each(|v| *v *= wi);
        }
        self.push(out, Op::ScaleRows(a, w), "scale_rows")
    }

    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var, NumericsError> {
        let x = self.value(a);
        let b = self.value(bias);
        if b.rows() != 1 || b.cols() != x.cols() {
            return Err(NumericsError::ShapeMismatch {
                op: "add_row",
                left: x.shape(),
                right: b.shape(),
            });
        }
        let mut out = x.clone();
        for i in 0..out.rows() {
            for (o, v) in out.row_mut(i).iter_mut().zip(b.row(0)) {
                *o += v;
            }
        }
        self.push(out, Op::AddRow(a, bias), "add_row")
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, NumericsError> {
        let v = Matrix::scalar(self.value(a).sum());
        self.push(v, Op::Sum(a), "sum")
    }

    pub fn row_as_matrix(
        &mut self,
        a: Var,
        row: usize,
        rows: usize,
        cols: usize,
    ) -> Result<Var, NumericsError> {
        let x = self.value(a);
        if row >= x.rows() || x.cols() != rows * cols {
            return Err(NumericsError::ShapeMismatch {
                op: "row_as_matrix",
                left: x.shape(),
                right: (rows, cols),
            });
        }
        let v = Matrix::from_vec(rows, cols, x.row(row).to_vec())?;
        self.push(v, Op::RowAsMatrix(a, row), "row_as_matrix")
    }

    /// Mean over rows of `-log softmax(logits[i])[targets[i]]`.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: Var,
        targets: Vec<usize>,
    ) -> Result<Var, NumericsError> {
        let x = self.value(logits);
        if targets.len() != x.rows() || x.rows() == 0 {
            return Err(NumericsError::ShapeMismatch {
                op: "softmax_cross_entropy",
                left: x.shape(),
                right: (targets.len(), 1),
            });
        }
        let mut probs = Matrix::zeros(x.rows(), x.cols());
        let mut loss = 0.0;
        for (i, &t) in targets.iter().enumerate() {
            if t >= x.cols() {
                return Err(NumericsError::IndexOutOfRange {
                    op: "softmax_cross_entropy",
                    index: t,
                    len: x.cols(),
                });
            }
            let row = x.row(i);
            // log-sum-exp with max subtraction
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss += lse - row[t];
            probs.row_mut(i).copy_from_slice(&softmax(row)?);
        }
        let n = targets.len() as f64;
        self.push(
            Matrix::scalar(loss / n),
            Op::SoftmaxCrossEntropy {
                logits,
                targets,
                probs,
            },
            "softmax_cross_entropy",
        )
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients, NumericsError> {
        if self.nodes.is_empty() {
            return Err(NumericsError::EmptyTape);
        }
        if self.value(loss).shape() != (1, 1) {
            return Err(NumericsError::NonScalarLoss(self.value(loss).shape()));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Matrix::scalar(1.0));

        fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {
                    grads[i] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let da = g.matmul_t(self.value(*b))?;
                    let db = self.value(*a).t_matmul(&g)?;
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g);
                }
                Op::Hadamard(a, b) => {
                    let da = g.hadamard(self.value(*b))?;
                    let db = g.hadamard(self.value(*a))?;
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::Scale(a, c) => accumulate(&mut grads, *a, g.scale(*c)),
                Op::Relu(a) => {
                    let x = self.value(*a);
                    let mut d = g;
                    for (dv, &xv) in d.data_mut().iter_mut().zip(x.data()) {
                        if xv <= 0.0 {
                            *dv = 0.0;
                        }
                    }
                    accumulate(&mut grads, *a, d);
                }
                Op::Gather(a, idx) => {
                    let x = self.value(*a);
                    let mut d = Matrix::zeros(x.rows(), x.cols());
                    for (r, &j) in idx.iter().enumerate() {
                        for (o, v) in d.row_mut(j).iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    accumulate(&mut grads, *a, d);
                }
                Op::ScatterSum(a, idx) => {
                    let x = self.value(*a);
                    let mut d = Matrix::zeros(x.rows(), x.cols());
                    for (r, &j) in idx.iter().enumerate() {
                        d.row_mut(r).copy_from_slice(g.row(j));
                    }
                    accumulate(&mut grads, *a, d);
                }
                Op::ScaleRows(a, w) => {
                    let mut d = g;
                    for (r, &wr) in w.iter().enumerate() {
                        d.row_mut(r).iter_mut().for_each(|v| *v *= wr);
                    }
                    accumulate(&mut grads, *a, d);
                }
                Op::AddRow(a, b) => {
                    let mut db = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, v) in db.row_mut(0).iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    accumulate(&mut grads, *b, db);
                    accumulate(&mut grads, *a, g);
                }
                Op::Sum(a) => {
                    let x = self.value(*a);
                    accumulate(&mut grads, *a, Matrix::filled(x.rows(), x.cols(), g.get(0, 0)));
                }
                Op::RowAsMatrix(a, row) => {
                    let x = self.value(*a);
                    let mut d = Matrix::zeros(x.rows(), x.cols());
                    d.row_mut(*row).copy_from_slice(g.data());
                    accumulate(&mut grads, *a, d);
                }
                Op::SoftmaxCrossEntropy {
                    logits,
                    targets,
                    probs,
                } => {
                    let scale = g.get(0, 0) / targets.len() as f64;
                    let mut d = probs.clone();
                    for (r, &t) in targets.iter().enumerate() {
                        let row = d.row_mut(r);
                        row[t] -= 1.0;
                        row.iter_mut().for_each(|v| *v *= scale);
                    }
                    accumulate(&mut grads, *logits, d);
                }
            }
        }
        // only leaf gradients survive the pass
        if grads.iter().flatten().any(|g| !g.is_finite()) {
            return Err(NumericsError::NonFiniteValue { op: "backward" });
        }
        Ok(Gradients { grads })
    }
}
