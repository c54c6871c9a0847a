use crate::error::{dim_mismatch, Error, Result};
use crate::linalg::Matrix;

use super::kernels;

/// Handle to a node recorded on a [`Graph`].
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
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    LeakyRelu(Var, f64),
    Square(Var),
    Sum(Var),
    Mean(Var),
    ConcatCols(Vec<Var>),
    CosineScores(Var, Var),
    ProjectionScores {
        anchor: Var,
        rest: Vec<Var>,
        lambda: f64,
    },
    InfoNce {
        scores: Var,
        tau: f64,
        include_positive: bool,
    },
}

#[derive(Debug, Clone)]
struct Node {
    value: Matrix,
    op: Op,
}

/// Append-only computation graph. Nodes are pushed after their parents, so
/// index order is a topological order and backward walks it in reverse.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    gradient_fault: bool,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a graph whose score-op backward passes are deliberately off by
    /// 5%. Only for exercising the gradient checker's failure path.
    #[doc(hidden)]
    pub fn with_gradient_fault() -> Self {
        Self {
            nodes: Vec::new(),
            gradient_fault: true,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    /// Which side of zero every leaky-rectifier input sits on, in node order.
    /// Two evaluations with equal patterns lie on the same smooth piece.
    pub fn activation_pattern(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for node in &self.nodes {
            if let Op::LeakyRelu(a, _) = node.op {
                out.extend(self.value(a).as_slice().iter().map(|&x| x > 0.0));
            }
        }
        out
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Value of a 1x1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        debug_assert_eq!(m.shape(), (1, 1));
        m.get(0, 0)
    }

    fn same_shape(&self, context: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(dim_mismatch(context, format!("{sa:?}"), format!("{sb:?}")));
        }
        Ok(())
    }

    fn zip_map(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Matrix {
        let (va, vb) = (self.value(a), self.value(b));
        let data = va.as_slice().iter().zip(vb.as_slice()).map(|(&x, &y)| f(x, y)).collect();
        Matrix::from_vec(va.rows(), va.cols(), data)
    }

    fn map(&self, a: Var, f: impl Fn(f64) -> f64) -> Matrix {
        let va = self.value(a);
        Matrix::from_vec(va.rows(), va.cols(), va.as_slice().iter().map(|&x| f(x)).collect())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(v, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("Graph::add", a, b)?;
        let v = self.zip_map(a, b, |x, y| x + y);
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("Graph::sub", a, b)?;
        let v = self.zip_map(a, b, |x, y| x - y);
        Ok(self.push(v, Op::Sub(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("Graph::mul", a, b)?;
        let v = self.zip_map(a, b, |x, y| x * y);
        Ok(self.push(v, Op::Mul(a, b)))
    }

    /// `a + 1 bias`: adds a 1 x c row to every row of the n x c `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(bias));
        if vb.rows() != 1 || vb.cols() != va.cols() {
            return Err(dim_mismatch("Graph::add_row", format!("1x{}", va.cols()), format!("{:?}", vb.shape())));
        }
        let mut out = va.clone();
        for r in 0..out.rows() {
            for (o, b) in out.row_mut(r).iter_mut().zip(vb.as_slice()) {
                *o += b;
            }
        }
        Ok(self.push(out, Op::AddRow(a, bias)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.map(a, |x| x * s);
        self.push(v, Op::Scale(a, s))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let v = self.map(a, |x| if x > 0.0 { x } else { slope * x });
        self.push(v, Op::LeakyRelu(a, slope))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.map(a, |x| x * x);
        self.push(v, Op::Square(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).as_slice().iter().sum();
        self.push(Matrix::scalar(s), Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let s = m.as_slice().iter().sum::<f64>() / m.as_slice().len() as f64;
        self.push(Matrix::scalar(s), Op::Mean(a))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let mats: Vec<&Matrix> = parts.iter().map(|&p| self.value(p)).collect();
        let v = Matrix::hconcat(&mats)?;
        Ok(self.push(v, Op::ConcatCols(parts.to_vec())))
    }

    /// N x K cosine scores between the rows of `a` and the rows of `b`.
    pub fn cosine_scores(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = kernels::cosine_score_matrix(self.value(a), self.value(b))?;
        Ok(self.push(v, Op::CosineScores(a, b)))
    }

    /// N x N projection scores: entry (n, k) is the cosine between anchor row
    /// n and its ridge projection onto the span of row k of each `rest`.
    pub fn projection_scores(&mut self, anchor: Var, rest: &[Var], lambda: f64) -> Result<Var> {
        let rest_vals: Vec<&Matrix> = rest.iter().map(|&r| self.value(r)).collect();
        let v = kernels::projection_score_matrix(self.value(anchor), &rest_vals, lambda)?;
        Ok(self.push(
            v,
            Op::ProjectionScores {
                anchor,
                rest: rest.to_vec(),
                lambda,
            },
        ))
    }

    /// Batch-mean InfoNCE over a square score matrix with positives on the
    /// diagonal.
    pub fn infonce(&mut self, scores: Var, tau: f64, include_positive: bool) -> Result<Var> {
        let terms = kernels::infonce_terms(self.value(scores), tau, include_positive)?;
        let mean = terms.iter().sum::<f64>() / terms.len() as f64;
        Ok(self.push(
            Matrix::scalar(mean),
            Op::InfoNce {
                scores,
                tau,
                include_positive,
            },
        ))
    }

    /// Reverse-mode sweep from a scalar root.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let (rows, cols) = self.value(root).shape();
        if (rows, cols) != (1, 1) {
            return Err(Error::NonScalarRoot { rows, cols });
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; root.0 + 1];
        grads[root.0] = Some(Matrix::scalar(1.0));
        let fault = if self.gradient_fault { 1.05 } else { 1.0 };

        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            // leaves keep their gradient; interior gradients are consumed
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::MatMul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    accumulate(&mut grads, *a, g.matmul(&vb.transpose())?);
                    accumulate(&mut grads, *b, va.transpose().matmul(&g)?);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g.clone());
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g.scaled(-1.0));
                }
                Op::Mul(a, b) => {
                    let ga = elementwise(&g, self.value(*b), |x, y| x * y);
                    let gb = elementwise(&g, self.value(*a), |x, y| x * y);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::AddRow(a, bias) => {
                    let mut gb = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, x) in gb.as_mut_slice().iter_mut().zip(g.row(r)) {
                            *o += x;
                        }
                    }
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *bias, gb);
                }
                Op::Scale(a, s) => accumulate(&mut grads, *a, g.scaled(*s)),
                Op::LeakyRelu(a, slope) => {
                    let ga = elementwise(&g, self.value(*a), |up, x| if x > 0.0 { up } else { slope * up });
                    accumulate(&mut grads, *a, ga);
                }
                Op::Square(a) => {
                    let ga = elementwise(&g, self.value(*a), |up, x| 2.0 * x * up);
                    accumulate(&mut grads, *a, ga);
                }
                Op::Sum(a) => {
                    let (r, c) = self.value(*a).shape();
                    accumulate(&mut grads, *a, Matrix::from_vec(r, c, vec![g.get(0, 0); r * c]));
                }
                Op::Mean(a) => {
                    let (r, c) = self.value(*a).shape();
                    let v = g.get(0, 0) / (r * c) as f64;
                    accumulate(&mut grads, *a, Matrix::from_vec(r, c, vec![v; r * c]));
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let (r, c) = self.value(p).shape();
                        let mut gp = Matrix::zeros(r, c);
                        for i in 0..r {
                            gp.row_mut(i).copy_from_slice(&g.row(i)[offset..offset + c]);
                        }
                        offset += c;
                        accumulate(&mut grads, p, gp);
                    }
                }
                Op::CosineScores(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let mut ga = Matrix::zeros(va.rows(), va.cols());
                    let mut gb = Matrix::zeros(vb.rows(), vb.cols());
                    for i in 0..va.rows() {
                        for k in 0..vb.rows() {
                            let up = g.get(i, k) * fault;
                            if up == 0.0 {
                                continue;
                            }
                            let (gu, gv) = kernels::cosine_with_grads(va.row(i), vb.row(k), up);
                            add_into(ga.row_mut(i), &gu);
                            add_into(gb.row_mut(k), &gv);
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::ProjectionScores { anchor, rest, lambda } => {
                    let rest_vals: Vec<&Matrix> = rest.iter().map(|&r| self.value(r)).collect();
                    let up = if self.gradient_fault { g.scaled(fault) } else { g };
                    let (ga, gr) =
                        kernels::projection_score_backward(self.value(*anchor), &rest_vals, *lambda, &up)?;
                    accumulate(&mut grads, *anchor, ga);
                    for (&r, gm) in rest.iter().zip(gr) {
                        accumulate(&mut grads, r, gm);
                    }
                }
                Op::InfoNce {
                    scores,
                    tau,
                    include_positive,
                } => {
                    let gs = kernels::infonce_backward(self.value(*scores), *tau, *include_positive, g.get(0, 0));
                    accumulate(&mut grads, *scores, gs);
                }
            }
        }
        Ok(Gradients { grads })
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn elementwise(a: &Matrix, b: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    let data = a.as_slice().iter().zip(b.as_slice()).map(|(&x, &y)| f(x, y)).collect();
    Matrix::from_vec(a.rows(), a.cols(), data)
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
    match &mut grads[v.0] {
        Some(existing) => add_into(existing.as_mut_slice(), g.as_slice()),
        slot @ None => *slot = Some(g),
    }
}

/// Gradients of a scalar root with respect to every node it depends on.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// `None` when `v` does not influence the root.
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient for `v`, or zeros shaped like `like` when `v` is unused.
    pub fn get_or_zeros(&self, v: Var, like: &Matrix) -> Matrix {
        self.get(v).cloned().unwrap_or_else(|| Matrix::zeros(like.rows(), like.cols()))
    }
}
