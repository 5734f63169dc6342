//! Wengert tape over matrix-valued nodes.
//!
//! Every operation appends a node holding its forward value and the handles
//! of its parents. Nodes are only ever appended, so insertion order is a
//! topological order and [`Tape::backward`] is a single reverse sweep.

use super::tensor::{gemm, Tensor};
use super::AdError;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Matmul(Var, Var),
    Transpose(Var),
    Concat(Vec<Var>),
    Slice { src: Var, start: usize },
    Gather { src: Var, idx: Vec<usize> },
    Sum(Var),
    Mean(Var),
    RowSum(Var),
    ColSum(Var),
    Exp(Var),
    Log(Var),
    Tanh(Var),
    Sin(Var),
    Cos(Var),
    Square(Var),
    Sqrt(Var),
    Recip(Var),
    Neg(Var),
    Scale(Var, f64),
    AddScalar(Var),
    LeakyRelu(Var, f64),
    Softplus(Var),
    LogSumExp(Var),
    PairwiseSqDist(Var, Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by leaf handle.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`; `None` for constants and
    /// for parameters the loss does not depend on.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn broadcast_shape(a: [usize; 2], b: [usize; 2]) -> Option<[usize; 2]> {
    let dim = |x: usize, y: usize| match (x, y) {
        _ if x == y => Some(x),
        (1, y) => Some(y),
        (x, 1) => Some(x),
        _ => None,
    };
    Some([dim(a[0], b[0])?, dim(a[1], b[1])?])
}

fn zip_broadcast(a: &Tensor, b: &Tensor, shape: [usize; 2], f: impl Fn(f64, f64) -> f64) -> Tensor {
    if a.shape() == b.shape() {
        let values = a.values().iter().zip(b.values()).map(|(&x, &y)| f(x, y)).collect();
        return Tensor::new(shape[0], shape[1], values).expect("same shape");
    }
    let [ar, ac] = a.shape();
    let [br, bc] = b.shape();
    let av = a.values();
    let bv = b.values();
    let mut values = Vec::with_capacity(shape[0] * shape[1]);
    for i in 0..shape[0] {
        let ai = if ar == 1 { 0 } else { i };
        let bi = if br == 1 { 0 } else { i };
        for j in 0..shape[1] {
            let aj = if ac == 1 { 0 } else { j };
            let bj = if bc == 1 { 0 } else { j };
            values.push(f(av[ai * ac + aj], bv[bi * bc + bj]));
        }
    }
    Tensor::new(shape[0], shape[1], values).expect("broadcast shape")
}

/// Sums `g` down to `shape` along broadcast dimensions.
fn reduce_to(g: Tensor, shape: [usize; 2]) -> Tensor {
    if g.shape() == shape {
        return g;
    }
    let [gr, gc] = g.shape();
    let mut out = Tensor::zeros(shape[0], shape[1]);
    let ov = out.values_mut();
    let gv = g.values();
    for i in 0..gr {
        let oi = if shape[0] == 1 { 0 } else { i };
        for j in 0..gc {
            let oj = if shape[1] == 1 { 0 } else { j };
            ov[oi * shape[1] + oj] += gv[i * gc + j];
        }
    }
    out
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
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

    /// Drops every node recorded after the tape had `len` nodes. Handles
    /// created after that point become invalid.
    pub fn truncate(&mut self, len: usize) {
        self.nodes.truncate(len);
    }

    /// Leaf that receives a gradient.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> [usize; 2] {
        self.nodes[v.0].value.shape()
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    fn push(&mut self, name: &'static str, op: Op, value: Tensor, needs_grad: bool) -> Result<Var, AdError> {
        if !value.is_finite() {
            return Err(AdError::NonFinite { op: name });
        }
        self.nodes.push(Node { value, op, needs_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    fn unary(&mut self, name: &'static str, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Result<Var, AdError> {
        let value = self.value(a).map(f);
        let needs = self.needs(&[a]);
        self.push(name, op, value, needs)
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        op: Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Var, AdError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let shape = broadcast_shape(sa, sb).ok_or(AdError::ShapeMismatch { op: name, lhs: sa, rhs: sb })?;
        let value = zip_broadcast(self.value(a), self.value(b), shape, f);
        let needs = self.needs(&[a, b]);
        self.push(name, op, value, needs)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        self.binary("add", a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        self.binary("sub", a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        self.binary("mul", a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        if self.value(b).values().iter().any(|&v| v == 0.0) {
            return Err(AdError::Domain {
                op: "div",
                detail: "division by zero".into(),
            });
        }
        self.binary("div", a, b, Op::Div(a, b), |x, y| x / y)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        let value = self.value(a).matmul(self.value(b))?;
        let needs = self.needs(&[a, b]);
        self.push("matmul", Op::Matmul(a, b), value, needs)
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, AdError> {
        let value = self.value(a).transpose();
        let needs = self.needs(&[a]);
        self.push("transpose", Op::Transpose(a), value, needs)
    }

    /// Concatenates along columns.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, AdError> {
        let first = parts.first().ok_or(AdError::Domain {
            op: "concat",
            detail: "no inputs".into(),
        })?;
        let rows = self.shape(*first)[0];
        let mut cols = 0;
        for &p in parts {
            let s = self.shape(p);
            if s[0] != rows {
                return Err(AdError::ShapeMismatch {
                    op: "concat",
                    lhs: self.shape(*first),
                    rhs: s,
                });
            }
            cols += s[1];
        }
        let mut value = Tensor::zeros(rows, cols);
        let mut offset = 0;
        for &p in parts {
            let src = self.value(p);
            let w = src.cols();
            for i in 0..rows {
                value.values_mut()[i * cols + offset..i * cols + offset + w].copy_from_slice(src.row_slice(i));
            }
            offset += w;
        }
        let needs = self.needs(parts);
        self.push("concat", Op::Concat(parts.to_vec()), value, needs)
    }

    /// Columns `start..end`.
    pub fn slice(&mut self, a: Var, start: usize, end: usize) -> Result<Var, AdError> {
        let [rows, cols] = self.shape(a);
        if start > end || end > cols {
            return Err(AdError::Domain {
                op: "slice",
                detail: format!("columns {start}..{end} of {cols}"),
            });
        }
        let src = self.value(a);
        let value = Tensor::from_fn(rows, end - start, |i, j| src.get(i, start + j));
        let needs = self.needs(&[a]);
        self.push("slice", Op::Slice { src: a, start }, value, needs)
    }

    /// Selects (and possibly repeats) columns by index.
    pub fn gather(&mut self, a: Var, idx: &[usize]) -> Result<Var, AdError> {
        let cols = self.shape(a)[1];
        if let Some(&bad) = idx.iter().find(|&&j| j >= cols) {
            return Err(AdError::Domain {
                op: "gather",
                detail: format!("column {bad} of {cols}"),
            });
        }
        let value = self.value(a).select_cols(idx);
        let needs = self.needs(&[a]);
        self.push(
            "gather",
            Op::Gather {
                src: a,
                idx: idx.to_vec(),
            },
            value,
            needs,
        )
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, AdError> {
        let value = Tensor::scalar(self.value(a).sum());
        let needs = self.needs(&[a]);
        self.push("sum", Op::Sum(a), value, needs)
    }

    pub fn mean(&mut self, a: Var) -> Result<Var, AdError> {
        let t = self.value(a);
        if t.is_empty() {
            return Err(AdError::Domain {
                op: "mean",
                detail: "empty tensor".into(),
            });
        }
        let value = Tensor::scalar(t.sum() / t.len() as f64);
        let needs = self.needs(&[a]);
        self.push("mean", Op::Mean(a), value, needs)
    }

    /// Per-row sum, `[m, n] -> [m, 1]`.
    pub fn row_sum(&mut self, a: Var) -> Result<Var, AdError> {
        let t = self.value(a);
        let value = Tensor::column(&t.row_iter().map(|r| r.iter().sum()).collect::<Vec<_>>());
        let needs = self.needs(&[a]);
        self.push("row_sum", Op::RowSum(a), value, needs)
    }

    /// Per-column sum, `[m, n] -> [1, n]`.
    pub fn col_sum(&mut self, a: Var) -> Result<Var, AdError> {
        let t = self.value(a);
        let mut acc = vec![0.0; t.cols()];
        for r in t.row_iter() {
            for (s, v) in acc.iter_mut().zip(r) {
                *s += v;
            }
        }
        let value = Tensor::row(&acc);
        let needs = self.needs(&[a]);
        self.push("col_sum", Op::ColSum(a), value, needs)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var, AdError> {
        self.unary("exp", a, Op::Exp(a), f64::exp)
    }

    pub fn log(&mut self, a: Var) -> Result<Var, AdError> {
        if self.value(a).values().iter().any(|&v| v <= 0.0) {
            return Err(AdError::Domain {
                op: "log",
                detail: "non-positive argument".into(),
            });
        }
        self.unary("log", a, Op::Log(a), f64::ln)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var, AdError> {
        self.unary("tanh", a, Op::Tanh(a), f64::tanh)
    }

    pub fn sin(&mut self, a: Var) -> Result<Var, AdError> {
        self.unary("sin", a, Op::Sin(a), f64::sin)
    }

    pub fn cos(&mut self, a: Var) -> Result<Var, AdError> {
        self.unary("cos", a, Op::Cos(a), f64::cos)
    }

    pub fn square(&mut self, a: Var) -> Result<Var, AdError> {
        self.unary("square", a, Op::Square(a), |x| x * x)
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var, AdError> {
        if self.value(a).values().iter().any(|&v| v <= 0.0) {
            return Err(AdError::Domain {
                op: "sqrt",
                detail: "non-positive argument".into(),
            });
        }
        self.unary("sqrt", a, Op::Sqrt(a), f64::sqrt)
    }

    pub fn recip(&mut self, a: Var) -> Result<Var, AdError> {
        if self.value(a).values().iter().any(|&v| v == 0.0) {
            return Err(AdError::Domain {
                op: "recip",
                detail: "division by zero".into(),
            });
        }
        self.unary("recip", a, Op::Recip(a), |x| 1.0 / x)
    }

    pub fn neg(&mut self, a: Var) -> Result<Var, AdError> {
        self.unary("neg", a, Op::Neg(a), |x| -x)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var, AdError> {
        self.unary("scale", a, Op::Scale(a, s), |x| x * s)
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Result<Var, AdError> {
        self.unary("add_scalar", a, Op::AddScalar(a), |x| x + s)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Result<Var, AdError> {
        self.unary("leaky_relu", a, Op::LeakyRelu(a, slope), |x| if x >= 0.0 { x } else { slope * x })
    }

    pub fn softplus(&mut self, a: Var) -> Result<Var, AdError> {
        self.unary("softplus", a, Op::Softplus(a), softplus)
    }

    /// Numerically stable `log(sum(exp(row)))`, `[m, n] -> [m, 1]`.
    pub fn logsumexp(&mut self, a: Var) -> Result<Var, AdError> {
        let t = self.value(a);
        let out: Vec<f64> = t
            .row_iter()
            .map(|r| {
                let m = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                m + r.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
            })
            .collect();
        let value = Tensor::column(&out);
        let needs = self.needs(&[a]);
        self.push("logsumexp", Op::LogSumExp(a), value, needs)
    }

    /// Squared Euclidean distances between the rows of `a` and `b`.
    pub fn pairwise_sq_dist(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa[1] != sb[1] {
            return Err(AdError::ShapeMismatch {
                op: "pairwise_sq_dist",
                lhs: sa,
                rhs: sb,
            });
        }
        let value = pairwise_sq_dist(self.value(a), self.value(b));
        let needs = self.needs(&[a, b]);
        self.push("pairwise_sq_dist", Op::PairwiseSqDist(a, b), value, needs)
    }

    /// Reverse sweep from a `1 x 1` loss.
    pub fn backward(&self, loss: Var) -> Result<Gradients, AdError> {
        let shape = self.shape(loss);
        if shape != [1, 1] {
            return Err(AdError::NonScalar(shape));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            if matches!(node.op, Op::Leaf) {
                grads[i] = Some(g);
                continue;
            }
            self.propagate(node, &node.value, g, &mut grads);
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if !(matches!(node.op, Op::Leaf) && node.needs_grad) {
                grads[i] = None;
            }
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        let g = reduce_to(g, self.shape(v));
        match &mut grads[v.0] {
            Some(acc) => {
                for (a, b) in acc.values_mut().iter_mut().zip(g.values()) {
                    *a += b;
                }
            }
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&self, node: &Node, out: &Tensor, g: Tensor, grads: &mut [Option<Tensor>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        let elementwise = |g: &Tensor, a: &Tensor, f: &dyn Fn(f64, f64) -> f64| {
            let values = g.values().iter().zip(a.values()).map(|(&gi, &ai)| f(gi, ai)).collect();
            Tensor::new(g.rows(), g.cols(), values).expect("same shape")
        };
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate(grads, *b, g.clone());
                self.accumulate(grads, *a, g);
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *b, g.map(|x| -x));
                self.accumulate(grads, *a, g);
            }
            Op::Mul(a, b) => {
                let shape = g.shape();
                if self.nodes[a.0].needs_grad {
                    self.accumulate(grads, *a, zip_broadcast(&g, val(*b), shape, |x, y| x * y));
                }
                if self.nodes[b.0].needs_grad {
                    self.accumulate(grads, *b, zip_broadcast(&g, val(*a), shape, |x, y| x * y));
                }
            }
            Op::Div(a, b) => {
                let shape = g.shape();
                if self.nodes[a.0].needs_grad {
                    self.accumulate(grads, *a, zip_broadcast(&g, val(*b), shape, |x, y| x / y));
                }
                if self.nodes[b.0].needs_grad {
                    // d(a/b)/db = -(a/b)/b
                    let go = zip_broadcast(&g, out, shape, |x, o| x * o);
                    self.accumulate(grads, *b, zip_broadcast(&go, val(*b), shape, |x, y| -x / y));
                }
            }
            Op::Matmul(a, b) => {
                if self.nodes[a.0].needs_grad {
                    let av = val(*a);
                    let mut ga = Tensor::zeros(av.rows(), av.cols());
                    gemm(&g, false, val(*b), true, &mut ga, 0.0);
                    self.accumulate(grads, *a, ga);
                }
                if self.nodes[b.0].needs_grad {
                    let bv = val(*b);
                    let mut gb = Tensor::zeros(bv.rows(), bv.cols());
                    gemm(val(*a), true, &g, false, &mut gb, 0.0);
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::Transpose(a) => self.accumulate(grads, *a, g.transpose()),
            Op::Concat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let w = self.shape(p)[1];
                    if self.nodes[p.0].needs_grad {
                        let gp = Tensor::from_fn(g.rows(), w, |i, j| g.get(i, offset + j));
                        self.accumulate(grads, p, gp);
                    }
                    offset += w;
                }
            }
            Op::Slice { src, start } => {
                let [rows, cols] = self.shape(*src);
                let mut gs = Tensor::zeros(rows, cols);
                for i in 0..rows {
                    for j in 0..g.cols() {
                        gs.set(i, start + j, g.get(i, j));
                    }
                }
                self.accumulate(grads, *src, gs);
            }
            Op::Gather { src, idx } => {
                let [rows, cols] = self.shape(*src);
                let mut gs = Tensor::zeros(rows, cols);
                for i in 0..rows {
                    for (j, &k) in idx.iter().enumerate() {
                        let cur = gs.get(i, k);
                        gs.set(i, k, cur + g.get(i, j));
                    }
                }
                self.accumulate(grads, *src, gs);
            }
            Op::Sum(a) => {
                let [r, c] = self.shape(*a);
                self.accumulate(grads, *a, Tensor::filled(r, c, g.item()));
            }
            Op::Mean(a) => {
                let [r, c] = self.shape(*a);
                self.accumulate(grads, *a, Tensor::filled(r, c, g.item() / (r * c) as f64));
            }
            Op::RowSum(a) | Op::ColSum(a) => {
                // Broadcasting in `accumulate` expands g back over the summed axis.
                let [r, c] = self.shape(*a);
                let full = zip_broadcast(&g, &Tensor::zeros(r, c), [r, c], |x, _| x);
                self.accumulate(grads, *a, full);
            }
            Op::Exp(a) => self.accumulate(grads, *a, elementwise(&g, out, &|gi, o| gi * o)),
            Op::Log(a) => self.accumulate(grads, *a, elementwise(&g, val(*a), &|gi, x| gi / x)),
            Op::Tanh(a) => self.accumulate(grads, *a, elementwise(&g, out, &|gi, o| gi * (1.0 - o * o))),
            Op::Sin(a) => self.accumulate(grads, *a, elementwise(&g, val(*a), &|gi, x| gi * x.cos())),
            Op::Cos(a) => self.accumulate(grads, *a, elementwise(&g, val(*a), &|gi, x| -gi * x.sin())),
            Op::Square(a) => self.accumulate(grads, *a, elementwise(&g, val(*a), &|gi, x| 2.0 * gi * x)),
            Op::Sqrt(a) => self.accumulate(grads, *a, elementwise(&g, out, &|gi, o| gi / (2.0 * o))),
            Op::Recip(a) => self.accumulate(grads, *a, elementwise(&g, out, &|gi, o| -gi * o * o)),
            Op::Neg(a) => self.accumulate(grads, *a, g.map(|x| -x)),
            Op::Scale(a, s) => {
                let s = *s;
                self.accumulate(grads, *a, g.map(|x| x * s));
            }
            Op::AddScalar(a) => self.accumulate(grads, *a, g),
            Op::LeakyRelu(a, slope) => {
                let slope = *slope;
                self.accumulate(
                    grads,
                    *a,
                    elementwise(&g, val(*a), &|gi, x| if x >= 0.0 { gi } else { gi * slope }),
                );
            }
            Op::Softplus(a) => self.accumulate(grads, *a, elementwise(&g, val(*a), &|gi, x| gi * sigmoid(x))),
            Op::LogSumExp(a) => {
                let src = val(*a);
                let ga = Tensor::from_fn(src.rows(), src.cols(), |i, j| g.get(i, 0) * (src.get(i, j) - out.get(i, 0)).exp());
                self.accumulate(grads, *a, ga);
            }
            Op::PairwiseSqDist(a, b) => {
                // dD_ij/da_i = 2 (a_i - b_j), dD_ij/db_j = -2 (a_i - b_j)
                let (av, bv) = (val(*a), val(*b));
                if self.nodes[a.0].needs_grad {
                    let mut ga = Tensor::zeros(av.rows(), av.cols());
                    gemm(&g, false, bv, false, &mut ga, 0.0);
                    for i in 0..av.rows() {
                        let rs: f64 = g.row_slice(i).iter().sum();
                        for k in 0..av.cols() {
                            let v = 2.0 * (rs * av.get(i, k) - ga.get(i, k));
                            ga.set(i, k, v);
                        }
                    }
                    self.accumulate(grads, *a, ga);
                }
                if self.nodes[b.0].needs_grad {
                    let mut gb = Tensor::zeros(bv.rows(), bv.cols());
                    gemm(&g, true, av, false, &mut gb, 0.0);
                    let mut cs = vec![0.0; bv.rows()];
                    for r in g.row_iter() {
                        for (s, v) in cs.iter_mut().zip(r) {
                            *s += v;
                        }
                    }
                    for j in 0..bv.rows() {
                        for k in 0..bv.cols() {
                            let v = 2.0 * (cs[j] * bv.get(j, k) - gb.get(j, k));
                            gb.set(j, k, v);
                        }
                    }
                    self.accumulate(grads, *b, gb);
                }
            }
        }
    }
}

/// Squared Euclidean distances between the rows of two matrices.
pub fn pairwise_sq_dist(a: &Tensor, b: &Tensor) -> Tensor {
    let d = a.cols();
    let mut out = Tensor::zeros(a.rows(), b.rows());
    let m = b.rows();
    let ov = out.values_mut();
    for (i, ra) in a.row_iter().enumerate() {
        for (j, rb) in b.row_iter().enumerate() {
            let mut s = 0.0;
            for k in 0..d {
                let diff = ra[k] - rb[k];
                s += diff * diff;
            }
            ov[i * m + j] = s;
        }
    }
    out
}
