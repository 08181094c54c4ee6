//! A small tape-based reverse-mode autodiff engine over dense row-major
//! matrices. It covers exactly the operations an MLP classifier needs.

use crate::error::{invalid, Result};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(invalid(format!(
                "tensor shape {rows}x{cols} does not match {} values",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    fn add_assign(&mut self, other: &Tensor) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    /// `x Wᵀ` with `x: n×in`, `W: out×in`.
    MatMulTransB(Var, Var),
    /// Row-broadcast addition of a `1×cols` bias.
    AddBias(Var, Var),
    Relu(Var),
    Tanh(Var),
    /// Mean softmax cross-entropy; keeps the softmax probabilities.
    SoftmaxXent {
        logits: Var,
        labels: Vec<u8>,
        probs: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar root with respect to every node that needs one.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// `None` for nodes that do not require a gradient.
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

/// `c = a · b` with arbitrary strides, accumulating with `beta`.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
    rsc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    debug_assert!(c.len() >= (m - 1) * rsc + n);
    // SAFETY: all index ranges implied by (dims, strides) lie inside the
    // slices, which the callers guarantee by construction of the shapes.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            1,
        );
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn matmul_t(&mut self, x: Var, w: Var) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(w));
        if xv.cols != wv.cols {
            return Err(invalid(format!(
                "matmul: input width {} does not match weight width {}",
                xv.cols, wv.cols
            )));
        }
        let (n, k, out) = (xv.rows, xv.cols, wv.rows);
        let mut y = Tensor::zeros(n, out);
        gemm(n, k, out, &xv.data, (k, 1), &wv.data, (1, k), 0.0, &mut y.data, out);
        let rg = self.needs(x) || self.needs(w);
        Ok(self.push(y, Op::MatMulTransB(x, w), rg))
    }

    pub fn add_bias(&mut self, y: Var, b: Var) -> Result<Var> {
        let (yv, bv) = (self.value(y), self.value(b));
        if bv.rows != 1 || bv.cols != yv.cols {
            return Err(invalid(format!(
                "bias of shape {}x{} cannot broadcast over width {}",
                bv.rows, bv.cols, yv.cols
            )));
        }
        let mut z = yv.clone();
        for row in z.data.chunks_exact_mut(z.cols.max(1)) {
            for (zi, bi) in row.iter_mut().zip(&bv.data) {
                *zi += bi;
            }
        }
        let rg = self.needs(y) || self.needs(b);
        Ok(self.push(z, Op::AddBias(y, b), rg))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let mut v = self.value(x).clone();
        for e in &mut v.data {
            if *e <= 0.0 {
                *e = 0.0;
            }
        }
        let rg = self.needs(x);
        self.push(v, Op::Relu(x), rg)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let mut v = self.value(x).clone();
        for e in &mut v.data {
            *e = e.tanh();
        }
        let rg = self.needs(x);
        self.push(v, Op::Tanh(x), rg)
    }

    /// Mean cross-entropy of `softmax(logits)` against integer labels.
    pub fn softmax_xent(&mut self, logits: Var, labels: &[u8]) -> Result<Var> {
        let lv = self.value(logits);
        if labels.len() != lv.rows || lv.rows == 0 {
            return Err(invalid(format!(
                "{} labels for a batch of {} rows",
                labels.len(),
                lv.rows
            )));
        }
        if let Some(l) = labels.iter().find(|l| usize::from(**l) >= lv.cols) {
            return Err(invalid(format!("label {l} out of range for {} classes", lv.cols)));
        }
        let mut probs = vec![0.0; lv.data.len()];
        let mut total = 0.0;
        for (r, &label) in labels.iter().enumerate() {
            let row = lv.row(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let p = &mut probs[r * lv.cols..(r + 1) * lv.cols];
            let mut sum = 0.0;
            for (pi, zi) in p.iter_mut().zip(row) {
                *pi = (zi - max).exp();
                sum += *pi;
            }
            for pi in p.iter_mut() {
                *pi /= sum;
            }
            total += sum.ln() + max - row[usize::from(label)];
        }
        let loss = Tensor::new(1, 1, vec![total / labels.len() as f64])?;
        let rg = self.needs(logits);
        Ok(self.push(
            loss,
            Op::SoftmaxXent {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            rg,
        ))
    }

    /// Back-propagates from a `1×1` root.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let rv = self.value(root);
        if rv.rows != 1 || rv.cols != 1 {
            return Err(invalid("backward needs a scalar root"));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Tensor::new(1, 1, vec![1.0])?);

        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(up) = grads[idx].take() else {
                continue;
            };
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(up);
                    continue;
                }
                Op::MatMulTransB(x, w) => {
                    let (xv, wv) = (self.value(*x), self.value(*w));
                    let (n, k, out) = (xv.rows, xv.cols, wv.rows);
                    if self.needs(*x) {
                        let g = grads[x.0].get_or_insert_with(|| Tensor::zeros(n, k));
                        gemm(n, out, k, &up.data, (out, 1), &wv.data, (k, 1), 1.0, &mut g.data, k);
                    }
                    if self.needs(*w) {
                        let g = grads[w.0].get_or_insert_with(|| Tensor::zeros(out, k));
                        gemm(out, n, k, &up.data, (1, out), &xv.data, (k, 1), 1.0, &mut g.data, k);
                    }
                }
                Op::AddBias(y, b) => {
                    if self.needs(*b) {
                        let cols = up.cols;
                        let g = grads[b.0].get_or_insert_with(|| Tensor::zeros(1, cols));
                        for row in up.data.chunks_exact(cols.max(1)) {
                            for (gi, ui) in g.data.iter_mut().zip(row) {
                                *gi += ui;
                            }
                        }
                    }
                    if self.needs(*y) {
                        accumulate(&mut grads[y.0], up);
                    }
                }
                Op::Relu(x) => {
                    let mut d = up;
                    for (di, yi) in d.data.iter_mut().zip(&node.value.data) {
                        if *yi <= 0.0 {
                            *di = 0.0;
                        }
                    }
                    accumulate(&mut grads[x.0], d);
                }
                Op::Tanh(x) => {
                    let mut d = up;
                    for (di, yi) in d.data.iter_mut().zip(&node.value.data) {
                        *di *= 1.0 - yi * yi;
                    }
                    accumulate(&mut grads[x.0], d);
                }
                Op::SoftmaxXent {
                    logits,
                    labels,
                    probs,
                } => {
                    let lv = self.value(*logits);
                    let scale = up.data[0] / labels.len() as f64;
                    let mut d = Tensor::new(lv.rows, lv.cols, probs.clone())?;
                    for (r, &label) in labels.iter().enumerate() {
                        d.data[r * lv.cols + usize::from(label)] -= 1.0;
                    }
                    for di in &mut d.data {
                        *di *= scale;
                    }
                    accumulate(&mut grads[logits.0], d);
                }
            }
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(slot: &mut Option<Tensor>, g: Tensor) {
    match slot {
        Some(existing) => existing.add_assign(&g),
        None => *slot = Some(g),
    }
}
