//! Reverse-mode differentiation over a recorded list of matrix operations.
//!
//! Every value on the tape is a row-major matrix. Operations append a node
//! holding the forward result; [`Tape::backward`] walks the nodes in reverse
//! and accumulates vector-Jacobian products into parameter leaves.

use crate::error::{Error, Result};
use crate::nn::array::{DenseArray, GradientStore, ParameterStore};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op {
    Constant,
    Param(String),
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    Exp(Var),
    Log(Var),
    Square(Var),
    Relu(Var),
    Clamp(Var, f64, f64),
    LogSoftmax(Var),
    RowSum(Var),
    Sum(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    RepeatRows(Var, usize),
    MeanBlocks(Var, usize),
    BlocksToCols(Var, usize),
    GaussianLogpdf { x: Var, mean: Var, log_var: Var },
    KlStdNormal { mean: Var, log_std: Var },
}

struct Node {
    op: Op,
    value: DenseArray,
    needs_grad: bool,
}

/// Records a computation for later differentiation.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    c: &mut [f64],
    beta: f64,
) {
    debug_assert!(c.len() >= m * n);
    // SAFETY: the stride pairs describe in-bounds views of `a` (m x k),
    // `b` (k x n) and `c` (m x n, row-major), checked by the callers' shapes.
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
            n as isize,
            1,
        );
    }
}

/// Plain matrix product `a (m x k) * b (k x n)`, used by inference paths
/// that skip the tape.
pub fn matmul(a: &DenseArray, b: &DenseArray) -> Result<DenseArray> {
    let (m, k) = (a.rows(), a.cols());
    let (k2, n) = (b.rows(), b.cols());
    if k != k2 {
        return Err(Error::dim("matmul inner dimension", k, k2));
    }
    let mut out = vec![0.0; m * n];
    gemm(m, k, n, a.values(), (k, 1), b.values(), (n, 1), &mut out, 0.0);
    Ok(DenseArray::from_raw(vec![m, n], out))
}

/// Numerically stable row-wise log-softmax.
pub fn log_softmax_rows(logits: &DenseArray) -> DenseArray {
    let cols = logits.cols();
    let mut out = logits.values().to_vec();
    for row in out.chunks_mut(cols) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        for v in row.iter_mut() {
            *v -= lse;
        }
    }
    DenseArray::from_raw(vec![logits.rows(), cols], out)
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

    pub fn value(&self, v: Var) -> &DenseArray {
        &self.nodes[v.0].value
    }

    /// Value of a `1 x 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        let a = self.value(v);
        debug_assert_eq!(a.len(), 1);
        a.values()[0]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let a = self.value(v);
        (a.rows(), a.cols())
    }

    fn push(&mut self, op: Op, value: DenseArray, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn as_matrix(a: &DenseArray) -> DenseArray {
        DenseArray::from_raw(vec![a.rows(), a.cols()], a.values().to_vec())
    }

    /// Input that receives no gradient (data, frozen noise).
    pub fn constant(&mut self, a: &DenseArray) -> Var {
        self.push(Op::Constant, Self::as_matrix(a), false)
    }

    pub fn constant_owned(&mut self, a: DenseArray) -> Var {
        let (r, c) = (a.rows(), a.cols());
        let value = DenseArray::from_raw(vec![r, c], a.into_values());
        self.push(Op::Constant, value, false)
    }

    /// Trainable leaf; its gradient is reported under `name`.
    pub fn param(&mut self, name: &str, a: &DenseArray) -> Var {
        self.push(Op::Param(name.to_string()), Self::as_matrix(a), true)
    }

    fn same_shape(&self, ctx: &str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::dim(ctx, format!("{sa:?}"), format!("{sb:?}")));
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = matmul(self.value(a), self.value(b))?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(Op::MatMul(a, b), value, ng))
    }

    /// `a (n x m) + bias (1 x m)` broadcast over rows.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (n, m) = self.shape(a);
        if self.shape(bias) != (1, m) {
            return Err(Error::dim("bias", format!("(1, {m})"), format!("{:?}", self.shape(bias))));
        }
        let b = self.value(bias).values();
        let mut out = self.value(a).values().to_vec();
        for row in out.chunks_mut(m) {
            for (o, &bv) in row.iter_mut().zip(b) {
                *o += bv;
            }
        }
        let ng = self.ng(a) || self.ng(bias);
        Ok(self.push(Op::AddRow(a, bias), DenseArray::from_raw(vec![n, m], out), ng))
    }

    fn zip_with(&mut self, op: Op, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        self.same_shape("elementwise operands", a, b)?;
        let (n, m) = self.shape(a);
        let out = self
            .value(a)
            .values()
            .iter()
            .zip(self.value(b).values())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(op, DenseArray::from_raw(vec![n, m], out), ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(Op::Add(a, b), a, b, |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(Op::Sub(a, b), a, b, |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(Op::Mul(a, b), a, b, |x, y| x * y)
    }

    /// `a (n x m)` times `col (n x 1)` broadcast over columns.
    pub fn mul_col(&mut self, a: Var, col: Var) -> Result<Var> {
        let (n, m) = self.shape(a);
        if self.shape(col) != (n, 1) {
            return Err(Error::dim("column factor", format!("({n}, 1)"), format!("{:?}", self.shape(col))));
        }
        let c = self.value(col).values();
        let mut out = self.value(a).values().to_vec();
        for (row, &cv) in out.chunks_mut(m).zip(c) {
            for o in row.iter_mut() {
                *o *= cv;
            }
        }
        let ng = self.ng(a) || self.ng(col);
        Ok(self.push(Op::MulCol(a, col), DenseArray::from_raw(vec![n, m], out), ng))
    }

    fn unary(&mut self, op: Op, a: Var, f: impl Fn(f64) -> f64) -> Var {
        let value = self.value(a).map(f);
        let ng = self.ng(a);
        self.push(op, value, ng)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        self.unary(Op::Scale(a, factor), a, |x| x * factor)
    }

    pub fn offset(&mut self, a: Var, shift: f64) -> Var {
        self.unary(Op::Offset(a), a, |x| x + shift)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(Op::Exp(a), a, f64::exp)
    }

    pub fn ln(&mut self, a: Var) -> Var {
        self.unary(Op::Log(a), a, f64::ln)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(Op::Square(a), a, |x| x * x)
    }

    /// RELU with subgradient 0 at the kink.
    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(Op::Relu(a), a, |x| if x > 0.0 { x } else { 0.0 })
    }

    /// Clamps into `[lo, hi]`; the gradient is zero outside the open interval.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.unary(Op::Clamp(a, lo, hi), a, |x| x.clamp(lo, hi))
    }

    pub fn log_softmax(&mut self, a: Var) -> Var {
        let value = log_softmax_rows(self.value(a));
        let ng = self.ng(a);
        self.push(Op::LogSoftmax(a), value, ng)
    }

    /// Sums each row: `n x m -> n x 1`.
    pub fn row_sum(&mut self, a: Var) -> Var {
        let (n, m) = self.shape(a);
        let out = self.value(a).values().chunks(m).map(|r| r.iter().sum()).collect();
        let ng = self.ng(a);
        self.push(Op::RowSum(a), DenseArray::from_raw(vec![n, 1], out), ng)
    }

    /// Sums everything into a `1 x 1` node.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).values().iter().sum();
        let ng = self.ng(a);
        self.push(Op::Sum(a), DenseArray::from_raw(vec![1, 1], vec![s]), ng)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::usage("concat of zero parts"));
        };
        let n = self.shape(first).0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.shape(p);
            if r != n {
                return Err(Error::dim("concat rows", n, r));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(n * total);
        for r in 0..n {
            for &p in parts {
                out.extend_from_slice(self.value(p).row_slice(r));
            }
        }
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(Op::ConcatCols(parts.to_vec()), DenseArray::from_raw(vec![n, total], out), ng))
    }

    /// Columns `[start, end)` of `a`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let (n, m) = self.shape(a);
        if start >= end || end > m {
            return Err(Error::dim("column slice", format!("range within 0..{m}"), format!("{start}..{end}")));
        }
        let src = self.value(a).values();
        let mut out = Vec::with_capacity(n * (end - start));
        for r in 0..n {
            out.extend_from_slice(&src[r * m + start..r * m + end]);
        }
        let ng = self.ng(a);
        Ok(self.push(Op::SliceCols(a, start), DenseArray::from_raw(vec![n, end - start], out), ng))
    }

    /// Stacks `times` copies of `a` vertically.
    pub fn repeat_rows(&mut self, a: Var, times: usize) -> Var {
        let (n, m) = self.shape(a);
        let src = self.value(a).values();
        let mut out = Vec::with_capacity(n * m * times);
        for _ in 0..times {
            out.extend_from_slice(src);
        }
        let ng = self.ng(a);
        self.push(Op::RepeatRows(a, times), DenseArray::from_raw(vec![n * times, m], out), ng)
    }

    /// Inverse of [`Tape::repeat_rows`] in the averaging sense: splits `a`
    /// into `blocks` equal vertical blocks and returns their mean.
    pub fn mean_blocks(&mut self, a: Var, blocks: usize) -> Result<Var> {
        let (rows, m) = self.shape(a);
        if blocks == 0 || rows % blocks != 0 {
            return Err(Error::dim("mean_blocks rows", format!("multiple of {blocks}"), rows));
        }
        let n = rows / blocks;
        let src = self.value(a).values();
        let mut out = vec![0.0; n * m];
        for b in 0..blocks {
            for (o, &s) in out.iter_mut().zip(&src[b * n * m..(b + 1) * n * m]) {
                *o += s;
            }
        }
        let inv = 1.0 / blocks as f64;
        out.iter_mut().for_each(|v| *v *= inv);
        let ng = self.ng(a);
        Ok(self.push(Op::MeanBlocks(a, blocks), DenseArray::from_raw(vec![n, m], out), ng))
    }

    /// Splits `a` (`blocks * n x m`) into `blocks` vertical blocks and lays
    /// them side by side: `out[i][b * m + c] = a[b * n + i][c]`.
    pub fn blocks_to_cols(&mut self, a: Var, blocks: usize) -> Result<Var> {
        let (rows, m) = self.shape(a);
        if blocks == 0 || rows % blocks != 0 {
            return Err(Error::dim("blocks_to_cols rows", format!("multiple of {blocks}"), rows));
        }
        let n = rows / blocks;
        let src = self.value(a).values();
        let mut out = Vec::with_capacity(rows * m);
        for i in 0..n {
            for b in 0..blocks {
                out.extend_from_slice(&src[(b * n + i) * m..(b * n + i + 1) * m]);
            }
        }
        let ng = self.ng(a);
        Ok(self.push(Op::BlocksToCols(a, blocks), DenseArray::from_raw(vec![n, blocks * m], out), ng))
    }

    /// Row-wise diagonal Gaussian log-density `sum_d log N(x_d; mean_d, exp(log_var_d))`.
    pub fn gaussian_logpdf(&mut self, x: Var, mean: Var, log_var: Var) -> Result<Var> {
        self.same_shape("gaussian x/mean", x, mean)?;
        self.same_shape("gaussian mean/log_var", mean, log_var)?;
        let (n, m) = self.shape(x);
        let (xv, mv, lv) = (self.value(x).values(), self.value(mean).values(), self.value(log_var).values());
        let mut out = vec![0.0; n];
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for c in r * m..(r + 1) * m {
                let d = xv[c] - mv[c];
                acc += -HALF_LN_2PI - 0.5 * lv[c] - 0.5 * d * d * (-lv[c]).exp();
            }
            *o = acc;
        }
        let ng = self.ng(x) || self.ng(mean) || self.ng(log_var);
        Ok(self.push(
            Op::GaussianLogpdf { x, mean, log_var },
            DenseArray::from_raw(vec![n, 1], out),
            ng,
        ))
    }

    /// Row-wise `KL(N(mean, exp(log_std)^2) || N(0, I))`.
    pub fn kl_std_normal(&mut self, mean: Var, log_std: Var) -> Result<Var> {
        self.same_shape("kl mean/log_std", mean, log_std)?;
        let (n, m) = self.shape(mean);
        let (mv, sv) = (self.value(mean).values(), self.value(log_std).values());
        let mut out = vec![0.0; n];
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for c in r * m..(r + 1) * m {
                acc += 0.5 * (mv[c] * mv[c] + (2.0 * sv[c]).exp() - 1.0 - 2.0 * sv[c]);
            }
            *o = acc;
        }
        let ng = self.ng(mean) || self.ng(log_std);
        Ok(self.push(Op::KlStdNormal { mean, log_std }, DenseArray::from_raw(vec![n, 1], out), ng))
    }

    /// Gradients of the scalar `root` with respect to every parameter leaf.
    ///
    /// Returns one entry per parameter in `params`; parameters the
    /// computation never touched get zeros. Leaves registered under a name
    /// that `params` lacks are a usage error.
    pub fn backward(&self, root: Var, params: &ParameterStore) -> Result<GradientStore> {
        let mut out = GradientStore::zeros_like(params);
        for (name, grad) in self.backward_leaves(root)? {
            let slot = out
                .get_mut(&name)
                .ok_or_else(|| Error::usage(format!("tape parameter {name} is not in the store")))?;
            if slot.len() != grad.len() {
                return Err(Error::dim(format!("gradient of {name}"), slot.len(), grad.len()));
            }
            for (s, g) in slot.values_mut().iter_mut().zip(&grad) {
                *s += g;
            }
        }
        for (name, g) in out.iter() {
            if !g.is_finite() {
                return Err(Error::numeric(format!("non-finite gradient for parameter {name}")));
            }
        }
        Ok(out)
    }

    /// Raw per-leaf gradients in tape order.
    pub fn backward_leaves(&self, root: Var) -> Result<Vec<(String, Vec<f64>)>> {
        if self.value(root).len() != 1 {
            return Err(Error::usage(format!(
                "backward needs a scalar root, got shape {:?}",
                self.shape(root)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        grads[root.0] = Some(vec![1.0]);
        let mut leaves = Vec::new();

        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let (n, m) = (node.value.rows(), node.value.cols());
            match &node.op {
                Op::Constant => {}
                Op::Param(name) => leaves.push((name.clone(), g)),
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let k = av.cols();
                    if self.ng(*a) {
                        // dA = dC * B^T
                        let slot = acc_slot(&mut grads, *a, n * k);
                        gemm(n, m, k, &g, (m, 1), bv.values(), (1, m), slot, 1.0);
                    }
                    if self.ng(*b) {
                        // dB = A^T * dC
                        let slot = acc_slot(&mut grads, *b, k * m);
                        gemm(k, n, m, av.values(), (1, k), &g, (m, 1), slot, 1.0);
                    }
                }
                Op::AddRow(a, bias) => {
                    if self.ng(*bias) {
                        let slot = acc_slot(&mut grads, *bias, m);
                        for row in g.chunks(m) {
                            for (s, v) in slot.iter_mut().zip(row) {
                                *s += v;
                            }
                        }
                    }
                    if self.ng(*a) {
                        add_into(acc_slot(&mut grads, *a, n * m), &g);
                    }
                }
                Op::Add(a, b) => {
                    for v in [*a, *b] {
                        if self.ng(v) {
                            add_into(acc_slot(&mut grads, v, n * m), &g);
                        }
                    }
                }
                Op::Sub(a, b) => {
                    if self.ng(*a) {
                        add_into(acc_slot(&mut grads, *a, n * m), &g);
                    }
                    if self.ng(*b) {
                        let slot = acc_slot(&mut grads, *b, n * m);
                        for (s, v) in slot.iter_mut().zip(&g) {
                            *s -= v;
                        }
                    }
                }
                Op::Mul(a, b) => {
                    if self.ng(*a) {
                        let bv = self.value(*b).values();
                        let slot = acc_slot(&mut grads, *a, n * m);
                        for ((s, gv), y) in slot.iter_mut().zip(&g).zip(bv) {
                            *s += gv * y;
                        }
                    }
                    if self.ng(*b) {
                        let av = self.value(*a).values();
                        let slot = acc_slot(&mut grads, *b, n * m);
                        for ((s, gv), x) in slot.iter_mut().zip(&g).zip(av) {
                            *s += gv * x;
                        }
                    }
                }
                Op::MulCol(a, col) => {
                    let cv = self.value(*col).values();
                    if self.ng(*a) {
                        let slot = acc_slot(&mut grads, *a, n * m);
                        for ((srow, grow), &c) in slot.chunks_mut(m).zip(g.chunks(m)).zip(cv) {
                            for (s, gv) in srow.iter_mut().zip(grow) {
                                *s += gv * c;
                            }
                        }
                    }
                    if self.ng(*col) {
                        let av = self.value(*a).values();
                        let slot = acc_slot(&mut grads, *col, n);
                        for (r, s) in slot.iter_mut().enumerate() {
                            *s += g[r * m..(r + 1) * m]
                                .iter()
                                .zip(&av[r * m..(r + 1) * m])
                                .map(|(gv, x)| gv * x)
                                .sum::<f64>();
                        }
                    }
                }
                Op::Scale(a, f) => {
                    let slot = acc_slot(&mut grads, *a, n * m);
                    for (s, gv) in slot.iter_mut().zip(&g) {
                        *s += gv * f;
                    }
                }
                Op::Offset(a) => add_into(acc_slot(&mut grads, *a, n * m), &g),
                Op::Exp(a) => {
                    let out = node.value.values();
                    let slot = acc_slot(&mut grads, *a, n * m);
                    for ((s, gv), y) in slot.iter_mut().zip(&g).zip(out) {
                        *s += gv * y;
                    }
                }
                Op::Log(a) => {
                    let x = self.value(*a).values();
                    let slot = acc_slot(&mut grads, *a, n * m);
                    for ((s, gv), xv) in slot.iter_mut().zip(&g).zip(x) {
                        *s += gv / xv;
                    }
                }
                Op::Square(a) => {
                    let x = self.value(*a).values();
                    let slot = acc_slot(&mut grads, *a, n * m);
                    for ((s, gv), xv) in slot.iter_mut().zip(&g).zip(x) {
                        *s += 2.0 * gv * xv;
                    }
                }
                Op::Relu(a) => {
                    let x = self.value(*a).values();
                    let slot = acc_slot(&mut grads, *a, n * m);
                    for ((s, gv), xv) in slot.iter_mut().zip(&g).zip(x) {
                        if *xv > 0.0 {
                            *s += gv;
                        }
                    }
                }
                Op::Clamp(a, lo, hi) => {
                    let x = self.value(*a).values();
                    let slot = acc_slot(&mut grads, *a, n * m);
                    for ((s, gv), xv) in slot.iter_mut().zip(&g).zip(x) {
                        if *xv > *lo && *xv < *hi {
                            *s += gv;
                        }
                    }
                }
                Op::LogSoftmax(a) => {
                    let y = node.value.values();
                    let slot = acc_slot(&mut grads, *a, n * m);
                    for r in 0..n {
                        let gr = &g[r * m..(r + 1) * m];
                        let total: f64 = gr.iter().sum();
                        for c in 0..m {
                            slot[r * m + c] += gr[c] - y[r * m + c].exp() * total;
                        }
                    }
                }
                Op::RowSum(a) => {
                    let cols = self.value(*a).cols();
                    let slot = acc_slot(&mut grads, *a, n * cols);
                    for (row, gv) in slot.chunks_mut(cols).zip(&g) {
                        row.iter_mut().for_each(|s| *s += gv);
                    }
                }
                Op::Sum(a) => {
                    let len = self.value(*a).len();
                    let slot = acc_slot(&mut grads, *a, len);
                    slot.iter_mut().for_each(|s| *s += g[0]);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.value(p).cols();
                        if self.ng(p) {
                            let slot = acc_slot(&mut grads, p, n * w);
                            for r in 0..n {
                                for c in 0..w {
                                    slot[r * w + c] += g[r * m + offset + c];
                                }
                            }
                        }
                        offset += w;
                    }
                }
                Op::SliceCols(a, start) => {
                    let full = self.value(*a).cols();
                    let slot = acc_slot(&mut grads, *a, n * full);
                    for r in 0..n {
                        for c in 0..m {
                            slot[r * full + start + c] += g[r * m + c];
                        }
                    }
                }
                Op::RepeatRows(a, times) => {
                    let len = self.value(*a).len();
                    let slot = acc_slot(&mut grads, *a, len);
                    for t in 0..*times {
                        add_into(slot, &g[t * len..(t + 1) * len]);
                    }
                }
                Op::MeanBlocks(a, blocks) => {
                    let len = n * m;
                    let inv = 1.0 / *blocks as f64;
                    let slot = acc_slot(&mut grads, *a, len * blocks);
                    for b in 0..*blocks {
                        for (s, gv) in slot[b * len..(b + 1) * len].iter_mut().zip(&g) {
                            *s += gv * inv;
                        }
                    }
                }
                Op::BlocksToCols(a, blocks) => {
                    let width = m / blocks;
                    let slot = acc_slot(&mut grads, *a, n * m);
                    for i in 0..n {
                        for b in 0..*blocks {
                            let dst = (b * n + i) * width;
                            let src = i * m + b * width;
                            for c in 0..width {
                                slot[dst + c] += g[src + c];
                            }
                        }
                    }
                }
                Op::GaussianLogpdf { x, mean, log_var } => {
                    let cols = self.value(*x).cols();
                    let (xv, mv, lv) = (
                        self.value(*x).values(),
                        self.value(*mean).values(),
                        self.value(*log_var).values(),
                    );
                    let len = n * cols;
                    // d/dmean = (x - mean) / var, d/dx = -d/dmean,
                    // d/dlog_var = -1/2 + (x - mean)^2 / (2 var)
                    let mut dmean = vec![0.0; len];
                    let mut dlv = vec![0.0; len];
                    for r in 0..n {
                        for c in r * cols..(r + 1) * cols {
                            let d = xv[c] - mv[c];
                            let prec = (-lv[c]).exp();
                            dmean[c] = g[r] * d * prec;
                            dlv[c] = g[r] * (-0.5 + 0.5 * d * d * prec);
                        }
                    }
                    if self.ng(*x) {
                        let slot = acc_slot(&mut grads, *x, len);
                        for (s, v) in slot.iter_mut().zip(&dmean) {
                            *s -= v;
                        }
                    }
                    if self.ng(*mean) {
                        add_into(acc_slot(&mut grads, *mean, len), &dmean);
                    }
                    if self.ng(*log_var) {
                        add_into(acc_slot(&mut grads, *log_var, len), &dlv);
                    }
                }
                Op::KlStdNormal { mean, log_std } => {
                    let cols = self.value(*mean).cols();
                    let len = n * cols;
                    if self.ng(*mean) {
                        let mv = self.value(*mean).values();
                        let slot = acc_slot(&mut grads, *mean, len);
                        for r in 0..n {
                            for c in r * cols..(r + 1) * cols {
                                slot[c] += g[r] * mv[c];
                            }
                        }
                    }
                    if self.ng(*log_std) {
                        let sv = self.value(*log_std).values();
                        let slot = acc_slot(&mut grads, *log_std, len);
                        for r in 0..n {
                            for c in r * cols..(r + 1) * cols {
                                slot[c] += g[r] * ((2.0 * sv[c]).exp() - 1.0);
                            }
                        }
                    }
                }
            }
        }
        Ok(leaves)
    }
}

fn acc_slot(grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut [f64] {
    grads[v.0].get_or_insert_with(|| vec![0.0; len]).as_mut_slice()
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
