//! Reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! Every value on the tape is an `Array2<f64>`; scalars are `1×1`. Rows are
//! samples and columns are features throughout, so affine layers are
//! `x · W + b` with `b` broadcast over rows.
//!
//! The tape is rebuilt from scratch for every forward pass. `backward`
//! returns one gradient slot per node; leaves that never influenced the
//! output get `None`.

use ndarray::{s, Array1, Array2, Axis};

use crate::error::{Result, UcdError};
use crate::linalg;

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
    SubRow(Var, Var),
    MulCol(Var, Var),
    MaskRows(Var, Array1<f64>),
    Scale(Var, f64),
    AddScalar(Var),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Exp(Var),
    Log(Var),
    Transpose(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize, usize),
    HeadRows(Var, usize),
    PadRows(Var),
    GatherRows(Var, Vec<Option<usize>>),
    SumAll(Var),
    SumRows(Var),
    DivScalar(Var, Var),
    MaskedSoftmaxRows(Var),
    LogSumExpRows(Var),
    AddDiag(Var),
    DiagRecipSum(Var),
    GaussianLogPdf {
        x: Var,
        mu: Var,
        sigma: Var,
        precision: Array2<f64>,
        whitened: Array2<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Array2<f64>,
    op: Op,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients {
    slots: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Array2<f64>> {
        self.slots[var.0].as_ref()
    }

    pub fn take(&mut self, var: Var) -> Option<Array2<f64>> {
        self.slots[var.0].take()
    }
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn expect_shape(cond: bool, what: &str) {
    assert!(cond, "autodiff shape mismatch in {what}");
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

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, var: Var) -> &Array2<f64> {
        &self.nodes[var.0].value
    }

    pub fn scalar(&self, var: Var) -> f64 {
        self.nodes[var.0].value[[0, 0]]
    }

    pub fn shape(&self, var: Var) -> (usize, usize) {
        self.nodes[var.0].value.dim()
    }

    pub fn leaf(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn constant_scalar(&mut self, value: f64) -> Var {
        self.leaf(Array2::from_elem((1, 1), value))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        expect_shape(va.ncols() == vb.nrows(), "matmul");
        let v = va.dot(vb);
        self.push(v, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        expect_shape(self.shape(a) == self.shape(b), "add");
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        expect_shape(self.shape(a) == self.shape(b), "sub");
        let v = self.value(a) - self.value(b);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        expect_shape(self.shape(a) == self.shape(b), "mul");
        let v = self.value(a) * self.value(b);
        self.push(v, Op::Mul(a, b))
    }

    /// `a + 1·row` where `row` is `1×n`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (ra, ca) = self.shape(a);
        expect_shape(self.shape(row) == (1, ca), "add_row");
        let _ = ra;
        let v = self.value(a) + self.value(row);
        self.push(v, Op::AddRow(a, row))
    }

    pub fn sub_row(&mut self, a: Var, row: Var) -> Var {
        let (_, ca) = self.shape(a);
        expect_shape(self.shape(row) == (1, ca), "sub_row");
        let v = self.value(a) - self.value(row);
        self.push(v, Op::SubRow(a, row))
    }

    /// Multiplies row `i` of `a` by `col[i, 0]`.
    pub fn mul_col(&mut self, a: Var, col: Var) -> Var {
        let (ra, _) = self.shape(a);
        expect_shape(self.shape(col) == (ra, 1), "mul_col");
        let v = self.value(a) * self.value(col);
        self.push(v, Op::MulCol(a, col))
    }

    /// Multiplies row `i` of `a` by the constant `mask[i]`.
    pub fn mask_rows(&mut self, a: Var, mask: Array1<f64>) -> Var {
        expect_shape(self.shape(a).0 == mask.len(), "mask_rows");
        let m = mask.view().insert_axis(Axis(1));
        let v = self.value(a) * &m;
        self.push(v, Op::MaskRows(a, mask))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let v = self.value(a) * factor;
        self.push(v, Op::Scale(a, factor))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) + c;
        self.push(v, Op::AddScalar(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::exp);
        self.push(v, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::ln);
        self.push(v, Op::Log(a))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).t().to_owned();
        self.push(v, Op::Transpose(a))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_cols of nothing");
        let rows = self.shape(parts[0]).0;
        let views: Vec<_> = parts
            .iter()
            .map(|&p| {
                expect_shape(self.shape(p).0 == rows, "concat_cols");
                self.value(p).view()
            })
            .collect();
        let v = ndarray::concatenate(Axis(1), &views).expect("concat_cols");
        self.push(v, Op::ConcatCols(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        expect_shape(end <= self.shape(a).1 && start <= end, "slice_cols");
        let v = self.value(a).slice(s![.., start..end]).to_owned();
        self.push(v, Op::SliceCols(a, start, end))
    }

    /// The first `n` rows of `a`.
    pub fn head_rows(&mut self, a: Var, n: usize) -> Var {
        expect_shape(n <= self.shape(a).0, "head_rows");
        if n == self.shape(a).0 {
            return a;
        }
        let v = self.value(a).slice(s![..n, ..]).to_owned();
        self.push(v, Op::HeadRows(a, n))
    }

    /// `a` extended with zero rows to `rows` rows.
    pub fn pad_rows(&mut self, a: Var, rows: usize) -> Var {
        let (n, c) = self.shape(a);
        expect_shape(rows >= n, "pad_rows");
        if rows == n {
            return a;
        }
        let mut v = Array2::zeros((rows, c));
        v.slice_mut(s![..n, ..]).assign(self.value(a));
        self.push(v, Op::PadRows(a))
    }

    /// Builds a matrix whose row `i` is row `index[i]` of `a`, or zeros for `None`.
    pub fn gather_rows(&mut self, a: Var, index: Vec<Option<usize>>) -> Var {
        let src = self.value(a);
        let cols = src.ncols();
        let mut v = Array2::zeros((index.len(), cols));
        for (i, idx) in index.iter().enumerate() {
            if let Some(r) = *idx {
                expect_shape(r < src.nrows(), "gather_rows");
                v.row_mut(i).assign(&src.row(r));
            }
        }
        self.push(v, Op::GatherRows(a, index))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let v = Array2::from_elem((1, 1), self.value(a).sum());
        self.push(v, Op::SumAll(a))
    }

    /// Column sums as a `1×n` row.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let v = self.value(a).sum_axis(Axis(0)).insert_axis(Axis(0));
        self.push(v, Op::SumRows(a))
    }

    pub fn div_scalar(&mut self, a: Var, denom: Var) -> Var {
        expect_shape(self.shape(denom) == (1, 1), "div_scalar");
        let d = self.scalar(denom);
        let v = self.value(a) / d;
        self.push(v, Op::DivScalar(a, denom))
    }

    /// Row-wise softmax over the entries where `valid` is true; other
    /// entries come out exactly zero. Every row must have a valid entry.
    pub fn masked_softmax_rows(&mut self, a: Var, valid: &Array2<bool>) -> Var {
        let src = self.value(a);
        expect_shape(src.dim() == valid.dim(), "masked_softmax_rows");
        let mut v = Array2::zeros(src.dim());
        for ((i, row), mask) in src.outer_iter().enumerate().zip(valid.outer_iter()) {
            let max = row
                .iter()
                .zip(mask.iter())
                .filter(|(_, &m)| m)
                .map(|(&x, _)| x)
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(mask.iter().any(|&m| m), "masked softmax row {i} has no valid entry");
            let mut total = 0.0;
            for (j, (&x, &m)) in row.iter().zip(mask.iter()).enumerate() {
                if m {
                    let e = (x - max).exp();
                    v[[i, j]] = e;
                    total += e;
                }
            }
            // non-finite logits propagate as NaN for the caller to detect
            let total = if total > 0.0 && total.is_finite() { total } else { f64::NAN };
            v.row_mut(i).mapv_inplace(|e| e / total);
        }
        self.push(v, Op::MaskedSoftmaxRows(a))
    }

    /// `log Σⱼ exp(a[i, j])` per row, as an `m×1` column.
    pub fn log_sum_exp_rows(&mut self, a: Var) -> Var {
        let src = self.value(a);
        let v = src
            .outer_iter()
            .map(|row| linalg::log_sum_exp(row.iter().copied()))
            .collect::<Array1<f64>>()
            .insert_axis(Axis(1));
        self.push(v, Op::LogSumExpRows(a))
    }

    /// `a + c·I` for square `a`.
    pub fn add_diag(&mut self, a: Var, c: f64) -> Var {
        let (r, cols) = self.shape(a);
        expect_shape(r == cols, "add_diag");
        let mut v = self.value(a).clone();
        v.diag_mut().mapv_inplace(|x| x + c);
        self.push(v, Op::AddDiag(a))
    }

    /// `Σⱼ 1 / a[j, j]` as a `1×1`.
    pub fn diag_recip_sum(&mut self, a: Var) -> Var {
        let v = self.value(a).diag().mapv(|x| 1.0 / x).sum();
        self.push(Array2::from_elem((1, 1), v), Op::DiagRecipSum(a))
    }

    /// Row-wise Gaussian log-density `log N(x[i]; mu, sigma)` as an `N×1`
    /// column. `mu` is `1×d`, `sigma` is `d×d` and must be positive-definite.
    pub fn gaussian_log_pdf(&mut self, x: Var, mu: Var, sigma: Var) -> Result<Var> {
        let (n, d) = self.shape(x);
        if self.shape(mu) != (1, d) || self.shape(sigma) != (d, d) {
            return Err(UcdError::Shape(format!(
                "gaussian_log_pdf: x {:?}, mu {:?}, sigma {:?}",
                self.shape(x),
                self.shape(mu),
                self.shape(sigma)
            )));
        }
        let chol = linalg::cholesky(self.value(sigma))
            .ok_or(UcdError::NotPositiveDefinite { component: 0 })?;
        let log_det = linalg::cholesky_log_det(&chol);
        let residual = self.value(x) - self.value(mu);
        // whitened[i] = Σ⁻¹ (x_i − μ)
        let mut whitened = Array2::zeros((n, d));
        let mut out = Array2::zeros((n, 1));
        let norm = -0.5 * (d as f64 * (2.0 * std::f64::consts::PI).ln() + log_det);
        for i in 0..n {
            let r = residual.row(i);
            let w = linalg::cholesky_solve(&chol, r);
            let maha = r.dot(&w);
            out[[i, 0]] = norm - 0.5 * maha;
            whitened.row_mut(i).assign(&w);
        }
        let precision = linalg::cholesky_inverse(&chol);
        Ok(self.push(
            out,
            Op::GaussianLogPdf {
                x,
                mu,
                sigma,
                precision,
                whitened,
            },
        ))
    }

    /// Reverse sweep from the scalar `output`.
    pub fn backward(&self, output: Var) -> Gradients {
        assert_eq!(self.shape(output), (1, 1), "backward needs a scalar output");
        let mut slots: Vec<Option<Array2<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        slots[output.0] = Some(Array2::ones((1, 1)));

        fn acc(slots: &mut [Option<Array2<f64>>], v: Var, g: Array2<f64>) {
            match &mut slots[v.0] {
                Some(existing) => *existing += &g,
                slot @ None => *slot = Some(g),
            }
        }

        for idx in (0..=output.0).rev() {
            let Some(g) = slots[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {
                    slots[idx] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.value(*b).t());
                    let gb = self.value(*a).t().dot(&g);
                    acc(&mut slots, *a, ga);
                    acc(&mut slots, *b, gb);
                }
                Op::Add(a, b) => {
                    acc(&mut slots, *a, g.clone());
                    acc(&mut slots, *b, g);
                }
                Op::Sub(a, b) => {
                    acc(&mut slots, *b, -&g);
                    acc(&mut slots, *a, g);
                }
                Op::Mul(a, b) => {
                    let ga = &g * self.value(*b);
                    let gb = &g * self.value(*a);
                    acc(&mut slots, *a, ga);
                    acc(&mut slots, *b, gb);
                }
                Op::AddRow(a, row) => {
                    let gr = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    acc(&mut slots, *row, gr);
                    acc(&mut slots, *a, g);
                }
                Op::SubRow(a, row) => {
                    let gr = -g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    acc(&mut slots, *row, gr);
                    acc(&mut slots, *a, g);
                }
                Op::MulCol(a, col) => {
                    let gc = (&g * self.value(*a))
                        .sum_axis(Axis(1))
                        .insert_axis(Axis(1));
                    let ga = &g * self.value(*col);
                    acc(&mut slots, *col, gc);
                    acc(&mut slots, *a, ga);
                }
                Op::MaskRows(a, mask) => {
                    let ga = &g * &mask.view().insert_axis(Axis(1));
                    acc(&mut slots, *a, ga);
                }
                Op::Scale(a, f) => acc(&mut slots, *a, g * *f),
                Op::AddScalar(a) => acc(&mut slots, *a, g),
                Op::Tanh(a) => {
                    let ga = &g * &node.value.mapv(|y| 1.0 - y * y);
                    acc(&mut slots, *a, ga);
                }
                Op::Sigmoid(a) => {
                    let ga = &g * &node.value.mapv(|y| y * (1.0 - y));
                    acc(&mut slots, *a, ga);
                }
                Op::Relu(a) => {
                    let mut ga = g;
                    ndarray::Zip::from(&mut ga)
                        .and(self.value(*a))
                        .for_each(|gv, &x| {
                            if x <= 0.0 {
                                *gv = 0.0
                            }
                        });
                    acc(&mut slots, *a, ga);
                }
                Op::Exp(a) => acc(&mut slots, *a, &g * &node.value),
                Op::Log(a) => acc(&mut slots, *a, &g / self.value(*a)),
                Op::Transpose(a) => acc(&mut slots, *a, g.t().to_owned()),
                Op::ConcatCols(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let w = self.shape(p).1;
                        acc(&mut slots, p, g.slice(s![.., start..start + w]).to_owned());
                        start += w;
                    }
                }
                Op::SliceCols(a, start, end) => {
                    let mut ga = Array2::zeros(self.shape(*a));
                    ga.slice_mut(s![.., *start..*end]).assign(&g);
                    acc(&mut slots, *a, ga);
                }
                Op::HeadRows(a, n) => {
                    let mut ga = Array2::zeros(self.shape(*a));
                    ga.slice_mut(s![..*n, ..]).assign(&g);
                    acc(&mut slots, *a, ga);
                }
                Op::PadRows(a) => {
                    let n = self.shape(*a).0;
                    acc(&mut slots, *a, g.slice(s![..n, ..]).to_owned());
                }
                Op::GatherRows(a, index) => {
                    let mut ga = Array2::zeros(self.shape(*a));
                    for (i, idx) in index.iter().enumerate() {
                        if let Some(r) = *idx {
                            let mut dst = ga.row_mut(r);
                            dst += &g.row(i);
                        }
                    }
                    acc(&mut slots, *a, ga);
                }
                Op::SumAll(a) => {
                    let ga = Array2::from_elem(self.shape(*a), g[[0, 0]]);
                    acc(&mut slots, *a, ga);
                }
                Op::SumRows(a) => {
                    let (r, _) = self.shape(*a);
                    let row = g.row(0);
                    let ga = Array2::from_shape_fn(self.shape(*a), |(_, j)| row[j]);
                    debug_assert_eq!(ga.nrows(), r);
                    acc(&mut slots, *a, ga);
                }
                Op::DivScalar(a, denom) => {
                    let d = self.scalar(*denom);
                    let gd = -(&g * &node.value).sum() / d;
                    acc(&mut slots, *denom, Array2::from_elem((1, 1), gd));
                    acc(&mut slots, *a, g / d);
                }
                Op::MaskedSoftmaxRows(a) => {
                    // dL/dx = y ⊙ (g − Σⱼ gⱼ yⱼ); masked entries have y = 0.
                    let y = &node.value;
                    let dots = (&g * y).sum_axis(Axis(1)).insert_axis(Axis(1));
                    let ga = y * &(&g - &dots);
                    acc(&mut slots, *a, ga);
                }
                Op::LogSumExpRows(a) => {
                    let src = self.value(*a);
                    let ga = Array2::from_shape_fn(src.dim(), |(i, j)| {
                        g[[i, 0]] * (src[[i, j]] - node.value[[i, 0]]).exp()
                    });
                    acc(&mut slots, *a, ga);
                }
                Op::AddDiag(a) => acc(&mut slots, *a, g),
                Op::DiagRecipSum(a) => {
                    let src = self.value(*a);
                    let mut ga = Array2::zeros(src.dim());
                    for j in 0..src.nrows() {
                        ga[[j, j]] = -g[[0, 0]] / (src[[j, j]] * src[[j, j]]);
                    }
                    acc(&mut slots, *a, ga);
                }
                Op::GaussianLogPdf {
                    x,
                    mu,
                    sigma,
                    precision,
                    whitened,
                } => {
                    // ∂/∂x_i = −Σ⁻¹ r_i ; ∂/∂μ = Σ⁻¹ r_i ;
                    // ∂/∂Σ = ½ (Σ⁻¹ r_i r_iᵀ Σ⁻¹ − Σ⁻¹)
                    let gcol = g.column(0);
                    let gx = -(whitened * &gcol.insert_axis(Axis(1)));
                    let gmu = -gx.sum_axis(Axis(0)).insert_axis(Axis(0));
                    let weighted = whitened * &gcol.insert_axis(Axis(1));
                    let outer = weighted.t().dot(whitened);
                    let gsigma = (outer - precision * gcol.sum()) * 0.5;
                    acc(&mut slots, *x, gx);
                    acc(&mut slots, *mu, gmu);
                    acc(&mut slots, *sigma, gsigma);
                }
            }
        }
        Gradients { slots }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
