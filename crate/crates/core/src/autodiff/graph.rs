//! A small reverse-mode tape over dense matrices.
//!
//! Nodes are appended in evaluation order, so a reverse sweep over the node
//! list is a valid topological order for backpropagation. Only the fused
//! operations the models actually need are provided; every backward rule is
//! covered by finite-difference tests.

use std::sync::Arc;

use ndarray::{s, Array2, Axis, Zip};

use crate::numerics::{mmd_unchecked, rbf_unchecked};

pub type Mat = Array2<f64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// `a + row` with a 1×n row broadcast over every row of `a`.
    AddRow(Var, Var),
    /// `a + c` for a constant `c`; the constant is folded into the value.
    AddConst(Var),
    Scale(Var, f64),
    RowScale(Var, Arc<Vec<f64>>),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    Clamp(Var, f64, f64),
    SliceCols(Var, usize, usize),
    ConcatCols(Vec<Var>),
    /// Fused GRU update from the input and hidden gate pre-activations.
    GruCell {
        gi: Var,
        gh: Var,
        h: Var,
        r: Mat,
        z: Mat,
        n: Mat,
    },
    Sum(Var),
    SqErrSum(Var, Mat),
    SqDiffSum(Var, Var),
    BceSum(Var, Mat, f64),
    KldSum(Var, Var),
    Mmd(Var, Var, f64),
}

struct Node {
    value: Mat,
    op: Op,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

pub struct Grads {
    grads: Vec<Option<Mat>>,
}

impl Grads {
    pub fn get(&self, v: Var) -> Option<&Mat> {
        self.grads[v.0].as_ref()
    }

    /// Gradient for `v`, or zeros shaped like `like` when nothing flowed back.
    pub fn get_or_zeros(&self, v: Var, like: &Mat) -> Mat {
        self.grads[v.0]
            .clone()
            .unwrap_or_else(|| Mat::zeros(like.raw_dim()))
    }
}

fn scalar(x: f64) -> Mat {
    Mat::from_elem((1, 1), x)
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
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

    fn push(&mut self, value: Mat, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// A trainable input whose gradient will be tracked.
    pub fn param(&mut self, value: Mat) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A constant input; no gradient flows into it.
    pub fn constant(&mut self, value: Mat) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(self.value(b));
        let ng = self.needs(a) || self.needs(b);
        self.push(value, Op::MatMul(a, b), ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) + self.value(b);
        let ng = self.needs(a) || self.needs(b);
        self.push(value, Op::Add(a, b), ng)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) - self.value(b);
        let ng = self.needs(a) || self.needs(b);
        self.push(value, Op::Sub(a, b), ng)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) * self.value(b);
        let ng = self.needs(a) || self.needs(b);
        self.push(value, Op::Mul(a, b), ng)
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        debug_assert_eq!(self.value(row).nrows(), 1);
        let value = self.value(a) + self.value(row);
        let ng = self.needs(a) || self.needs(row);
        self.push(value, Op::AddRow(a, row), ng)
    }

    pub fn add_const(&mut self, a: Var, c: &Mat) -> Var {
        let value = self.value(a) + c;
        let ng = self.needs(a);
        self.push(value, Op::AddConst(a), ng)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let value = self.value(a) * k;
        let ng = self.needs(a);
        self.push(value, Op::Scale(a, k), ng)
    }

    /// Multiply row `i` of `a` by `factors[i]`.
    pub fn row_scale(&mut self, a: Var, factors: Arc<Vec<f64>>) -> Var {
        let mut value = self.value(a).clone();
        for (mut row, f) in value.axis_iter_mut(Axis(0)).zip(factors.iter()) {
            row *= *f;
        }
        let ng = self.needs(a);
        self.push(value, Op::RowScale(a, factors), ng)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(sigmoid);
        let ng = self.needs(a);
        self.push(value, Op::Sigmoid(a), ng)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(f64::tanh);
        let ng = self.needs(a);
        self.push(value, Op::Tanh(a), ng)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(f64::exp);
        let ng = self.needs(a);
        self.push(value, Op::Exp(a), ng)
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let value = self.value(a).mapv(|x| x.clamp(lo, hi));
        let ng = self.needs(a);
        self.push(value, Op::Clamp(a, lo, hi), ng)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let value = self.value(a).slice(s![.., start..end]).to_owned();
        let ng = self.needs(a);
        self.push(value, Op::SliceCols(a, start, end), ng)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let value = ndarray::concatenate(Axis(1), &views).expect("row counts agree");
        let ng = parts.iter().any(|p| self.needs(*p));
        self.push(value, Op::ConcatCols(parts.to_vec()), ng)
    }

    /// GRU update with gates ordered `[reset, update, candidate]`:
    ///
    /// ```text
    /// r  = σ(gi_r + gh_r)
    /// z  = σ(gi_z + gh_z)
    /// n  = tanh(gi_n + r ⊙ gh_n)
    /// h' = (1 - z) ⊙ n + z ⊙ h
    /// ```
    pub fn gru_cell(&mut self, gi: Var, gh: Var, h: Var) -> Var {
        let hdim = self.value(h).ncols();
        let (giv, ghv, hv) = (self.value(gi), self.value(gh), self.value(h));
        let r = (&giv.slice(s![.., 0..hdim]) + &ghv.slice(s![.., 0..hdim])).mapv(sigmoid);
        let z = (&giv.slice(s![.., hdim..2 * hdim]) + &ghv.slice(s![.., hdim..2 * hdim]))
            .mapv(sigmoid);
        let mut n = &ghv.slice(s![.., 2 * hdim..]) * &r;
        n += &giv.slice(s![.., 2 * hdim..]);
        n.mapv_inplace(f64::tanh);
        let mut out = Mat::zeros(hv.raw_dim());
        Zip::from(&mut out)
            .and(&n)
            .and(&z)
            .and(hv)
            .for_each(|o, &n, &z, &h| *o = n + z * (h - n));
        let ng = self.needs(gi) || self.needs(gh) || self.needs(h);
        self.push(out, Op::GruCell { gi, gh, h, r, z, n }, ng)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = scalar(self.value(a).sum());
        let ng = self.needs(a);
        self.push(value, Op::Sum(a), ng)
    }

    /// `Σ (a - target)²` against a constant target.
    pub fn sq_err_sum(&mut self, a: Var, target: Mat) -> Var {
        let v = Zip::from(self.value(a))
            .and(&target)
            .fold(0.0, |acc, &x, &t| acc + (x - t) * (x - t));
        let ng = self.needs(a);
        self.push(scalar(v), Op::SqErrSum(a, target), ng)
    }

    /// `Σ (a - b)²` where both sides may carry gradient.
    pub fn sq_diff_sum(&mut self, a: Var, b: Var) -> Var {
        let v = Zip::from(self.value(a))
            .and(self.value(b))
            .fold(0.0, |acc, &x, &y| acc + (x - y) * (x - y));
        let ng = self.needs(a) || self.needs(b);
        self.push(scalar(v), Op::SqDiffSum(a, b), ng)
    }

    /// Summed binary cross-entropy of `logits` against 0/1 `targets`, with the
    /// predicted probability clamped to `[eps, 1 - eps]`.
    pub fn bce_sum(&mut self, logits: Var, targets: Mat, eps: f64) -> Var {
        let v = Zip::from(self.value(logits))
            .and(&targets)
            .fold(0.0, |acc, &l, &y| {
                let p = sigmoid(l).clamp(eps, 1.0 - eps);
                acc - (y * p.ln() + (1.0 - y) * (1.0 - p).ln())
            });
        let ng = self.needs(logits);
        self.push(scalar(v), Op::BceSum(logits, targets, eps), ng)
    }

    /// `Σ ½ (exp(logvar) + mu² - 1 - logvar)`.
    pub fn kld_sum(&mut self, mu: Var, logvar: Var) -> Var {
        let v = Zip::from(self.value(mu))
            .and(self.value(logvar))
            .fold(0.0, |acc, &m, &lv| acc + 0.5 * (lv.exp() + m * m - 1.0 - lv));
        let ng = self.needs(mu) || self.needs(logvar);
        self.push(scalar(v), Op::KldSum(mu, logvar), ng)
    }

    /// Biased squared MMD between the rows of `x` and the rows of `y`.
    pub fn mmd(&mut self, x: Var, y: Var, bandwidth: f64) -> Var {
        let xv = self.value(x).as_standard_layout().into_owned();
        let yv = self.value(y).as_standard_layout().into_owned();
        let xs: Vec<&[f64]> = xv.rows().into_iter().map(|r| r.to_slice().unwrap()).collect();
        let ys: Vec<&[f64]> = yv.rows().into_iter().map(|r| r.to_slice().unwrap()).collect();
        let v = mmd_unchecked(&xs, &ys, bandwidth);
        let ng = self.needs(x) || self.needs(y);
        self.push(scalar(v), Op::Mmd(x, y, bandwidth), ng)
    }

    pub fn backward(&self, out: Var) -> Grads {
        let mut grads: Vec<Option<Mat>> = vec![None; self.nodes.len()];
        grads[out.0] = Some(Mat::ones(self.value(out).raw_dim()));
        for idx in (0..=out.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Grads { grads }
    }

    fn accumulate(&self, grads: &mut [Option<Mat>], v: Var, delta: Mat) {
        if !self.needs(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => *existing += &delta,
            slot => *slot = Some(delta),
        }
    }

    fn propagate(&self, node: &Node, g: &Mat, grads: &mut [Option<Mat>]) {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.needs(*a) {
                    self.accumulate(grads, *a, g.dot(&self.value(*b).t()));
                }
                if self.needs(*b) {
                    self.accumulate(grads, *b, self.value(*a).t().dot(g));
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, -g);
            }
            Op::Mul(a, b) => {
                if self.needs(*a) {
                    self.accumulate(grads, *a, g * self.value(*b));
                }
                if self.needs(*b) {
                    self.accumulate(grads, *b, g * self.value(*a));
                }
            }
            Op::AddRow(a, row) => {
                self.accumulate(grads, *a, g.clone());
                if self.needs(*row) {
                    self.accumulate(grads, *row, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
            }
            Op::AddConst(a) => self.accumulate(grads, *a, g.clone()),
            Op::Scale(a, k) => self.accumulate(grads, *a, g * *k),
            Op::RowScale(a, factors) => {
                let mut d = g.clone();
                for (mut row, f) in d.axis_iter_mut(Axis(0)).zip(factors.iter()) {
                    row *= *f;
                }
                self.accumulate(grads, *a, d);
            }
            Op::Sigmoid(a) => {
                let mut d = g.clone();
                Zip::from(&mut d)
                    .and(&node.value)
                    .for_each(|d, &s| *d *= s * (1.0 - s));
                self.accumulate(grads, *a, d);
            }
            Op::Tanh(a) => {
                let mut d = g.clone();
                Zip::from(&mut d)
                    .and(&node.value)
                    .for_each(|d, &t| *d *= 1.0 - t * t);
                self.accumulate(grads, *a, d);
            }
            Op::Exp(a) => self.accumulate(grads, *a, g * &node.value),
            Op::Clamp(a, lo, hi) => {
                let mut d = g.clone();
                Zip::from(&mut d).and(self.value(*a)).for_each(|d, &x| {
                    if x < *lo || x > *hi {
                        *d = 0.0;
                    }
                });
                self.accumulate(grads, *a, d);
            }
            Op::SliceCols(a, start, end) => {
                let mut d = Mat::zeros(self.value(*a).raw_dim());
                d.slice_mut(s![.., *start..*end]).assign(g);
                self.accumulate(grads, *a, d);
            }
            Op::ConcatCols(parts) => {
                let mut col = 0;
                for p in parts {
                    let w = self.value(*p).ncols();
                    if self.needs(*p) {
                        self.accumulate(grads, *p, g.slice(s![.., col..col + w]).to_owned());
                    }
                    col += w;
                }
            }
            Op::GruCell { gi, gh, h, r, z, n } => {
                let hdim = r.ncols();
                let ghv = self.value(*gh);
                let hv = self.value(*h);
                let rows = g.nrows();
                let mut dgi = Mat::zeros((rows, 3 * hdim));
                let mut dgh = Mat::zeros((rows, 3 * hdim));
                let mut dh = Mat::zeros((rows, hdim));
                for i in 0..rows {
                    for j in 0..hdim {
                        let (gv, rv, zv, nv, hp) = (g[[i, j]], r[[i, j]], z[[i, j]], n[[i, j]], hv[[i, j]]);
                        let da_n = gv * (1.0 - zv) * (1.0 - nv * nv);
                        let dz = gv * (hp - nv);
                        let da_z = dz * zv * (1.0 - zv);
                        let dr = da_n * ghv[[i, 2 * hdim + j]];
                        let da_r = dr * rv * (1.0 - rv);
                        dgi[[i, j]] = da_r;
                        dgi[[i, hdim + j]] = da_z;
                        dgi[[i, 2 * hdim + j]] = da_n;
                        dgh[[i, j]] = da_r;
                        dgh[[i, hdim + j]] = da_z;
                        dgh[[i, 2 * hdim + j]] = da_n * rv;
                        dh[[i, j]] = gv * zv;
                    }
                }
                self.accumulate(grads, *gi, dgi);
                self.accumulate(grads, *gh, dgh);
                self.accumulate(grads, *h, dh);
            }
            Op::Sum(a) => {
                let k = g[[0, 0]];
                self.accumulate(grads, *a, Mat::from_elem(self.value(*a).raw_dim(), k));
            }
            Op::SqErrSum(a, target) => {
                let k = 2.0 * g[[0, 0]];
                let d = (self.value(*a) - target) * k;
                self.accumulate(grads, *a, d);
            }
            Op::SqDiffSum(a, b) => {
                let k = 2.0 * g[[0, 0]];
                let d = (self.value(*a) - self.value(*b)) * k;
                if self.needs(*b) {
                    self.accumulate(grads, *b, -&d);
                }
                self.accumulate(grads, *a, d);
            }
            Op::BceSum(logits, targets, eps) => {
                let k = g[[0, 0]];
                let mut d = self.value(*logits).clone();
                Zip::from(&mut d).and(targets).for_each(|d, &y| {
                    let p = sigmoid(*d);
                    *d = if p > *eps && p < 1.0 - *eps {
                        k * (p - y)
                    } else {
                        0.0
                    };
                });
                self.accumulate(grads, *logits, d);
            }
            Op::KldSum(mu, logvar) => {
                let k = g[[0, 0]];
                if self.needs(*mu) {
                    self.accumulate(grads, *mu, self.value(*mu) * k);
                }
                if self.needs(*logvar) {
                    let d = self.value(*logvar).mapv(|lv| k * 0.5 * (lv.exp() - 1.0));
                    self.accumulate(grads, *logvar, d);
                }
            }
            Op::Mmd(x, y, bw) => {
                let (dx, dy) = mmd_grad(self.value(*x), self.value(*y), *bw, g[[0, 0]]);
                self.accumulate(grads, *x, dx);
                self.accumulate(grads, *y, dy);
            }
        }
    }
}

/// Gradient of the biased MMD with respect to both sample matrices.
fn mmd_grad(x: &Mat, y: &Mat, bw: f64, upstream: f64) -> (Mat, Mat) {
    let b = x.nrows();
    let k = upstream * 2.0 / ((b * b) as f64 * bw * bw);
    let xs: Vec<Vec<f64>> = x.rows().into_iter().map(|r| r.to_vec()).collect();
    let ys: Vec<Vec<f64>> = y.rows().into_iter().map(|r| r.to_vec()).collect();
    let mut dx = Mat::zeros(x.raw_dim());
    let mut dy = Mat::zeros(y.raw_dim());
    for i in 0..b {
        for j in 0..b {
            let kxx = rbf_unchecked(&xs[i], &xs[j], bw);
            let kyy = rbf_unchecked(&ys[i], &ys[j], bw);
            let kxy = rbf_unchecked(&xs[i], &ys[j], bw);
            for c in 0..x.ncols() {
                // d/dx_i of the xx and xy blocks; d/dy_i of the yy block;
                // d/dy_j of the xy block.
                dx[[i, c]] += k * (-kxx * (xs[i][c] - xs[j][c]) + kxy * (xs[i][c] - ys[j][c]));
                dy[[i, c]] += -k * kyy * (ys[i][c] - ys[j][c]);
                dy[[j, c]] += k * kxy * (ys[j][c] - xs[i][c]);
            }
        }
    }
    (dx, dy)
}
