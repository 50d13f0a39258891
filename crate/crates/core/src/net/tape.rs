//! Dense row-major matrices and a reverse-mode autodiff tape covering exactly
//! the operations the encoder and heads use.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "tensor shape mismatch");
        Self { rows, cols, data }
    }

    pub fn row_vector(data: Vec<f64>) -> Self {
        Self::from_vec(1, data.len(), data)
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor::from_vec(self.rows, self.cols, self.data.iter().map(|&v| f(v)).collect())
    }

    fn zip(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "shape mismatch");
        Tensor::from_vec(
            self.rows,
            self.cols,
            self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        )
    }

    fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn transpose(&self) -> Tensor {
        let mut out = Tensor::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }
}

/// `a (n x k) * b (k x m)`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Tensor {
    assert_eq!(a.cols, b.rows, "matmul inner dimension");
    let (n, k, m) = (a.rows, a.cols, b.cols);
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let orow = &mut out[i * m..(i + 1) * m];
        for p in 0..k {
            let av = a.data[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b.data[p * m..(p + 1) * m];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Tensor::from_vec(n, m, out)
}

/// `a (n x k) * b^T` with `b (m x k)`.
fn matmul_bt(a: &Tensor, b: &Tensor) -> Tensor {
    assert_eq!(a.cols, b.cols);
    let (n, k, m) = (a.rows, a.cols, b.rows);
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let arow = &a.data[i * k..(i + 1) * k];
        for j in 0..m {
            let brow = &b.data[j * k..(j + 1) * k];
            out[i * m + j] = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    Tensor::from_vec(n, m, out)
}

/// `a^T * b` with `a (k x n)`, `b (k x m)`.
fn matmul_at(a: &Tensor, b: &Tensor) -> Tensor {
    assert_eq!(a.rows, b.rows);
    let (k, n, m) = (a.rows, a.cols, b.cols);
    let mut out = vec![0.0; n * m];
    for p in 0..k {
        let arow = &a.data[p * n..(p + 1) * n];
        let brow = &b.data[p * m..(p + 1) * m];
        for (i, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[i * m..(i + 1) * m];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Tensor::from_vec(n, m, out)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    /// Parameter `k` of the tape it is used with.
    pub(crate) fn from_index(k: usize) -> Var {
        Var(k)
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    MatMulBt(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddRow(usize, usize),
    MulRow(usize, usize),
    Scale(usize, f64),
    Sigmoid(usize),
    Tanh(usize),
    Relu(usize),
    ConcatCols(Vec<usize>),
    SliceCols(usize, usize),
    Row(usize, usize),
    MeanRows(usize),
    SoftmaxRows(usize),
    /// Per-column standardization over rows; keeps `1/std` per column.
    Normalize(usize, Vec<f64>),
    /// Masked softmax cross-entropy; keeps target and probabilities.
    CrossEntropy(usize, Vec<f64>, Vec<f64>),
    SumAll(usize),
}

struct Node {
    value: Option<Tensor>,
    op: Op,
    needs_grad: bool,
}

/// A computation graph over borrowed parameters. Parameter `k` is `Var(k)`.
pub struct Tape<'p> {
    params: &'p [Tensor],
    nodes: Vec<Node>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p [Tensor]) -> Self {
        let nodes = params
            .iter()
            .map(|_| Node {
                value: None,
                op: Op::Leaf,
                needs_grad: true,
            })
            .collect();
        Self { params, nodes }
    }

    pub fn param(&self, k: usize) -> Var {
        assert!(k < self.params.len());
        Var(k)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        if v.0 < self.params.len() {
            &self.params[v.0]
        } else {
            self.nodes[v.0].value.as_ref().expect("node value")
        }
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value: Some(value),
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = matmul(self.value(a), self.value(b));
        let g = self.ng(a) || self.ng(b);
        self.push(v, Op::MatMul(a.0, b.0), g)
    }

    /// `a * b^T`.
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Var {
        let v = matmul_bt(self.value(a), self.value(b));
        let g = self.ng(a) || self.ng(b);
        self.push(v, Op::MatMulBt(a.0, b.0), g)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip(self.value(b), |x, y| x + y);
        let g = self.ng(a) || self.ng(b);
        self.push(v, Op::Add(a.0, b.0), g)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip(self.value(b), |x, y| x - y);
        let g = self.ng(a) || self.ng(b);
        self.push(v, Op::Sub(a.0, b.0), g)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip(self.value(b), |x, y| x * y);
        let g = self.ng(a) || self.ng(b);
        self.push(v, Op::Mul(a.0, b.0), g)
    }

    /// Adds a `1 x c` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (x, r) = (self.value(a), self.value(row));
        assert_eq!((r.rows, r.cols), (1, x.cols), "add_row shape");
        let mut v = x.clone();
        for chunk in v.data.chunks_mut(x.cols) {
            for (o, b) in chunk.iter_mut().zip(&r.data) {
                *o += b;
            }
        }
        let g = self.ng(a) || self.ng(row);
        self.push(v, Op::AddRow(a.0, row.0), g)
    }

    /// Multiplies every row of `a` elementwise by a `1 x c` row.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        let (x, r) = (self.value(a), self.value(row));
        assert_eq!((r.rows, r.cols), (1, x.cols), "mul_row shape");
        let mut v = x.clone();
        for chunk in v.data.chunks_mut(x.cols) {
            for (o, b) in chunk.iter_mut().zip(&r.data) {
                *o *= b;
            }
        }
        let g = self.ng(a) || self.ng(row);
        self.push(v, Op::MulRow(a.0, row.0), g)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).map(|x| x * c);
        let g = self.ng(a);
        self.push(v, Op::Scale(a.0, c), g)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        let g = self.ng(a);
        self.push(v, Op::Sigmoid(a.0), g)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        let g = self.ng(a);
        self.push(v, Op::Tanh(a.0), g)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(0.0));
        let g = self.ng(a);
        self.push(v, Op::Relu(a.0), g)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|&p| self.value(p).cols).sum();
        let mut v = Tensor::zeros(rows, cols);
        let mut off = 0;
        for &p in parts {
            let t = self.value(p);
            assert_eq!(t.rows, rows, "concat_cols rows");
            for r in 0..rows {
                v.data[r * cols + off..r * cols + off + t.cols].copy_from_slice(t.row(r));
            }
            off += t.cols;
        }
        let g = parts.iter().any(|&p| self.ng(p));
        self.push(v, Op::ConcatCols(parts.iter().map(|p| p.0).collect()), g)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let x = self.value(a);
        assert!(start + len <= x.cols);
        let mut v = Tensor::zeros(x.rows, len);
        for r in 0..x.rows {
            v.data[r * len..(r + 1) * len].copy_from_slice(&x.row(r)[start..start + len]);
        }
        let g = self.ng(a);
        self.push(v, Op::SliceCols(a.0, start), g)
    }

    pub fn row(&mut self, a: Var, r: usize) -> Var {
        let v = Tensor::row_vector(self.value(a).row(r).to_vec());
        let g = self.ng(a);
        self.push(v, Op::Row(a.0, r), g)
    }

    pub fn mean_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut v = Tensor::zeros(1, x.cols);
        for r in 0..x.rows {
            for (o, &b) in v.data.iter_mut().zip(x.row(r)) {
                *o += b;
            }
        }
        let inv = 1.0 / x.rows as f64;
        v.data.iter_mut().for_each(|o| *o *= inv);
        let g = self.ng(a);
        self.push(v, Op::MeanRows(a.0), g)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut v = x.clone();
        for chunk in v.data.chunks_mut(x.cols) {
            let m = chunk.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for o in chunk.iter_mut() {
                *o = (*o - m).exp();
                s += *o;
            }
            chunk.iter_mut().for_each(|o| *o /= s);
        }
        let g = self.ng(a);
        self.push(v, Op::SoftmaxRows(a.0), g)
    }

    /// Standardizes each column over the rows: `(x - mean) / sqrt(var + eps)`.
    pub fn normalize(&mut self, a: Var, eps: f64) -> Var {
        let x = self.value(a);
        let (n, c) = (x.rows, x.cols);
        let mut mean = vec![0.0; c];
        for r in 0..n {
            for (m, &b) in mean.iter_mut().zip(x.row(r)) {
                *m += b;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; c];
        for r in 0..n {
            for ((s, &b), &m) in var.iter_mut().zip(x.row(r)).zip(&mean) {
                *s += (b - m) * (b - m);
            }
        }
        let inv_std: Vec<f64> = var.iter().map(|s| 1.0 / (s / n as f64 + eps).sqrt()).collect();
        let mut v = x.clone();
        for chunk in v.data.chunks_mut(c) {
            for ((o, &m), &is) in chunk.iter_mut().zip(&mean).zip(&inv_std) {
                *o = (*o - m) * is;
            }
        }
        let g = self.ng(a);
        self.push(v, Op::Normalize(a.0, inv_std), g)
    }

    /// `-sum_j target_j * log softmax(logits)_j` over entries with `mask`
    /// set, for a `1 x n` logit row; `target` must sum to one on the mask.
    pub fn cross_entropy(&mut self, logits: Var, target: &[f64], mask: &[bool]) -> Var {
        let x = self.value(logits);
        assert_eq!(x.rows, 1);
        assert_eq!(x.cols, target.len());
        assert_eq!(x.cols, mask.len());
        let m = x
            .data
            .iter()
            .zip(mask)
            .filter(|(_, &k)| k)
            .map(|(&v, _)| v)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut probs = vec![0.0; x.cols];
        let mut z = 0.0;
        for ((p, &v), &k) in probs.iter_mut().zip(&x.data).zip(mask) {
            if k {
                *p = (v - m).exp();
                z += *p;
            }
        }
        probs.iter_mut().for_each(|p| *p /= z);
        let log_z = z.ln() + m;
        let loss: f64 = x
            .data
            .iter()
            .zip(target)
            .zip(mask)
            .filter(|(_, &k)| k)
            .map(|((&v, &t), _)| -t * (v - log_z))
            .sum();
        let g = self.ng(logits);
        self.push(
            Tensor::from_vec(1, 1, vec![loss]),
            Op::CrossEntropy(logits.0, target.to_vec(), probs),
            g,
        )
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s: f64 = self.value(a).data.iter().sum();
        let g = self.ng(a);
        self.push(Tensor::from_vec(1, 1, vec![s]), Op::SumAll(a.0), g)
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let t = self.value(v);
        assert_eq!(t.data.len(), 1);
        t.data[0]
    }

    /// Gradient of the scalar `out` with respect to every parameter.
    pub fn backward(&self, out: Var) -> Vec<Tensor> {
        let n = self.nodes.len();
        let mut grads: Vec<Option<Tensor>> = (0..n).map(|_| None).collect();
        {
            let t = self.value(out);
            assert_eq!(t.data.len(), 1, "backward from a non-scalar");
            grads[out.0] = Some(Tensor::from_vec(t.rows, t.cols, vec![1.0]));
        }
        let np = self.params.len();
        for id in (np..=out.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            if !node.needs_grad {
                continue;
            }
            let y = node.value.as_ref().expect("value");
            let acc = |k: usize, d: Tensor, grads: &mut Vec<Option<Tensor>>| {
                if !self.nodes[k].needs_grad {
                    return;
                }
                match &mut grads[k] {
                    Some(e) => e.add_assign(&d),
                    slot @ None => *slot = Some(d),
                }
            };
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(Var(*a)), self.value(Var(*b)));
                    if self.nodes[*a].needs_grad {
                        acc(*a, matmul_bt(&g, bv), &mut grads);
                    }
                    if self.nodes[*b].needs_grad {
                        acc(*b, matmul_at(av, &g), &mut grads);
                    }
                }
                Op::MatMulBt(a, b) => {
                    // y = a b^T: da = g b, db = g^T a
                    let (av, bv) = (self.value(Var(*a)), self.value(Var(*b)));
                    if self.nodes[*a].needs_grad {
                        acc(*a, matmul(&g, bv), &mut grads);
                    }
                    if self.nodes[*b].needs_grad {
                        acc(*b, matmul_at(&g, av), &mut grads);
                    }
                }
                Op::Add(a, b) => {
                    acc(*b, g.clone(), &mut grads);
                    acc(*a, g, &mut grads);
                }
                Op::Sub(a, b) => {
                    acc(*b, g.map(|v| -v), &mut grads);
                    acc(*a, g, &mut grads);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(Var(*a)), self.value(Var(*b)));
                    acc(*a, g.zip(bv, |x, y| x * y), &mut grads);
                    acc(*b, g.zip(av, |x, y| x * y), &mut grads);
                }
                Op::AddRow(a, r) => {
                    let mut dr = Tensor::zeros(1, g.cols);
                    for chunk in g.data.chunks(g.cols) {
                        for (o, &v) in dr.data.iter_mut().zip(chunk) {
                            *o += v;
                        }
                    }
                    acc(*r, dr, &mut grads);
                    acc(*a, g, &mut grads);
                }
                Op::MulRow(a, r) => {
                    let (av, rv) = (self.value(Var(*a)), self.value(Var(*r)));
                    let c = g.cols;
                    let mut dr = Tensor::zeros(1, c);
                    let mut da = g.clone();
                    for (dc, xc) in da.data.chunks_mut(c).zip(av.data.chunks(c)) {
                        for k in 0..c {
                            dr.data[k] += dc[k] * xc[k];
                            dc[k] *= rv.data[k];
                        }
                    }
                    acc(*r, dr, &mut grads);
                    acc(*a, da, &mut grads);
                }
                Op::Scale(a, c) => acc(*a, g.map(|v| v * c), &mut grads),
                Op::Sigmoid(a) => acc(*a, g.zip(y, |d, s| d * s * (1.0 - s)), &mut grads),
                Op::Tanh(a) => acc(*a, g.zip(y, |d, t| d * (1.0 - t * t)), &mut grads),
                Op::Relu(a) => {
                    let x = self.value(Var(*a));
                    acc(*a, g.zip(x, |d, v| if v > 0.0 { d } else { 0.0 }), &mut grads)
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let pc = self.value(Var(p)).cols;
                        if self.nodes[p].needs_grad {
                            let mut d = Tensor::zeros(g.rows, pc);
                            for r in 0..g.rows {
                                d.data[r * pc..(r + 1) * pc]
                                    .copy_from_slice(&g.row(r)[off..off + pc]);
                            }
                            acc(p, d, &mut grads);
                        }
                        off += pc;
                    }
                }
                Op::SliceCols(a, start) => {
                    let x = self.value(Var(*a));
                    let mut d = Tensor::zeros(x.rows, x.cols);
                    for r in 0..g.rows {
                        d.data[r * x.cols + start..r * x.cols + start + g.cols]
                            .copy_from_slice(g.row(r));
                    }
                    acc(*a, d, &mut grads);
                }
                Op::Row(a, r) => {
                    let x = self.value(Var(*a));
                    let mut d = Tensor::zeros(x.rows, x.cols);
                    d.data[r * x.cols..(r + 1) * x.cols].copy_from_slice(&g.data);
                    acc(*a, d, &mut grads);
                }
                Op::MeanRows(a) => {
                    let x = self.value(Var(*a));
                    let inv = 1.0 / x.rows as f64;
                    let mut d = Tensor::zeros(x.rows, x.cols);
                    for chunk in d.data.chunks_mut(x.cols) {
                        for (o, &v) in chunk.iter_mut().zip(&g.data) {
                            *o = v * inv;
                        }
                    }
                    acc(*a, d, &mut grads);
                }
                Op::SoftmaxRows(a) => {
                    let mut d = g.clone();
                    for (dc, yc) in d.data.chunks_mut(g.cols).zip(y.data.chunks(g.cols)) {
                        let dot: f64 = dc.iter().zip(yc).map(|(a, b)| a * b).sum();
                        for (o, &p) in dc.iter_mut().zip(yc) {
                            *o = p * (*o - dot);
                        }
                    }
                    acc(*a, d, &mut grads);
                }
                Op::Normalize(a, inv_std) => {
                    // dx = inv_std * (g - mean(g) - y * mean(g * y)) per column
                    let (n, c) = (g.rows, g.cols);
                    let mut mg = vec![0.0; c];
                    let mut mgy = vec![0.0; c];
                    for r in 0..n {
                        for k in 0..c {
                            mg[k] += g.at(r, k);
                            mgy[k] += g.at(r, k) * y.at(r, k);
                        }
                    }
                    let inv_n = 1.0 / n as f64;
                    let mut d = Tensor::zeros(n, c);
                    for r in 0..n {
                        for k in 0..c {
                            d.data[r * c + k] = inv_std[k]
                                * (g.at(r, k) - mg[k] * inv_n - y.at(r, k) * mgy[k] * inv_n);
                        }
                    }
                    acc(*a, d, &mut grads);
                }
                Op::CrossEntropy(a, target, probs) => {
                    let g0 = g.data[0];
                    let tsum: f64 = target.iter().sum();
                    let d: Vec<f64> = probs
                        .iter()
                        .zip(target)
                        .map(|(&p, &t)| g0 * (p * tsum - t))
                        .collect();
                    // masked entries have p = 0 and t = 0
                    acc(*a, Tensor::row_vector(d), &mut grads);
                }
                Op::SumAll(a) => {
                    let x = self.value(Var(*a));
                    acc(
                        *a,
                        Tensor::from_vec(x.rows, x.cols, vec![g.data[0]; x.data.len()]),
                        &mut grads,
                    );
                }
            }
        }
        (0..np)
            .map(|k| {
                grads[k]
                    .take()
                    .unwrap_or_else(|| Tensor::zeros(self.params[k].rows, self.params[k].cols))
            })
            .collect()
    }
}
