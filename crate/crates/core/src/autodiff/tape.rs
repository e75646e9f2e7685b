use std::collections::HashMap;

use super::linalg::gemm;
use super::params::{ParamId, ParamStore};
use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// An operation defined outside this module with a hand-written vector-Jacobian product.
pub trait CustomOp {
    fn name(&self) -> &'static str;

    /// Returns one gradient buffer per input, each shaped like that input.
    fn backward(&self, inputs: &[&Tensor], output: &Tensor, grad_output: &[f64]) -> Result<Vec<Vec<f64>>>;
}

enum Op {
    Leaf,
    Param,
    MatMul { a: Var, b: Var, b_t: bool },
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MulConst(Var, Vec<f64>),
    Scale(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    Log(Var),
    SoftmaxRows(Var),
    SoftmaxCols(Var),
    NormalizeRows(Var),
    L2NormalizeRows { x: Var, norms: Vec<f64> },
    LayerNormRows { x: Var, inv_std: Vec<f64> },
    Transpose(Var),
    Reshape(Var),
    Sum(Var),
    Gather { table: Var, ids: Vec<usize> },
    PairSum { a: Var, b: Var },
    NllPick { p: Var, picks: Vec<(usize, usize)>, floor: f64 },
    Custom { inputs: Vec<Var>, op: Box<dyn CustomOp> },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Define-by-run record of a forward computation.
///
/// Nodes are appended in evaluation order, so the node list is always
/// topologically sorted and backward is a single reverse sweep.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    param_vars: HashMap<ParamId, Var>,
}

/// Gradients produced by one backward sweep, indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}

const L2_GUARD: f64 = 1e-8;
const LAYER_NORM_EPS: f64 = 1e-9;

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn slot(grads: &mut [Option<Vec<f64>>], v: Var, numel: usize) -> &mut Vec<f64> {
    grads[v.0].get_or_insert_with(|| vec![0.0; numel])
}

fn check_same(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::dim(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
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

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    /// Records a parameter; repeated calls for the same id return the same node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        let v = self.push(store.get(id).value.clone(), Op::Param, true);
        self.param_vars.insert(id, v);
        v
    }

    /// `a · b` for a: m×p, b: p×q.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, p) = self.value(a).dims2()?;
        let (p2, q) = self.value(b).dims2()?;
        if p != p2 {
            return Err(Error::dim("matmul", format!("{m}x{p} · {p2}x{q}")));
        }
        let mut out = vec![0.0; m * q];
        gemm(m, p, q, self.value(a).values(), false, self.value(b).values(), false, &mut out, 0.0);
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::new(vec![m, q], out)?, Op::MatMul { a, b, b_t: false }, rg))
    }

    /// `a · bᵀ` for a: m×p, b: q×p.
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, p) = self.value(a).dims2()?;
        let (q, p2) = self.value(b).dims2()?;
        if p != p2 {
            return Err(Error::dim("matmul_bt", format!("{m}x{p} · ({q}x{p2})ᵀ")));
        }
        let mut out = vec![0.0; m * q];
        gemm(m, p, q, self.value(a).values(), false, self.value(b).values(), true, &mut out, 0.0);
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::new(vec![m, q], out)?, Op::MatMul { a, b, b_t: true }, rg))
    }

    fn zip_with(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        check_same(op, ta, tb)?;
        let vals = ta.values().iter().zip(tb.values()).map(|(x, y)| f(*x, *y)).collect();
        Tensor::new(ta.shape().to_vec(), vals)
    }

    fn map(&self, a: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let ta = self.value(a);
        let vals = ta.values().iter().map(|x| f(*x)).collect();
        Tensor::new(ta.shape().to_vec(), vals).expect("shape preserved")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_with("add", a, b, |x, y| x + y)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(t, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_with("sub", a, b, |x, y| x - y)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(t, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_with("mul", a, b, |x, y| x * y)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(t, Op::Mul(a, b), rg))
    }

    /// Adds a length-n vector to every row of an m×n matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (m, n) = self.value(a).dims2()?;
        if self.value(row).numel() != n {
            return Err(Error::dim("add_row", format!("{m}x{n} + {:?}", self.value(row).shape())));
        }
        let r = self.value(row).values();
        let mut vals = self.value(a).values().to_vec();
        for chunk in vals.chunks_mut(n) {
            add_into(chunk, r);
        }
        let rg = self.rg(&[a, row]);
        Ok(self.push(Tensor::new(vec![m, n], vals)?, Op::AddRow(a, row), rg))
    }

    /// Elementwise product with a constant mask (used for dropout).
    pub fn mul_const(&mut self, a: Var, mask: Tensor) -> Result<Var> {
        check_same("mul_const", self.value(a), &mask)?;
        let vals = self.value(a).values().iter().zip(mask.values()).map(|(x, m)| x * m).collect();
        let t = Tensor::new(mask.shape().to_vec(), vals)?;
        let rg = self.rg(&[a]);
        Ok(self.push(t, Op::MulConst(a, mask.into_values()), rg))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let t = self.map(a, |x| c * x);
        let rg = self.rg(&[a]);
        self.push(t, Op::Scale(a, c), rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let t = self.map(a, f64::tanh);
        let rg = self.rg(&[a]);
        self.push(t, Op::Tanh(a), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let t = self.map(a, |x| 1.0 / (1.0 + (-x).exp()));
        let rg = self.rg(&[a]);
        self.push(t, Op::Sigmoid(a), rg)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let t = self.map(a, f64::exp);
        let rg = self.rg(&[a]);
        self.push(t, Op::Exp(a), rg)
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        if let Some(bad) = self.value(a).values().iter().find(|&&x| !(x > 0.0)) {
            return Err(Error::Domain { op: "log", detail: format!("non-positive input {bad}") });
        }
        let t = self.map(a, f64::ln);
        let rg = self.rg(&[a]);
        Ok(self.push(t, Op::Log(a), rg))
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let (m, n) = self.value(a).dims2()?;
        let src = self.value(a).values();
        if src.iter().any(|x| x.is_nan()) {
            return Err(Error::Numeric("softmax_rows received NaN".into()));
        }
        let mut vals = vec![0.0; m * n];
        for (out, row) in vals.chunks_mut(n).zip(src.chunks(n)) {
            softmax_into(row, out);
        }
        let shape = self.value(a).shape().to_vec();
        let rg = self.rg(&[a]);
        Ok(self.push(Tensor::new(shape, vals)?, Op::SoftmaxRows(a), rg))
    }

    /// Column-wise softmax (normalizes over the row axis for each column).
    pub fn softmax_cols(&mut self, a: Var) -> Result<Var> {
        let (m, n) = self.value(a).dims2()?;
        let src = self.value(a).values();
        if src.iter().any(|x| x.is_nan()) {
            return Err(Error::Numeric("softmax_cols received NaN".into()));
        }
        let mut vals = vec![0.0; m * n];
        let mut col = vec![0.0; m];
        let mut out = vec![0.0; m];
        for j in 0..n {
            for i in 0..m {
                col[i] = src[i * n + j];
            }
            softmax_into(&col, &mut out);
            for i in 0..m {
                vals[i * n + j] = out[i];
            }
        }
        let rg = self.rg(&[a]);
        Ok(self.push(Tensor::new(vec![m, n], vals)?, Op::SoftmaxCols(a), rg))
    }

    /// Divides each row by its sum; rows must have positive sums.
    pub fn normalize_rows(&mut self, a: Var) -> Result<Var> {
        let (m, n) = self.value(a).dims2()?;
        let mut vals = self.value(a).values().to_vec();
        for row in vals.chunks_mut(n) {
            let s: f64 = row.iter().sum();
            if !(s > 0.0) {
                return Err(Error::Domain { op: "normalize_rows", detail: format!("row sum {s}") });
            }
            row.iter_mut().for_each(|x| *x /= s);
        }
        let rg = self.rg(&[a]);
        Ok(self.push(Tensor::new(vec![m, n], vals)?, Op::NormalizeRows(a), rg))
    }

    /// Scales each row to unit Euclidean norm; norms below 1e-8 are clamped to 1e-8.
    pub fn l2_normalize_rows(&mut self, a: Var) -> Result<Var> {
        let (m, n) = self.value(a).dims2()?;
        let mut vals = self.value(a).values().to_vec();
        let mut norms = Vec::with_capacity(m);
        for row in vals.chunks_mut(n) {
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            let denom = norm.max(L2_GUARD);
            row.iter_mut().for_each(|x| *x /= denom);
            norms.push(norm);
        }
        let rg = self.rg(&[a]);
        Ok(self.push(Tensor::new(vec![m, n], vals)?, Op::L2NormalizeRows { x: a, norms }, rg))
    }

    /// Per-row standardization to zero mean and unit variance (no affine part).
    pub fn layer_norm_rows(&mut self, a: Var) -> Result<Var> {
        let (m, n) = self.value(a).dims2()?;
        let mut vals = self.value(a).values().to_vec();
        let mut inv_std = Vec::with_capacity(m);
        for row in vals.chunks_mut(n) {
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
            let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            row.iter_mut().for_each(|x| *x = (*x - mean) * inv);
            inv_std.push(inv);
        }
        let rg = self.rg(&[a]);
        Ok(self.push(Tensor::new(vec![m, n], vals)?, Op::LayerNormRows { x: a, inv_std }, rg))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a).transposed()?;
        let rg = self.rg(&[a]);
        Ok(self.push(t, Op::Transpose(a), rg))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(a).clone().reshaped(shape.to_vec())?;
        let rg = self.rg(&[a]);
        Ok(self.push(t, Op::Reshape(a), rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let t = Tensor::scalar(self.value(a).sum());
        let rg = self.rg(&[a]);
        self.push(t, Op::Sum(a), rg)
    }

    /// Row lookup: output row i is `table[ids[i]]`.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (rows, d) = self.value(table).dims2()?;
        if ids.is_empty() {
            return Err(Error::dim("gather_rows", "empty id list"));
        }
        let src = self.value(table).values();
        let mut vals = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= rows {
                return Err(Error::Lookup { id, size: rows });
            }
            vals.extend_from_slice(&src[id * d..(id + 1) * d]);
        }
        let rg = self.rg(&[table]);
        Ok(self.push(Tensor::new(vec![ids.len(), d], vals)?, Op::Gather { table, ids: ids.to_vec() }, rg))
    }

    /// For a: k×d and b: n×d, returns the (k·n)×d matrix whose row `i·n + j` is `a_i + b_j`.
    pub fn pair_sum(&mut self, a: Var, b: Var) -> Result<Var> {
        let (k, d) = self.value(a).dims2()?;
        let (n, d2) = self.value(b).dims2()?;
        if d != d2 {
            return Err(Error::dim("pair_sum", format!("{k}x{d} vs {n}x{d2}")));
        }
        let (av, bv) = (self.value(a).values(), self.value(b).values());
        let mut vals = vec![0.0; k * n * d];
        for i in 0..k {
            let ai = &av[i * d..(i + 1) * d];
            for j in 0..n {
                let bj = &bv[j * d..(j + 1) * d];
                let out = &mut vals[(i * n + j) * d..(i * n + j + 1) * d];
                for ((o, x), y) in out.iter_mut().zip(ai).zip(bj) {
                    *o = x + y;
                }
            }
        }
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::new(vec![k * n, d], vals)?, Op::PairSum { a, b }, rg))
    }

    /// Sum of `-ln(max(p[r][c], floor))` over the picked `(r, c)` cells.
    pub fn nll_pick(&mut self, p: Var, picks: &[(usize, usize)], floor: f64) -> Result<Var> {
        let (m, n) = self.value(p).dims2()?;
        let mut total = 0.0;
        for &(r, c) in picks {
            if r >= m || c >= n {
                return Err(Error::dim("nll_pick", format!("cell ({r},{c}) outside {m}x{n}")));
            }
            total -= self.value(p).values()[r * n + c].max(floor).ln();
        }
        let rg = self.rg(&[p]);
        Ok(self.push(Tensor::scalar(total), Op::NllPick { p, picks: picks.to_vec(), floor }, rg))
    }

    pub fn custom(&mut self, inputs: &[Var], output: Tensor, op: Box<dyn CustomOp>) -> Var {
        let rg = self.rg(inputs);
        self.push(output, Op::Custom { inputs: inputs.to_vec(), op }, rg)
    }

    /// Reverse sweep from a scalar `loss`; parameter gradients are added to `store`.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<Gradients> {
        let grads = self.gradients(loss)?;
        for (&id, &v) in &self.param_vars {
            if let Some(g) = grads.get(v) {
                store.accumulate(id, g);
            }
        }
        Ok(grads)
    }

    /// Reverse sweep from a scalar `loss` without touching any parameter store.
    pub fn gradients(&self, loss: Var) -> Result<Gradients> {
        if !self.value(loss).is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.backprop_node(node, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn backprop_node(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) -> Result<()> {
        let y = node.value.values();
        let want = |v: Var| self.nodes[v.0].requires_grad;
        let numel = |v: Var| self.nodes[v.0].value.numel();
        match &node.op {
            Op::Leaf | Op::Param => {}
            Op::MatMul { a, b, b_t } => {
                let (m, p) = self.value(*a).dims2()?;
                let q = node.value.cols();
                let (av, bv) = (self.value(*a).values(), self.value(*b).values());
                if want(*a) {
                    let ga = slot(grads, *a, m * p);
                    // dA = dC · Bᵀ (or dC · B when B is stored transposed)
                    gemm(m, q, p, g, false, bv, !*b_t, ga, 1.0);
                }
                if want(*b) {
                    let gb = slot(grads, *b, p * q);
                    if *b_t {
                        gemm(q, m, p, g, true, av, false, gb, 1.0);
                    } else {
                        gemm(p, m, q, av, true, g, false, gb, 1.0);
                    }
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if want(v) {
                        add_into(slot(grads, v, g.len()), g);
                    }
                }
            }
            Op::Sub(a, b) => {
                if want(*a) {
                    add_into(slot(grads, *a, g.len()), g);
                }
                if want(*b) {
                    let gb = slot(grads, *b, g.len());
                    gb.iter_mut().zip(g).for_each(|(d, s)| *d -= s);
                }
            }
            Op::Mul(a, b) => {
                if want(*a) {
                    let other = self.value(*b).values();
                    let ga = slot(grads, *a, g.len());
                    for ((d, s), o) in ga.iter_mut().zip(g).zip(other) {
                        *d += s * o;
                    }
                }
                if want(*b) {
                    let other = self.value(*a).values();
                    let gb = slot(grads, *b, g.len());
                    for ((d, s), o) in gb.iter_mut().zip(g).zip(other) {
                        *d += s * o;
                    }
                }
            }
            Op::AddRow(a, row) => {
                if want(*a) {
                    add_into(slot(grads, *a, g.len()), g);
                }
                if want(*row) {
                    let n = numel(*row);
                    let gr = slot(grads, *row, n);
                    for chunk in g.chunks(n) {
                        add_into(gr, chunk);
                    }
                }
            }
            Op::MulConst(a, mask) => {
                if want(*a) {
                    let ga = slot(grads, *a, g.len());
                    for ((d, s), m) in ga.iter_mut().zip(g).zip(mask) {
                        *d += s * m;
                    }
                }
            }
            Op::Scale(a, c) => {
                if want(*a) {
                    let ga = slot(grads, *a, g.len());
                    ga.iter_mut().zip(g).for_each(|(d, s)| *d += c * s);
                }
            }
            Op::Tanh(a) => {
                if want(*a) {
                    let ga = slot(grads, *a, g.len());
                    for ((d, s), yv) in ga.iter_mut().zip(g).zip(y) {
                        *d += s * (1.0 - yv * yv);
                    }
                }
            }
            Op::Sigmoid(a) => {
                if want(*a) {
                    let ga = slot(grads, *a, g.len());
                    for ((d, s), yv) in ga.iter_mut().zip(g).zip(y) {
                        *d += s * yv * (1.0 - yv);
                    }
                }
            }
            Op::Exp(a) => {
                if want(*a) {
                    let ga = slot(grads, *a, g.len());
                    for ((d, s), yv) in ga.iter_mut().zip(g).zip(y) {
                        *d += s * yv;
                    }
                }
            }
            Op::Log(a) => {
                if want(*a) {
                    let x = self.value(*a).values();
                    let ga = slot(grads, *a, g.len());
                    for ((d, s), xv) in ga.iter_mut().zip(g).zip(x) {
                        *d += s / xv;
                    }
                }
            }
            Op::SoftmaxRows(a) => {
                if want(*a) {
                    let n = node.value.cols();
                    let ga = slot(grads, *a, g.len());
                    for ((dr, gr), yr) in ga.chunks_mut(n).zip(g.chunks(n)).zip(y.chunks(n)) {
                        let dot: f64 = gr.iter().zip(yr).map(|(s, p)| s * p).sum();
                        for ((d, s), p) in dr.iter_mut().zip(gr).zip(yr) {
                            *d += p * (s - dot);
                        }
                    }
                }
            }
            Op::SoftmaxCols(a) => {
                if want(*a) {
                    let (m, n) = node.value.dims2()?;
                    let ga = slot(grads, *a, g.len());
                    for j in 0..n {
                        let dot: f64 = (0..m).map(|i| g[i * n + j] * y[i * n + j]).sum();
                        for i in 0..m {
                            ga[i * n + j] += y[i * n + j] * (g[i * n + j] - dot);
                        }
                    }
                }
            }
            Op::NormalizeRows(a) => {
                if want(*a) {
                    let n = node.value.cols();
                    let x = self.value(*a).values();
                    let ga = slot(grads, *a, g.len());
                    for (((dr, gr), yr), xr) in ga.chunks_mut(n).zip(g.chunks(n)).zip(y.chunks(n)).zip(x.chunks(n)) {
                        let s: f64 = xr.iter().sum();
                        let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                        for (d, gv) in dr.iter_mut().zip(gr) {
                            *d += (gv - dot) / s;
                        }
                    }
                }
            }
            Op::L2NormalizeRows { x, norms } => {
                if want(*x) {
                    let n = node.value.cols();
                    let gx = slot(grads, *x, g.len());
                    for (((dr, gr), yr), &norm) in gx.chunks_mut(n).zip(g.chunks(n)).zip(y.chunks(n)).zip(norms) {
                        if norm > L2_GUARD {
                            let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                            for ((d, gv), yv) in dr.iter_mut().zip(gr).zip(yr) {
                                *d += (gv - yv * dot) / norm;
                            }
                        } else {
                            for (d, gv) in dr.iter_mut().zip(gr) {
                                *d += gv / L2_GUARD;
                            }
                        }
                    }
                }
            }
            Op::LayerNormRows { x, inv_std } => {
                if want(*x) {
                    let n = node.value.cols();
                    let gx = slot(grads, *x, g.len());
                    for (((dr, gr), yr), &inv) in gx.chunks_mut(n).zip(g.chunks(n)).zip(y.chunks(n)).zip(inv_std) {
                        let mean_g = gr.iter().sum::<f64>() / n as f64;
                        let mean_gy = gr.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / n as f64;
                        for ((d, gv), yv) in dr.iter_mut().zip(gr).zip(yr) {
                            *d += inv * (gv - mean_g - yv * mean_gy);
                        }
                    }
                }
            }
            Op::Transpose(a) => {
                if want(*a) {
                    let (m, n) = node.value.dims2()?;
                    let ga = slot(grads, *a, g.len());
                    // output is m×n, input n×m
                    for i in 0..m {
                        for j in 0..n {
                            ga[j * m + i] += g[i * n + j];
                        }
                    }
                }
            }
            Op::Reshape(a) => {
                if want(*a) {
                    add_into(slot(grads, *a, g.len()), g);
                }
            }
            Op::Sum(a) => {
                if want(*a) {
                    let ga = slot(grads, *a, numel(*a));
                    ga.iter_mut().for_each(|d| *d += g[0]);
                }
            }
            Op::Gather { table, ids } => {
                if want(*table) {
                    let d = self.value(*table).cols();
                    let gt = slot(grads, *table, numel(*table));
                    for (r, &id) in ids.iter().enumerate() {
                        add_into(&mut gt[id * d..(id + 1) * d], &g[r * d..(r + 1) * d]);
                    }
                }
            }
            Op::PairSum { a, b } => {
                let (k, d) = self.value(*a).dims2()?;
                let n = self.value(*b).rows();
                if want(*a) {
                    let ga = slot(grads, *a, k * d);
                    for i in 0..k {
                        for j in 0..n {
                            let row = &g[(i * n + j) * d..(i * n + j + 1) * d];
                            add_into(&mut ga[i * d..(i + 1) * d], row);
                        }
                    }
                }
                if want(*b) {
                    let gb = slot(grads, *b, n * d);
                    for i in 0..k {
                        for j in 0..n {
                            let row = &g[(i * n + j) * d..(i * n + j + 1) * d];
                            add_into(&mut gb[j * d..(j + 1) * d], row);
                        }
                    }
                }
            }
            Op::NllPick { p, picks, floor } => {
                if want(*p) {
                    let n = self.value(*p).cols();
                    let pv = self.value(*p).values();
                    let gp = slot(grads, *p, pv.len());
                    for &(r, c) in picks {
                        let prob = pv[r * n + c];
                        if prob > *floor {
                            gp[r * n + c] -= g[0] / prob;
                        }
                    }
                }
            }
            Op::Custom { inputs, op } => {
                let values: Vec<&Tensor> = inputs.iter().map(|v| self.value(*v)).collect();
                let local = op.backward(&values, &node.value, g)?;
                if local.len() != inputs.len() {
                    return Err(Error::Contract(format!(
                        "{} returned {} gradients for {} inputs",
                        op.name(),
                        local.len(),
                        inputs.len()
                    )));
                }
                for (v, lg) in inputs.iter().zip(local) {
                    if want(*v) {
                        add_into(slot(grads, *v, lg.len()), &lg);
                    }
                }
            }
        }
        Ok(())
    }
}

fn softmax_into(src: &[f64], out: &mut [f64]) {
    let max = src.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, x) in out.iter_mut().zip(src) {
        *o = (x - max).exp();
        total += *o;
    }
    out.iter_mut().for_each(|o| *o /= total);
}
