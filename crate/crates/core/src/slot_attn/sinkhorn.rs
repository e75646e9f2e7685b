//! Log-domain Sinkhorn balancing, plan entropy and entropy-sharpening of transport costs.
//!
//! All routines are generic over [`Scalar`] so the same unrolled code runs on plain
//! `f64` and on dual numbers; the latter gives exact Hessian-vector products of the
//! plan entropy, which is what differentiating through the sharpening loop needs.

use num_dual::{Dual64, DualNum, DualStruct};
use serde::{Deserialize, Serialize};

use crate::autodiff::{CustomOp, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Real or dual-number scalar the unrolled solver can run on.
pub trait Scalar: DualNum<Primitive = f64> + DualStruct<Real = f64> + Copy {}

impl<T: DualNum<Primitive = f64> + DualStruct<Real = f64> + Copy> Scalar for T {}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SinkhornOptions {
    /// Temperature: the kernel is `exp(C / epsilon)`.
    pub epsilon: f64,
    pub max_iters: usize,
    /// Stop once the largest row-marginal deviation falls below this.
    pub tol: f64,
}

impl Default for SinkhornOptions {
    fn default() -> Self {
        SinkhornOptions { epsilon: 1.0, max_iters: 200, tol: 1e-6 }
    }
}

impl SinkhornOptions {
    fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::Contract(format!("sinkhorn epsilon must be positive, got {}", self.epsilon)));
        }
        if self.max_iters == 0 {
            return Err(Error::Contract("sinkhorn max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

/// Convergence summary of one Sinkhorn solve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SinkhornStatus {
    pub iterations: usize,
    pub converged: bool,
    /// max_i |Σ_j P_ij − 1|
    pub row_deviation: f64,
    /// max_j |Σ_i P_ij − k/n|
    pub col_deviation: f64,
}

/// One unrolled Sinkhorn solve, keeping the per-iteration normalization weights for the reverse pass.
pub struct SinkhornRun<D> {
    rows: usize,
    cols: usize,
    plan: Vec<D>,
    status: SinkhornStatus,
    // softmax weights of the row update (over j) and column update (over i), per iteration
    row_weights: Vec<Vec<D>>,
    col_weights: Vec<Vec<D>>,
}

impl<D: Scalar> SinkhornRun<D> {
    /// Runs Sinkhorn on already-scaled log-kernel `s = C / epsilon` (k×n, row-major).
    ///
    /// Rows are balanced to 1 and columns to k/n. With `fixed_iters` the tolerance is
    /// ignored and exactly that many iterations execute.
    pub fn solve(s: &[D], rows: usize, cols: usize, max_iters: usize, tol: f64, fixed_iters: Option<usize>) -> Self {
        let (k, n) = (rows, cols);
        let col_mass = k as f64 / n as f64;
        let log_col_mass = col_mass.ln();
        let budget = fixed_iters.unwrap_or(max_iters).max(1);

        let mut f = vec![D::zero(); k];
        let mut g = vec![D::zero(); n];
        let mut row_weights = Vec::with_capacity(budget);
        let mut col_weights: Vec<Vec<D>> = Vec::with_capacity(budget);
        let mut row_deviation = f64::INFINITY;
        let mut buf = vec![D::zero(); k.max(n)];

        for _ in 0..budget {
            let mut alpha = vec![D::zero(); k * n];
            for i in 0..k {
                let row = &s[i * n..(i + 1) * n];
                let shift = row.iter().zip(&g).map(|(a, b)| (*a + *b).re()).fold(f64::NEG_INFINITY, f64::max);
                let mut total = D::zero();
                for j in 0..n {
                    let e = (row[j] + g[j] - shift).exp();
                    buf[j] = e;
                    total += e;
                }
                f[i] = -(total.ln() + shift);
                let inv = total.recip();
                for j in 0..n {
                    alpha[i * n + j] = buf[j] * inv;
                }
            }
            let mut beta = vec![D::zero(); k * n];
            for j in 0..n {
                let shift = (0..k).map(|i| (s[i * n + j] + f[i]).re()).fold(f64::NEG_INFINITY, f64::max);
                let mut total = D::zero();
                for i in 0..k {
                    let e = (s[i * n + j] + f[i] - shift).exp();
                    buf[i] = e;
                    total += e;
                }
                g[j] = -(total.ln() + shift) + log_col_mass;
                let inv = total.recip();
                for i in 0..k {
                    beta[i * n + j] = buf[i] * inv;
                }
            }
            row_deviation = (0..k)
                .map(|i| (beta[i * n..(i + 1) * n].iter().map(|b| b.re()).sum::<f64>() * col_mass - 1.0).abs())
                .fold(0.0, f64::max);
            row_weights.push(alpha);
            col_weights.push(beta);
            if fixed_iters.is_none() && row_deviation < tol {
                break;
            }
        }

        let last = col_weights.last().expect("at least one iteration");
        let plan: Vec<D> = last.iter().map(|b| *b * col_mass).collect();
        let col_deviation =
            (0..n).map(|j| ((0..k).map(|i| plan[i * n + j].re()).sum::<f64>() - col_mass).abs()).fold(0.0, f64::max);
        let iterations = col_weights.len();
        SinkhornRun {
            rows,
            cols,
            plan,
            status: SinkhornStatus { iterations, converged: row_deviation < tol, row_deviation, col_deviation },
            row_weights,
            col_weights,
        }
    }

    pub fn plan(&self) -> &[D] {
        &self.plan
    }

    pub fn status(&self) -> SinkhornStatus {
        self.status
    }

    /// Vector-Jacobian product through the executed iterations: returns ∂⟨plan_grad, P⟩/∂s.
    pub fn vjp(&self, plan_grad: &[D]) -> Vec<D> {
        let (k, n) = (self.rows, self.cols);
        // P = exp(s + f + g) at the final potentials.
        let mut s_bar: Vec<D> = plan_grad.iter().zip(&self.plan).map(|(g, p)| *g * *p).collect();
        let mut f_bar = vec![D::zero(); k];
        let mut g_bar = vec![D::zero(); n];
        for i in 0..k {
            for j in 0..n {
                let v = s_bar[i * n + j];
                f_bar[i] += v;
                g_bar[j] += v;
            }
        }
        for (alpha, beta) in self.row_weights.iter().zip(&self.col_weights).rev() {
            // g_j = log(k/n) − LSE_i(s_ij + f_i)
            for i in 0..k {
                let mut acc = D::zero();
                for j in 0..n {
                    let w = g_bar[j] * beta[i * n + j];
                    s_bar[i * n + j] -= w;
                    acc += w;
                }
                f_bar[i] -= acc;
            }
            // f_i = −LSE_j(s_ij + g_j of the previous iteration)
            let mut g_prev = vec![D::zero(); n];
            for i in 0..k {
                let fb = f_bar[i];
                for j in 0..n {
                    let w = fb * alpha[i * n + j];
                    s_bar[i * n + j] -= w;
                    g_prev[j] -= w;
                }
            }
            g_bar = g_prev;
            f_bar.iter_mut().for_each(|v| *v = D::zero());
        }
        s_bar
    }
}

fn check_costs(c: &Tensor) -> Result<(usize, usize)> {
    let dims = c.dims2()?;
    if !c.all_finite() {
        return Err(Error::Numeric("transport cost contains non-finite entries".into()));
    }
    Ok(dims)
}

/// Transport plan for cost-as-similarity matrix `c` (larger entries receive more mass).
pub fn sinkhorn_plan(c: &Tensor, opts: &SinkhornOptions) -> Result<(Tensor, SinkhornStatus)> {
    opts.validate()?;
    let (k, n) = check_costs(c)?;
    let scaled: Vec<f64> = c.values().iter().map(|v| v / opts.epsilon).collect();
    let run = SinkhornRun::solve(&scaled, k, n, opts.max_iters, opts.tol, None);
    Ok((Tensor::new(vec![k, n], run.plan.clone())?, run.status))
}

struct SinkhornOp {
    run: SinkhornRun<f64>,
    epsilon: f64,
}

impl CustomOp for SinkhornOp {
    fn name(&self) -> &'static str {
        "sinkhorn"
    }

    fn backward(&self, _inputs: &[&Tensor], _output: &Tensor, grad_output: &[f64]) -> Result<Vec<Vec<f64>>> {
        let mut g = self.run.vjp(grad_output);
        g.iter_mut().for_each(|v| *v /= self.epsilon);
        Ok(vec![g])
    }
}

/// Differentiable Sinkhorn on the tape.
pub fn sinkhorn(tape: &mut Tape, costs: Var, opts: &SinkhornOptions) -> Result<(Var, SinkhornStatus)> {
    opts.validate()?;
    let (k, n) = check_costs(tape.value(costs))?;
    let scaled: Vec<f64> = tape.value(costs).values().iter().map(|v| v / opts.epsilon).collect();
    let run = SinkhornRun::solve(&scaled, k, n, opts.max_iters, opts.tol, None);
    let status = run.status;
    let out = Tensor::new(vec![k, n], run.plan.clone())?;
    let v = tape.custom(&[costs], out, Box::new(SinkhornOp { run, epsilon: opts.epsilon }));
    Ok((v, status))
}

/// Shannon entropy −Σ A_ij ln A_ij with 0 ln 0 = 0.
pub fn plan_entropy(a: &Tensor) -> Result<f64> {
    let mut h = 0.0;
    for &v in a.values() {
        if v < 0.0 || v.is_nan() {
            return Err(Error::Contract(format!("plan entropy needs nonnegative entries, found {v}")));
        }
        if v > 0.0 {
            h -= v * v.ln();
        }
    }
    Ok(h)
}

/// Gradient of H(sinkhorn(C)) with respect to C, plus the number of Sinkhorn iterations used.
pub fn entropy_gradient<D: Scalar>(
    costs: &[D],
    rows: usize,
    cols: usize,
    opts: &SinkhornOptions,
    fixed_iters: Option<usize>,
) -> (Vec<D>, usize) {
    let inv_eps = 1.0 / opts.epsilon;
    let scaled: Vec<D> = costs.iter().map(|c| *c * inv_eps).collect();
    let run = SinkhornRun::solve(&scaled, rows, cols, opts.max_iters, opts.tol, fixed_iters);
    let plan_grad: Vec<D> = run.plan.iter().map(|p| if p.re() > 0.0 { -(p.ln() + 1.0) } else { D::zero() }).collect();
    let mut g = run.vjp(&plan_grad);
    g.iter_mut().for_each(|v| *v *= inv_eps);
    (g, run.status.iterations)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshOptions {
    /// Step size of the entropy descent on the cost matrix.
    pub lr: f64,
    /// Number of descent steps.
    pub iters: usize,
}

impl Default for MeshOptions {
    fn default() -> Self {
        MeshOptions { lr: 6.0, iters: 4 }
    }
}

/// Forward trace of the entropy-sharpening descent.
pub struct MeshRun {
    pub costs: Tensor,
    /// Cost matrix before each step and the Sinkhorn iteration count that step used.
    steps: Vec<(Vec<f64>, usize)>,
}

/// Sharpens `c` by `iters` gradient steps on H(sinkhorn(C')), differentiating through the
/// unrolled Sinkhorn iterations.
pub fn mesh_costs(c: &Tensor, mesh: &MeshOptions, opts: &SinkhornOptions) -> Result<MeshRun> {
    opts.validate()?;
    let (k, n) = check_costs(c)?;
    let mut current = c.values().to_vec();
    let mut steps = Vec::with_capacity(mesh.iters);
    if mesh.lr != 0.0 {
        for step in 0..mesh.iters {
            let (grad, iters) = entropy_gradient::<f64>(&current, k, n, opts, None);
            let next: Vec<f64> = current.iter().zip(&grad).map(|(c, g)| c - mesh.lr * g).collect();
            if next.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("entropy sharpening produced non-finite costs at step {step}")));
            }
            steps.push((std::mem::replace(&mut current, next), iters));
        }
    }
    Ok(MeshRun { costs: Tensor::new(vec![k, n], current)?, steps })
}

struct MeshOp {
    steps: Vec<(Vec<f64>, usize)>,
    rows: usize,
    cols: usize,
    lr: f64,
    opts: SinkhornOptions,
}

impl CustomOp for MeshOp {
    fn name(&self) -> &'static str {
        "mesh"
    }

    fn backward(&self, _inputs: &[&Tensor], _output: &Tensor, grad_output: &[f64]) -> Result<Vec<Vec<f64>>> {
        // C_{m+1} = C_m − lr ∇φ(C_m)  ⇒  ū_m = ū_{m+1} − lr ∇²φ(C_m) ū_{m+1}
        let mut u = grad_output.to_vec();
        for (step, (c, iters)) in self.steps.iter().enumerate().rev() {
            let duals: Vec<Dual64> = c.iter().zip(&u).map(|(re, eps)| Dual64::new(*re, *eps)).collect();
            let (g, _) = entropy_gradient(&duals, self.rows, self.cols, &self.opts, Some(*iters));
            for (ui, gi) in u.iter_mut().zip(&g) {
                *ui -= self.lr * gi.eps;
            }
            if u.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("non-finite gradient through sharpening step {step}")));
            }
        }
        Ok(vec![u])
    }
}

/// Differentiable entropy sharpening of a cost matrix on the tape.
pub fn mesh(tape: &mut Tape, costs: Var, mesh: &MeshOptions, opts: &SinkhornOptions) -> Result<Var> {
    let (k, n) = tape.value(costs).dims2()?;
    let run = mesh_costs(tape.value(costs), mesh, opts)?;
    let op = MeshOp { steps: run.steps, rows: k, cols: n, lr: mesh.lr, opts: *opts };
    Ok(tape.custom(&[costs], run.costs, Box::new(op)))
}
