//! Central finite-difference checks for tape gradients.

use super::params::{ParamId, ParamStore};
use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct GradCheckOptions {
    /// Finite-difference step.
    pub step: f64,
    /// Denominator floor of the relative error, so near-zero gradients are compared absolutely.
    pub floor: f64,
    /// Check at most this many entries per tensor (evenly strided); `None` checks all.
    pub max_entries: Option<usize>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions { step: 1e-5, floor: 1e-4, max_entries: None }
    }
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// (tensor index, flat entry, analytic, numeric) of the worst entry.
    pub worst: Option<(usize, usize, f64, f64)>,
}

impl GradCheckReport {
    fn record(&mut self, tensor: usize, entry: usize, analytic: f64, numeric: f64, floor: f64) {
        let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor);
        self.checked += 1;
        if self.worst.is_none() || err > self.max_rel_error {
            self.max_rel_error = err;
            self.worst = Some((tensor, entry, analytic, numeric));
        }
    }

    pub fn merge(&mut self, other: GradCheckReport) {
        self.checked += other.checked;
        if other.worst.is_some() && (self.worst.is_none() || other.max_rel_error > self.max_rel_error) {
            self.max_rel_error = other.max_rel_error;
            self.worst = other.worst;
        }
    }
}

fn entries(numel: usize, max: Option<usize>) -> Vec<usize> {
    match max {
        Some(m) if m < numel => {
            let stride = numel as f64 / m as f64;
            (0..m).map(|i| (i as f64 * stride) as usize).collect()
        }
        _ => (0..numel).collect(),
    }
}

fn scalar_of(tape: &Tape, v: Var) -> Result<f64> {
    let t = tape.value(v);
    if !t.is_scalar() {
        return Err(Error::Contract(format!("gradient check needs a scalar, got {:?}", t.shape())));
    }
    Ok(t.values()[0])
}

/// Compares tape gradients of `f` with respect to leaf `inputs` against central differences.
pub fn check_gradients<F>(inputs: &[Tensor], opts: GradCheckOptions, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |vals: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = vals.iter().map(|t| tape.leaf(t.clone(), true)).collect();
        let out = f(&mut tape, &vars)?;
        scalar_of(&tape, out)
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let out = f(&mut tape, &vars)?;
    scalar_of(&tape, out)?;
    let grads = tape.gradients(out)?;

    let mut report = GradCheckReport::default();
    let mut work = inputs.to_vec();
    for (ti, var) in vars.iter().enumerate() {
        let analytic = grads.get(*var).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; inputs[ti].numel()]);
        for e in entries(inputs[ti].numel(), opts.max_entries) {
            let orig = work[ti].values()[e];
            work[ti].values_mut()[e] = orig + opts.step;
            let up = eval(&work)?;
            work[ti].values_mut()[e] = orig - opts.step;
            let down = eval(&work)?;
            work[ti].values_mut()[e] = orig;
            report.record(ti, e, analytic[e], (up - down) / (2.0 * opts.step), opts.floor);
        }
    }
    Ok(report)
}

/// Same as [`check_gradients`] but perturbs parameters held in a store.
pub fn check_param_gradients<F>(
    store: &mut ParamStore,
    ids: &[ParamId],
    opts: GradCheckOptions,
    f: F,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    store.zero_grad();
    let mut tape = Tape::new();
    let out = f(&mut tape, store)?;
    scalar_of(&tape, out)?;
    tape.backward(out, store)?;
    let analytic: Vec<Vec<f64>> = ids.iter().map(|&id| store.get(id).grad.clone()).collect();
    store.zero_grad();

    let mut report = GradCheckReport::default();
    for (ti, &id) in ids.iter().enumerate() {
        for e in entries(store.get(id).value.numel(), opts.max_entries) {
            let orig = store.get(id).value.values()[e];
            store.get_mut(id).value.values_mut()[e] = orig + opts.step;
            let mut t_up = Tape::new();
            let v_up = f(&mut t_up, store)?;
            let up = scalar_of(&t_up, v_up)?;
            store.get_mut(id).value.values_mut()[e] = orig - opts.step;
            let mut t_down = Tape::new();
            let v_down = f(&mut t_down, store)?;
            let down = scalar_of(&t_down, v_down)?;
            store.get_mut(id).value.values_mut()[e] = orig;
            report.record(ti, e, analytic[ti][e], (up - down) / (2.0 * opts.step), opts.floor);
        }
    }
    Ok(report)
}
