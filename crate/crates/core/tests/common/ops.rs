use slotrte::autodiff::gradcheck::{check_gradients, GradCheckOptions};
use slotrte::autodiff::{Tape, Tensor, Var};
use slotrte::Result;

use super::{rng, uniform, weighted_sum};

/// One differentiable op under test: input shapes, input range and the op itself.
pub struct OpCase {
    pub name: &'static str,
    pub shapes: Vec<Vec<usize>>,
    pub positive: bool,
    pub f: fn(&mut Tape, &[Var]) -> Result<Var>,
}

pub fn op_cases() -> Vec<OpCase> {
    fn case(
        name: &'static str,
        shapes: &[&[usize]],
        positive: bool,
        f: fn(&mut Tape, &[Var]) -> Result<Var>,
    ) -> OpCase {
        OpCase { name, shapes: shapes.iter().map(|s| s.to_vec()).collect(), positive, f }
    }
    vec![
        case("matmul", &[&[3, 4], &[4, 2]], false, |t, v| t.matmul(v[0], v[1])),
        case("matmul_bt", &[&[3, 4], &[2, 4]], false, |t, v| t.matmul_bt(v[0], v[1])),
        case("add", &[&[2, 3], &[2, 3]], false, |t, v| t.add(v[0], v[1])),
        case("sub", &[&[2, 3], &[2, 3]], false, |t, v| t.sub(v[0], v[1])),
        case("mul", &[&[2, 3], &[2, 3]], false, |t, v| t.mul(v[0], v[1])),
        case("add_row", &[&[3, 4], &[4]], false, |t, v| t.add_row(v[0], v[1])),
        case("scale", &[&[2, 3]], false, |t, v| Ok(t.scale(v[0], -1.7))),
        case("tanh", &[&[2, 3]], false, |t, v| Ok(t.tanh(v[0]))),
        case("sigmoid", &[&[2, 3]], false, |t, v| Ok(t.sigmoid(v[0]))),
        case("exp", &[&[2, 3]], false, |t, v| Ok(t.exp(v[0]))),
        case("log", &[&[2, 3]], true, |t, v| t.log(v[0])),
        case("softmax_rows", &[&[3, 5]], false, |t, v| t.softmax_rows(v[0])),
        case("softmax_cols", &[&[3, 5]], false, |t, v| t.softmax_cols(v[0])),
        case("normalize_rows", &[&[3, 4]], true, |t, v| t.normalize_rows(v[0])),
        case("l2_normalize_rows", &[&[3, 4]], false, |t, v| t.l2_normalize_rows(v[0])),
        case("layer_norm_rows", &[&[3, 5]], false, |t, v| t.layer_norm_rows(v[0])),
        case("transpose", &[&[2, 3]], false, |t, v| t.transpose(v[0])),
        case("reshape", &[&[2, 6]], false, |t, v| t.reshape(v[0], &[3, 4])),
        case("gather_rows", &[&[5, 3]], false, |t, v| t.gather_rows(v[0], &[4, 0, 4, 2])),
        case("pair_sum", &[&[3, 2], &[4, 2]], false, |t, v| t.pair_sum(v[0], v[1])),
        case("nll_pick", &[&[3, 4]], true, |t, v| t.nll_pick(v[0], &[(0, 1), (2, 3), (0, 1)], 1e-12)),
    ]
}

/// Worst relative error per op over `seeds` random instances.
pub fn run_op_sweep(seeds: u64) -> Vec<(&'static str, f64)> {
    let opts = GradCheckOptions::default();
    let mut worst = Vec::new();
    for case in op_cases() {
        let mut max_err: f64 = 0.0;
        for seed in 0..seeds {
            let mut r = rng(seed * 31 + 7);
            let (lo, hi) = if case.positive { (0.1, 1.0) } else { (-1.0, 1.0) };
            let inputs: Vec<Tensor> = case.shapes.iter().map(|s| uniform(&mut r, s, lo, hi)).collect();
            // weights for the scalarizing sum, fixed per seed
            let mut probe = Tape::new();
            let vars: Vec<Var> = inputs.iter().map(|x| probe.leaf(x.clone(), true)).collect();
            let out = (case.f)(&mut probe, &vars).unwrap();
            let w = uniform(&mut r, probe.value(out).shape(), -1.0, 1.0);
            let f = case.f;
            let rep = check_gradients(&inputs, opts, |tape, v| {
                let y = f(tape, v)?;
                weighted_sum(tape, y, &w)
            })
            .unwrap();
            max_err = max_err.max(rep.max_rel_error);
        }
        worst.push((case.name, max_err));
    }
    worst
}
