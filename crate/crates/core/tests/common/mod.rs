#![allow(dead_code)]

pub mod ops;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slotrte::autodiff::{Tape, Tensor, Var};
use slotrte::Result;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform entries in [lo, hi].
pub fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(lo..=hi)).collect()).unwrap()
}

/// `sum(v ⊙ w)`: a scalar whose gradient exercises every output entry.
pub fn weighted_sum(tape: &mut Tape, v: Var, w: &Tensor) -> Result<Var> {
    let p = tape.mul_const(v, w.clone())?;
    Ok(tape.sum(p))
}

pub fn assert_close(a: f64, b: f64, tol: f64, what: &str) {
    assert!((a - b).abs() <= tol, "{what}: {a} vs {b} (tol {tol})");
}

pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, left: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if left.is_empty() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..left.len() {
            let x = left.remove(i);
            prefix.push(x);
            rec(prefix, left, out);
            prefix.pop();
            left.insert(i, x);
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut (0..n).collect(), &mut out);
    out
}

/// Minimum over all injections of `m` columns into `k ≥ m` rows.
pub fn brute_force_assignment(cost: &[Vec<f64>]) -> f64 {
    let k = cost.len();
    let m = cost.first().map_or(0, Vec::len);
    let mut best = f64::INFINITY;
    for perm in permutations(k) {
        let total: f64 = (0..m).map(|j| cost[perm[j]][j]).sum();
        best = best.min(total);
    }
    if m == 0 {
        0.0
    } else {
        best
    }
}
