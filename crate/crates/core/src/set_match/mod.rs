//! Hungarian alignment of slot predictions to gold triples and the matched set loss.

mod hungarian;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::heads::{HeadOutputs, TriplePrediction};

pub use hungarian::{hungarian, Assignment};

/// Probabilities are floored here before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

/// Annotated triple with inclusive token spans (indices count the start marker as 0).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GoldTriple {
    pub ss: usize,
    pub se: usize,
    pub rel: usize,
    pub os: usize,
    pub oe: usize,
}

impl GoldTriple {
    pub fn subject(&self) -> (usize, usize) {
        (self.ss, self.se)
    }

    pub fn object(&self) -> (usize, usize) {
        (self.os, self.oe)
    }

    pub fn targets(&self) -> [usize; 4] {
        [self.ss, self.se, self.os, self.oe]
    }

    /// Spans must lie strictly inside the markers of an n-token sentence and `rel < t`.
    pub fn validate(&self, n: usize, relations: usize) -> Result<()> {
        let inside = |a: usize, b: usize| 0 < a && a <= b && b + 1 < n;
        if !inside(self.ss, self.se) || !inside(self.os, self.oe) {
            return Err(Error::Contract(format!("triple {self:?} has spans outside the body of a {n}-token sentence")));
        }
        if self.rel >= relations {
            return Err(Error::Contract(format!("relation {} outside inventory of {relations}", self.rel)));
        }
        Ok(())
    }
}

fn nll(p: f64) -> f64 {
    -p.max(PROB_FLOOR).ln()
}

/// `cost[i][j]`: summed negative log-likelihood of gold `j` under slot `i`'s five distributions.
pub fn pairwise_cost(preds: &[TriplePrediction], golds: &[GoldTriple]) -> Vec<Vec<f64>> {
    preds
        .iter()
        .map(|p| {
            golds
                .iter()
                .map(|g| {
                    nll(p.p_rs[g.rel]) + nll(p.p_ss[g.ss]) + nll(p.p_se[g.se]) + nll(p.p_os[g.os]) + nll(p.p_oe[g.oe])
                })
                .collect()
        })
        .collect()
}

/// Optimal slot → gold alignment for one sentence.
pub fn match_predictions(preds: &[TriplePrediction], golds: &[GoldTriple]) -> Result<Assignment> {
    hungarian(&pairwise_cost(preds, golds))
}

/// Matched set loss: relation NLL for every slot (NA target when unmatched) plus the four
/// span NLLs for slots matched to a gold. The assignment is treated as a constant.
pub fn set_loss(tape: &mut Tape, out: &HeadOutputs, golds: &[GoldTriple], assignment: &Assignment) -> Result<Var> {
    let (slots, classes) = tape.value(out.relation).dims2()?;
    assignment.validate(slots, golds.len())?;
    let na = classes - 1;
    let rel_picks: Vec<(usize, usize)> =
        assignment.mapping.iter().enumerate().map(|(i, m)| (i, m.map_or(na, |g| golds[g].rel))).collect();
    let mut loss = tape.nll_pick(out.relation, &rel_picks, PROB_FLOOR)?;
    for (h, &span) in out.spans.iter().enumerate() {
        let picks: Vec<(usize, usize)> =
            assignment.mapping.iter().enumerate().filter_map(|(i, m)| m.map(|g| (i, golds[g].targets()[h]))).collect();
        if picks.is_empty() {
            continue;
        }
        let term = tape.nll_pick(span, &picks, PROB_FLOOR)?;
        loss = tape.add(loss, term)?;
    }
    Ok(loss)
}
