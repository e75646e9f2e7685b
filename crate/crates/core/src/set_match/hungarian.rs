use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slot → gold alignment. `mapping[i]` is the gold index taken by slot `i`, or `None` for NA.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub mapping: Vec<Option<usize>>,
    pub total_cost: f64,
}

impl Assignment {
    /// Checks that every gold in `0..golds` is taken by exactly one slot.
    pub fn validate(&self, slots: usize, golds: usize) -> Result<()> {
        if self.mapping.len() != slots {
            return Err(Error::Contract(format!("assignment covers {} slots, expected {slots}", self.mapping.len())));
        }
        let mut seen = vec![false; golds];
        for g in self.mapping.iter().flatten() {
            match seen.get_mut(*g) {
                None => return Err(Error::Contract(format!("assignment references missing gold {g}"))),
                Some(true) => return Err(Error::Contract(format!("gold {g} assigned twice"))),
                Some(s) => *s = true,
            }
        }
        if let Some(g) = seen.iter().position(|s| !s) {
            return Err(Error::Contract(format!("gold {g} left unassigned")));
        }
        Ok(())
    }
}

/// Minimum-cost injection of the m gold columns into the k slot rows of `cost` (k×m, k ≥ m).
///
/// Shortest augmenting paths with row/column potentials; O(m²k) time.
pub fn hungarian(cost: &[Vec<f64>]) -> Result<Assignment> {
    let slots = cost.len();
    let golds = cost.first().map_or(0, Vec::len);
    if cost.iter().any(|r| r.len() != golds) {
        return Err(Error::dim("hungarian", "ragged cost matrix"));
    }
    if golds > slots {
        return Err(Error::Capacity { slots, golds });
    }
    if cost.iter().flatten().any(|c| !c.is_finite()) {
        return Err(Error::Numeric("hungarian cost matrix contains non-finite entries".into()));
    }

    // Golds are the rows being assigned (1-based), slots the columns; index 0 is a sentinel.
    let at = |g: usize, s: usize| cost[s - 1][g - 1];
    let mut u = vec![0.0; golds + 1];
    let mut v = vec![0.0; slots + 1];
    let mut owner = vec![0usize; slots + 1];
    let mut way = vec![0usize; slots + 1];
    for g in 1..=golds {
        owner[0] = g;
        let mut col = 0usize;
        let mut min_reduced = vec![f64::INFINITY; slots + 1];
        let mut used = vec![false; slots + 1];
        loop {
            used[col] = true;
            let row = owner[col];
            let mut delta = f64::INFINITY;
            let mut next = 0usize;
            for s in 1..=slots {
                if used[s] {
                    continue;
                }
                let reduced = at(row, s) - u[row] - v[s];
                if reduced < min_reduced[s] {
                    min_reduced[s] = reduced;
                    way[s] = col;
                }
                if min_reduced[s] < delta {
                    delta = min_reduced[s];
                    next = s;
                }
            }
            for s in 0..=slots {
                if used[s] {
                    u[owner[s]] += delta;
                    v[s] -= delta;
                } else {
                    min_reduced[s] -= delta;
                }
            }
            col = next;
            if owner[col] == 0 {
                break;
            }
        }
        loop {
            let prev = way[col];
            owner[col] = owner[prev];
            col = prev;
            if col == 0 {
                break;
            }
        }
    }

    let mut mapping = vec![None; slots];
    let mut total_cost = 0.0;
    for s in 1..=slots {
        if owner[s] != 0 {
            mapping[s - 1] = Some(owner[s] - 1);
            total_cost += at(owner[s], s);
        }
    }
    Ok(Assignment { mapping, total_cost })
}
