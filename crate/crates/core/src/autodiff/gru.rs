use rand::Rng;

use super::params::{ParamGroup, ParamId, ParamStore};
use super::{Tape, Var};
use crate::error::{Error, Result};

/// Update, reset and candidate gate weights of a GRU cell.
///
/// Input weights `w_*` and recurrent weights `u_*` are d×d (row-vector convention,
/// `x · W`), biases are length d.
#[derive(Clone, Copy, Debug)]
pub struct GruParams {
    pub w_z: ParamId,
    pub u_z: ParamId,
    pub b_z: ParamId,
    pub w_r: ParamId,
    pub u_r: ParamId,
    pub b_r: ParamId,
    pub w_h: ParamId,
    pub u_h: ParamId,
    pub b_h: ParamId,
}

impl GruParams {
    pub fn init<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        d: usize,
        group: ParamGroup,
        rng: &mut R,
    ) -> Result<Self> {
        let bound = 1.0 / (d as f64).sqrt();
        let mut w =
            |name: &str, rng: &mut R| store.add_uniform(&format!("{prefix}.{name}"), group, &[d, d], bound, rng);
        let (w_z, u_z) = (w("w_z", rng)?, w("u_z", rng)?);
        let (w_r, u_r) = (w("w_r", rng)?, w("u_r", rng)?);
        let (w_h, u_h) = (w("w_h", rng)?, w("u_h", rng)?);
        let b_z = store.add_zeros(&format!("{prefix}.b_z"), group, &[d])?;
        let b_r = store.add_zeros(&format!("{prefix}.b_r"), group, &[d])?;
        let b_h = store.add_zeros(&format!("{prefix}.b_h"), group, &[d])?;
        Ok(GruParams { w_z, u_z, b_z, w_r, u_r, b_r, w_h, u_h, b_h })
    }

    pub fn ids(&self) -> [ParamId; 9] {
        [self.w_z, self.u_z, self.b_z, self.w_r, self.u_r, self.b_r, self.w_h, self.u_h, self.b_h]
    }
}

fn gate(tape: &mut Tape, store: &ParamStore, x: Var, h: Var, w: ParamId, u: ParamId, b: ParamId) -> Result<Var> {
    let (w, u, b) = (tape.param(store, w), tape.param(store, u), tape.param(store, b));
    let xw = tape.matmul(x, w)?;
    let hu = tape.matmul(h, u)?;
    let s = tape.add(xw, hu)?;
    tape.add_row(s, b)
}

/// One GRU step applied independently to every row:
/// `z = σ(xW_z + hU_z + b_z)`, `r = σ(xW_r + hU_r + b_r)`,
/// `h̃ = tanh(xW_h + (r⊙h)U_h + b_h)`, `h' = (1−z)⊙h + z⊙h̃`.
pub fn gru_cell(tape: &mut Tape, store: &ParamStore, p: &GruParams, h_prev: Var, x: Var) -> Result<Var> {
    if tape.value(h_prev).shape() != tape.value(x).shape() {
        return Err(Error::dim(
            "gru_cell",
            format!("state {:?} vs input {:?}", tape.value(h_prev).shape(), tape.value(x).shape()),
        ));
    }
    let z_pre = gate(tape, store, x, h_prev, p.w_z, p.u_z, p.b_z)?;
    let z = tape.sigmoid(z_pre);
    let r_pre = gate(tape, store, x, h_prev, p.w_r, p.u_r, p.b_r)?;
    let r = tape.sigmoid(r_pre);
    let rh = tape.mul(r, h_prev)?;
    let cand_pre = gate(tape, store, x, rh, p.w_h, p.u_h, p.b_h)?;
    let cand = tape.tanh(cand_pre);
    let delta = tape.sub(cand, h_prev)?;
    let step = tape.mul(z, delta)?;
    tape.add(h_prev, step)
}
