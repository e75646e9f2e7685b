//! Iterative slot refinement against token features.
//!
//! Two attention variants are supported: the classic competitive softmax (softmax over
//! slots for every token, then per-slot renormalization over tokens) and an
//! optimal-transport variant that balances a cosine-similarity plan with Sinkhorn after
//! sharpening its entropy.

mod sinkhorn;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{gru_cell, GruParams, ParamGroup, ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};

pub use sinkhorn::{
    entropy_gradient, mesh, mesh_costs, plan_entropy, sinkhorn, sinkhorn_plan, MeshOptions, MeshRun, Scalar,
    SinkhornOptions, SinkhornRun, SinkhornStatus,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Softmax,
    #[serde(alias = "ot")]
    OptimalTransport,
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "softmax" => Ok(Variant::Softmax),
            "ot" | "optimal_transport" => Ok(Variant::OptimalTransport),
            other => Err(Error::Config(format!("unknown attention variant {other:?} (softmax|ot)"))),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Softmax => "softmax",
            Variant::OptimalTransport => "ot",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlotAttentionConfig {
    pub num_slots: usize,
    pub iterations: usize,
    pub variant: Variant,
    pub sinkhorn: SinkhornOptions,
    pub mesh: MeshOptions,
    pub slot_dropout: f64,
    /// Layer-normalize slots before projecting queries.
    pub layer_norm: bool,
}

impl Default for SlotAttentionConfig {
    fn default() -> Self {
        SlotAttentionConfig {
            num_slots: 15,
            iterations: 3,
            variant: Variant::OptimalTransport,
            sinkhorn: SinkhornOptions::default(),
            mesh: MeshOptions::default(),
            slot_dropout: 0.2,
            layer_norm: false,
        }
    }
}

/// Learned initial slots, projections and the GRU used for the slot update.
#[derive(Clone, Copy, Debug)]
pub struct SlotAttentionParams {
    pub slots_init: ParamId,
    pub w_q: ParamId,
    pub w_k: ParamId,
    pub w_v: ParamId,
    pub gru: GruParams,
}

impl SlotAttentionParams {
    pub fn init<R: Rng>(store: &mut ParamStore, d: usize, num_slots: usize, rng: &mut R) -> Result<Self> {
        let bound = 1.0 / (d as f64).sqrt();
        let g = ParamGroup::Decoder;
        Ok(SlotAttentionParams {
            slots_init: store.add_uniform("slots.init", g, &[num_slots, d], bound, rng)?,
            w_q: store.add_uniform("slots.w_q", g, &[d, d], bound, rng)?,
            w_k: store.add_uniform("slots.w_k", g, &[d, d], bound, rng)?,
            w_v: store.add_uniform("slots.w_v", g, &[d, d], bound, rng)?,
            gru: GruParams::init(store, "slots.gru", d, g, rng)?,
        })
    }

    pub fn ids(&self) -> Vec<ParamId> {
        let mut ids = vec![self.slots_init, self.w_q, self.w_k, self.w_v];
        ids.extend(self.gru.ids());
        ids
    }
}

/// Attention of every slot over the tokens at one refinement iteration (k×n).
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionMap {
    pub attention: Tensor,
    pub variant: Variant,
    /// 1-based refinement iteration.
    pub iteration: usize,
}

/// Final slots plus everything recorded while refining them.
pub struct SlotBank {
    pub slots: Var,
    pub iteration: usize,
    pub maps: Vec<AttentionMap>,
    pub sinkhorn: Vec<SinkhornStatus>,
}

/// `Q = Z·W_Q`, `K = H·W_K`, `V = H·W_V`.
pub fn project_qkv(
    tape: &mut Tape,
    store: &ParamStore,
    p: &SlotAttentionParams,
    z: Var,
    h: Var,
) -> Result<(Var, Var, Var)> {
    let q = project(tape, store, z, p.w_q)?;
    let k = project(tape, store, h, p.w_k)?;
    let v = project(tape, store, h, p.w_v)?;
    Ok((q, k, v))
}

fn project(tape: &mut Tape, store: &ParamStore, x: Var, w: ParamId) -> Result<Var> {
    let w = tape.param(store, w);
    tape.matmul(x, w)
}

/// Competitive attention: logits `QKᵀ/√d`, softmax over slots per token, then each slot's
/// weights renormalized over tokens.
pub fn softmax_attention(tape: &mut Tape, q: Var, k: Var) -> Result<Var> {
    let d = tape.value(q).cols();
    let logits = tape.matmul_bt(q, k)?;
    let logits = tape.scale(logits, 1.0 / (d as f64).sqrt());
    let per_token = tape.softmax_cols(logits)?;
    tape.normalize_rows(per_token)
}

/// Cosine similarity between every query row and key row.
pub fn cosine_cost(tape: &mut Tape, q: Var, k: Var) -> Result<Var> {
    let qn = tape.l2_normalize_rows(q)?;
    let kn = tape.l2_normalize_rows(k)?;
    tape.matmul_bt(qn, kn)
}

/// Optimal-transport attention: cosine cost, entropy sharpening, then Sinkhorn.
pub fn ot_attention(
    tape: &mut Tape,
    q: Var,
    k: Var,
    mesh_opts: &MeshOptions,
    opts: &SinkhornOptions,
) -> Result<(Var, SinkhornStatus)> {
    let cost = cosine_cost(tape, q, k)?;
    let sharpened = mesh(tape, cost, mesh_opts, opts)?;
    sinkhorn(tape, sharpened, opts)
}

/// Refines `init` (k×d) against token features `h` (n×d) for `cfg.iterations` steps.
///
/// Dropout with rate `cfg.slot_dropout` is applied to the slot states between
/// iterations when `dropout_rng` is given.
pub fn run_slot_attention<R: Rng>(
    tape: &mut Tape,
    store: &ParamStore,
    p: &SlotAttentionParams,
    h: Var,
    init: Var,
    cfg: &SlotAttentionConfig,
    mut dropout_rng: Option<&mut R>,
) -> Result<SlotBank> {
    if cfg.iterations == 0 {
        return Err(Error::Config("slot attention needs at least one iteration".into()));
    }
    let d = tape.value(h).cols();
    if tape.value(init).cols() != d {
        return Err(Error::dim(
            "run_slot_attention",
            format!("slot width {} vs token width {d}", tape.value(init).cols()),
        ));
    }
    let keys = project(tape, store, h, p.w_k)?;
    let values = project(tape, store, h, p.w_v)?;
    let mut z = init;
    let mut maps = Vec::with_capacity(cfg.iterations);
    let mut statuses = Vec::new();
    for it in 1..=cfg.iterations {
        let zq = if cfg.layer_norm { tape.layer_norm_rows(z)? } else { z };
        let q = project(tape, store, zq, p.w_q)?;
        let attn = match cfg.variant {
            Variant::Softmax => softmax_attention(tape, q, keys)?,
            Variant::OptimalTransport => {
                let (a, status) = ot_attention(tape, q, keys, &cfg.mesh, &cfg.sinkhorn)?;
                statuses.push(status);
                a
            }
        };
        maps.push(AttentionMap { attention: tape.value(attn).clone(), variant: cfg.variant, iteration: it });
        let updates = tape.matmul(attn, values)?;
        z = gru_cell(tape, store, &p.gru, z, updates)?;
        if it < cfg.iterations && cfg.slot_dropout > 0.0 {
            if let Some(rng) = dropout_rng.as_deref_mut() {
                let keep = 1.0 - cfg.slot_dropout;
                let shape = tape.value(z).shape().to_vec();
                let mask: Vec<f64> = (0..tape.value(z).numel())
                    .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
                    .collect();
                z = tape.mul_const(z, Tensor::new(shape, mask)?)?;
            }
        }
    }
    Ok(SlotBank { slots: z, iteration: cfg.iterations, maps, sinkhorn: statuses })
}
