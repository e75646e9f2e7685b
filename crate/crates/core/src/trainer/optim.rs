use crate::autodiff::{ParamGroup, ParamStore};
use crate::error::{Error, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Linear warmup from 0 to `base_lr` over `warmup_rate · total_steps`, then linear decay to
/// `lr_decay · base_lr` at `total_steps`.
pub fn lr_schedule(step: usize, total_steps: usize, base_lr: f64, warmup_rate: f64, lr_decay: f64) -> f64 {
    let total = total_steps as f64;
    let step = (step as f64).min(total);
    let warm = warmup_rate * total;
    if step < warm {
        return base_lr * step / warm;
    }
    if total <= warm {
        return base_lr;
    }
    let progress = (step - warm) / (total - warm);
    base_lr * (1.0 - (1.0 - lr_decay) * progress)
}

/// Learning rates and regularization for one update.
#[derive(Clone, Copy, Debug)]
pub struct StepSettings {
    pub encoder_lr: f64,
    pub decoder_lr: f64,
    pub weight_decay: f64,
    pub max_grad_norm: f64,
}

/// What clipping did to the gradient.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClipReport {
    pub norm: f64,
    pub scale: f64,
}

/// Rescales all gradients so their global L2 norm is at most `max_norm`.
pub fn clip_grad_norm(store: &mut ParamStore, max_norm: f64) -> Result<ClipReport> {
    let norm = store.grad_norm();
    if !norm.is_finite() {
        return Err(Error::Numeric(format!("gradient norm is {norm}")));
    }
    let scale = if norm > max_norm { max_norm / norm } else { 1.0 };
    if scale < 1.0 {
        store.scale_grads(scale);
    }
    Ok(ClipReport { norm, scale })
}

/// AdamW with bias correction, decoupled weight decay and encoder/decoder learning rates.
#[derive(Clone, Debug, Default)]
pub struct AdamW {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    steps: u64,
}

impl AdamW {
    pub fn new(store: &ParamStore) -> Self {
        AdamW {
            m: store.iter().map(|p| vec![0.0; p.value.numel()]).collect(),
            v: store.iter().map(|p| vec![0.0; p.value.numel()]).collect(),
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Clips, then applies one update from the gradients accumulated in `store`. On a
    /// non-finite gradient nothing is modified.
    pub fn step(&mut self, store: &mut ParamStore, s: &StepSettings) -> Result<ClipReport> {
        if let Some(p) = store.iter().find(|p| p.grad.iter().any(|g| !g.is_finite())) {
            return Err(Error::Numeric(format!("non-finite gradient in {}", p.name)));
        }
        let clip = clip_grad_norm(store, s.max_grad_norm)?;
        self.steps += 1;
        let t = self.steps as i32;
        let bc1 = 1.0 - BETA1.powi(t);
        let bc2 = 1.0 - BETA2.powi(t);
        for (idx, p) in store.iter_mut().enumerate() {
            let lr = match p.group {
                ParamGroup::Encoder => s.encoder_lr,
                ParamGroup::Decoder => s.decoder_lr,
            };
            let (m, v) = (&mut self.m[idx], &mut self.v[idx]);
            let decay = 1.0 - lr * s.weight_decay;
            for ((w, g), (mi, vi)) in p.value.values_mut().iter_mut().zip(&p.grad).zip(m.iter_mut().zip(v.iter_mut())) {
                *mi = BETA1 * *mi + (1.0 - BETA1) * g;
                *vi = BETA2 * *vi + (1.0 - BETA2) * g * g;
                let update = (*mi / bc1) / ((*vi / bc2).sqrt() + ADAM_EPS);
                *w = *w * decay - lr * update;
            }
        }
        Ok(clip)
    }
}
