use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::slot_attn::{MeshOptions, SinkhornOptions, SlotAttentionConfig, Variant};

/// Training hyperparameters. The config file holds exactly these keys.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    /// Relations plus NA.
    pub num_classes: usize,
    /// Number of slots.
    pub num_generated_triples: usize,
    pub encoder_lr: f64,
    pub decoder_lr: f64,
    pub mesh_lr: f64,
    pub n_mesh_iters: usize,
    pub num_iterations: usize,
    pub slot_dropout: f64,
    pub max_grad_norm: f64,
    pub weight_decay: f64,
    /// Final learning rate as a fraction of the base rate.
    pub lr_decay: f64,
    pub warmup_rate: f64,
    pub seed: u64,
    pub variant: Variant,
    pub sinkhorn_epsilon: f64,
    pub sinkhorn_max_iters: usize,
    pub sinkhorn_tol: f64,
}

impl Default for TrainConfig {
    /// Desk-scale settings for a from-scratch encoder on a ten-relation corpus.
    fn default() -> Self {
        TrainConfig {
            batch_size: 8,
            epochs: 50,
            num_classes: 11,
            num_generated_triples: 15,
            encoder_lr: 1e-3,
            decoder_lr: 2e-3,
            mesh_lr: 6.0,
            n_mesh_iters: 4,
            num_iterations: 3,
            slot_dropout: 0.2,
            max_grad_norm: 2.5,
            weight_decay: 1e-5,
            lr_decay: 0.01,
            warmup_rate: 0.1,
            seed: 42,
            variant: Variant::OptimalTransport,
            sinkhorn_epsilon: 1.0,
            sinkhorn_max_iters: 200,
            sinkhorn_tol: 1e-6,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.batch_size == 0 || self.epochs == 0 {
            return bad("batch_size and epochs must be at least 1".into());
        }
        if self.num_classes < 2 {
            return bad(format!("num_classes {} must cover at least one relation plus NA", self.num_classes));
        }
        if self.num_generated_triples == 0 || self.num_iterations == 0 {
            return bad("num_generated_triples and num_iterations must be at least 1".into());
        }
        for (name, v) in [
            ("encoder_lr", self.encoder_lr),
            ("decoder_lr", self.decoder_lr),
            ("mesh_lr", self.mesh_lr),
            ("max_grad_norm", self.max_grad_norm),
            ("lr_decay", self.lr_decay),
            ("sinkhorn_epsilon", self.sinkhorn_epsilon),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad(format!("weight_decay must be non-negative, got {}", self.weight_decay));
        }
        if !(0.0..1.0).contains(&self.warmup_rate) {
            return bad(format!("warmup_rate {} outside [0, 1)", self.warmup_rate));
        }
        if !(0.0..1.0).contains(&self.slot_dropout) {
            return bad(format!("slot_dropout {} outside [0, 1)", self.slot_dropout));
        }
        if self.sinkhorn_max_iters == 0 || !(self.sinkhorn_tol >= 0.0) {
            return bad("sinkhorn_max_iters must be positive and sinkhorn_tol non-negative".into());
        }
        Ok(())
    }

    pub fn slot_attention(&self) -> SlotAttentionConfig {
        SlotAttentionConfig {
            num_slots: self.num_generated_triples,
            iterations: self.num_iterations,
            variant: self.variant,
            sinkhorn: SinkhornOptions {
                epsilon: self.sinkhorn_epsilon,
                max_iters: self.sinkhorn_max_iters,
                tol: self.sinkhorn_tol,
            },
            mesh: MeshOptions { lr: self.mesh_lr, iters: self.n_mesh_iters },
            slot_dropout: self.slot_dropout,
            layer_norm: false,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let cfg: TrainConfig = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))?)?;
        Ok(())
    }
}
