//! Optimization loop, AdamW, learning-rate schedule, checkpoints and run records.

mod config;
mod optim;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{NamedTensor, Tape};
use crate::data::{Example, HeadWord, RelationInventory};
use crate::encoder::Vocabulary;
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::model::Model;
use crate::set_match::GoldTriple;

pub use config::TrainConfig;
pub use optim::{clip_grad_norm, lr_schedule, AdamW, ClipReport, StepSettings, ADAM_EPS, BETA1, BETA2};

/// Width of token and slot vectors used by [`train`] unless overridden.
pub const DEFAULT_HIDDEN: usize = 64;

pub const CHECKPOINT_FORMAT: &str = "slotrte-checkpoint-v1";

/// Everything needed to rebuild a trained model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub config: TrainConfig,
    pub hidden: usize,
    pub vocab: Vec<String>,
    pub relations: Vec<String>,
    pub params: BTreeMap<String, NamedTensor>,
}

impl Checkpoint {
    pub fn from_model(model: &Model, config: &TrainConfig, vocab: &Vocabulary, relations: &RelationInventory) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            config: config.clone(),
            hidden: model.hidden,
            vocab: vocab.tokens().to_vec(),
            relations: relations.labels().to_vec(),
            params: model.store.to_named(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let ck: Checkpoint = serde_json::from_str(&text)?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::Config(format!("unsupported checkpoint format {:?}", ck.format)));
        }
        Ok(ck)
    }

    pub fn vocabulary(&self) -> Result<Vocabulary> {
        Vocabulary::from_list(self.vocab.clone())
    }

    pub fn relations(&self) -> Result<RelationInventory> {
        RelationInventory::new(self.relations.clone())
    }

    /// Rebuilds the model with the stored parameter values.
    pub fn model(&self) -> Result<Model> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut model =
            Model::new(self.vocab.len(), self.hidden, self.config.num_classes, self.config.slot_attention(), &mut rng)?;
        model.store.load_named(&self.params)?;
        Ok(model)
    }
}

/// One row of the run record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean matched set loss per training sentence.
    pub train_loss: f64,
    pub valid_f1_exact: f64,
    pub valid_f1_partial: f64,
    pub wall_time_s: f64,
    pub mean_grad_norm: f64,
    pub sinkhorn_calls: usize,
    pub sinkhorn_unconverged: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub epochs: Vec<EpochRecord>,
}

impl RunRecord {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.epochs {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let epochs = r.deserialize().collect::<std::result::Result<Vec<EpochRecord>, _>>()?;
        Ok(RunRecord { epochs })
    }
}

/// Statistics of one optimizer step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepStats {
    /// Mean sentence loss over the batch, before the update.
    pub loss: f64,
    pub clip: ClipReport,
    pub sinkhorn_calls: usize,
    pub sinkhorn_unconverged: usize,
}

/// A sentence ready for the model: marker-wrapped ids and gold triples.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub ids: Vec<usize>,
    pub golds: Vec<GoldTriple>,
    pub text: String,
}

pub fn prepare(vocab: &Vocabulary, examples: &[Example]) -> Vec<Prepared> {
    examples
        .iter()
        .map(|ex| Prepared { ids: vocab.sentence(&ex.tokens).ids, golds: ex.triples.clone(), text: ex.text.clone() })
        .collect()
}

/// Model, optimizer state and random streams of one run.
pub struct Trainer {
    pub model: Model,
    pub config: TrainConfig,
    optimizer: AdamW,
    dropout_rng: ChaCha8Rng,
    shuffle_rng: ChaCha8Rng,
    total_steps: usize,
}

impl Trainer {
    /// `total_steps` sets the length of the learning-rate schedule.
    pub fn new(config: &TrainConfig, vocab_size: usize, hidden: usize, total_steps: usize) -> Result<Self> {
        config.validate()?;
        let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed);
        let model = Model::new(vocab_size, hidden, config.num_classes, config.slot_attention(), &mut init_rng)?;
        let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed);
        dropout_rng.set_stream(1);
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
        shuffle_rng.set_stream(2);
        let optimizer = AdamW::new(&model.store);
        Ok(Trainer {
            model,
            config: config.clone(),
            optimizer,
            dropout_rng,
            shuffle_rng,
            total_steps: total_steps.max(1),
        })
    }

    pub fn steps_taken(&self) -> u64 {
        self.optimizer.steps()
    }

    pub fn settings(&self) -> StepSettings {
        let step = self.optimizer.steps() as usize + 1;
        let c = &self.config;
        StepSettings {
            encoder_lr: lr_schedule(step, self.total_steps, c.encoder_lr, c.warmup_rate, c.lr_decay),
            decoder_lr: lr_schedule(step, self.total_steps, c.decoder_lr, c.warmup_rate, c.lr_decay),
            weight_decay: c.weight_decay,
            max_grad_norm: c.max_grad_norm,
        }
    }

    /// Forward, match, backward over the batch (gradients averaged), then one AdamW update.
    pub fn step(&mut self, batch: &[&Prepared]) -> Result<StepStats> {
        if batch.is_empty() {
            return Err(Error::Contract("empty batch".into()));
        }
        self.model.store.zero_grad();
        let mut total = 0.0;
        let (mut calls, mut unconverged) = (0, 0);
        for item in batch {
            let mut tape = Tape::new();
            let dropout = if self.config.slot_dropout > 0.0 { Some(&mut self.dropout_rng) } else { None };
            let out = self.model.sentence_loss(&mut tape, &item.ids, &item.golds, dropout)?;
            let loss = tape.value(out.loss).values()[0];
            if !loss.is_finite() {
                for b in batch {
                    log::error!("offending batch sentence: {}", b.text);
                }
                return Err(Error::Numeric(format!("loss is {loss} on sentence {:?}", item.text)));
            }
            total += loss;
            calls += out.output.sinkhorn.len();
            unconverged += out.output.sinkhorn.iter().filter(|s| !s.converged).count();
            tape.backward(out.loss, &mut self.model.store)?;
        }
        self.model.store.scale_grads(1.0 / batch.len() as f64);
        let settings = self.settings();
        let clip = self.optimizer.step(&mut self.model.store, &settings)?;
        Ok(StepStats {
            loss: total / batch.len() as f64,
            clip,
            sinkhorn_calls: calls,
            sinkhorn_unconverged: unconverged,
        })
    }

    /// Seeded shuffle of `0..n` for the next epoch.
    pub fn epoch_order(&mut self, n: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut self.shuffle_rng);
        order
    }
}

/// Knobs of [`train`] that are not part of the config file.
#[derive(Clone, Debug)]
pub struct TrainOptions {
    pub hidden: usize,
    /// Stop once validation exact F1 reaches this value.
    pub stop_at_f1: Option<f64>,
    pub head_word: HeadWord,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions { hidden: DEFAULT_HIDDEN, stop_at_f1: None, head_word: HeadWord::Last }
    }
}

/// Result of a training run; the checkpoint holds the best-validation parameters.
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub record: RunRecord,
    pub best_epoch: usize,
    pub best_f1: f64,
}

/// Trains on `train`, validating on `valid` after every epoch.
pub fn train(
    train: &[Example],
    valid: &[Example],
    relations: &RelationInventory,
    config: &TrainConfig,
    opts: &TrainOptions,
) -> Result<TrainOutcome> {
    config.validate()?;
    if config.num_classes != relations.len() + 1 {
        return Err(Error::Config(format!(
            "num_classes is {} but the corpus has {} relations (+1 for NA)",
            config.num_classes,
            relations.len()
        )));
    }
    let most = train.iter().map(Example::triple_count).max().unwrap_or(0);
    if most > config.num_generated_triples {
        return Err(Error::Config(format!(
            "a training sentence has {most} triples but only {} slots are configured",
            config.num_generated_triples
        )));
    }
    let vocab = Vocabulary::build(train.iter().map(|e| e.tokens.as_slice()))?;
    let data = prepare(&vocab, train);
    let steps_per_epoch = data.len().div_ceil(config.batch_size);
    let mut trainer = Trainer::new(config, vocab.len(), opts.hidden, steps_per_epoch * config.epochs)?;

    let mut record = RunRecord::default();
    let mut best: Option<(f64, usize, BTreeMap<String, NamedTensor>)> = None;
    let start = Instant::now();
    for epoch in 1..=config.epochs {
        let order = trainer.epoch_order(data.len());
        let (mut loss_sum, mut norm_sum, mut calls, mut unconverged) = (0.0, 0.0, 0, 0);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&Prepared> = chunk.iter().map(|&i| &data[i]).collect();
            let s = trainer.step(&batch)?;
            loss_sum += s.loss * batch.len() as f64;
            norm_sum += s.clip.norm;
            calls += s.sinkhorn_calls;
            unconverged += s.sinkhorn_unconverged;
        }
        if unconverged > 0 {
            log::debug!("epoch {epoch}: {unconverged} of {calls} Sinkhorn solves hit the iteration cap");
        }
        let report = evaluate(&trainer.model, &vocab, valid, opts.head_word)?;
        let rec = EpochRecord {
            epoch,
            train_loss: loss_sum / data.len().max(1) as f64,
            valid_f1_exact: report.overall.exact.f1,
            valid_f1_partial: report.overall.partial.f1,
            wall_time_s: start.elapsed().as_secs_f64(),
            mean_grad_norm: norm_sum / steps_per_epoch.max(1) as f64,
            sinkhorn_calls: calls,
            sinkhorn_unconverged: unconverged,
        };
        log::info!(
            "epoch {:>3}  loss {:.4}  valid F1 exact {:.4} partial {:.4}  {:.1}s",
            rec.epoch,
            rec.train_loss,
            rec.valid_f1_exact,
            rec.valid_f1_partial,
            rec.wall_time_s
        );
        let f1 = rec.valid_f1_exact;
        record.epochs.push(rec);
        if best.as_ref().is_none_or(|(b, _, _)| f1 > *b || valid.is_empty()) {
            best = Some((f1, epoch, trainer.model.store.to_named()));
        }
        if opts.stop_at_f1.is_some_and(|t| f1 >= t) {
            break;
        }
    }
    let (best_f1, best_epoch, params) = best.expect("at least one epoch");
    trainer.model.store.load_named(&params)?;
    let checkpoint = Checkpoint::from_model(&trainer.model, config, &vocab, relations);
    Ok(TrainOutcome { checkpoint, record, best_epoch, best_f1 })
}
