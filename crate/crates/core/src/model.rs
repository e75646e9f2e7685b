//! The full extractor: encoder, slot attention and heads sharing one parameter store.

use rand::Rng;

use crate::autodiff::{ParamStore, Tape, Var};
use crate::encoder::{encode, EncodedSequence, EncoderParams};
use crate::error::{Error, Result};
use crate::heads::{
    collect_predictions, decode, run_heads, DecodedTriple, HeadOutputs, HeadParams, InvertedSpan, TriplePrediction,
};
use crate::set_match::{match_predictions, set_loss, Assignment, GoldTriple};
use crate::slot_attn::{run_slot_attention, AttentionMap, SinkhornStatus, SlotAttentionConfig, SlotAttentionParams};

#[derive(Clone)]
pub struct Model {
    pub store: ParamStore,
    pub encoder: EncoderParams,
    pub slot_attn: SlotAttentionParams,
    pub heads: HeadParams,
    pub attention: SlotAttentionConfig,
    pub hidden: usize,
}

/// Tape handles produced by one forward pass.
pub struct ModelOutput {
    pub encoded: EncodedSequence,
    pub slots: Var,
    pub heads: HeadOutputs,
    pub maps: Vec<AttentionMap>,
    pub sinkhorn: Vec<SinkhornStatus>,
}

/// Loss of one sentence together with the forward pass and the matching it used.
pub struct SentenceLoss {
    pub loss: Var,
    pub output: ModelOutput,
    pub assignment: Assignment,
}

/// Inference result for one sentence.
#[derive(Clone, Debug)]
pub struct Prediction {
    pub slots: Vec<TriplePrediction>,
    pub maps: Vec<AttentionMap>,
    pub sinkhorn: Vec<SinkhornStatus>,
}

impl Model {
    /// Parameters are created in a fixed order (encoder, slot attention, heads), so a seed
    /// fully determines the initialization.
    pub fn new<R: Rng>(
        vocab_size: usize,
        hidden: usize,
        num_classes: usize,
        attention: SlotAttentionConfig,
        rng: &mut R,
    ) -> Result<Self> {
        if hidden == 0 || vocab_size == 0 || attention.num_slots == 0 {
            return Err(Error::Config("hidden size, vocabulary and slot count must be positive".into()));
        }
        let mut store = ParamStore::new();
        let encoder = EncoderParams::init(&mut store, vocab_size, hidden, rng)?;
        let slot_attn = SlotAttentionParams::init(&mut store, hidden, attention.num_slots, rng)?;
        let heads = HeadParams::init(&mut store, hidden, num_classes, rng)?;
        Ok(Model { store, encoder, slot_attn, heads, attention, hidden })
    }

    pub fn num_slots(&self) -> usize {
        self.attention.num_slots
    }

    pub fn num_relations(&self) -> usize {
        self.heads.num_classes - 1
    }

    /// `ids` includes both boundary markers. Slot dropout is active only when `dropout` is given.
    pub fn forward<R: Rng>(&self, tape: &mut Tape, ids: &[usize], dropout: Option<&mut R>) -> Result<ModelOutput> {
        if ids.len() < 3 {
            return Err(Error::Contract(format!("sentence of {} tokens has no body", ids.len())));
        }
        let encoded = encode(tape, &self.store, &self.encoder, ids)?;
        let init = tape.param(&self.store, self.slot_attn.slots_init);
        let bank = run_slot_attention(tape, &self.store, &self.slot_attn, encoded.h, init, &self.attention, dropout)?;
        let heads = run_heads(tape, &self.store, &self.heads, bank.slots, encoded.h)?;
        Ok(ModelOutput { encoded, slots: bank.slots, heads, maps: bank.maps, sinkhorn: bank.sinkhorn })
    }

    /// Forward pass, optimal matching against `golds`, and the matched set loss.
    pub fn sentence_loss<R: Rng>(
        &self,
        tape: &mut Tape,
        ids: &[usize],
        golds: &[GoldTriple],
        dropout: Option<&mut R>,
    ) -> Result<SentenceLoss> {
        for g in golds {
            g.validate(ids.len(), self.num_relations())?;
        }
        let output = self.forward(tape, ids, dropout)?;
        let preds = collect_predictions(tape, &output.heads);
        let assignment = match_predictions(&preds, golds)?;
        let loss = set_loss(tape, &output.heads, golds, &assignment)?;
        Ok(SentenceLoss { loss, output, assignment })
    }

    pub fn predict(&self, ids: &[usize]) -> Result<Prediction> {
        let mut tape = Tape::new();
        let out = self.forward::<rand_chacha::ChaCha8Rng>(&mut tape, ids, None)?;
        Ok(Prediction { slots: collect_predictions(&tape, &out.heads), maps: out.maps, sinkhorn: out.sinkhorn })
    }
}

/// Decodes every slot and removes duplicate triples, keeping the highest-scoring copy.
pub fn decode_set(slots: &[TriplePrediction], n: usize, inverted: InvertedSpan) -> Vec<DecodedTriple> {
    let mut out: Vec<DecodedTriple> = Vec::new();
    for t in slots.iter().filter_map(|p| decode(p, n, inverted)) {
        match out.iter_mut().find(|o| o.key() == t.key()) {
            Some(o) if o.score < t.score => *o = t,
            Some(_) => {}
            None => out.push(t),
        }
    }
    out
}
