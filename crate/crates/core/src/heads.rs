//! Span and relation heads turning each refined slot into a candidate triple.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamGroup, ParamId, ParamStore, Tape, Var};
use crate::error::{Error, Result};

/// Pointer head `softmax_j(v · tanh(W_s z_i + W_t h_j))`.
#[derive(Clone, Copy, Debug)]
pub struct SpanHead {
    pub w_slot: ParamId,
    pub w_token: ParamId,
    pub v: ParamId,
}

/// Subject-start, subject-end, object-start, object-end heads plus the relation classifier.
#[derive(Clone, Copy, Debug)]
pub struct HeadParams {
    pub spans: [SpanHead; 4],
    /// d × (t+1); the last class is NA.
    pub w_rel: ParamId,
    pub num_classes: usize,
}

pub const SPAN_HEAD_NAMES: [&str; 4] = ["ss", "se", "os", "oe"];

impl HeadParams {
    pub fn init<R: Rng>(store: &mut ParamStore, d: usize, num_classes: usize, rng: &mut R) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::Config(format!("need at least one relation plus NA, got {num_classes} classes")));
        }
        let bound = 1.0 / (d as f64).sqrt();
        let g = ParamGroup::Decoder;
        let mut head = |name: &str, rng: &mut R| -> Result<SpanHead> {
            Ok(SpanHead {
                w_slot: store.add_uniform(&format!("heads.{name}.w_slot"), g, &[d, d], bound, rng)?,
                w_token: store.add_uniform(&format!("heads.{name}.w_token"), g, &[d, d], bound, rng)?,
                v: store.add_uniform(&format!("heads.{name}.v"), g, &[d, 1], bound, rng)?,
            })
        };
        let spans = [head("ss", rng)?, head("se", rng)?, head("os", rng)?, head("oe", rng)?];
        let w_rel = store.add_uniform("heads.rel.w", g, &[d, num_classes], bound, rng)?;
        Ok(HeadParams { spans, w_rel, num_classes })
    }

    pub fn na_index(&self) -> usize {
        self.num_classes - 1
    }

    pub fn ids(&self) -> Vec<ParamId> {
        let mut ids: Vec<ParamId> = self.spans.iter().flat_map(|h| [h.w_slot, h.w_token, h.v]).collect();
        ids.push(self.w_rel);
        ids
    }
}

/// Position distributions (k×n) for all slots from one span head.
pub fn span_distribution(tape: &mut Tape, store: &ParamStore, head: &SpanHead, slots: Var, h: Var) -> Result<Var> {
    let (k, d) = tape.value(slots).dims2()?;
    let (n, d2) = tape.value(h).dims2()?;
    if d != d2 {
        return Err(Error::dim("predict_spans", format!("slot width {d} vs token width {d2}")));
    }
    let ws = tape.param(store, head.w_slot);
    let wt = tape.param(store, head.w_token);
    let v = tape.param(store, head.v);
    let slot_part = tape.matmul(slots, ws)?;
    let token_part = tape.matmul(h, wt)?;
    let pairs = tape.pair_sum(slot_part, token_part)?;
    let act = tape.tanh(pairs);
    let logits = tape.matmul(act, v)?;
    let logits = tape.reshape(logits, &[k, n])?;
    tape.softmax_rows(logits)
}

/// The four span distributions in ss, se, os, oe order.
pub fn predict_spans(tape: &mut Tape, store: &ParamStore, p: &HeadParams, slots: Var, h: Var) -> Result<[Var; 4]> {
    Ok([
        span_distribution(tape, store, &p.spans[0], slots, h)?,
        span_distribution(tape, store, &p.spans[1], slots, h)?,
        span_distribution(tape, store, &p.spans[2], slots, h)?,
        span_distribution(tape, store, &p.spans[3], slots, h)?,
    ])
}

/// Relation distribution (k × (t+1)) per slot.
pub fn predict_relation(tape: &mut Tape, store: &ParamStore, p: &HeadParams, slots: Var) -> Result<Var> {
    let w = tape.param(store, p.w_rel);
    let logits = tape.matmul(slots, w)?;
    tape.softmax_rows(logits)
}

/// Tape handles of every head output for one sentence.
#[derive(Clone, Copy, Debug)]
pub struct HeadOutputs {
    pub spans: [Var; 4],
    pub relation: Var,
}

pub fn run_heads(tape: &mut Tape, store: &ParamStore, p: &HeadParams, slots: Var, h: Var) -> Result<HeadOutputs> {
    Ok(HeadOutputs {
        spans: predict_spans(tape, store, p, slots, h)?,
        relation: predict_relation(tape, store, p, slots)?,
    })
}

/// Five categorical distributions for one slot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriplePrediction {
    pub slot_index: usize,
    pub p_ss: Vec<f64>,
    pub p_se: Vec<f64>,
    pub p_os: Vec<f64>,
    pub p_oe: Vec<f64>,
    /// t+1 entries; the last is NA.
    pub p_rs: Vec<f64>,
}

impl TriplePrediction {
    pub fn na_index(&self) -> usize {
        self.p_rs.len() - 1
    }

    pub fn span(&self, head: usize) -> &[f64] {
        match head {
            0 => &self.p_ss,
            1 => &self.p_se,
            2 => &self.p_os,
            _ => &self.p_oe,
        }
    }
}

/// Reads per-slot predictions off the tape.
pub fn collect_predictions(tape: &Tape, out: &HeadOutputs) -> Vec<TriplePrediction> {
    let rel = tape.value(out.relation);
    let spans: Vec<_> = out.spans.iter().map(|v| tape.value(*v)).collect();
    (0..rel.rows())
        .map(|i| TriplePrediction {
            slot_index: i,
            p_ss: spans[0].row(i).to_vec(),
            p_se: spans[1].row(i).to_vec(),
            p_os: spans[2].row(i).to_vec(),
            p_oe: spans[3].row(i).to_vec(),
            p_rs: rel.row(i).to_vec(),
        })
        .collect()
}

/// A decoded (subject span, relation, object span); spans are inclusive token indices.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodedTriple {
    pub subject: (usize, usize),
    pub relation: usize,
    pub object: (usize, usize),
    pub score: f64,
}

impl DecodedTriple {
    pub fn key(&self) -> (usize, usize, usize, usize, usize) {
        (self.subject.0, self.subject.1, self.relation, self.object.0, self.object.1)
    }
}

/// What to do when a decoded end index precedes its start index.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvertedSpan {
    #[default]
    Swap,
    Discard,
}

fn body_argmax(p: &[f64], n: usize) -> Option<usize> {
    // positions 0 and n−1 hold the boundary markers
    (1..n.saturating_sub(1)).fold(None, |best: Option<usize>, j| match best {
        Some(b) if p[b] >= p[j] => Some(b),
        _ => Some(j),
    })
}

fn argmax(p: &[f64]) -> usize {
    (0..p.len()).fold(0, |b, j| if p[j] > p[b] { j } else { b })
}

/// Argmax readout of one slot; `None` for NA, for sentences without body tokens, or for
/// inverted spans under [`InvertedSpan::Discard`].
pub fn decode(pred: &TriplePrediction, n: usize, inverted: InvertedSpan) -> Option<DecodedTriple> {
    let rel = argmax(&pred.p_rs);
    if rel == pred.na_index() {
        return None;
    }
    let mut idx = [0usize; 4];
    for (h, slot) in idx.iter_mut().enumerate() {
        *slot = body_argmax(pred.span(h), n)?;
    }
    let score = pred.p_rs[rel] * (0..4).map(|h| pred.span(h)[idx[h]]).product::<f64>();
    let mut subject = (idx[0], idx[1]);
    let mut object = (idx[2], idx[3]);
    for span in [&mut subject, &mut object] {
        if span.1 < span.0 {
            match inverted {
                InvertedSpan::Swap => *span = (span.1, span.0),
                InvertedSpan::Discard => return None,
            }
        }
    }
    Some(DecodedTriple { subject, relation: rel, object, score })
}
