//! Exact and partial triple matching, sliced precision/recall/F1, and attention explanations.

mod explain;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{Example, HeadWord, OverlapPattern};
use crate::encoder::Vocabulary;
use crate::error::{Error, Result};
use crate::heads::{DecodedTriple, InvertedSpan};
use crate::model::{decode_set, Model};
use crate::set_match::GoldTriple;

pub use explain::{
    explain_example, explanation_hit_rate, export_explanations, read_attention_csv, render_svg, top_k,
    write_explanation, Explanation, HitRate, SlotExplanation, LOG_FLOOR,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    Exact,
    Partial,
}

impl FromStr for MatchMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(MatchMode::Exact),
            "partial" => Ok(MatchMode::Partial),
            other => Err(Error::Config(format!("unknown match mode {other:?} (exact|partial)"))),
        }
    }
}

impl fmt::Display for MatchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MatchMode::Exact => "exact",
            MatchMode::Partial => "partial",
        })
    }
}

/// Comparison key of a triple under a matching mode.
type Key = (usize, usize, usize, usize, usize);

fn gold_key(g: &GoldTriple, mode: MatchMode, head: HeadWord) -> Key {
    match mode {
        MatchMode::Exact => (g.ss, g.se, g.rel, g.os, g.oe),
        MatchMode::Partial => {
            let (s, o) = (head.of(g.subject()), head.of(g.object()));
            (s, s, g.rel, o, o)
        }
    }
}

fn pred_key(p: &DecodedTriple, mode: MatchMode, head: HeadWord) -> Key {
    gold_key(
        &GoldTriple { ss: p.subject.0, se: p.subject.1, rel: p.relation, os: p.object.0, oe: p.object.1 },
        mode,
        head,
    )
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchCounts {
    pub correct: usize,
    pub predicted: usize,
    pub gold: usize,
}

impl MatchCounts {
    pub fn add(&mut self, other: MatchCounts) {
        self.correct += other.correct;
        self.predicted += other.predicted;
        self.gold += other.gold;
    }

    pub fn scores(&self) -> Prf {
        let precision = if self.predicted == 0 { 0.0 } else { self.correct as f64 / self.predicted as f64 };
        let recall = if self.gold == 0 { 0.0 } else { self.correct as f64 / self.gold as f64 };
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        Prf { counts: *self, precision, recall, f1 }
    }
}

/// Counts with derived precision, recall and F1.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub counts: MatchCounts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Set-based matching: both sides are deduplicated under the mode's key, and each gold is
/// credited at most once.
pub fn match_triples(pred: &[DecodedTriple], gold: &[GoldTriple], mode: MatchMode, head: HeadWord) -> MatchCounts {
    let golds: HashSet<Key> = gold.iter().map(|g| gold_key(g, mode, head)).collect();
    let preds: HashSet<Key> = pred.iter().map(|p| pred_key(p, mode, head)).collect();
    MatchCounts { correct: preds.intersection(&golds).count(), predicted: preds.len(), gold: golds.len() }
}

/// Exact and partial scores of one slice.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SliceScores {
    pub examples: usize,
    pub exact: Prf,
    pub partial: Prf,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub overall: SliceScores,
    /// Keyed by Normal, SEO, EPO.
    pub by_pattern: BTreeMap<String, SliceScores>,
    /// Keyed by N=1 .. N=4 and N>=5.
    pub by_count: BTreeMap<String, SliceScores>,
}

pub const COUNT_BUCKETS: [&str; 5] = ["N=1", "N=2", "N=3", "N=4", "N>=5"];

pub fn count_bucket(n: usize) -> &'static str {
    COUNT_BUCKETS[n.clamp(1, 5) - 1]
}

impl EvalReport {
    pub fn f1(&self, mode: MatchMode) -> f64 {
        match mode {
            MatchMode::Exact => self.overall.exact.f1,
            MatchMode::Partial => self.overall.partial.f1,
        }
    }

    /// Plain-text table for one mode; slices only when `breakdown` is set.
    pub fn render(&self, mode: MatchMode, breakdown: bool) -> String {
        let pick = |s: &SliceScores| if mode == MatchMode::Exact { s.exact } else { s.partial };
        let line = |name: &str, s: &SliceScores| {
            let p = pick(s);
            format!(
                "{name:<8} {:>6} {:>7.4} {:>7.4} {:>7.4} {:>7} {:>7} {:>7}\n",
                s.examples, p.precision, p.recall, p.f1, p.counts.gold, p.counts.predicted, p.counts.correct
            )
        };
        let mut out = format!(
            "mode: {mode}\n{:<8} {:>6} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7}\n",
            "slice", "sents", "P", "R", "F1", "gold", "pred", "correct"
        );
        out += &line("overall", &self.overall);
        if breakdown {
            for p in OverlapPattern::ALL {
                if let Some(s) = self.by_pattern.get(&p.to_string()) {
                    out += &line(&p.to_string(), s);
                }
            }
            for b in COUNT_BUCKETS {
                if let Some(s) = self.by_count.get(b) {
                    out += &line(b, s);
                }
            }
        }
        out
    }
}

#[derive(Default)]
struct Acc {
    examples: usize,
    exact: MatchCounts,
    partial: MatchCounts,
}

impl Acc {
    fn finish(&self) -> SliceScores {
        SliceScores { examples: self.examples, exact: self.exact.scores(), partial: self.partial.scores() }
    }
}

/// Micro-averaged report over (example, predictions) pairs, with slices by the example's
/// overlap pattern and gold triple count.
pub fn compute_report<'a, I>(items: I, head: HeadWord) -> EvalReport
where
    I: IntoIterator<Item = (&'a Example, &'a [DecodedTriple])>,
{
    let mut overall = Acc::default();
    let mut by_pattern: BTreeMap<String, Acc> = BTreeMap::new();
    let mut by_count: BTreeMap<String, Acc> = BTreeMap::new();
    for (ex, preds) in items {
        let exact = match_triples(preds, &ex.triples, MatchMode::Exact, head);
        let partial = match_triples(preds, &ex.triples, MatchMode::Partial, head);
        for acc in [
            &mut overall,
            by_pattern.entry(ex.pattern.to_string()).or_default(),
            by_count.entry(count_bucket(ex.triple_count()).to_string()).or_default(),
        ] {
            acc.examples += 1;
            acc.exact.add(exact);
            acc.partial.add(partial);
        }
    }
    EvalReport {
        overall: overall.finish(),
        by_pattern: by_pattern.into_iter().map(|(k, a)| (k, a.finish())).collect(),
        by_count: by_count.into_iter().map(|(k, a)| (k, a.finish())).collect(),
    }
}

/// Runs the model over `examples` and returns each sentence's decoded triple set.
pub fn predict_examples(
    model: &Model,
    vocab: &Vocabulary,
    examples: &[Example],
    inverted: InvertedSpan,
) -> Result<Vec<Vec<DecodedTriple>>> {
    examples
        .iter()
        .map(|ex| {
            let sent = vocab.sentence(&ex.tokens);
            let pred = model.predict(&sent.ids)?;
            Ok(decode_set(&pred.slots, sent.len(), inverted))
        })
        .collect()
}

/// Predicts and scores in one go.
pub fn evaluate(model: &Model, vocab: &Vocabulary, examples: &[Example], head: HeadWord) -> Result<EvalReport> {
    let preds = predict_examples(model, vocab, examples, InvertedSpan::Swap)?;
    Ok(compute_report(examples.iter().zip(preds.iter().map(Vec::as_slice)), head))
}
