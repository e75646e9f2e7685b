//! Corpora: benchmark-format JSONL loading, overlap classification and synthetic generation.

mod jsonl;
mod synthetic;

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::set_match::GoldTriple;

pub use jsonl::{load_jsonl, load_jsonl_with, parse_jsonl, save_jsonl, to_jsonl_line, LoadOutcome};
pub use synthetic::{generate_synthetic, write_corpus, CorpusManifest, PatternMix, RelationSchema, SyntheticCorpus};

/// Overlap taxonomy of a sentence's triples.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OverlapPattern {
    Normal,
    #[serde(rename = "SEO")]
    Seo,
    #[serde(rename = "EPO")]
    Epo,
}

impl OverlapPattern {
    pub const ALL: [OverlapPattern; 3] = [OverlapPattern::Normal, OverlapPattern::Seo, OverlapPattern::Epo];
}

impl fmt::Display for OverlapPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OverlapPattern::Normal => "Normal",
            OverlapPattern::Seo => "SEO",
            OverlapPattern::Epo => "EPO",
        })
    }
}

/// Classifies a triple set: EPO if two triples connect the same entity pair, else SEO if
/// two triples share exactly one entity, else Normal.
pub fn classify_overlap(golds: &[GoldTriple]) -> Result<OverlapPattern> {
    if golds.is_empty() {
        return Err(Error::Contract("cannot classify the overlap of an empty triple set".into()));
    }
    let mut seo = false;
    for (i, a) in golds.iter().enumerate() {
        for b in &golds[i + 1..] {
            let (a1, a2, b1, b2) = (a.subject(), a.object(), b.subject(), b.object());
            if (a1 == b1 && a2 == b2) || (a1 == b2 && a2 == b1) {
                return Ok(OverlapPattern::Epo);
            }
            if a1 == b1 || a1 == b2 || a2 == b1 || a2 == b2 {
                seo = true;
            }
        }
    }
    Ok(if seo { OverlapPattern::Seo } else { OverlapPattern::Normal })
}

/// Which token of an entity span stands in for it under partial matching.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadWord {
    First,
    #[default]
    Last,
}

impl HeadWord {
    pub fn of(self, span: (usize, usize)) -> usize {
        match self {
            HeadWord::First => span.0,
            HeadWord::Last => span.1,
        }
    }
}

/// Head-word form of a triple: (subject head, relation, object head).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HeadTriple {
    pub subject: usize,
    pub rel: usize,
    pub object: usize,
}

pub fn head_triples(triples: &[GoldTriple], rule: HeadWord) -> Vec<HeadTriple> {
    triples
        .iter()
        .map(|t| HeadTriple { subject: rule.of(t.subject()), rel: t.rel, object: rule.of(t.object()) })
        .collect()
}

/// One annotated sentence. Token indices in `triples` count the start marker as position 0,
/// so body token `i` sits at index `i + 1`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub text: String,
    /// Body tokens, without boundary markers.
    pub tokens: Vec<String>,
    pub triples: Vec<GoldTriple>,
    /// Head-word form of `triples`, used by partial matching.
    pub partial: Vec<HeadTriple>,
    pub pattern: OverlapPattern,
}

impl Example {
    pub fn new(tokens: Vec<String>, triples: Vec<GoldTriple>, head: HeadWord) -> Result<Self> {
        let pattern = classify_overlap(&triples)?;
        let partial = head_triples(&triples, head);
        Ok(Example { text: tokens.join(" "), tokens, triples, partial, pattern })
    }

    /// Sentence length including both boundary markers.
    pub fn n(&self) -> usize {
        self.tokens.len() + 2
    }

    pub fn triple_count(&self) -> usize {
        self.triples.len()
    }

    /// Surface string of a span given in marker-offset indices.
    pub fn span_text(&self, span: (usize, usize)) -> String {
        self.tokens[span.0 - 1..span.1].join(" ")
    }
}

/// Relation labels; the id of a label is its position. NA is not part of the inventory.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationInventory {
    labels: Vec<String>,
}

impl RelationInventory {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        let mut sorted = labels.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != labels.len() {
            return Err(Error::Config("relation inventory has duplicate labels".into()));
        }
        if labels.is_empty() {
            return Err(Error::Config("relation inventory is empty".into()));
        }
        if labels.iter().any(|l| l == "NA") {
            return Err(Error::Config("NA is reserved and cannot be an inventory label".into()));
        }
        Ok(RelationInventory { labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn id(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn label(&self, id: usize) -> Option<&str> {
        self.labels.get(id).map(String::as_str)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.labels.join("\n") + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        RelationInventory::new(text.lines().filter(|l| !l.trim().is_empty()).map(str::to_string).collect())
    }
}

/// Train/valid/test examples of one corpus directory plus its relation inventory.
pub struct CorpusSplits {
    pub relations: RelationInventory,
    pub train: Vec<Example>,
    pub valid: Vec<Example>,
    pub test: Vec<Example>,
}

pub const RELATIONS_FILE: &str = "relations.txt";

/// Loads `relations.txt` and the three `*.jsonl` splits from a corpus directory.
pub fn load_corpus_dir(dir: &Path, head: HeadWord) -> Result<CorpusSplits> {
    let relations = RelationInventory::load(&dir.join(RELATIONS_FILE))?;
    let train = load_jsonl_with(&dir.join("train.jsonl"), &relations, head)?.examples;
    let valid = load_jsonl_with(&dir.join("valid.jsonl"), &relations, head)?.examples;
    let test = load_jsonl_with(&dir.join("test.jsonl"), &relations, head)?.examples;
    Ok(CorpusSplits { relations, train, valid, test })
}
