use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Example, HeadWord, RelationInventory};
use crate::encoder::tokenize;
use crate::error::{Error, Result};
use crate::set_match::GoldTriple;

#[derive(Serialize, Deserialize)]
struct Line {
    #[serde(rename = "sentText")]
    sent_text: String,
    #[serde(rename = "relationMentions")]
    relation_mentions: Vec<Mention>,
}

#[derive(Serialize, Deserialize)]
struct Mention {
    #[serde(rename = "em1Text")]
    em1: String,
    #[serde(rename = "em2Text")]
    em2: String,
    label: String,
}

/// Examples read from a JSONL file plus how many lines were dropped.
#[derive(Clone, Debug, Default)]
pub struct LoadOutcome {
    pub examples: Vec<Example>,
    pub skipped: usize,
}

/// Leftmost exact occurrence of `needle` in `tokens`, as a marker-offset inclusive span.
fn resolve(tokens: &[String], mention: &str) -> Option<(usize, usize)> {
    let needle = tokenize(mention);
    if needle.is_empty() || needle.len() > tokens.len() {
        return None;
    }
    tokens.windows(needle.len()).position(|w| w == needle.as_slice()).map(|i| (i + 1, i + needle.len()))
}

/// Parses JSONL text. Line numbers in errors are 1-based.
pub fn parse_jsonl(text: &str, relations: &RelationInventory, head: HeadWord) -> Result<LoadOutcome> {
    let mut out = LoadOutcome::default();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let line: Line =
            serde_json::from_str(raw).map_err(|e| Error::Parse { line: line_no, detail: e.to_string() })?;
        let tokens = tokenize(&line.sent_text);
        let mut triples: Vec<GoldTriple> = Vec::with_capacity(line.relation_mentions.len());
        let mut resolved = true;
        for m in &line.relation_mentions {
            let rel = relations.id(&m.label).ok_or_else(|| Error::Schema {
                line: line_no,
                detail: format!("unknown relation label {:?}", m.label),
            })?;
            match (resolve(&tokens, &m.em1), resolve(&tokens, &m.em2)) {
                (Some(s), Some(o)) => {
                    let t = GoldTriple { ss: s.0, se: s.1, rel, os: o.0, oe: o.1 };
                    if !triples.contains(&t) {
                        triples.push(t);
                    }
                }
                _ => resolved = false,
            }
        }
        if !resolved || triples.is_empty() {
            out.skipped += 1;
            continue;
        }
        out.examples.push(Example::new(tokens, triples, head)?);
    }
    Ok(out)
}

/// Loads a benchmark-format JSONL file with last-token head words.
pub fn load_jsonl(path: &Path, relations: &RelationInventory) -> Result<Vec<Example>> {
    Ok(load_jsonl_with(path, relations, HeadWord::Last)?.examples)
}

pub fn load_jsonl_with(path: &Path, relations: &RelationInventory, head: HeadWord) -> Result<LoadOutcome> {
    let text = fs::read_to_string(path)?;
    let out = parse_jsonl(&text, relations, head)?;
    if out.skipped > 0 {
        log::warn!("{}: skipped {} examples with unresolvable or missing mentions", path.display(), out.skipped);
    }
    Ok(out)
}

pub fn to_jsonl_line(ex: &Example, relations: &RelationInventory) -> Result<String> {
    let mentions = ex
        .triples
        .iter()
        .map(|t| {
            let label = relations.label(t.rel).ok_or(Error::Lookup { id: t.rel, size: relations.len() })?.to_string();
            Ok(Mention { em1: ex.span_text(t.subject()), em2: ex.span_text(t.object()), label })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(serde_json::to_string(&Line { sent_text: ex.text.clone(), relation_mentions: mentions })?)
}

pub fn save_jsonl(path: &Path, examples: &[Example], relations: &RelationInventory) -> Result<()> {
    let mut file = std::io::BufWriter::new(fs::File::create(path)?);
    for ex in examples {
        writeln!(file, "{}", to_jsonl_line(ex, relations)?)?;
    }
    file.flush()?;
    Ok(())
}
