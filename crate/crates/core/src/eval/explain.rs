use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;

use crate::autodiff::Tensor;
use crate::data::{Example, HeadWord, RelationInventory};
use crate::encoder::Vocabulary;
use crate::error::{Error, Result};
use crate::heads::{decode, DecodedTriple, InvertedSpan};
use crate::model::Model;

/// Attention values are floored here before taking logs.
pub const LOG_FLOOR: f64 = 1e-12;

const TOP_TOKENS: usize = 5;

#[derive(Clone, Debug, PartialEq)]
pub struct SlotExplanation {
    pub slot: usize,
    /// `None` when the slot decodes to NA.
    pub triple: Option<DecodedTriple>,
    /// Positions of the most attended tokens, strongest first.
    pub top_tokens: Vec<usize>,
}

/// One sentence's attention map at a chosen refinement iteration plus per-slot readouts.
#[derive(Clone, Debug, PartialEq)]
pub struct Explanation {
    /// Tokens including the boundary markers; one column of `attention` each.
    pub tokens: Vec<String>,
    /// 1-based refinement iteration the map comes from.
    pub iteration: usize,
    /// k×n.
    pub attention: Tensor,
    /// `ln(max(a, LOG_FLOOR))`, row-major like `attention`.
    pub log_attention: Vec<f64>,
    pub slots: Vec<SlotExplanation>,
}

/// Indices of the `k` largest entries, ties broken by position.
pub fn top_k(row: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..row.len()).collect();
    idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Runs the model on one example. `iteration` defaults to the last refinement step.
pub fn explain_example(
    model: &Model,
    vocab: &Vocabulary,
    example: &Example,
    iteration: Option<usize>,
) -> Result<Explanation> {
    let sent = vocab.sentence(&example.tokens);
    let pred = model.predict(&sent.ids)?;
    let last = pred.maps.len();
    let it = iteration.unwrap_or(last);
    if it == 0 || it > last {
        return Err(Error::Config(format!("iteration {it} outside 1..={last}")));
    }
    let attention = pred.maps[it - 1].attention.clone();
    let log_attention = attention.values().iter().map(|a| a.max(LOG_FLOOR).ln()).collect();
    let n = sent.len();
    let slots = pred
        .slots
        .iter()
        .enumerate()
        .map(|(i, p)| SlotExplanation {
            slot: i,
            triple: decode(p, n, InvertedSpan::Swap),
            top_tokens: top_k(attention.row(i), TOP_TOKENS),
        })
        .collect();
    Ok(Explanation { tokens: sent.tokens, iteration: it, attention, log_attention, slots })
}

fn span_json(tokens: &[String], span: (usize, usize)) -> serde_json::Value {
    json!({ "start": span.0, "end": span.1, "text": tokens[span.0..=span.1].join(" ") })
}

fn explanation_json(e: &Explanation, relations: &RelationInventory) -> serde_json::Value {
    let slots: Vec<_> = e
        .slots
        .iter()
        .map(|s| match &s.triple {
            Some(t) => json!({
                "slot": s.slot,
                "relation": relations.label(t.relation).unwrap_or("?"),
                "subject": span_json(&e.tokens, t.subject),
                "object": span_json(&e.tokens, t.object),
                "score": t.score,
                "triple": t,
                "top_tokens": s.top_tokens,
            }),
            None => json!({ "slot": s.slot, "relation": "NA", "top_tokens": s.top_tokens }),
        })
        .collect();
    json!({ "tokens": e.tokens, "iteration": e.iteration, "slots": slots })
}

fn write_attention_csv(path: &Path, e: &Explanation) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(&e.tokens)?;
    for i in 0..e.attention.rows() {
        w.write_record(e.attention.row(i).iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads back a CSV written by [`write_explanation`]: the token header and the k×n map.
pub fn read_attention_csv(path: &Path) -> Result<(Vec<String>, Tensor)> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let mut values = Vec::new();
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec?;
        for field in rec.iter() {
            values.push(field.parse::<f64>().map_err(|e| Error::Parse { line: rows + 2, detail: e.to_string() })?);
        }
        rows += 1;
    }
    let t = Tensor::new(vec![rows, header.len()], values)?;
    Ok((header, t))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Viridis-like ramp for t in [0, 1].
fn color(t: f64) -> String {
    const STOPS: [(f64, f64, f64); 5] =
        [(68.0, 1.0, 84.0), (59.0, 82.0, 139.0), (33.0, 145.0, 140.0), (94.0, 201.0, 98.0), (253.0, 231.0, 37.0)];
    let x = t.clamp(0.0, 1.0) * (STOPS.len() - 1) as f64;
    let i = (x.floor() as usize).min(STOPS.len() - 2);
    let f = x - i as f64;
    let (a, b) = (STOPS[i], STOPS[i + 1]);
    let mix = |p: f64, q: f64| (p + (q - p) * f).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

/// Heatmap of log attention: tokens along x, slots along y. Slots that decode to a relation
/// get an outlined row and dots on their top attended tokens.
pub fn render_svg(e: &Explanation, relations: &RelationInventory) -> String {
    let (k, n) = (e.attention.rows(), e.attention.cols());
    let (cw, ch, left, top) = (28.0, 20.0, 230.0, 120.0);
    let width = left + cw * n as f64 + 20.0;
    let height = top + ch * k as f64 + 40.0;
    let lo = e.log_attention.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = e.log_attention.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (j, tok) in e.tokens.iter().enumerate() {
        let x = left + cw * (j as f64 + 0.5);
        let _ = writeln!(
            s,
            r#"<text x="{x}" y="{}" transform="rotate(-60 {x} {})" text-anchor="start">{}</text>"#,
            top - 6.0,
            top - 6.0,
            escape(tok)
        );
    }
    for slot in &e.slots {
        let i = slot.slot;
        let y = top + ch * i as f64;
        let label = match &slot.triple {
            Some(t) => format!("slot {i}: {}", relations.label(t.relation).unwrap_or("?")),
            None => format!("slot {i}: NA"),
        };
        let weight = if slot.triple.is_some() { "bold" } else { "normal" };
        let fill = if slot.triple.is_some() { "#111111" } else { "#999999" };
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end" font-weight="{weight}" fill="{fill}">{}</text>"#,
            left - 6.0,
            y + ch * 0.7,
            escape(&label)
        );
        for j in 0..n {
            let t = (e.log_attention[i * n + j] - lo) / span;
            let _ = writeln!(
                s,
                r#"<rect x="{}" y="{y}" width="{cw}" height="{ch}" fill="{}"><title>{:.3e}</title></rect>"#,
                left + cw * j as f64,
                color(t),
                e.attention.get(i, j)
            );
        }
        if slot.triple.is_some() {
            for &j in &slot.top_tokens {
                let _ = writeln!(
                    s,
                    r#"<circle cx="{}" cy="{}" r="3" fill="white" stroke="black" stroke-width="0.8"/>"#,
                    left + cw * (j as f64 + 0.5),
                    y + ch * 0.5
                );
            }
            let _ = writeln!(
                s,
                r##"<rect class="highlight" x="{left}" y="{y}" width="{}" height="{ch}" fill="none" stroke="#e4572e" stroke-width="2"/>"##,
                cw * n as f64
            );
        }
    }
    let _ = writeln!(
        s,
        r#"<text x="{left}" y="{}">log attention (floored at 1e-12), iteration {}: dark = low, bright = high</text>"#,
        top + ch * k as f64 + 24.0,
        e.iteration
    );
    s.push_str("</svg>\n");
    s
}

/// Writes `<stem>.csv`, `<stem>.json` and `<stem>.svg` into `dir`.
pub fn write_explanation(
    dir: &Path,
    stem: &str,
    e: &Explanation,
    relations: &RelationInventory,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let csv_path = dir.join(format!("{stem}.csv"));
    let json_path = dir.join(format!("{stem}.json"));
    let svg_path = dir.join(format!("{stem}.svg"));
    write_attention_csv(&csv_path, e)?;
    fs::write(&json_path, serde_json::to_string_pretty(&explanation_json(e, relations))?)?;
    fs::write(&svg_path, render_svg(e, relations))?;
    Ok(vec![csv_path, json_path, svg_path])
}

/// Explains every example, writing `sentence_0000.*` and so on into `out_dir`.
pub fn export_explanations(
    model: &Model,
    vocab: &Vocabulary,
    relations: &RelationInventory,
    examples: &[Example],
    out_dir: &Path,
    iteration: Option<usize>,
) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for (i, ex) in examples.iter().enumerate() {
        let e = explain_example(model, vocab, ex, iteration)?;
        files.extend(write_explanation(out_dir, &format!("sentence_{i:04}"), &e, relations)?);
    }
    Ok(files)
}

/// Correctly predicting slots whose top attended tokens include a gold head word.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct HitRate {
    pub hits: usize,
    pub total: usize,
}

impl HitRate {
    pub fn rate(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.hits as f64 / self.total as f64
        }
    }
}

/// For every slot whose decoded triple exactly equals a gold triple, checks whether its
/// `top` most attended tokens (final iteration) contain the subject or object head word.
pub fn explanation_hit_rate(
    model: &Model,
    vocab: &Vocabulary,
    examples: &[Example],
    head: HeadWord,
    top: usize,
) -> Result<HitRate> {
    let mut rate = HitRate::default();
    for ex in examples {
        let sent = vocab.sentence(&ex.tokens);
        let pred = model.predict(&sent.ids)?;
        let map = &pred.maps.last().expect("at least one iteration").attention;
        for (i, p) in pred.slots.iter().enumerate() {
            let Some(t) = decode(p, sent.len(), InvertedSpan::Swap) else { continue };
            let Some(g) = ex.triples.iter().find(|g| {
                (g.ss, g.se, g.rel, g.os, g.oe) == (t.subject.0, t.subject.1, t.relation, t.object.0, t.object.1)
            }) else {
                continue;
            };
            rate.total += 1;
            let best = top_k(map.row(i), top);
            if best.contains(&head.of(g.subject())) || best.contains(&head.of(g.object())) {
                rate.hits += 1;
            }
        }
    }
    Ok(rate)
}
