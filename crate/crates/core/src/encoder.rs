//! Vocabulary, whitespace tokenization and a single-layer self-attention encoder.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::Rng;

use crate::autodiff::{ParamGroup, ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
const SPECIALS: [&str; 4] = [PAD, UNK, CLS, SEP];

pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_string).collect()
}

/// Token → id map. Ids 0..4 are the pad, unknown, start and end markers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Contract(format!("duplicate vocabulary entry {t:?}")));
            }
        }
        for (i, s) in SPECIALS.iter().enumerate() {
            if tokens.get(i).map(String::as_str) != Some(*s) {
                return Err(Error::Contract(format!("vocabulary id {i} must be {s}")));
            }
        }
        Ok(Vocabulary { tokens, index })
    }

    /// Builds the vocabulary in first-appearance order over the given token lists.
    pub fn build<'a, I>(corpus: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [String]>,
    {
        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        let mut seen: HashMap<String, usize> = tokens.iter().cloned().enumerate().map(|(i, t)| (t, i)).collect();
        let mut sentences = 0;
        for sentence in corpus {
            sentences += 1;
            for tok in sentence {
                if !seen.contains_key(tok) {
                    seen.insert(tok.clone(), tokens.len());
                    tokens.push(tok.clone());
                }
            }
        }
        if sentences == 0 {
            return Err(Error::Contract("cannot build a vocabulary from an empty corpus".into()));
        }
        Vocabulary::from_tokens(tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Id of `token`, or the unknown marker.
    pub fn id(&self, token: &str) -> usize {
        self.get(token).unwrap_or(1)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Wraps body tokens with the start and end markers.
    pub fn sentence(&self, body: &[String]) -> TokenizedSentence {
        let mut tokens = Vec::with_capacity(body.len() + 2);
        tokens.push(CLS.to_string());
        tokens.extend(body.iter().cloned());
        tokens.push(SEP.to_string());
        let ids = tokens.iter().map(|t| self.id(t)).collect();
        TokenizedSentence { tokens, ids }
    }

    /// One token per line; the line number is the id.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.tokens.join("\n");
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Vocabulary::from_tokens(text.lines().map(str::to_string).collect())
    }

    pub fn from_list(tokens: Vec<String>) -> Result<Self> {
        Vocabulary::from_tokens(tokens)
    }
}

/// Tokens of one sentence including the start and end markers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenizedSentence {
    pub tokens: Vec<String>,
    pub ids: Vec<usize>,
}

impl TokenizedSentence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Contextual token features `H` (n×d) recorded on a tape.
#[derive(Clone, Copy, Debug)]
pub struct EncodedSequence {
    pub h: Var,
    pub n: usize,
    pub d: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct EncoderParams {
    pub embedding: ParamId,
    pub w_q: ParamId,
    pub w_k: ParamId,
    pub w_v: ParamId,
    pub d: usize,
}

impl EncoderParams {
    pub fn init<R: Rng>(store: &mut ParamStore, vocab_size: usize, d: usize, rng: &mut R) -> Result<Self> {
        let bound = 1.0 / (d as f64).sqrt();
        let g = ParamGroup::Encoder;
        Ok(EncoderParams {
            embedding: store.add_uniform("encoder.embedding", g, &[vocab_size, d], bound, rng)?,
            w_q: store.add_uniform("encoder.w_q", g, &[d, d], bound, rng)?,
            w_k: store.add_uniform("encoder.w_k", g, &[d, d], bound, rng)?,
            w_v: store.add_uniform("encoder.w_v", g, &[d, d], bound, rng)?,
            d,
        })
    }

    pub fn ids(&self) -> [ParamId; 4] {
        [self.embedding, self.w_q, self.w_k, self.w_v]
    }
}

/// Sinusoidal position signal, n×d.
pub fn positional_encoding(n: usize, d: usize) -> Tensor {
    let mut vals = vec![0.0; n * d];
    for pos in 0..n {
        for i in 0..d {
            let rate = 10000f64.powf((2 * (i / 2)) as f64 / d as f64);
            let angle = pos as f64 / rate;
            vals[pos * d + i] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    Tensor::new(vec![n, d], vals).expect("positive extents")
}

/// `H = LN(X + softmax(QKᵀ/√d)·V)` with `X = E[ids] + P`.
pub fn encode(tape: &mut Tape, store: &ParamStore, p: &EncoderParams, ids: &[usize]) -> Result<EncodedSequence> {
    let n = ids.len();
    let d = p.d;
    let table = tape.param(store, p.embedding);
    let emb = tape.gather_rows(table, ids)?;
    let pos = tape.constant(positional_encoding(n, d));
    let x = tape.add(emb, pos)?;
    let (wq, wk, wv) = (tape.param(store, p.w_q), tape.param(store, p.w_k), tape.param(store, p.w_v));
    let q = tape.matmul(x, wq)?;
    let k = tape.matmul(x, wk)?;
    let v = tape.matmul(x, wv)?;
    let scores = tape.matmul_bt(q, k)?;
    let scores = tape.scale(scores, 1.0 / (d as f64).sqrt());
    let weights = tape.softmax_rows(scores)?;
    let mixed = tape.matmul(weights, v)?;
    let resid = tape.add(x, mixed)?;
    let h = tape.layer_norm_rows(resid)?;
    Ok(EncodedSequence { h, n, d })
}
