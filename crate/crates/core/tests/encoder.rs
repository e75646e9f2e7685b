mod common;

use std::collections::HashSet;

use common::{rng, uniform, weighted_sum};
use slotrte::autodiff::gradcheck::{check_param_gradients, GradCheckOptions};
use slotrte::autodiff::{ParamStore, Tape, Tensor};
use slotrte::data::{generate_synthetic, CorpusManifest};
use slotrte::encoder::{encode, positional_encoding, tokenize, EncoderParams, Vocabulary, CLS, SEP, UNK};
use slotrte::Error;

fn vocab_of(sentences: &[&str]) -> Vocabulary {
    let toks: Vec<Vec<String>> = sentences.iter().map(|s| tokenize(s)).collect();
    Vocabulary::build(toks.iter().map(Vec::as_slice)).unwrap()
}

fn params(vocab: usize, d: usize, seed: u64) -> (ParamStore, EncoderParams) {
    let mut store = ParamStore::new();
    let p = EncoderParams::init(&mut store, vocab, d, &mut rng(seed)).unwrap();
    (store, p)
}

fn run(store: &ParamStore, p: &EncoderParams, ids: &[usize]) -> Tensor {
    let mut tape = Tape::new();
    let enc = encode(&mut tape, store, p, ids).unwrap();
    tape.value(enc.h).clone()
}

#[test]
fn vocabulary_examples() {
    let v = vocab_of(&["a b"]);
    assert_eq!(v.len(), 6);
    assert_eq!(v, vocab_of(&["a b"]));
    assert!(matches!(Vocabulary::build(std::iter::empty()), Err(Error::Contract(_))));

    let s = v.sentence(&tokenize("b a zzz"));
    assert_eq!(s.ids.len(), 5);
    assert_eq!(s.ids[0], v.id(CLS));
    assert_eq!(s.ids[4], v.id(SEP));
    assert_eq!(s.ids[3], v.id(UNK));
    assert!(s.ids.iter().all(|i| *i < v.len()));
}

#[test]
fn vocabulary_size_matches_set_count_oracle() {
    let c = generate_synthetic(&CorpusManifest::default()).unwrap();
    let all: Vec<_> = c.train.iter().chain(&c.valid).chain(&c.test).collect();
    let v = Vocabulary::build(all.iter().map(|e| e.tokens.as_slice())).unwrap();
    let distinct: HashSet<&str> = all.iter().flat_map(|e| e.text.split_whitespace()).collect();
    assert_eq!(v.len(), distinct.len() + 4);
}

#[test]
fn vocabulary_file_round_trip() {
    let v = vocab_of(&["x y z", "z w"]);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("vocab.txt");
    v.save(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), v.len());
    assert_eq!(text.lines().nth(5), Some("y"));
    assert_eq!(Vocabulary::load(&path).unwrap(), v);
}

#[test]
fn encode_shape_order_and_determinism() {
    let d = 8;
    let (store, p) = params(10, d, 1);
    let h = run(&store, &p, &[2, 5, 3]);
    assert_eq!(h.shape(), &[3, d]);
    assert_eq!(h, run(&store, &p, &[2, 5, 3]));

    let a = run(&store, &p, &[2, 5, 6, 3]);
    let b = run(&store, &p, &[2, 6, 5, 3]);
    assert!(a.max_abs_diff(&b) > 1e-3, "token order must matter");

    for i in 0..a.rows() {
        let row = a.row(i);
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / d as f64;
        assert!(mean.abs() < 1e-6 && (var - 1.0).abs() < 1e-6);
    }
}

#[test]
fn out_of_vocabulary_id_is_lookup_error() {
    let (store, p) = params(10, 4, 2);
    let mut tape = Tape::new();
    assert!(matches!(encode(&mut tape, &store, &p, &[2, 10, 3]), Err(Error::Lookup { id: 10, size: 10 })));
}

#[test]
fn positional_signal_values() {
    let pe = positional_encoding(3, 4);
    assert_eq!(pe.row(0), &[0.0, 1.0, 0.0, 1.0]);
    assert!((pe.get(1, 0) - 1f64.sin()).abs() < 1e-15);
    assert!((pe.get(2, 2) - (2.0 / 100.0f64).sin()).abs() < 1e-15);
}

#[test]
fn embedding_and_attention_gradients() {
    for seed in 0..20 {
        let (mut store, p) = params(7, 4, 10 + seed);
        let ids = [2usize, 5, 6, 5, 3];
        let w = uniform(&mut rng(20 + seed), &[ids.len(), 4], -1.0, 1.0);
        let all = p.ids();
        let rep = check_param_gradients(&mut store, &all, GradCheckOptions::default(), |tape, s| {
            let enc = encode(tape, s, &p, &ids)?;
            weighted_sum(tape, enc.h, &w)
        })
        .unwrap();
        assert!(rep.max_rel_error < 1e-4, "seed {seed}: {rep:?}");
    }
}

#[test]
fn sum_of_features_gradient_wrt_embedding() {
    let (mut store, p) = params(6, 4, 3);
    let ids = [2usize, 4, 5, 3];
    let rep = check_param_gradients(&mut store, &[p.embedding], GradCheckOptions::default(), |tape, s| {
        let enc = encode(tape, s, &p, &ids)?;
        Ok(tape.sum(enc.h))
    })
    .unwrap();
    assert!(rep.max_rel_error < 1e-4, "{rep:?}");
}
