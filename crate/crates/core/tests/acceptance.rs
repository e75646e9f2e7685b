//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fails.
//!
//! `ACCEPT_ONLY=1,3,5` restricts the run to the listed criteria.

mod common;

use std::time::Instant;

use common::ops::run_op_sweep;
use common::{brute_force_assignment, rng, uniform, weighted_sum};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use slotrte::autodiff::gradcheck::{check_gradients, check_param_gradients, GradCheckOptions};
use slotrte::autodiff::{gru_cell, GruParams, ParamGroup, ParamStore, Tape};
use slotrte::data::{generate_synthetic, CorpusManifest, HeadWord};
use slotrte::eval::{evaluate, explanation_hit_rate, match_triples, MatchCounts, MatchMode};
use slotrte::heads::{collect_predictions, decode, DecodedTriple, InvertedSpan};
use slotrte::model::Model;
use slotrte::set_match::{hungarian, match_predictions, set_loss, GoldTriple};
use slotrte::slot_attn::{
    mesh, mesh_costs, plan_entropy, sinkhorn, sinkhorn_plan, MeshOptions, SinkhornOptions, SlotAttentionConfig, Variant,
};
use slotrte::trainer::{train, Checkpoint, TrainConfig, TrainOptions};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn criterion_1() -> Outcome {
    let opts = SinkhornOptions::default();
    let mut r = rng(101);
    let start = Instant::now();
    let (mut row, mut col, mut converged) = (0f64, 0f64, 0);
    for _ in 0..100 {
        let c = uniform(&mut r, &[15, 40], -1.0, 1.0);
        let (p, status) = sinkhorn_plan(&c, &opts).unwrap();
        converged += status.converged as usize;
        for i in 0..15 {
            row = row.max((p.row(i).iter().sum::<f64>() - 1.0).abs());
        }
        for j in 0..40 {
            let s: f64 = (0..15).map(|i| p.get(i, j)).sum();
            col = col.max((s - 15.0 / 40.0).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        converged == 100 && row < 1e-6 && col < 1e-6 && secs < 1.0,
        format!("{converged}/100 converged, row dev {row:.2e}, col dev {col:.2e}, {secs:.3}s"),
    )
}

fn criterion_2() -> Outcome {
    let mut r = rng(102);
    let mut elapsed = 0.0;
    let mut mismatches = 0;
    let mut check = |k: usize, m: usize, r: &mut ChaCha8Rng| {
        let cost: Vec<Vec<f64>> = (0..k).map(|_| (0..m).map(|_| r.gen_range(0.0..10.0)).collect()).collect();
        let start = Instant::now();
        let a = hungarian(&cost).unwrap();
        elapsed += start.elapsed().as_secs_f64();
        let total: f64 = a.mapping.iter().enumerate().filter_map(|(i, j)| j.map(|j| cost[i][j])).sum();
        let best = brute_force_assignment(&cost);
        if (total - best).abs() > 1e-9 || (a.total_cost - best).abs() > 1e-9 {
            mismatches += 1;
        }
    };
    for i in 0..1000 {
        let k = 1 + i % 7;
        check(k, k, &mut r);
    }
    for _ in 0..500 {
        check(7, 5, &mut r);
    }
    outcome(
        mismatches == 0 && elapsed < 10.0,
        format!("{mismatches} mismatches in 1500 cases, solver time {elapsed:.3}s"),
    )
}

fn criterion_3() -> Outcome {
    let opts = SinkhornOptions::default();
    let m = MeshOptions { lr: 6.0, iters: 4 };
    let mut r = rng(103);
    let (mut worst, mut violations) = (f64::NEG_INFINITY, 0);
    for _ in 0..100 {
        let c = uniform(&mut r, &[15, 40], -1.0, 1.0);
        let before = plan_entropy(&sinkhorn_plan(&c, &opts).unwrap().0).unwrap();
        let sharpened = mesh_costs(&c, &m, &opts).unwrap().costs;
        let after = plan_entropy(&sinkhorn_plan(&sharpened, &opts).unwrap().0).unwrap();
        worst = worst.max(after - before);
        if after > before + 1e-9 {
            violations += 1;
        }
    }
    outcome(violations == 0, format!("{violations}/100 violations, largest entropy change {worst:.4}"))
}

/// Full objective for one random sentence, assignment held fixed at the unperturbed optimum.
fn full_loss_error(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (vocab, classes) = (12, 4);
    let attention = SlotAttentionConfig {
        num_slots: 3,
        iterations: 2,
        variant: if seed.is_multiple_of(2) { Variant::OptimalTransport } else { Variant::Softmax },
        sinkhorn: SinkhornOptions { epsilon: 1.0, max_iters: 15, tol: 0.0 },
        mesh: MeshOptions { lr: 6.0, iters: 2 },
        slot_dropout: 0.0,
        ..SlotAttentionConfig::default()
    };
    let model = Model::new(vocab, 4, classes, attention, &mut r).unwrap();
    let n = r.gen_range(4..7);
    let ids: Vec<usize> = (0..n).map(|_| r.gen_range(0..vocab)).collect();
    let golds: Vec<GoldTriple> = (0..r.gen_range(1..3))
        .map(|_| {
            let ss = r.gen_range(1..n - 1);
            let os = r.gen_range(1..n - 1);
            GoldTriple {
                ss,
                se: r.gen_range(ss..n - 1),
                rel: r.gen_range(0..classes - 1),
                os,
                oe: r.gen_range(os..n - 1),
            }
        })
        .collect();
    let assignment = {
        let mut tape = Tape::new();
        let out = model.forward::<ChaCha8Rng>(&mut tape, &ids, None).unwrap();
        match_predictions(&collect_predictions(&tape, &out.heads), &golds).unwrap()
    };
    let mut store = model.store.clone();
    let all: Vec<_> = store.ids().collect();
    let opts = GradCheckOptions { max_entries: Some(4), ..GradCheckOptions::default() };
    check_param_gradients(&mut store, &all, opts, |tape, s| {
        let m = Model { store: s.clone(), ..model.clone() };
        let out = m.forward::<ChaCha8Rng>(tape, &ids, None)?;
        set_loss(tape, &out.heads, &golds, &assignment)
    })
    .unwrap()
    .max_rel_error
}

fn criterion_4() -> Outcome {
    const TOL: f64 = 1e-4;
    let mut results: Vec<(&str, f64)> = run_op_sweep(20);
    let opts = GradCheckOptions::default();
    let sk = SinkhornOptions { epsilon: 1.0, max_iters: 30, tol: 0.0 };
    let (mut s_err, mut m_err, mut g_err, mut l_err) = (0f64, 0f64, 0f64, 0f64);
    for seed in 0..20 {
        let mut r = rng(400 + seed);
        let c = uniform(&mut r, &[3, 5], -1.0, 1.0);
        let w = uniform(&mut r, &[3, 5], -1.0, 1.0);
        let rep = check_gradients(std::slice::from_ref(&c), opts, |tape, v| {
            let (p, _) = sinkhorn(tape, v[0], &sk)?;
            weighted_sum(tape, p, &w)
        })
        .unwrap();
        s_err = s_err.max(rep.max_rel_error);
        let m = MeshOptions { lr: 2.0, iters: 3 };
        let rep = check_gradients(&[c], opts, |tape, v| {
            let sharpened = mesh(tape, v[0], &m, &sk)?;
            weighted_sum(tape, sharpened, &w)
        })
        .unwrap();
        m_err = m_err.max(rep.max_rel_error);

        let mut store = ParamStore::new();
        let p = GruParams::init(&mut store, "gru", 3, ParamGroup::Decoder, &mut r).unwrap();
        let h = uniform(&mut r, &[2, 3], -1.0, 1.0);
        let x = uniform(&mut r, &[2, 3], -1.0, 1.0);
        let wg = uniform(&mut r, &[2, 3], -1.0, 1.0);
        let rep = check_param_gradients(&mut store, &p.ids(), opts, |tape, s| {
            let (hv, xv) = (tape.constant(h.clone()), tape.constant(x.clone()));
            let y = gru_cell(tape, s, &p, hv, xv)?;
            weighted_sum(tape, y, &wg)
        })
        .unwrap();
        g_err = g_err.max(rep.max_rel_error);
        l_err = l_err.max(full_loss_error(500 + seed));
    }
    results.extend([("sinkhorn", s_err), ("mesh", m_err), ("gru_cell", g_err), ("full loss", l_err)]);
    let (name, worst) = results.iter().copied().fold(("", 0.0), |a, b| if b.1 > a.1 { b } else { a });
    let failing: Vec<&str> = results.iter().filter(|(_, e)| !(*e < TOL)).map(|(n, _)| *n).collect();
    outcome(
        failing.is_empty(),
        format!("{} checks x 20 instances, worst {worst:.2e} ({name}), failing {failing:?}", results.len()),
    )
}

fn criterion_5() -> Outcome {
    let mut r = rng(105);
    let mut worst = 0f64;
    for _ in 0..100 {
        let attention = SlotAttentionConfig { num_slots: 6, slot_dropout: 0.0, ..SlotAttentionConfig::default() };
        let model = Model::new(20, 8, 5, attention, &mut r).unwrap();
        let n = r.gen_range(5..12);
        let ids: Vec<usize> = (0..n).map(|_| r.gen_range(0..20)).collect();
        let mut golds: Vec<GoldTriple> = (0..r.gen_range(1..6))
            .map(|_| {
                let ss = r.gen_range(1..n - 1);
                let os = r.gen_range(1..n - 1);
                GoldTriple { ss, se: r.gen_range(ss..n - 1), rel: r.gen_range(0..4), os, oe: r.gen_range(os..n - 1) }
            })
            .collect();
        let loss = |golds: &[GoldTriple]| {
            let mut tape = Tape::new();
            let out = model.sentence_loss::<ChaCha8Rng>(&mut tape, &ids, golds, None).unwrap();
            tape.value(out.loss).values()[0]
        };
        let base = loss(&golds);
        golds.shuffle(&mut r);
        worst = worst.max((loss(&golds) - base).abs());
    }
    outcome(worst < 1e-9, format!("largest change under gold permutation {worst:.2e} over 100 instances"))
}

struct Trained {
    checkpoint: Checkpoint,
    test: Vec<slotrte::data::Example>,
}

fn criterion_6() -> (Outcome, Option<Trained>) {
    let corpus = generate_synthetic(&CorpusManifest::default()).unwrap();
    let cfg = TrainConfig { epochs: 30, ..TrainConfig::default() };
    let opts = TrainOptions::default();
    let start = Instant::now();
    let out = match train(&corpus.train, &corpus.valid, &corpus.relations, &cfg, &opts) {
        Ok(o) => o,
        Err(e) => return (outcome(false, format!("training failed: {e}")), None),
    };
    let secs = start.elapsed().as_secs_f64();
    for rec in &out.record.epochs {
        println!(
            "    epoch {:>2}  loss {:.4}  valid exact F1 {:.4}  {:.0}s",
            rec.epoch, rec.train_loss, rec.valid_f1_exact, rec.wall_time_s
        );
    }
    let model = out.checkpoint.model().unwrap();
    let vocab = out.checkpoint.vocabulary().unwrap();
    let report = evaluate(&model, &vocab, &corpus.test, HeadWord::Last).unwrap();
    let f1 = report.f1(MatchMode::Exact);
    let epochs = out.record.epochs.len();
    let pass = f1 >= 0.95 && epochs <= 50 && secs < 1800.0;
    let detail = format!(
        "test exact F1 {f1:.4} (partial {:.4}), best epoch {} of {epochs}, {secs:.0}s",
        report.f1(MatchMode::Partial),
        out.best_epoch
    );
    (outcome(pass, detail), Some(Trained { checkpoint: out.checkpoint, test: corpus.test }))
}

fn criterion_7() -> Outcome {
    let manifest = CorpusManifest { train: 2000, valid: 300, test: 500, ..CorpusManifest::overlap_heavy() };
    let corpus = generate_synthetic(&manifest).unwrap();
    let mut scores = Vec::new();
    for variant in [Variant::Softmax, Variant::OptimalTransport] {
        let cfg = TrainConfig { epochs: 30, variant, ..TrainConfig::default() };
        let out = train(&corpus.train, &corpus.valid, &corpus.relations, &cfg, &TrainOptions::default()).unwrap();
        let model = out.checkpoint.model().unwrap();
        let vocab = out.checkpoint.vocabulary().unwrap();
        let rep = evaluate(&model, &vocab, &corpus.test, HeadWord::Last).unwrap();
        let slice = |name: &str| rep.by_pattern.get(name).map_or(f64::NAN, |s| s.exact.f1);
        println!(
            "    {variant:<8} exact F1 {:.4}  partial {:.4}  Normal {:.4}  SEO {:.4}  EPO {:.4}",
            rep.f1(MatchMode::Exact),
            rep.f1(MatchMode::Partial),
            slice("Normal"),
            slice("SEO"),
            slice("EPO")
        );
        scores.push(rep.f1(MatchMode::Exact));
    }
    let direction = if scores[1] > scores[0] { "OT ahead" } else { "softmax ahead or tied" };
    outcome(true, format!("reported only: softmax {:.4}, OT {:.4} ({direction})", scores[0], scores[1]))
}

fn criterion_8() -> Outcome {
    let mut r = rng(108);
    let mut disagreements = 0;
    for _ in 0..1000 {
        let n = r.gen_range(3..12);
        let triple = |r: &mut ChaCha8Rng| {
            let a = r.gen_range(1..=n);
            let b = r.gen_range(a..=n.min(a + 2));
            let c = r.gen_range(1..=n);
            let d = r.gen_range(c..=n.min(c + 2));
            GoldTriple { ss: a, se: b, rel: r.gen_range(0..3), os: c, oe: d }
        };
        let gold: Vec<GoldTriple> = (0..r.gen_range(1..5)).map(|_| triple(&mut r)).collect();
        let mut raw: Vec<GoldTriple> = (0..r.gen_range(0..6)).map(|_| triple(&mut r)).collect();
        raw.extend(gold.iter().copied().filter(|_| r.gen_bool(0.5)));
        let pred: Vec<DecodedTriple> = raw
            .into_iter()
            .map(|t| DecodedTriple { subject: (t.ss, t.se), relation: t.rel, object: (t.os, t.oe), score: 1.0 })
            .collect();
        for mode in [MatchMode::Exact, MatchMode::Partial] {
            for head in [HeadWord::Last, HeadWord::First] {
                if match_triples(&pred, &gold, mode, head) != brute_match(&pred, &gold, mode, head) {
                    disagreements += 1;
                }
            }
        }
    }
    outcome(
        disagreements == 0,
        format!("evaluator vs brute force: {disagreements} disagreements in 1000 cases x 4 settings; headline benchmark numbers not reproducible at desk scale"),
    )
}

/// Pairwise comparison over deduplicated lists.
fn brute_match(pred: &[DecodedTriple], gold: &[GoldTriple], mode: MatchMode, head: HeadWord) -> MatchCounts {
    let key = |s: (usize, usize), rel: usize, o: (usize, usize)| match mode {
        MatchMode::Exact => [s.0, s.1, rel, o.0, o.1],
        MatchMode::Partial => [head.of(s), 0, rel, head.of(o), 0],
    };
    let mut ps: Vec<[usize; 5]> = Vec::new();
    for p in pred {
        let k = key(p.subject, p.relation, p.object);
        if !ps.contains(&k) {
            ps.push(k);
        }
    }
    let mut gs: Vec<[usize; 5]> = Vec::new();
    for g in gold {
        let k = key(g.subject(), g.rel, g.object());
        if !gs.contains(&k) {
            gs.push(k);
        }
    }
    let correct = ps.iter().filter(|p| gs.iter().any(|g| g == *p)).count();
    MatchCounts { correct, predicted: ps.len(), gold: gs.len() }
}

fn criterion_9(trained: Option<&Trained>) -> Outcome {
    let Some(t) = trained else {
        return outcome(false, "no trained model (criterion 6 did not produce one)".into());
    };
    let model = t.checkpoint.model().unwrap();
    let vocab = t.checkpoint.vocabulary().unwrap();
    let rate = explanation_hit_rate(&model, &vocab, &t.test, HeadWord::Last, 5).unwrap();
    // where the attention of correctly predicting slots actually goes
    let (mut marker_mass, mut slots) = (0.0, 0);
    for ex in &t.test {
        let sent = vocab.sentence(&ex.tokens);
        let n = sent.len();
        let pred = model.predict(&sent.ids).unwrap();
        let map = &pred.maps.last().unwrap().attention;
        for (i, p) in pred.slots.iter().enumerate() {
            let Some(d) = decode(p, n, InvertedSpan::Swap) else { continue };
            let hit = ex.triples.iter().any(|g| {
                (g.ss, g.se, g.rel, g.os, g.oe) == (d.subject.0, d.subject.1, d.relation, d.object.0, d.object.1)
            });
            if hit {
                marker_mass += map.get(i, 0) + map.get(i, n - 1);
                slots += 1;
            }
        }
    }
    outcome(
        rate.rate() >= 0.9,
        format!(
            "{} of {} correct slots attend a gold head word in their top 5 ({:.4}); mean attention on boundary markers {:.3}",
            rate.hits,
            rate.total,
            rate.rate(),
            marker_mass / slots.max(1) as f64
        ),
    )
}

fn main() {
    let only: Option<Vec<usize>> =
        std::env::var("ACCEPT_ONLY").ok().map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let wanted = |i: usize| only.as_ref().is_none_or(|v| v.contains(&i));
    let mut failed = 0;
    let mut report = |i: usize, o: Outcome| {
        println!("criterion {i}: {} - {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed += 1;
        }
    };
    let quick: [(usize, fn() -> Outcome); 5] =
        [(1, criterion_1), (2, criterion_2), (3, criterion_3), (4, criterion_4), (5, criterion_5)];
    for (i, f) in quick {
        if wanted(i) {
            report(i, f());
        }
    }
    let trained = if wanted(6) || wanted(9) {
        let (o, t) = criterion_6();
        if wanted(6) {
            report(6, o);
        }
        t
    } else {
        None
    };
    if wanted(7) {
        report(7, criterion_7());
    }
    if wanted(8) {
        report(8, criterion_8());
    }
    if wanted(9) {
        report(9, criterion_9(trained.as_ref()));
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
