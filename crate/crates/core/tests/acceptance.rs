//! Acceptance criteria, run in order with one PASS/FAIL line each.
//!
//! The optional real-corpus check is ignored by default. Run it with
//! `HTENSION_CORPUS=<archive dir> [HTENSION_ANNOTATIONS=<csv>] cargo test
//! --test acceptance -- --ignored --nocapture`.

use std::cell::Cell;
use std::time::{Duration, Instant};

use harmonic_tension::archive::read_archive;
use harmonic_tension::embedding::kernel::{cbow_gradient, cbow_loss, CbowExample};
use harmonic_tension::embedding::{train, EmbeddingModel, TrainConfig};
use harmonic_tension::experiments::{
    parse_annotations, run_experiment1, run_experiment2, Exp1Result, ExperimentConfig,
    HypothesisOutcome,
};
use harmonic_tension::score::{full_expansion, NoteEvent, Slice, Time};
use harmonic_tension::stats::{bonferroni, oneway_anova, welch_t, Df};
use harmonic_tension::synth::{annotations_csv, context_pair_corpus, tonal_corpus, SynthConfig};
use harmonic_tension::tension::{decay_weight, tension_at, TensionConfig};
use harmonic_tension::vocab::{build_corpus, Corpus, UnitMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit: Duration, detail: String) -> Outcome {
    check(elapsed < limit, format!("{detail}, {:.2?} of {limit:?}", elapsed))
}

fn random_events(rng: &mut impl Rng) -> Vec<NoteEvent> {
    let n = rng.gen_range(1..=50);
    (0..n)
        .map(|_| {
            let den = [1, 2, 3, 4, 6, 8, 12, 16][rng.gen_range(0..8)];
            let onset = Time::new(rng.gen_range(0..4 * den), den);
            let duration = Time::new(rng.gen_range(1..=2 * den), den);
            NoteEvent::new(onset, duration, rng.gen_range(0..128), rng.gen_range(0..4)).unwrap()
        })
        .collect()
}

fn brute_force(events: &[NoteEvent]) -> Vec<Slice> {
    let mut onsets: Vec<Time> = events.iter().map(|e| e.onset).collect();
    onsets.sort();
    onsets.dedup();
    onsets
        .into_iter()
        .map(|t| {
            let sounding = events
                .iter()
                .filter(|e| e.onset <= t && t < e.onset + e.duration)
                .map(|e| e.pitch)
                .collect();
            Slice::new(t, sounding).unwrap()
        })
        .collect()
}

fn criterion1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut mismatches = 0;
    for _ in 0..200 {
        let events = random_events(&mut rng);
        if full_expansion(&events).unwrap() != brute_force(&events) {
            mismatches += 1;
        }
    }
    if mismatches > 0 {
        return Err(format!("{mismatches} of 200 event sets differ from the brute-force scan"));
    }
    within(start.elapsed(), Duration::from_secs(5), "200 random event sets match".into())
}

fn criterion2() -> Outcome {
    let w1 = decay_weight(1, 24).unwrap();
    let w24 = decay_weight(24, 24).unwrap();
    let expected = 1.0 - (-1.0f64 / 23.0).exp();
    let weights: Vec<f64> = (1..=24).map(|i| decay_weight(i, 24).unwrap()).collect();
    let decreasing = weights.windows(2).all(|w| w[1] < w[0]);
    check(
        w1 == 1.0 && (w24 - expected).abs() < 1e-12 && decreasing,
        format!("w(1) = {w1}, w(24) = {w24:.15} vs {expected:.15}, strictly decreasing: {decreasing}"),
    )
}

fn criterion3() -> Outcome {
    let start = Instant::now();
    let (v, d) = (5usize, 4usize);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cells = |x: &[f64]| -> Vec<Cell<f64>> { x.iter().copied().map(Cell::new).collect() };
    let examples: [(&[u32], u32, &[u32]); 4] = [
        (&[1, 2, 3], 0, &[4, 2]),
        (&[0, 0, 4], 3, &[3, 1, 2]),
        (&[2], 2, &[2, 0]),
        (&[4, 3, 1, 0], 1, &[4]),
    ];
    let h = 1e-5;
    let mut max_rel: f64 = 0.0;
    for (context, target, negatives) in examples {
        let ex = CbowExample {
            context,
            target,
            negatives,
        };
        let input: Vec<f64> = (0..v * d).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let output: Vec<f64> = (0..v * d).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let grad = cbow_gradient(cells(&input).as_slice(), cells(&output).as_slice(), d, ex);
        let (d_in, d_out) = grad.to_dense(context, v, d);
        for (which, analytic) in [d_in, d_out].iter().enumerate() {
            for i in 0..v * d {
                let probe = |delta: f64| {
                    let (mut a, mut b) = (input.clone(), output.clone());
                    let m = if which == 0 { &mut a } else { &mut b };
                    m[i] += delta;
                    cbow_loss(cells(&a).as_slice(), cells(&b).as_slice(), d, ex)
                };
                let numeric = (probe(h) - probe(-h)) / (2.0 * h);
                let scale = analytic[i].abs().max(numeric.abs()).max(1e-6);
                max_rel = max_rel.max((analytic[i] - numeric).abs() / scale);
            }
        }
    }
    if max_rel >= 1e-4 {
        return Err(format!("max relative error {max_rel:.2e}"));
    }
    within(start.elapsed(), Duration::from_secs(1), format!("max relative error {max_rel:.2e}"))
}

fn criterion4() -> Outcome {
    let start = Instant::now();
    let c = context_pair_corpus(50_000, 4);
    let model = train(&c.sequences, &c.vocab, &TrainConfig::default()).map_err(|e| e.to_string())?;
    let cos = |a, b| model.cosine(a, b).unwrap();
    let (a, b) = c.pair;
    let same = cos(a, b);
    let disjoint = (cos(a, c.outsider) + cos(b, c.outsider)) / 2.0;
    let margin = same - disjoint;
    if margin < 0.2 {
        return Err(format!("same-context {same:.3}, disjoint {disjoint:.3}, margin {margin:.3}"));
    }
    within(
        start.elapsed(),
        Duration::from_secs(60),
        format!("same-context {same:.3}, disjoint {disjoint:.3}, margin {margin:.3}"),
    )
}

fn model_from_rows(rows: &[Vec<f32>]) -> EmbeddingModel {
    let dim = rows[0].len();
    let input: Vec<f32> = rows.iter().flatten().copied().collect();
    let output = vec![0.0; input.len()];
    let cfg = TrainConfig {
        dim,
        ..TrainConfig::default()
    };
    EmbeddingModel::from_parts(input, output, cfg, [0; 32]).unwrap()
}

fn criterion5() -> Outcome {
    let cfg = TensionConfig::default();
    let constant = model_from_rows(&[vec![0.3, -1.2, 0.7, 0.05]]);
    let ids = vec![0u32; 40];
    let worst_constant = (1..ids.len())
        .map(|t| (tension_at(&constant, &ids, t, cfg).unwrap() + 1.0).abs())
        .fold(0.0, f64::max);

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut rows: Vec<Vec<f32>> = (0..6)
        .map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), 0.0])
        .collect();
    rows.push(vec![0.0, 0.0, 0.0, 1.7]);
    let orthogonal = model_from_rows(&rows);
    let mut ids: Vec<u32> = (0..30).map(|_| rng.gen_range(0..6)).collect();
    ids.push(6);
    let worst_orthogonal = [TensionConfig::default(), TensionConfig { normalize_partial: false, ..cfg }]
        .into_iter()
        .map(|c| tension_at(&orthogonal, &ids, 30, c).unwrap().abs())
        .fold(0.0, f64::max);
    check(
        worst_constant < 1e-9 && worst_orthogonal < 1e-9,
        format!("constant |t + 1| <= {worst_constant:.1e}, orthogonal |t| <= {worst_orthogonal:.1e}"),
    )
}

fn fixture() -> Corpus {
    let pieces = tonal_corpus(&SynthConfig::default());
    let input: Vec<(String, Vec<Slice>)> = pieces.iter().map(|p| (p.id.clone(), p.slices())).collect();
    build_corpus(&input, UnitMode::BassTagged).unwrap()
}

fn h(hypotheses: &[HypothesisOutcome], name: &str, prediction: &str) -> Option<(f64, f64)> {
    hypotheses
        .iter()
        .find(|h| h.entry.hypothesis == name && h.prediction == prediction)
        .map(|h| (h.entry.statistic, h.entry.p))
}

fn criterion6(corpus: &Corpus, exp1: &Exp1Result, elapsed: Duration) -> Outcome {
    let start = Instant::now();
    let tiers = ["major", "minor", "diminished", "augmented"];
    let rows = exp1.table("exp1_fig3a_triad_qualities").unwrap_or_default();
    let means: Vec<Option<f64>> = tiers
        .iter()
        .map(|t| rows.iter().find(|r| r.group == *t).map(|r| r.mean))
        .collect();
    let mut detail = format!(
        "exp1 means {}",
        means
            .iter()
            .map(|m| m.map_or("missing".into(), |m| format!("{m:.3}")))
            .collect::<Vec<_>>()
            .join(" < ")
    );
    let mut ok = means.iter().all(Option::is_some)
        && means.windows(2).all(|w| w[0].unwrap() < w[1].unwrap());
    for pair in tiers.windows(2) {
        match h(&exp1.report.hypotheses, "H3", &format!("{} < {}", pair[0], pair[1])) {
            Some((t, p)) => {
                detail.push_str(&format!(", {} p={p:.1e}", pair[1]));
                ok &= t < 0.0 && p < 0.01;
            }
            None => ok = false,
        }
    }

    let annotations = parse_annotations(&annotations_csv(&tonal_corpus(&SynthConfig::default())), corpus)
        .map_err(|e| e.to_string())?;
    let exp2 = run_experiment2(corpus, &annotations, &ExperimentConfig::default()).map_err(|e| e.to_string())?;
    match h(&exp2.report.hypotheses, "H3", "PAC < DC") {
        Some((t, p)) => {
            detail.push_str(&format!("; exp2 PAC < DC t={t:.2} p={p:.1e}"));
            ok &= t < 0.0 && p < 0.01;
        }
        None => ok = false,
    }
    if !ok {
        return Err(detail);
    }
    within(elapsed + start.elapsed(), Duration::from_secs(300), detail)
}

fn criterion7() -> Outcome {
    let a = [1.0, 2.0, 3.0, 4.0, 5.0];
    let b = [2.0, 3.0, 4.0, 5.0, 6.0];
    const P: f64 = 0.34659350708733416;
    let w = welch_t(&a, &b).unwrap();
    let Df::One(df) = w.df else { return Err("welch df shape".into()) };
    let anova = oneway_anova(&[&a, &b]).unwrap();
    let mut ok = (w.statistic + 1.0).abs() < 1e-6 && (df - 8.0).abs() < 1e-6 && (w.p_value - P).abs() < 1e-6;
    ok &= (anova.test.statistic - 1.0).abs() < 1e-6 && (anova.test.p_value - P).abs() < 1e-6;

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let x: Vec<f64> = (0..rng.gen_range(2..30)).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let y: Vec<f64> = (0..rng.gen_range(2..30)).map(|_| rng.gen_range(-2.0..4.0)).collect();
        let t = harmonic_tension::stats::pooled_t(&x, &y).unwrap().statistic;
        let f = oneway_anova(&[&x, &y]).unwrap().test.statistic;
        worst = worst.max((f - t * t).abs() / f.max(1.0));
    }
    ok &= worst < 1e-8;
    let alpha = bonferroni(0.05, 8).unwrap();
    ok &= (alpha - 0.00625).abs() < 1e-15;
    check(
        ok,
        format!(
            "t={:.6} df={df} p={:.10}, F={:.6} p={:.10}, max |F - t^2| {worst:.1e}, alpha {alpha}",
            w.statistic, w.p_value, anova.test.statistic, anova.test.p_value
        ),
    )
}

fn criterion8(corpus: &Corpus, first: &Exp1Result) -> Outcome {
    let second = run_experiment1(corpus, &ExperimentConfig::default()).map_err(|e| e.to_string())?;
    let (a, b) = (first.files(), second.files());
    let differing: Vec<&str> = a
        .iter()
        .zip(&b)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.as_str())
        .collect();
    check(
        differing.is_empty() && a.len() == b.len(),
        format!("{} output files compared, differing: {differing:?}", a.len()),
    )
}

#[test]
fn acceptance() {
    let mut failed = Vec::new();
    let mut record = |n: usize, outcome: Outcome| {
        match &outcome {
            Ok(d) => println!("criterion {n}: PASS ({d})"),
            Err(d) => println!("criterion {n}: FAIL ({d})"),
        }
        if outcome.is_err() {
            failed.push(n);
        }
    };
    record(1, criterion1());
    record(2, criterion2());
    record(3, criterion3());
    record(4, criterion4());
    record(5, criterion5());

    let corpus = fixture();
    let start = Instant::now();
    let exp1 = run_experiment1(&corpus, &ExperimentConfig::default());
    let elapsed = start.elapsed();
    match &exp1 {
        Ok(r) => record(6, criterion6(&corpus, r, elapsed)),
        Err(e) => record(6, Err(e.to_string())),
    }
    record(7, criterion7());
    match &exp1 {
        Ok(r) => record(8, criterion8(&corpus, r)),
        Err(e) => record(8, Err(e.to_string())),
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

#[test]
#[ignore = "needs a user-supplied corpus archive in HTENSION_CORPUS"]
fn real_corpus_orderings() {
    let Some(dir) = std::env::var_os("HTENSION_CORPUS") else {
        println!("criterion 9: SKIPPED (HTENSION_CORPUS not set)");
        return;
    };
    let archive = read_archive(std::path::Path::new(&dir)).expect("corpus archive");
    let corpus = &archive.corpus;
    println!("vocabulary size {} (reference 4753)", corpus.vocab.len());
    let cfg = ExperimentConfig {
        workers: std::thread::available_parallelism().map_or(1, usize::from),
        ..ExperimentConfig::default()
    };
    let exp1 = run_experiment1(corpus, &cfg).expect("exp1");
    let mean = |stem: &str, group: &str| {
        exp1.table(stem)
            .and_then(|rows| rows.iter().find(|r| r.group == group))
            .map(|r| r.mean)
            .unwrap_or(f64::NAN)
    };
    let q: Vec<f64> = ["major", "minor", "diminished", "augmented"]
        .iter()
        .map(|g| mean("exp1_fig3a_triad_qualities", g))
        .collect();
    println!("quality means {q:?}");
    let (triad, seventh) = (
        mean("exp1_fig3b_triads_sevenths", "triad"),
        mean("exp1_fig3b_triads_sevenths", "seventh"),
    );
    println!("triad {triad:.4}, seventh {seventh:.4}");
    let mut ok = q.windows(2).all(|w| w[0] < w[1]) && triad < seventh;

    if let Some(path) = std::env::var_os("HTENSION_ANNOTATIONS") {
        let text = std::fs::read_to_string(path).expect("annotations");
        let annotations = parse_annotations(&text, corpus).expect("valid annotations");
        let exp2 = run_experiment2(corpus, &annotations, &cfg).expect("exp2");
        let m = |g: &str| {
            let v = exp2.group(g);
            v.iter().sum::<f64>() / v.len() as f64
        };
        let (pac, hc, dc, base) = (m("PAC"), m("HC"), m("DC"), m("non-cadential"));
        println!("PAC {pac:.4}, HC {hc:.4}, DC {dc:.4}, baseline {base:.4}");
        ok &= pac < hc && hc < dc && pac < base;
    }
    println!("criterion 9: {}", if ok { "PASS" } else { "FAIL" });
    assert!(ok);
}
