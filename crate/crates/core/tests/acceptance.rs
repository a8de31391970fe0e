//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero
//! if any criterion fails. Optional large-scale criteria are reported as SKIP.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rdclass::clean::{clean, CleanConfig, CleanStats};
use rdclass::evaluate::{confusion, f_beta, macro_scores, micro_score};
use rdclass::ingest::ingest_document;
use rdclass::models::mlp::Mlp;
use rdclass::models::{
    apply_threshold, compute_label_weights, train, train_decision_tree, ModelFamily, Node, TrainConfig, TreeConfig,
};
use rdclass::recordio::NdjsonWriter;
use rdclass::sample::{assign_best_labels, dataset_stats_from, stratified_split, SplitConfig};
use rdclass::scheme_map::MappingTable;
use rdclass::sparse::SparseMatrix;
use rdclass::vectorize::{anova_f, anova_f_sparse, select_features, SizeClass, StopWords, VectorizerModel};
use rdclass::{Discipline, LabelSet, NUM_DISCIPLINES};
use sha2::{Digest, Sha256};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(limit: Duration, start: Instant, what: &str) -> Result<(), String> {
    let t = start.elapsed();
    ensure(t < limit, || format!("{what} took {:.2?}, limit {:?}", t, limit))
}

// ---------------------------------------------------------------- 1

/// Independent metric implementation: nested loops over explicit cells.
fn oracle_scores(truth: &[Vec<bool>], pred: &[Vec<bool>], beta: f64) -> (f64, f64) {
    let labels = truth[0].len();
    let mut sum_f = 0.0;
    let (mut all_tp, mut all_fp, mut all_fn) = (0.0, 0.0, 0.0);
    for l in 0..labels {
        let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
        for r in 0..truth.len() {
            if truth[r][l] && pred[r][l] {
                tp += 1.0;
            }
            if !truth[r][l] && pred[r][l] {
                fp += 1.0;
            }
            if truth[r][l] && !pred[r][l] {
                fn_ += 1.0;
            }
        }
        let p: f64 = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let rc: f64 = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
        let b2 = beta.powi(2);
        sum_f += if p + rc > 0.0 { (1.0 + b2) * p * rc / (b2 * p + rc) } else { 0.0 };
        all_tp += tp;
        all_fp += fp;
        all_fn += fn_;
    }
    let p = if all_tp + all_fp > 0.0 { all_tp / (all_tp + all_fp) } else { 0.0 };
    let rc = if all_tp + all_fn > 0.0 { all_tp / (all_tp + all_fn) } else { 0.0 };
    let b2 = beta.powi(2);
    let micro = if p + rc > 0.0 { (1.0 + b2) * p * rc / (b2 * p + rc) } else { 0.0 };
    (sum_f / labels as f64, micro)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let density = rng.gen_range(0.02..0.5);
        let noise = rng.gen_range(0.0..0.6);
        let truth: Vec<Vec<bool>> =
            (0..200).map(|_| (0..NUM_DISCIPLINES).map(|_| rng.gen_bool(density)).collect()).collect();
        let pred: Vec<Vec<bool>> =
            truth.iter().map(|row| row.iter().map(|&t| if rng.gen_bool(noise) { !t } else { t }).collect()).collect();
        let counts = confusion(&truth, &pred).map_err(|e| e.to_string())?;
        for beta in [0.5, 1.0, 2.0] {
            let (om, oi) = oracle_scores(&truth, &pred, beta);
            worst = worst.max((macro_scores(&counts, beta).1 - om).abs());
            worst = worst.max((micro_score(&counts, beta) - oi).abs());
        }
    }
    ensure(worst <= 1e-12, || format!("max abs error {worst:e}"))?;
    within(Duration::from_secs(5), start, "metric comparison")?;
    Ok(format!("max abs error {worst:.1e} over 100 pairs"))
}

// ---------------------------------------------------------------- 2

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for i in 0..=100 {
        for j in 0..=100 {
            let (p, r) = (i as f64 / 100.0, j as f64 / 100.0);
            worst = worst.max((f_beta(p, r, 2.0) - f_beta(r, p, 0.5)).abs());
        }
        let x = i as f64 / 100.0;
        for beta in [0.5, 1.0, 2.0] {
            worst = worst.max((f_beta(x, x, beta) - x).abs());
        }
    }
    ensure(worst <= 1e-12, || format!("max abs error {worst:e}"))?;
    within(Duration::from_secs(1), start, "grid")?;
    Ok(format!("max abs error {worst:.1e} over 101x101 grid"))
}

// ---------------------------------------------------------------- 3

const TABLE_TOTALS: [u64; NUM_DISCIPLINES] = [
    46_498, 152_569, 81_397, 73_478, 227_247, 3_199, 69_973, 33_755, 157_536, 3_268, 5_102, 7_568, 6_749, 12_223,
    18_014, 1_379, 1_734, 6_074, 6_632, 1_598,
];

fn criterion_3() -> Outcome {
    let w = compute_label_weights(&TABLE_TOTALS).map_err(|e| e.to_string())?;
    let bio = w[Discipline::BiologicalSciences.index()];
    let law = w[Discipline::LawAndLegalStudies.index()];
    ensure((bio - 1.0).abs() <= 1e-9, || format!("biological weight {bio}"))?;
    ensure((law - 227_247.0 / 1_379.0).abs() <= 1e-9, || format!("law weight {law}"))?;
    ensure(w.iter().all(|&v| v >= 1.0), || "weight below 1".into())?;
    Ok(format!("weight(Law) = {law:.4}"))
}

// ---------------------------------------------------------------- 4

/// Dense tf-idf written with plain loops and its own tokenizer.
fn oracle_tfidf(docs: &[String], stop: &BTreeSet<String>) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut tokenized = Vec::new();
    for d in docs {
        let mut words = Vec::new();
        let mut cur = String::new();
        for ch in d.chars().chain(std::iter::once(' ')) {
            if ch.is_alphanumeric() {
                cur.push(ch);
            } else {
                if cur.chars().count() >= 2 {
                    let w = cur.to_lowercase();
                    if !stop.contains(&w) {
                        words.push(w);
                    }
                }
                cur.clear();
            }
        }
        let mut terms = words.clone();
        for i in 0..words.len().saturating_sub(1) {
            terms.push(format!("{} {}", words[i], words[i + 1]));
        }
        tokenized.push(terms);
    }
    let vocab: Vec<String> = tokenized.iter().flatten().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let n = docs.len() as f64;
    let mut idf = vec![0.0; vocab.len()];
    for (j, t) in vocab.iter().enumerate() {
        let mut df = 0.0;
        for doc in &tokenized {
            if doc.contains(t) {
                df += 1.0;
            }
        }
        idf[j] = ((1.0 + n) / (1.0 + df)).ln() + 1.0;
    }
    let mut rows = Vec::new();
    for doc in &tokenized {
        let mut row = vec![0.0; vocab.len()];
        for (j, t) in vocab.iter().enumerate() {
            let mut c = 0.0;
            for x in doc {
                if x == t {
                    c += 1.0;
                }
            }
            row[j] = c * idf[j];
        }
        let norm: f64 = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in &mut row {
                *v /= norm;
            }
        }
        rows.push(row);
    }
    (vocab, rows)
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let words =
        ["soil", "river", "the", "of", "data", "Quantum", "x", "rain", "Flow", "map", "a1", "ice", "über", "3d"];
    let stop_list = ["the", "of", "data", "and"];
    let stop: StopWords = stop_list.iter().copied().collect();
    let stop_set: BTreeSet<String> = stop_list.iter().map(|s| s.to_string()).collect();
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let n_docs = rng.gen_range(1..=50);
        let docs: Vec<String> = (0..n_docs)
            .map(|_| {
                let len = rng.gen_range(0..15);
                (0..len)
                    .map(|_| {
                        let w = words[rng.gen_range(0..words.len())];
                        let sep = [" ", ", ", "-", ". "][rng.gen_range(0..4)];
                        format!("{w}{sep}")
                    })
                    .collect()
            })
            .collect();
        let model = VectorizerModel::fit(docs.iter().map(String::as_str), stop.clone()).map_err(|e| e.to_string())?;
        let x = model.transform(docs.iter().map(String::as_str));
        let (vocab, oracle) = oracle_tfidf(&docs, &stop_set);
        ensure(model.terms() == vocab.as_slice(), || "vocabulary differs from oracle".into())?;
        for (r, orow) in oracle.iter().enumerate() {
            let dense = &x.to_dense()[r];
            for (a, b) in dense.iter().zip(orow) {
                worst = worst.max((a - b).abs());
            }
            let norm: f64 = dense.iter().map(|v| v * v).sum::<f64>().sqrt();
            ensure(norm == 0.0 || (norm - 1.0).abs() <= 1e-12, || format!("row norm {norm}"))?;
        }
    }
    ensure(worst <= 1e-12, || format!("max abs error {worst:e}"))?;
    Ok(format!("max abs error {worst:.1e} over 20 corpora"))
}

// ---------------------------------------------------------------- 5

fn criterion_5() -> Outcome {
    let f = anova_f(&[0.0, 1.0, 2.0, 3.0], &[true, true, false, false]).map_err(|e| e.to_string())?;
    ensure(f == 8.0, || format!("anova_f example gave {f}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.gen_range(4..60);
        let values: Vec<f64> = (0..n).map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(-3.0..3.0) }).collect();
        let mut groups: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.4)).collect();
        groups[0] = true;
        groups[1] = false;
        let base = anova_f(&values, &groups).map_err(|e| e.to_string())?;
        let a = rng.gen_range(0.1..10.0) * if rng.gen_bool(0.5) { -1.0 } else { 1.0 };
        let b = rng.gen_range(-100.0..100.0);
        let moved: Vec<f64> = values.iter().map(|v| a * v + b).collect();
        let flipped: Vec<bool> = groups.iter().map(|g| !g).collect();
        let n1 = groups.iter().filter(|g| **g).count();
        let sparse: Vec<(u32, f64)> =
            values.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, v)| (i as u32, *v)).collect();
        for other in [
            anova_f(&moved, &groups).map_err(|e| e.to_string())?,
            anova_f(&values, &flipped).map_err(|e| e.to_string())?,
            anova_f_sparse(&sparse, &groups, n1).map_err(|e| e.to_string())?,
        ] {
            let rel = if base == 0.0 && other == 0.0 { 0.0 } else { (other - base).abs() / base.abs().max(1e-300) };
            worst = worst.max(rel);
        }
    }
    ensure(worst <= 1e-9, || format!("max relative error {worst:e}"))?;
    Ok(format!("F(example) = 8, max relative error {worst:.1e} over 1000 columns"))
}

// ---------------------------------------------------------------- 6

fn random_labelsets(rng: &mut ChaCha8Rng, n: usize, classes: usize) -> Vec<LabelSet> {
    (0..n)
        .map(|_| {
            let k = *[1, 1, 1, 2, 2, 3, 4].choose(rng).unwrap();
            let mut s = LabelSet::new();
            while s.len() < k.min(classes) {
                s.insert(Discipline::ALL[rng.gen_range(0..classes)]);
            }
            s
        })
        .collect()
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..1000 {
        let n = rng.gen_range(1..200);
        let classes = rng.gen_range(2..=NUM_DISCIPLINES);
        let sets = random_labelsets(&mut rng, n, classes);
        let best = assign_best_labels(&sets).map_err(|e| e.to_string())?;
        let mut counts = [0u64; NUM_DISCIPLINES];
        for (s, b) in sets.iter().zip(&best) {
            if s.len() == 1 {
                ensure(s.contains(*b), || "single-label record changed label".into())?;
                counts[b.index()] += 1;
            }
        }
        for (s, b) in sets.iter().zip(&best) {
            if s.len() > 1 {
                ensure(s.contains(*b), || "best label outside labelset".into())?;
                let min = s.iter().map(|d| counts[d.index()]).min().unwrap();
                ensure(counts[b.index()] == min, || "assignment was not an argmin".into())?;
                ensure(s.iter().filter(|d| counts[d.index()] == min).all(|d| d.code() >= b.code()), || {
                    "tie not broken towards the lowest code".into()
                })?;
                counts[b.index()] += 1;
            }
        }
    }
    within(Duration::from_secs(10), start, "replay")?;
    Ok("1000 datasets replayed".into())
}

// ---------------------------------------------------------------- 7

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let n = rng.gen_range(1..2000);
        let best: Vec<Discipline> = (0..n)
            .map(|_| {
                // skewed class sizes
                let u: f64 = rng.gen();
                Discipline::ALL[((u * u) * NUM_DISCIPLINES as f64) as usize]
            })
            .collect();
        let cfg = SplitConfig { ratio: 0.1, seed: rng.gen(), second_split: false };
        let split = stratified_split(&best, &cfg);
        let again = stratified_split(&best, &cfg);
        let bytes = |s: &rdclass::sample::Split| serde_json::to_vec(s).unwrap();
        ensure(bytes(&split) == bytes(&again), || "same seed gave a different split".into())?;
        ensure(split.train.len() + split.holdout.len() == n, || "split lost records".into())?;
        let holdout: BTreeSet<usize> = split.holdout.iter().copied().collect();
        for d in Discipline::ALL {
            let members: Vec<usize> = (0..n).filter(|&i| best[i] == d).collect();
            let held = members.iter().filter(|i| holdout.contains(i)).count() as f64;
            let target = 0.1 * members.len() as f64;
            ensure((held - target).abs() <= 1.0, || {
                format!("stratum of {} has {held} held out, target {target}", members.len())
            })?;
        }
    }
    Ok("100 datasets within one record of 10%".into())
}

// ---------------------------------------------------------------- 8

fn oracle_gini(pos: f64, n: f64, w: f64) -> f64 {
    let wp = w * pos;
    let wn = n - pos;
    if wp + wn == 0.0 {
        return 0.0;
    }
    let p = wp / (wp + wn);
    1.0 - p * p - (1.0 - p) * (1.0 - p)
}

/// Exhaustive search over every feature and every midpoint threshold.
fn oracle_best_root(x: &[Vec<f64>], y: &[Vec<bool>], w: &[f64]) -> (f64, f64) {
    let n = x.len();
    let labels = w.len();
    let parent: f64 =
        (0..labels).map(|l| oracle_gini(y.iter().filter(|r| r[l]).count() as f64, n as f64, w[l])).sum::<f64>()
            / labels as f64;
    let mut best = f64::INFINITY;
    for f in 0..x[0].len() {
        let mut values: Vec<f64> = x.iter().map(|r| r[f]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for pair in values.windows(2) {
            let t = pair[0] + (pair[1] - pair[0]) / 2.0;
            let mut total = 0.0;
            for l in 0..labels {
                let mut side = [(0.0, 0.0); 2];
                for (r, row) in x.iter().enumerate() {
                    let s = if row[f] <= t { 0 } else { 1 };
                    side[s].1 += 1.0;
                    if y[r][l] {
                        side[s].0 += 1.0;
                    }
                }
                let mass = |(p, m): (f64, f64)| w[l] * p + (m - p);
                let whole = mass(side[0]) + mass(side[1]);
                total += (mass(side[0]) * oracle_gini(side[0].0, side[0].1, w[l])
                    + mass(side[1]) * oracle_gini(side[1].0, side[1].1, w[l]))
                    / whole;
            }
            best = best.min(total / labels as f64);
        }
    }
    (parent, best)
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut splits = 0;
    for _ in 0..50 {
        let n = rng.gen_range(2..=200);
        let f = rng.gen_range(1..=10);
        let labels = rng.gen_range(1..=4);
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                (0..f).map(|_| if rng.gen_bool(0.5) { 0.0 } else { (rng.gen_range(-4..10) as f64) / 4.0 }).collect()
            })
            .collect();
        let y: Vec<Vec<bool>> =
            x.iter().map(|r| (0..labels).map(|l| (r[l % f] > 0.5) ^ rng.gen_bool(0.15)).collect()).collect();
        let w: Vec<f64> = (0..labels).map(|_| rng.gen_range(1.0..5.0)).collect();
        let tree = train_decision_tree(&SparseMatrix::from_dense(f, &x), &y, &w, &TreeConfig::default())
            .map_err(|e| e.to_string())?;
        let (parent, best) = oracle_best_root(&x, &y, &w);
        match &tree.nodes[0] {
            Node::Split { impurity, .. } => {
                splits += 1;
                ensure((impurity - best).abs() <= 1e-12, || format!("root impurity {impurity}, oracle {best}"))?;
            }
            Node::Leaf { .. } => {
                ensure(best >= parent - 1e-12, || format!("leaf root but oracle improves {parent} to {best}"))?;
            }
        }
    }
    Ok(format!("50 toy sets, {splits} with a root split"))
}

// ---------------------------------------------------------------- 9

fn criterion_9() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let net = Mlp::init(&[5, 4, 3], 99);
    let mut net = net;
    for b in net.biases.iter_mut().flatten() {
        *b = rng.gen_range(-0.5..0.5);
    }
    let dense: Vec<Vec<f64>> = (0..10).map(|_| (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let x = SparseMatrix::from_dense(5, &dense);
    let y: Vec<Vec<bool>> = (0..10).map(|_| (0..3).map(|_| rng.gen_bool(0.4)).collect()).collect();
    let w = [1.0, 2.5, 4.0];
    let rows: Vec<usize> = (0..10).collect();
    let (_, grads) = net.loss_and_gradients(&x, &y, &w, &rows);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for k in 0..net.weights.len() {
        for tensor in 0..2 {
            let len = if tensor == 0 { net.weights[k].len() } else { net.biases[k].len() };
            for i in 0..len {
                let mut plus = net.clone();
                let mut minus = net.clone();
                let (p, m) = if tensor == 0 {
                    (&mut plus.weights[k][i], &mut minus.weights[k][i])
                } else {
                    (&mut plus.biases[k][i], &mut minus.biases[k][i])
                };
                *p += h;
                *m -= h;
                let numeric = (plus.loss_and_gradients(&x, &y, &w, &rows).0
                    - minus.loss_and_gradients(&x, &y, &w, &rows).0)
                    / (2.0 * h);
                let analytic = if tensor == 0 { grads.weights[k][i] } else { grads.biases[k][i] };
                let rel = (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8);
                worst = worst.max(rel);
                checked += 1;
            }
        }
    }
    ensure(worst < 1e-4, || format!("max relative error {worst:e}"))?;
    within(Duration::from_secs(5), start, "gradient check")?;
    Ok(format!("{checked} parameters, max relative error {worst:.1e}"))
}

// ---------------------------------------------------------------- 10

struct Synthetic {
    docs: Vec<String>,
    labels: Vec<LabelSet>,
}

/// 20 classes with 50 signature tokens each, plus shared filler words.
fn synthetic_corpus(n: usize, seed: u64) -> Synthetic {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let filler: Vec<String> = (0..500).map(|i| format!("common{i}")).collect();
    let mut docs = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let k = if rng.gen_bool(0.5) { 1 } else { 2 };
        let mut set = LabelSet::new();
        while set.len() < k {
            set.insert(Discipline::ALL[rng.gen_range(0..NUM_DISCIPLINES)]);
        }
        let mut words: Vec<String> = Vec::new();
        for d in set.iter() {
            for _ in 0..8 {
                words.push(format!("sig{}w{}", d.code(), rng.gen_range(0..50)));
            }
        }
        for _ in 0..12 {
            words.push(filler[rng.gen_range(0..filler.len())].clone());
        }
        words.shuffle(&mut rng);
        docs.push(words.join(" "));
        labels.push(set);
    }
    Synthetic { docs, labels }
}

fn rows(labels: &[LabelSet], idx: &[usize]) -> Vec<Vec<bool>> {
    idx.iter().map(|&i| labels[i].indicator().to_vec()).collect()
}

fn holdout_macro_f1(model: &rdclass::models::TrainedModel, x: &SparseMatrix, y: &[Vec<bool>]) -> Result<f64, String> {
    let proba = model.predict_proba(x).map_err(|e| e.to_string())?;
    let pred = apply_threshold(&proba, 0.5);
    let counts = confusion(y, &pred).map_err(|e| e.to_string())?;
    Ok(macro_scores(&counts, 1.0).1)
}

fn criterion_10() -> Outcome {
    let start = Instant::now();
    let corpus = synthetic_corpus(10_000, 10);
    let cardinality = corpus.labels.iter().map(LabelSet::len).sum::<usize>() as f64 / corpus.labels.len() as f64;
    ensure((cardinality - 1.5).abs() < 0.05, || format!("cardinality {cardinality}"))?;
    let best = assign_best_labels(&corpus.labels).map_err(|e| e.to_string())?;
    let split = stratified_split(&best, &SplitConfig { ratio: 0.1, seed: 10, second_split: true });
    let train_best: Vec<Discipline> = split.train.iter().map(|&i| best[i]).collect();
    let inner =
        rdclass::sample::validation_split(&train_best, &SplitConfig { ratio: 0.1, seed: 10, second_split: true });
    let fit_idx: Vec<usize> = inner.train.iter().map(|&i| split.train[i]).collect();
    let val_idx: Vec<usize> = inner.holdout.iter().map(|&i| split.train[i]).collect();

    let docs = |idx: &[usize]| idx.iter().map(|&i| corpus.docs[i].as_str()).collect::<Vec<_>>();
    let vec_model = VectorizerModel::fit(docs(&split.train), StopWords::builtin()).map_err(|e| e.to_string())?;
    let x_train = vec_model.transform(docs(&split.train));
    let selection = select_features(&x_train, &train_best, SizeClass::S).map_err(|e| e.to_string())?;
    let x_fit = selection.apply(&vec_model.transform(docs(&fit_idx)));
    let x_val = selection.apply(&vec_model.transform(docs(&val_idx)));
    let x_hold = selection.apply(&vec_model.transform(docs(&split.holdout)));
    let (y_fit, y_val, y_hold) =
        (rows(&corpus.labels, &fit_idx), rows(&corpus.labels, &val_idx), rows(&corpus.labels, &split.holdout));

    let mut cfg = TrainConfig { seed: 10, ..Default::default() };
    cfg.mlp.hidden = vec![128];
    cfg.mlp.max_epochs = 40;
    let mlp = train(ModelFamily::Mlp, &x_fit, &y_fit, Some((&x_val, &y_val)), NUM_DISCIPLINES, &cfg)
        .map_err(|e| e.to_string())?;
    let mlp_f1 = holdout_macro_f1(&mlp, &x_hold, &y_hold)?;
    let rf =
        train(ModelFamily::RandomForest, &x_fit, &y_fit, None, NUM_DISCIPLINES, &cfg).map_err(|e| e.to_string())?;
    let rf_f1 = holdout_macro_f1(&rf, &x_hold, &y_hold)?;
    let summary = format!(
        "{} features, MLP macro-f1 {mlp_f1:.3}, RF macro-f1 {rf_f1:.3}, {:.1?}",
        selection.len(),
        start.elapsed()
    );
    ensure(mlp_f1 >= 0.95, || format!("MLP below 0.95: {summary}"))?;
    ensure(rf_f1 >= 0.80, || format!("RF below 0.80: {summary}"))?;
    within(Duration::from_secs(300), start, "pipeline")?;
    Ok(summary)
}

// ---------------------------------------------------------------- 11

const FIXTURE: &str = include_str!("fixtures/datacite_1000.xml");
const FIXTURE_CLEANED_SHA256: &str = "55adfb3e93433a035f7acb39ea7478f226f95153f2bcbeb063b3dde9a603b4d7";

fn criterion_11() -> Outcome {
    let mut records = Vec::new();
    ingest_document(FIXTURE, |r| {
        records.push(r);
        Ok(())
    })
    .map_err(|e| e.to_string())?;
    let (payloads, stats) = clean(&records, &MappingTable::builtin(), CleanConfig::default());
    ensure(stats.is_partition(), || format!("partition identity broken: {stats:?}"))?;
    let expected =
        CleanStats { input: 940, not_annotatable: 40, auto_labeled: 30, duplicates: 50, unfit: 70, output: 750 };
    ensure(stats == expected, || format!("counts {stats:?}"))?;
    let mut w = NdjsonWriter::new(Vec::new());
    for p in &payloads {
        w.write(p).map_err(|e| e.to_string())?;
    }
    let digest: String =
        Sha256::digest(w.into_inner().map_err(|e| e.to_string())?).iter().map(|b| format!("{b:02x}")).collect();
    ensure(digest == FIXTURE_CLEANED_SHA256, || format!("cleaned output hash {digest}"))?;
    Ok(format!(
        "{} in = {} + {} + {} + {} + {}",
        stats.input, stats.not_annotatable, stats.auto_labeled, stats.duplicates, stats.unfit, stats.output
    ))
}

// ---------------------------------------------------------------- 12

fn criterion_12() -> Outcome {
    use Discipline::*;
    let set = |ds: &[Discipline]| ds.iter().copied().collect::<LabelSet>();
    let items = vec![
        (set(&[MathematicalSciences]), 10),
        (set(&[MathematicalSciences]), 20),
        (set(&[MathematicalSciences, PhysicalSciences]), 30),
        (set(&[PhysicalSciences]), 40),
        (set(&[MathematicalSciences, PhysicalSciences, ChemicalSciences]), 50),
        (set(&[Economics, Education]), 60),
    ];
    let st = dataset_stats_from(&items);
    // hand computation: 10 labels over 6 records
    ensure(st.cardinality == 10.0 / 6.0, || format!("cardinality {}", st.cardinality))?;
    ensure(st.density == 10.0 / 6.0 / 20.0, || format!("density {}", st.density))?;
    ensure(st.labelset_count == 5 && st.singleton_labelsets == 4, || "labelset counts".into())?;
    let math = &st.per_label[0];
    let expect = (2, 1, 1, 4, 400.0 / 6.0, 7.0 / 4.0, 27.5, 25.0);
    let got = (
        math.one_label,
        math.two_labels,
        math.three_plus,
        math.total,
        math.pct,
        math.mean_labels,
        math.mean_wc,
        math.median_wc,
    );
    ensure(got == expect, || format!("mathematics row {got:?}"))?;
    let phys = &st.per_label[1];
    ensure((phys.total, phys.median_wc, phys.mean_labels) == (3, 40.0, 2.0), || "physics row".into())?;
    // singles give math 2 and physics 1, then physics, chemical and education win
    let best: Vec<u64> = st.per_label.iter().map(|s| s.best).collect();
    ensure(best[0] == 2 && best[1] == 2 && best[2] == 1 && best[10] == 1 && best[11] == 0, || {
        format!("best column {best:?}")
    })?;
    ensure(st.median_wc == 35.0 && st.mean_wc == 35.0, || "word counts".into())?;
    Ok("6-record fixture matches hand computation; published-corpus part is optional".into())
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: Vec<Criterion> = vec![
        ("1 metric oracle equivalence", criterion_1),
        ("2 f-beta identities", criterion_2),
        ("3 label-weight formula", criterion_3),
        ("4 tf-idf oracle", criterion_4),
        ("5 ANOVA example and affine invariance", criterion_5),
        ("6 best-label greedy invariant", criterion_6),
        ("7 stratified split", criterion_7),
        ("8 tree root-split oracle", criterion_8),
        ("9 MLP gradient check", criterion_9),
        ("10 end-to-end learnability", criterion_10),
        ("11 cleaning conservation on fixture", criterion_11),
        ("12 dataset stats on hand fixture", criterion_12),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut results = BTreeMap::new();
    for (name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        let t = start.elapsed();
        match &outcome {
            Ok(detail) => println!("PASS  criterion {name} ({t:.2?}): {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  criterion {name} ({t:.2?}): {why}");
            }
        }
        results.insert(name, outcome.is_ok());
    }
    if filter.is_empty() {
        println!("SKIP  criterion 12b published-corpus statistics (optional, needs the full dataset)");
        println!("SKIP  criterion 13 large-scale model ordering (optional, hours of compute)");
    }
    println!("{} of {} criteria passed", results.values().filter(|ok| **ok).count(), results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
