//! Browser demo. Three views over the core library: an f-beta explorer, a
//! tokenize and tf-idf preview, and a best-label stratified split explorer.
//!
//! The exported functions take plain values and return JSON strings so the
//! page needs no bindings beyond `wasm-bindgen`.

use rdclass::evaluate::{f_beta, Counts};
use rdclass::sample::{assign_best_labels, stratified_split, stratum_holdout_size, SplitConfig};
use rdclass::vectorize::{words, StopWords, VectorizerModel};
use rdclass::{Discipline, LabelSet, NUM_DISCIPLINES};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
pub struct FBetaReport {
    pub precision: f64,
    pub recall: f64,
    /// `(beta, score)` for 0.5, 1 and 2.
    pub scores: Vec<(f64, f64)>,
    /// `(beta, score)` on a log grid from 0.1 to 10.
    pub curve: Vec<(f64, f64)>,
}

pub fn fbeta_report(tp: u64, fp: u64, fn_: u64) -> FBetaReport {
    let c = Counts { tp, fp, fn_, tn: 0 };
    let (p, r) = (c.precision(), c.recall());
    let curve = (0..=40)
        .map(|i| {
            let beta = 10f64.powf(-1.0 + i as f64 / 20.0);
            (beta, f_beta(p, r, beta))
        })
        .collect();
    FBetaReport {
        precision: p,
        recall: r,
        scores: [0.5, 1.0, 2.0].iter().map(|&b| (b, f_beta(p, r, b))).collect(),
        curve,
    }
}

#[derive(Debug, Serialize)]
pub struct DocPreview {
    pub kept: Vec<String>,
    pub removed: Vec<String>,
    /// Highest-weighted terms with their tf-idf weight.
    pub top: Vec<(String, f64)>,
}

#[derive(Debug, Serialize)]
pub struct TfidfPreview {
    pub vocabulary: usize,
    pub docs: Vec<DocPreview>,
}

/// One document per non-empty line.
pub fn tfidf_preview(corpus: &str, stop_words: bool, top: usize) -> Result<TfidfPreview, String> {
    let docs: Vec<&str> = corpus.lines().filter(|l| !l.trim().is_empty()).collect();
    let stop = if stop_words { StopWords::builtin() } else { StopWords::none() };
    let model = VectorizerModel::fit(docs.iter().copied(), stop.clone()).map_err(|e| e.to_string())?;
    let previews = docs
        .iter()
        .map(|d| {
            let (kept, removed) = words(d, &StopWords::none()).into_iter().partition(|w| !stop.contains(w));
            let mut row = model.transform_one(d);
            row.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            let top = row.into_iter().take(top).map(|(j, v)| (model.term(j).to_string(), v)).collect();
            DocPreview { kept, removed, top }
        })
        .collect();
    Ok(TfidfPreview { vocabulary: model.len(), docs: previews })
}

#[derive(Debug, Serialize)]
pub struct RecordView {
    pub labels: Vec<u8>,
    pub best: u8,
    pub holdout: bool,
}

#[derive(Debug, Serialize)]
pub struct StratumView {
    pub code: u8,
    pub name: &'static str,
    pub size: usize,
    pub holdout: usize,
}

#[derive(Debug, Serialize)]
pub struct SplitPreview {
    pub records: Vec<RecordView>,
    pub strata: Vec<StratumView>,
    pub train: usize,
    pub holdout: usize,
}

fn parse_labelset(line: &str, n: usize) -> Result<LabelSet, String> {
    let mut set = LabelSet::new();
    for tok in line.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()) {
        let d = tok
            .parse::<u8>()
            .ok()
            .and_then(Discipline::from_code)
            .ok_or_else(|| format!("line {n}: {tok:?} is not a discipline code 0-19"))?;
        set.insert(d);
    }
    if set.is_empty() {
        return Err(format!("line {n}: no labels"));
    }
    Ok(set)
}

/// One record per non-empty line, written as discipline codes.
pub fn split_preview(labels: &str, ratio: f64, seed: u64) -> Result<SplitPreview, String> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(format!("ratio must lie strictly between 0 and 1, got {ratio}"));
    }
    let sets = labels
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_labelset(l, i + 1))
        .collect::<Result<Vec<_>, _>>()?;
    let best = assign_best_labels(&sets).map_err(|e| e.to_string())?;
    let split = stratified_split(&best, &SplitConfig { ratio, seed, second_split: false });
    let mut held = vec![false; sets.len()];
    for &i in &split.holdout {
        held[i] = true;
    }
    let records = sets
        .iter()
        .zip(&best)
        .zip(&held)
        .map(|((s, b), h)| RecordView { labels: s.codes(), best: b.code(), holdout: *h })
        .collect();
    let mut sizes = [0usize; NUM_DISCIPLINES];
    for b in &best {
        sizes[b.index()] += 1;
    }
    let strata = Discipline::ALL
        .iter()
        .filter(|d| sizes[d.index()] > 0)
        .map(|d| StratumView {
            code: d.code(),
            name: d.name(),
            size: sizes[d.index()],
            holdout: stratum_holdout_size(sizes[d.index()], ratio),
        })
        .collect();
    Ok(SplitPreview { records, strata, train: split.train.len(), holdout: split.holdout.len() })
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("preview serializes")
}

#[wasm_bindgen]
pub fn fbeta(tp: u32, fp: u32, fn_: u32) -> String {
    to_json(&fbeta_report(tp.into(), fp.into(), fn_.into()))
}

#[wasm_bindgen]
pub fn tfidf(corpus: &str, stop_words: bool, top: u32) -> Result<String, JsValue> {
    tfidf_preview(corpus, stop_words, top as usize).map(|p| to_json(&p)).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn split(labels: &str, ratio: f64, seed: u32) -> Result<String, JsValue> {
    split_preview(labels, ratio, seed.into()).map(|p| to_json(&p)).map_err(|e| JsValue::from_str(&e))
}

/// Discipline names in code order.
#[wasm_bindgen]
pub fn disciplines() -> String {
    to_json(&Discipline::ALL.iter().map(|d| d.name()).collect::<Vec<_>>())
}
