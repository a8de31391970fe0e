//! Dataset statistics, best-label assignment and stratified splitting.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clean::LabeledPayload;
use crate::scheme_map::{Discipline, LabelSet, NUM_DISCIPLINES};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SampleError {
    #[error("record {0} has an empty label set")]
    EmptyLabelSet(usize),
}

/// Greedy best-label assignment.
///
/// Single-label records get their only label first. Multi-label records are then
/// visited in input order and take the member of their label set with the
/// smallest running count, ties going to the lowest discipline code.
pub fn assign_best_labels(labelsets: &[LabelSet]) -> Result<Vec<Discipline>, SampleError> {
    let mut counts = [0u64; NUM_DISCIPLINES];
    let mut best: Vec<Option<Discipline>> = vec![None; labelsets.len()];
    for (i, set) in labelsets.iter().enumerate() {
        if set.is_empty() {
            return Err(SampleError::EmptyLabelSet(i));
        }
        if set.len() == 1 {
            let d = set.iter().next().unwrap();
            counts[d.index()] += 1;
            best[i] = Some(d);
        }
    }
    for (i, set) in labelsets.iter().enumerate().filter(|(_, s)| s.len() > 1) {
        let d = set.iter().min_by_key(|d| (counts[d.index()], d.code())).unwrap();
        counts[d.index()] += 1;
        best[i] = Some(d);
    }
    Ok(best.into_iter().map(Option::unwrap).collect())
}

pub fn assign_best_labels_for(payloads: &[LabeledPayload]) -> Result<Vec<Discipline>, SampleError> {
    let sets: Vec<LabelSet> = payloads.iter().map(|p| p.labels).collect();
    assign_best_labels(&sets)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    /// Fraction moved to the holdout set.
    pub ratio: f64,
    pub seed: u64,
    /// Also split the training part into training and validation.
    pub second_split: bool,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { ratio: 0.1, seed: 0, second_split: false }
    }
}

/// Train and holdout indices, each ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub holdout: Vec<usize>,
}

/// Holdout count for one stratum: round-half-up of `ratio * size`, at least one
/// record for strata of two or more, and never the whole stratum.
pub fn stratum_holdout_size(size: usize, ratio: f64) -> usize {
    if size < 2 {
        return 0;
    }
    let n = (ratio * size as f64 + 0.5).floor() as usize;
    n.clamp(1, size - 1)
}

/// Splits within each best-label stratum. Strata are shuffled with a generator
/// seeded from `cfg.seed` and processed in discipline-code order.
pub fn stratified_split(best: &[Discipline], cfg: &SplitConfig) -> Split {
    assert!(cfg.ratio > 0.0 && cfg.ratio < 1.0, "split ratio must lie in (0, 1)");
    let mut strata: Vec<Vec<usize>> = vec![Vec::new(); NUM_DISCIPLINES];
    for (i, d) in best.iter().enumerate() {
        strata[d.index()].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut train = Vec::with_capacity(best.len());
    let mut holdout = Vec::new();
    for mut stratum in strata {
        stratum.shuffle(&mut rng);
        let k = stratum_holdout_size(stratum.len(), cfg.ratio);
        holdout.extend_from_slice(&stratum[..k]);
        train.extend_from_slice(&stratum[k..]);
    }
    train.sort_unstable();
    holdout.sort_unstable();
    Split { train, holdout }
}

/// Splits off training/validation from a training set with the derived seed
/// `seed + 1`. Returned indices refer to positions in `train_best`.
pub fn validation_split(train_best: &[Discipline], cfg: &SplitConfig) -> Split {
    stratified_split(train_best, &SplitConfig { seed: cfg.seed.wrapping_add(1), ..*cfg })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LabelStats {
    pub one_label: u64,
    pub two_labels: u64,
    pub three_plus: u64,
    pub best: u64,
    pub total: u64,
    /// Percentage of records carrying the label.
    pub pct: f64,
    /// Mean label-set size among records carrying the label.
    pub mean_labels: f64,
    pub mean_wc: f64,
    pub median_wc: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n: u64,
    pub per_label: Vec<LabelStats>,
    pub cardinality: f64,
    pub density: f64,
    /// False for an empty dataset, where cardinality and density are reported as 0.
    pub cardinality_defined: bool,
    pub labelset_count: u64,
    pub singleton_labelsets: u64,
    pub mean_wc: f64,
    pub median_wc: f64,
}

fn median(values: &mut [usize]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_unstable();
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m] as f64
    } else {
        (values[m - 1] + values[m]) as f64 / 2.0
    }
}

/// Table-style statistics over `(labels, word count)` pairs.
pub fn dataset_stats_from(items: &[(LabelSet, usize)]) -> DatasetStats {
    let n = items.len();
    let sets: Vec<LabelSet> = items.iter().map(|(l, _)| *l).collect();
    let best = assign_best_labels(&sets).unwrap_or_default();
    let mut per_label = vec![LabelStats::default(); NUM_DISCIPLINES];
    let mut wcs: Vec<Vec<usize>> = vec![Vec::new(); NUM_DISCIPLINES];
    let mut label_sums = [0u64; NUM_DISCIPLINES];
    let mut labelset_freq: HashMap<LabelSet, u64> = HashMap::new();

    for (labels, wc) in items {
        *labelset_freq.entry(*labels).or_default() += 1;
        for d in labels.iter() {
            let s = &mut per_label[d.index()];
            match labels.len() {
                1 => s.one_label += 1,
                2 => s.two_labels += 1,
                _ => s.three_plus += 1,
            }
            s.total += 1;
            label_sums[d.index()] += labels.len() as u64;
            wcs[d.index()].push(*wc);
        }
    }
    for d in &best {
        per_label[d.index()].best += 1;
    }
    for (i, s) in per_label.iter_mut().enumerate() {
        if s.total > 0 {
            s.pct = 100.0 * s.total as f64 / n as f64;
            s.mean_labels = label_sums[i] as f64 / s.total as f64;
            s.mean_wc = wcs[i].iter().sum::<usize>() as f64 / s.total as f64;
            s.median_wc = median(&mut wcs[i]);
        }
    }
    let total_labels: usize = sets.iter().map(LabelSet::len).sum();
    let cardinality = if n > 0 { total_labels as f64 / n as f64 } else { 0.0 };
    let mut all_wc: Vec<usize> = items.iter().map(|(_, wc)| *wc).collect();
    DatasetStats {
        n: n as u64,
        per_label,
        cardinality,
        density: cardinality / NUM_DISCIPLINES as f64,
        cardinality_defined: n > 0,
        labelset_count: labelset_freq.len() as u64,
        singleton_labelsets: labelset_freq.values().filter(|&&c| c == 1).count() as u64,
        mean_wc: if n > 0 { all_wc.iter().sum::<usize>() as f64 / n as f64 } else { 0.0 },
        median_wc: median(&mut all_wc),
    }
}

pub fn dataset_stats(payloads: &[LabeledPayload]) -> DatasetStats {
    let items: Vec<(LabelSet, usize)> = payloads.iter().map(|p| (p.labels, p.word_count)).collect();
    dataset_stats_from(&items)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl DatasetStats {
    /// Per-label table with one row per discipline plus a total row.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("class,one_label,two_labels,three_plus,best,total,pct,mean_labels,mean_wc,median_wc\n");
        for d in Discipline::ALL {
            let s = &self.per_label[d.index()];
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{:.2},{:.2},{:.0},{}",
                csv_field(d.name()),
                s.one_label,
                s.two_labels,
                s.three_plus,
                s.best,
                s.total,
                s.pct,
                s.mean_labels,
                s.mean_wc,
                s.median_wc
            );
        }
        let sum = |f: fn(&LabelStats) -> u64| self.per_label.iter().map(f).sum::<u64>();
        let _ = writeln!(
            out,
            "total,{},{},{},-,{},100.00,{:.2},{:.0},{}",
            sum(|s| s.one_label),
            sum(|s| s.two_labels),
            sum(|s| s.three_plus),
            self.n,
            self.cardinality,
            self.mean_wc,
            self.median_wc
        );
        out
    }
}
