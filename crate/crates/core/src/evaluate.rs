//! Confusion counts, f-beta scores and report tables.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sample::DatasetStats;
use crate::scheme_map::{Discipline, LabelSet, NUM_DISCIPLINES};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("shape mismatch: truth {truth:?}, prediction {pred:?}")]
    ShapeMismatch { truth: (usize, usize), pred: (usize, usize) },
    #[error("no records to evaluate")]
    Empty,
    #[error("vectors must have equal length of at least 2 (got {0} and {1})")]
    BadLength(usize, usize),
    #[error("correlation undefined for a constant vector")]
    ConstantVector,
}

/// Use cases and their beta values.
pub const USE_CASES: [(&str, f64); 3] = [("scientometric", 0.5), ("value-adding", 1.0), ("assistant", 2.0)];
pub const BETAS: [f64; 3] = [0.5, 1.0, 2.0];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl Counts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub per_label: Vec<Counts>,
}

/// Per-label counts over binary matrices of equal shape.
pub fn confusion(truth: &[Vec<bool>], pred: &[Vec<bool>]) -> Result<ConfusionCounts, EvalError> {
    let width = |m: &[Vec<bool>]| m.first().map_or(0, Vec::len);
    let shape_t = (truth.len(), width(truth));
    let shape_p = (pred.len(), width(pred));
    if shape_t != shape_p || truth.iter().any(|r| r.len() != shape_t.1) || pred.iter().any(|r| r.len() != shape_t.1) {
        return Err(EvalError::ShapeMismatch { truth: shape_t, pred: shape_p });
    }
    if truth.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut per_label = vec![Counts::default(); shape_t.1];
    for (t, p) in truth.iter().zip(pred) {
        for (l, c) in per_label.iter_mut().enumerate() {
            match (t[l], p[l]) {
                (true, true) => c.tp += 1,
                (false, true) => c.fp += 1,
                (true, false) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
    }
    Ok(ConfusionCounts { per_label })
}

pub fn confusion_labelsets(truth: &[LabelSet], pred: &[LabelSet]) -> Result<ConfusionCounts, EvalError> {
    let to_rows = |s: &[LabelSet]| s.iter().map(|l| l.indicator().to_vec()).collect::<Vec<_>>();
    if truth.len() != pred.len() {
        return Err(EvalError::ShapeMismatch {
            truth: (truth.len(), NUM_DISCIPLINES),
            pred: (pred.len(), NUM_DISCIPLINES),
        });
    }
    confusion(&to_rows(truth), &to_rows(pred))
}

/// `(1 + b²) p r / (b² p + r)`, or 0 when `p = r = 0`.
pub fn f_beta(precision: f64, recall: f64, beta: f64) -> f64 {
    let b2 = beta * beta;
    let denom = b2 * precision + recall;
    if denom == 0.0 {
        0.0
    } else {
        (1.0 + b2) * precision * recall / denom
    }
}

/// How labels with undefined precision or recall enter the macro average.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ZeroDivision {
    /// Undefined ratios count as 0 and every label is averaged.
    #[default]
    Zero,
    /// Labels absent from both truth and prediction are left out of the mean.
    Exclude,
}

pub fn macro_scores(counts: &ConfusionCounts, beta: f64) -> (Vec<f64>, f64) {
    macro_scores_with(counts, beta, ZeroDivision::Zero)
}

pub fn macro_scores_with(counts: &ConfusionCounts, beta: f64, zd: ZeroDivision) -> (Vec<f64>, f64) {
    let per: Vec<f64> = counts.per_label.iter().map(|c| f_beta(c.precision(), c.recall(), beta)).collect();
    let included: Vec<f64> = per
        .iter()
        .zip(&counts.per_label)
        .filter(|(_, c)| zd == ZeroDivision::Zero || c.tp + c.fp + c.fn_ > 0)
        .map(|(f, _)| *f)
        .collect();
    let mean = if included.is_empty() { 0.0 } else { included.iter().sum::<f64>() / included.len() as f64 };
    (per, mean)
}

/// Pooled counts across labels, then one f-beta.
pub fn micro_score(counts: &ConfusionCounts, beta: f64) -> f64 {
    let pooled = counts.per_label.iter().fold(Counts::default(), |a, c| Counts {
        tp: a.tp + c.tp,
        fp: a.fp + c.fp,
        fn_: a.fn_ + c.fn_,
        tn: a.tn + c.tn,
    });
    f_beta(pooled.precision(), pooled.recall(), beta)
}

/// Sample Pearson correlation.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(EvalError::BadLength(x.len(), y.len()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(EvalError::ConstantVector);
    }
    Ok(sxy / (sxx.sqrt() * syy.sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelScores {
    pub model_id: String,
    pub size_class: String,
    pub seed: u64,
    /// Per label, f-beta for each of [`BETAS`].
    pub per_label: Vec<[f64; 3]>,
    pub macro_f: [f64; 3],
    pub micro_f: [f64; 3],
    pub counts: ConfusionCounts,
}

impl ModelScores {
    pub fn compute(
        model_id: &str,
        size_class: &str,
        seed: u64,
        truth: &[LabelSet],
        pred: &[LabelSet],
        zd: ZeroDivision,
    ) -> Result<Self, EvalError> {
        let counts = confusion_labelsets(truth, pred)?;
        let mut per_label = vec![[0.0; 3]; counts.per_label.len()];
        let mut macro_f = [0.0; 3];
        let mut micro_f = [0.0; 3];
        for (b, beta) in BETAS.iter().enumerate() {
            let (per, mean) = macro_scores_with(&counts, *beta, zd);
            for (l, f) in per.into_iter().enumerate() {
                per_label[l][b] = f;
            }
            macro_f[b] = mean;
            micro_f[b] = micro_score(&counts, *beta);
        }
        Ok(Self { model_id: model_id.into(), size_class: size_class.into(), seed, per_label, macro_f, micro_f, counts })
    }
}

/// One correlation between a per-label f-score and a dataset statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub model_id: String,
    pub size_class: String,
    pub beta: f64,
    pub statistic: String,
    /// `None` when either vector is constant.
    pub r: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub models: Vec<ModelScores>,
    pub annex: Vec<Correlation>,
}

fn fmt3(v: f64) -> String {
    format!("{v:.3}")
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn build_report(models: Vec<ModelScores>, stats: Option<&DatasetStats>) -> EvaluationReport {
    let mut annex = Vec::new();
    if let Some(st) = stats {
        let totals: Vec<f64> = st.per_label.iter().map(|s| s.total as f64).collect();
        let medians: Vec<f64> = st.per_label.iter().map(|s| s.median_wc).collect();
        let means: Vec<f64> = st.per_label.iter().map(|s| s.mean_labels).collect();
        for m in &models {
            for (b, beta) in BETAS.iter().enumerate() {
                let f: Vec<f64> = m.per_label.iter().map(|s| s[b]).collect();
                for (name, stat) in [("total", &totals), ("median_wc", &medians), ("mean_labels", &means)] {
                    annex.push(Correlation {
                        model_id: m.model_id.clone(),
                        size_class: m.size_class.clone(),
                        beta: *beta,
                        statistic: name.into(),
                        r: pearson_r(&f, stat).ok(),
                    });
                }
            }
        }
    }
    EvaluationReport { models, annex }
}

impl EvaluationReport {
    /// Aggregate table: model, size, then macro/micro pairs for each beta.
    pub fn aggregate_csv(&self) -> String {
        let mut out = String::from("model,size,f0.5_macro,f0.5_micro,f1_macro,f1_micro,f2_macro,f2_micro\n");
        for m in &self.models {
            let _ = write!(out, "{},{}", csv_field(&m.model_id), m.size_class);
            for b in 0..3 {
                let _ = write!(out, ",{},{}", fmt3(m.macro_f[b]), fmt3(m.micro_f[b]));
            }
            out.push('\n');
        }
        out
    }

    pub fn aggregate_markdown(&self) -> String {
        let mut out = String::from(
            "| Model | Size | f0.5 (macro) | f0.5 (micro) | f1 (macro) | f1 (micro) | f2 (macro) | f2 (micro) |\n\
             |---|---|---:|---:|---:|---:|---:|---:|\n",
        );
        for m in &self.models {
            let _ = write!(out, "| {} | {} |", m.model_id, m.size_class);
            for b in 0..3 {
                let _ = write!(out, " {} | {} |", fmt3(m.macro_f[b]), fmt3(m.micro_f[b]));
            }
            out.push('\n');
        }
        out
    }

    fn per_label_header(&self) -> Vec<String> {
        let mut cols = Vec::new();
        for m in &self.models {
            for b in ["f0.5", "f1", "f2"] {
                cols.push(format!("{b}-{}-{}", m.model_id, m.size_class));
            }
        }
        cols
    }

    /// Per-discipline table with three columns per model.
    pub fn per_label_csv(&self) -> String {
        let mut out = String::from("discipline");
        for c in self.per_label_header() {
            let _ = write!(out, ",{}", csv_field(&c));
        }
        out.push('\n');
        for d in Discipline::ALL {
            out.push_str(&csv_field(d.name()));
            for m in &self.models {
                for v in m.per_label.get(d.index()).copied().unwrap_or_default() {
                    let _ = write!(out, ",{v:.2}");
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn per_label_markdown(&self) -> String {
        let header = self.per_label_header();
        let mut out = format!("| Discipline | {} |\n|---|{}\n", header.join(" | "), "---:|".repeat(header.len()));
        for d in Discipline::ALL {
            let _ = write!(out, "| {} |", d.name());
            for m in &self.models {
                for v in m.per_label.get(d.index()).copied().unwrap_or_default() {
                    let _ = write!(out, " {v:.2} |");
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn annex_csv(&self) -> String {
        let mut out = String::from("model,size,beta,statistic,pearson_r\n");
        for c in &self.annex {
            let r = c.r.map_or_else(|| "NA".to_string(), fmt3);
            let _ = writeln!(out, "{},{},{},{},{}", csv_field(&c.model_id), c.size_class, c.beta, c.statistic, r);
        }
        out
    }
}
