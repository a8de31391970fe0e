//! Tokenization, tf-idf bag of 1- and 2-grams, and ANOVA feature selection.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::{self, Read, Write};
use std::str::FromStr;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::scheme_map::{Discipline, NUM_DISCIPLINES};
use crate::sparse::SparseMatrix;

const STOP_WORDS: &str = include_str!("../data/stop_words.txt");
const MAGIC: &[u8; 4] = b"RDVZ";
const VERSION: u32 = 1;

/// Relative tolerance below which a sum of squares counts as zero.
const SS_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum VectorizeError {
    #[error("cannot fit a vectorizer on an empty corpus")]
    EmptyCorpus,
    #[error("both groups must be non-empty (sizes {positive} and {negative})")]
    DegenerateGroups { positive: usize, negative: usize },
    #[error("column has {values} values but {groups} group flags")]
    LengthMismatch { values: usize, groups: usize },
    #[error("matrix has {rows} rows but {labels} best labels")]
    ShapeMismatch { rows: usize, labels: usize },
    #[error("unknown size class {0:?}")]
    UnknownSize(String),
    #[error("corrupt vectorizer file: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StopWords(BTreeSet<String>);

impl StopWords {
    /// The bundled 240-entry list.
    pub fn builtin() -> Self {
        Self::parse(STOP_WORDS)
    }

    /// One word per line; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Self {
        Self(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_lowercase)
                .collect(),
        )
    }

    pub fn none() -> Self {
        Self(BTreeSet::new())
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(word)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    /// SHA-256 over the sorted words, newline-joined.
    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        for w in &self.0 {
            h.update(w.as_bytes());
            h.update(b"\n");
        }
        h.finalize().into()
    }
}

impl<S: Into<String>> FromIterator<S> for StopWords {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        Self(iter.into_iter().map(|s| s.into().to_lowercase()).collect())
    }
}

/// Lowercased maximal alphanumeric runs of at least two characters, minus stop words.
pub fn words(text: &str, stop: &StopWords) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| w.chars().count() >= 2)
        .map(str::to_lowercase)
        .filter(|w| !stop.contains(w))
        .collect()
}

/// 1-grams followed by 2-grams of adjacent surviving words.
pub fn tokenize(text: &str, stop: &StopWords) -> Vec<String> {
    let mut terms = words(text, stop);
    let n = terms.len();
    for i in 1..n {
        let bigram = format!("{} {}", terms[i - 1], terms[i]);
        terms.push(bigram);
    }
    terms
}

/// Per-shard document frequencies; shards can be merged before finishing.
#[derive(Debug, Clone, Default)]
pub struct DocFrequencies {
    pub docs: u64,
    pub df: HashMap<String, u64>,
}

impl DocFrequencies {
    pub fn add(&mut self, text: &str, stop: &StopWords) {
        self.docs += 1;
        let unique: HashSet<String> = tokenize(text, stop).into_iter().collect();
        for t in unique {
            *self.df.entry(t).or_default() += 1;
        }
    }

    pub fn merge(&mut self, other: DocFrequencies) {
        self.docs += other.docs;
        for (t, c) in other.df {
            *self.df.entry(t).or_default() += c;
        }
    }
}

/// Smoothed idf: `ln((1 + n) / (1 + df)) + 1`.
pub fn idf(n: u64, df: u64) -> f64 {
    ((1.0 + n as f64) / (1.0 + df as f64)).ln() + 1.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorizerModel {
    terms: Vec<String>,
    index: HashMap<String, u32>,
    idf: Vec<f64>,
    stop_words: StopWords,
    doc_count: u64,
}

impl VectorizerModel {
    pub fn fit<'a>(corpus: impl IntoIterator<Item = &'a str>, stop: StopWords) -> Result<Self, VectorizeError> {
        let mut df = DocFrequencies::default();
        for doc in corpus {
            df.add(doc, &stop);
        }
        Self::from_frequencies(df, stop)
    }

    /// Vocabulary is sorted so that feature indices do not depend on input order.
    pub fn from_frequencies(df: DocFrequencies, stop: StopWords) -> Result<Self, VectorizeError> {
        if df.docs == 0 {
            return Err(VectorizeError::EmptyCorpus);
        }
        let mut entries: Vec<(String, u64)> = df.df.into_iter().collect();
        entries.sort_unstable_by(|a, b| a.0.cmp(&b.0));
        let idf_values = entries.iter().map(|(_, c)| idf(df.docs, *c)).collect();
        let terms: Vec<String> = entries.into_iter().map(|(t, _)| t).collect();
        Ok(Self::assemble(terms, idf_values, stop, df.docs))
    }

    fn assemble(terms: Vec<String>, idf: Vec<f64>, stop_words: StopWords, doc_count: u64) -> Self {
        let index = terms.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        Self { terms, index, idf, stop_words, doc_count }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn doc_count(&self) -> u64 {
        self.doc_count
    }

    pub fn stop_words(&self) -> &StopWords {
        &self.stop_words
    }

    pub fn term(&self, i: u32) -> &str {
        &self.terms[i as usize]
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn feature_index(&self, term: &str) -> Option<u32> {
        self.index.get(term).copied()
    }

    pub fn idf(&self) -> &[f64] {
        &self.idf
    }

    /// One L2-normalized tf-idf row, sorted by feature index.
    pub fn transform_one(&self, text: &str) -> Vec<(u32, f64)> {
        let mut counts: HashMap<u32, u32> = HashMap::new();
        for t in tokenize(text, &self.stop_words) {
            if let Some(&i) = self.index.get(&t) {
                *counts.entry(i).or_default() += 1;
            }
        }
        let mut row: Vec<(u32, f64)> = counts.into_iter().map(|(i, c)| (i, c as f64 * self.idf[i as usize])).collect();
        row.sort_unstable_by_key(|(i, _)| *i);
        let norm = row.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for (_, v) in &mut row {
                *v /= norm;
            }
        }
        row
    }

    pub fn transform<'a>(&self, docs: impl IntoIterator<Item = &'a str>) -> SparseMatrix {
        let mut m = SparseMatrix::empty(self.len());
        for doc in docs {
            m.push_row(&self.transform_one(doc)).expect("rows are sorted and finite");
        }
        m
    }

    /// Layout: magic, version, doc count, stop-list digest, stop words, then
    /// `(term, idf)` pairs. Integers little-endian; strings length-prefixed UTF-8.
    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(VERSION)?;
        w.write_u64::<LittleEndian>(self.doc_count)?;
        w.write_all(&self.stop_words.digest())?;
        w.write_u32::<LittleEndian>(self.stop_words.len() as u32)?;
        for s in self.stop_words.iter() {
            write_str(&mut w, s)?;
        }
        w.write_u64::<LittleEndian>(self.terms.len() as u64)?;
        for (t, v) in self.terms.iter().zip(&self.idf) {
            write_str(&mut w, t)?;
            w.write_f64::<LittleEndian>(*v)?;
        }
        w.flush()
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, VectorizeError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(VectorizeError::Corrupt("bad magic".into()));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != VERSION {
            return Err(VectorizeError::Corrupt(format!("unsupported version {version}")));
        }
        let doc_count = r.read_u64::<LittleEndian>()?;
        let mut digest = [0u8; 32];
        r.read_exact(&mut digest)?;
        let n_stop = r.read_u32::<LittleEndian>()?;
        let stop: StopWords =
            (0..n_stop).map(|_| read_str(&mut r)).collect::<Result<Vec<_>, _>>()?.into_iter().collect();
        if stop.digest() != digest {
            return Err(VectorizeError::Corrupt("stop list digest mismatch".into()));
        }
        let n_terms = r.read_u64::<LittleEndian>()?;
        let mut terms = Vec::new();
        let mut idf_values = Vec::new();
        for _ in 0..n_terms {
            let t = read_str(&mut r)?;
            let v = r.read_f64::<LittleEndian>()?;
            if !(v >= 1.0 && v.is_finite()) {
                return Err(VectorizeError::Corrupt(format!("idf {v} for {t:?}")));
            }
            if terms.last().is_some_and(|p: &String| p >= &t) {
                return Err(VectorizeError::Corrupt("vocabulary not sorted".into()));
            }
            terms.push(t);
            idf_values.push(v);
        }
        Ok(Self::assemble(terms, idf_values, stop, doc_count))
    }

    pub fn save(&self, path: &std::path::Path) -> io::Result<()> {
        self.write_to(io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn load(path: &std::path::Path) -> Result<Self, VectorizeError> {
        Self::read_from(io::BufReader::new(std::fs::File::open(path)?))
    }
}

fn write_str<W: Write>(w: &mut W, s: &str) -> io::Result<()> {
    w.write_u32::<LittleEndian>(s.len() as u32)?;
    w.write_all(s.as_bytes())
}

fn read_str<R: Read>(r: &mut R) -> io::Result<String> {
    let n = r.read_u32::<LittleEndian>()? as usize;
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}

fn f_statistic(ssb: f64, ssw: f64, sst: f64, n: usize) -> f64 {
    if ssb <= SS_TOLERANCE * sst {
        0.0
    } else if ssw <= SS_TOLERANCE * sst {
        f64::INFINITY
    } else {
        ssb / (ssw / (n - 2) as f64)
    }
}

/// One-way ANOVA F for two groups. Zero within-group variance with separated
/// means gives `+inf`; equal means give 0.
pub fn anova_f(values: &[f64], positive: &[bool]) -> Result<f64, VectorizeError> {
    if values.len() != positive.len() {
        return Err(VectorizeError::LengthMismatch { values: values.len(), groups: positive.len() });
    }
    let n1 = positive.iter().filter(|&&g| g).count();
    let n0 = values.len() - n1;
    if n1 == 0 || n0 == 0 {
        return Err(VectorizeError::DegenerateGroups { positive: n1, negative: n0 });
    }
    let (mut s1, mut s0) = (0.0, 0.0);
    for (v, g) in values.iter().zip(positive) {
        if *g {
            s1 += v;
        } else {
            s0 += v;
        }
    }
    let n = values.len();
    let (m1, m0, m) = (s1 / n1 as f64, s0 / n0 as f64, (s1 + s0) / n as f64);
    let (mut ssw, mut sst) = (0.0, 0.0);
    for (v, g) in values.iter().zip(positive) {
        let mg = if *g { m1 } else { m0 };
        ssw += (v - mg) * (v - mg);
        sst += (v - m) * (v - m);
    }
    let ssb = (n1 * n0) as f64 / n as f64 * (m1 - m0) * (m1 - m0);
    Ok(f_statistic(ssb, ssw, sst, n))
}

/// ANOVA F for a sparse column given as `(row, value)` pairs; absent rows are zeros.
pub fn anova_f_sparse(column: &[(u32, f64)], positive: &[bool], n1: usize) -> Result<f64, VectorizeError> {
    let n = positive.len();
    let n0 = n - n1;
    if n1 == 0 || n0 == 0 {
        return Err(VectorizeError::DegenerateGroups { positive: n1, negative: n0 });
    }
    let (mut s1, mut s0, mut nz1) = (0.0, 0.0, 0usize);
    for &(r, v) in column {
        if positive[r as usize] {
            s1 += v;
            nz1 += 1;
        } else {
            s0 += v;
        }
    }
    let nz0 = column.len() - nz1;
    let (m1, m0, m) = (s1 / n1 as f64, s0 / n0 as f64, (s1 + s0) / n as f64);
    let mut ssw = (n1 - nz1) as f64 * m1 * m1 + (n0 - nz0) as f64 * m0 * m0;
    let mut sst = (n - column.len()) as f64 * m * m;
    for &(r, v) in column {
        let mg = if positive[r as usize] { m1 } else { m0 };
        ssw += (v - mg) * (v - mg);
        sst += (v - m) * (v - m);
    }
    let ssb = (n1 * n0) as f64 / n as f64 * (m1 - m0) * (m1 - m0);
    Ok(f_statistic(ssb, ssw, sst, n))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SizeClass {
    S,
    M,
    L,
}

impl SizeClass {
    pub fn k_per_label(self) -> usize {
        match self {
            SizeClass::S => 1000,
            SizeClass::M => 2500,
            SizeClass::L => 5000,
        }
    }
}

impl FromStr for SizeClass {
    type Err = VectorizeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "s" => Ok(SizeClass::S),
            "m" => Ok(SizeClass::M),
            "l" => Ok(SizeClass::L),
            _ => Err(VectorizeError::UnknownSize(s.to_string())),
        }
    }
}

impl fmt::Display for SizeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SizeClass::S => "s",
            SizeClass::M => "m",
            SizeClass::L => "l",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSelection {
    pub size_class: Option<SizeClass>,
    pub k_per_label: usize,
    /// Ascending feature indices.
    pub selected: Vec<u32>,
    /// Indexed by discipline code; empty for labels that never occur as best label.
    pub per_label_top: Vec<Vec<u32>>,
    pub input_features: usize,
}

impl FeatureSelection {
    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    /// Columns of `m` restricted to the selection.
    pub fn apply(&self, m: &SparseMatrix) -> SparseMatrix {
        m.select_columns(&self.selected)
    }

    pub fn apply_row(&self, row: &[(u32, f64)]) -> Vec<(u32, f64)> {
        row.iter().filter_map(|&(c, v)| self.selected.binary_search(&c).ok().map(|i| (i as u32, v))).collect()
    }
}

/// Top-`k` features by ANOVA F, ties by lower index.
pub fn top_k(scores: &[f64], k: usize) -> Vec<u32> {
    let mut order: Vec<u32> = (0..scores.len() as u32).collect();
    order.sort_unstable_by(|&a, &b| scores[b as usize].total_cmp(&scores[a as usize]).then(a.cmp(&b)));
    order.truncate(k);
    order
}

/// Per-label one-vs-rest ANOVA on best labels; the selection is the union of
/// each label's top `k`.
pub fn select_features_k(m: &SparseMatrix, best: &[Discipline], k: usize) -> Result<FeatureSelection, VectorizeError> {
    if m.rows() != best.len() {
        return Err(VectorizeError::ShapeMismatch { rows: m.rows(), labels: best.len() });
    }
    let columns = m.columns();
    let mut per_label_top = vec![Vec::new(); NUM_DISCIPLINES];
    let mut union = BTreeSet::new();
    let mut scores = vec![0.0; m.cols()];
    for d in Discipline::ALL {
        let positive: Vec<bool> = best.iter().map(|b| *b == d).collect();
        let n1 = positive.iter().filter(|&&p| p).count();
        if n1 == 0 || n1 == best.len() {
            continue;
        }
        for (c, col) in columns.iter().enumerate() {
            scores[c] = anova_f_sparse(col, &positive, n1)?;
        }
        let top = top_k(&scores, k);
        union.extend(top.iter().copied());
        per_label_top[d.index()] = top;
    }
    Ok(FeatureSelection {
        size_class: None,
        k_per_label: k,
        selected: union.into_iter().collect(),
        per_label_top,
        input_features: m.cols(),
    })
}

pub fn select_features(
    m: &SparseMatrix,
    best: &[Discipline],
    size: SizeClass,
) -> Result<FeatureSelection, VectorizeError> {
    let mut sel = select_features_k(m, best, size.k_per_label())?;
    sel.size_class = Some(size);
    Ok(sel)
}
