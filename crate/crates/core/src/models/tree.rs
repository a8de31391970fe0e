//! Multi-label decision trees and tree ensembles.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_shapes, ModelError};
use crate::sparse::SparseMatrix;

/// Splits that improve impurity by less than this are not taken.
const MIN_IMPROVEMENT: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeConfig {
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self { max_depth: None, min_samples_split: 2, min_samples_leaf: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaxFeatures {
    All,
    Sqrt,
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(self, n_features: usize) -> Option<usize> {
        match self {
            MaxFeatures::All => None,
            MaxFeatures::Sqrt => Some(((n_features as f64).sqrt().floor() as usize).max(1)),
            MaxFeatures::Count(k) => Some(k.max(1)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThresholdMode {
    /// Best midpoint between consecutive distinct values.
    Best,
    /// One uniform draw between the node's min and max per feature.
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Split { feature: u32, threshold: f64, impurity: f64, left: u32, right: u32 },
    Leaf { n: f64, fractions: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    pub n_features: usize,
    pub n_labels: usize,
    /// Node 0 is the root.
    pub nodes: Vec<Node>,
}

/// Weighted Gini of one label: positives weighted by `w`, negatives by 1.
pub fn weighted_gini(pos: f64, n: f64, w: f64) -> f64 {
    let total = w * pos + (n - pos);
    if total == 0.0 {
        return 0.0;
    }
    let p = w * pos / total;
    2.0 * p * (1.0 - p)
}

/// Label-averaged weighted Gini of a node.
pub fn node_impurity(pos: &[f64], n: f64, w: &[f64]) -> f64 {
    pos.iter().zip(w).map(|(p, w)| weighted_gini(*p, n, *w)).sum::<f64>() / pos.len() as f64
}

/// Label-averaged impurity of a split; each label's children are weighted by
/// their share of that label's weighted mass.
pub fn split_impurity(left_pos: &[f64], left_n: f64, pos: &[f64], n: f64, w: &[f64]) -> f64 {
    let mut sum = 0.0;
    for l in 0..pos.len() {
        let (lp, rp) = (left_pos[l], pos[l] - left_pos[l]);
        let rn = n - left_n;
        let wl = w[l] * lp + (left_n - lp);
        let wr = w[l] * rp + (rn - rp);
        let total = wl + wr;
        if total > 0.0 {
            sum += (wl * weighted_gini(lp, left_n, w[l]) + wr * weighted_gini(rp, rn, w[l])) / total;
        }
    }
    sum / pos.len() as f64
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m >= b {
        a
    } else {
        m
    }
}

struct Candidate {
    impurity: f64,
    feature: u32,
    threshold: f64,
}

struct Builder<'a> {
    x: &'a SparseMatrix,
    labels: Vec<Vec<u16>>,
    w: &'a [f64],
    cfg: TreeConfig,
    mode: ThresholdMode,
    max_features: Option<usize>,
    rng: ChaCha8Rng,
    stamp: Vec<u32>,
    slot: Vec<u32>,
    generation: u32,
    nodes: Vec<Node>,
}

impl<'a> Builder<'a> {
    fn counts(&self, rows: &[u32]) -> Vec<f64> {
        let mut pos = vec![0.0; self.w.len()];
        for &r in rows {
            for &l in &self.labels[r as usize] {
                pos[l as usize] += 1.0;
            }
        }
        pos
    }

    fn leaf(&self, rows: &[u32], pos: &[f64]) -> Node {
        let n = rows.len() as f64;
        let fractions = pos
            .iter()
            .zip(self.w)
            .map(|(p, w)| {
                let total = w * p + (n - p);
                if total == 0.0 {
                    0.0
                } else {
                    w * p / total
                }
            })
            .collect();
        Node::Leaf { n, fractions }
    }

    fn candidate_features(&mut self, rows: &[u32]) -> Vec<u32> {
        self.generation = self.generation.wrapping_add(1);
        if self.generation == 0 {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.generation = 1;
        }
        let mut touched = Vec::new();
        for &r in rows {
            for &c in self.x.row(r as usize).0 {
                if self.stamp[c as usize] != self.generation {
                    self.stamp[c as usize] = self.generation;
                    touched.push(c);
                }
            }
        }
        touched.sort_unstable();
        match self.max_features {
            Some(k) if k < touched.len() => {
                let mut picked: Vec<u32> =
                    sample(&mut self.rng, touched.len(), k).into_iter().map(|i| touched[i]).collect();
                picked.sort_unstable();
                picked
            }
            _ => touched,
        }
    }

    fn best_split(&mut self, rows: &[u32], pos: &[f64]) -> Option<Candidate> {
        let features = self.candidate_features(rows);
        for (i, &f) in features.iter().enumerate() {
            self.slot[f as usize] = i as u32;
        }
        let mut entries: Vec<(u32, f64, u32)> = Vec::new();
        for &r in rows {
            let (idx, val) = self.x.row(r as usize);
            for (c, v) in idx.iter().zip(val) {
                let s = self.slot[*c as usize];
                if s != u32::MAX {
                    entries.push((s, *v, r));
                }
            }
        }
        for &f in &features {
            self.slot[f as usize] = u32::MAX;
        }
        entries.sort_unstable_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));

        let n = rows.len() as f64;
        let msl = self.cfg.min_samples_leaf.max(1) as f64;
        let mut best: Option<Candidate> = None;
        let mut start = 0;
        for (i, &f) in features.iter().enumerate() {
            let end = start + entries[start..].partition_point(|e| e.0 == i as u32);
            let col = &entries[start..end];
            start = end;
            let found = match self.mode {
                ThresholdMode::Best => self.sweep(col, pos, n, msl),
                ThresholdMode::Random => self.random_threshold(col, pos, n, msl),
            };
            if let Some((impurity, threshold)) = found {
                if best.as_ref().is_none_or(|b| impurity < b.impurity) {
                    best = Some(Candidate { impurity, feature: f, threshold });
                }
            }
        }
        best
    }

    fn add_row(&self, r: u32, left_pos: &mut [f64]) {
        for &l in &self.labels[r as usize] {
            left_pos[l as usize] += 1.0;
        }
    }

    /// Sweeps distinct values in ascending order with the implicit zeros in place.
    fn sweep(&self, col: &[(u32, f64, u32)], pos: &[f64], n: f64, msl: f64) -> Option<(f64, f64)> {
        let zeros = n - col.len() as f64;
        let mut zero_pos = pos.to_vec();
        for e in col {
            for &l in &self.labels[e.2 as usize] {
                zero_pos[l as usize] -= 1.0;
            }
        }
        let mut left_pos = vec![0.0; pos.len()];
        let mut left_n = 0.0;
        let mut prev: Option<f64> = None;
        let mut best: Option<(f64, f64)> = None;
        let mut zeros_done = zeros == 0.0;
        let mut i = 0;
        loop {
            let zero_next = !zeros_done && (i >= col.len() || col[i].1 > 0.0);
            let next_value = if zero_next {
                0.0
            } else if i < col.len() {
                col[i].1
            } else {
                break;
            };
            if let Some(p) = prev {
                if left_n >= msl && n - left_n >= msl {
                    let imp = split_impurity(&left_pos, left_n, pos, n, self.w);
                    if best.is_none_or(|b| imp < b.0) {
                        best = Some((imp, midpoint(p, next_value)));
                    }
                }
            }
            if zero_next {
                left_n += zeros;
                for (a, z) in left_pos.iter_mut().zip(&zero_pos) {
                    *a += z;
                }
                zeros_done = true;
            } else {
                let v = col[i].1;
                while i < col.len() && col[i].1 == v {
                    self.add_row(col[i].2, &mut left_pos);
                    left_n += 1.0;
                    i += 1;
                }
            }
            prev = Some(next_value);
        }
        best
    }

    fn random_threshold(&mut self, col: &[(u32, f64, u32)], pos: &[f64], n: f64, msl: f64) -> Option<(f64, f64)> {
        let zeros = n - col.len() as f64;
        let mut lo = col.first().map_or(0.0, |e| e.1);
        let mut hi = col.last().map_or(0.0, |e| e.1);
        if zeros > 0.0 {
            lo = lo.min(0.0);
            hi = hi.max(0.0);
        }
        if lo >= hi {
            return None;
        }
        let t = self.rng.gen_range(lo..hi);
        let mut left_pos = vec![0.0; pos.len()];
        let mut left_n = 0.0;
        for e in col.iter().take_while(|e| e.1 <= t) {
            self.add_row(e.2, &mut left_pos);
            left_n += 1.0;
        }
        if zeros > 0.0 && 0.0 <= t {
            let mut zero_pos = pos.to_vec();
            for e in col {
                for &l in &self.labels[e.2 as usize] {
                    zero_pos[l as usize] -= 1.0;
                }
            }
            left_n += zeros;
            for (a, z) in left_pos.iter_mut().zip(&zero_pos) {
                *a += z;
            }
        }
        if left_n < msl || n - left_n < msl {
            return None;
        }
        Some((split_impurity(&left_pos, left_n, pos, n, self.w), t))
    }

    fn grow(&mut self, rows: Vec<u32>) {
        let mut stack = vec![(0usize, rows, 0usize)];
        self.nodes.push(Node::Leaf { n: 0.0, fractions: Vec::new() });
        while let Some((id, rows, depth)) = stack.pop() {
            let pos = self.counts(&rows);
            let n = rows.len() as f64;
            let parent = node_impurity(&pos, n, self.w);
            let stop = parent == 0.0
                || rows.len() < self.cfg.min_samples_split.max(2)
                || self.cfg.max_depth.is_some_and(|d| depth >= d);
            let split = if stop { None } else { self.best_split(&rows, &pos) };
            match split {
                Some(c) if c.impurity < parent - MIN_IMPROVEMENT => {
                    let (left, right): (Vec<u32>, Vec<u32>) =
                        rows.iter().partition(|&&r| self.x.get(r as usize, c.feature) <= c.threshold);
                    let l = self.nodes.len() as u32;
                    self.nodes.push(Node::Leaf { n: 0.0, fractions: Vec::new() });
                    self.nodes.push(Node::Leaf { n: 0.0, fractions: Vec::new() });
                    self.nodes[id] = Node::Split {
                        feature: c.feature,
                        threshold: c.threshold,
                        impurity: c.impurity,
                        left: l,
                        right: l + 1,
                    };
                    stack.push((l as usize + 1, right, depth + 1));
                    stack.push((l as usize, left, depth + 1));
                }
                _ => self.nodes[id] = self.leaf(&rows, &pos),
            }
        }
    }
}

fn label_lists(y: &[Vec<bool>]) -> Vec<Vec<u16>> {
    y.iter().map(|r| r.iter().enumerate().filter(|(_, b)| **b).map(|(l, _)| l as u16).collect()).collect()
}

#[allow(clippy::too_many_arguments)]
fn build_tree(
    x: &SparseMatrix,
    labels: Vec<Vec<u16>>,
    w: &[f64],
    rows: Vec<u32>,
    cfg: TreeConfig,
    mode: ThresholdMode,
    max_features: Option<usize>,
    seed: u64,
) -> DecisionTree {
    let mut b = Builder {
        x,
        labels,
        w,
        cfg,
        mode,
        max_features,
        rng: ChaCha8Rng::seed_from_u64(seed),
        stamp: vec![0; x.cols()],
        slot: vec![u32::MAX; x.cols()],
        generation: 0,
        nodes: Vec::new(),
    };
    b.grow(rows);
    DecisionTree { n_features: x.cols(), n_labels: w.len(), nodes: b.nodes }
}

pub fn train_decision_tree(
    x: &SparseMatrix,
    y: &[Vec<bool>],
    w: &[f64],
    cfg: &TreeConfig,
) -> Result<DecisionTree, ModelError> {
    check_shapes(x, y, w)?;
    let rows = (0..x.rows() as u32).collect();
    Ok(build_tree(x, label_lists(y), w, rows, *cfg, ThresholdMode::Best, None, 0))
}

impl DecisionTree {
    /// Leaf fractions for one sparse row.
    pub fn leaf_for(&self, idx: &[u32], val: &[f64]) -> &[f64] {
        let mut node = 0usize;
        loop {
            match &self.nodes[node] {
                Node::Split { feature, threshold, left, right, .. } => {
                    let v = idx.binary_search(feature).map(|i| val[i]).unwrap_or(0.0);
                    node = if v <= *threshold { *left } else { *right } as usize;
                }
                Node::Leaf { fractions, .. } => return fractions,
            }
        }
    }

    pub fn predict_proba(&self, x: &SparseMatrix) -> Result<Vec<Vec<f64>>, ModelError> {
        super::check_dims(self.n_features, x)?;
        Ok((0..x.rows())
            .map(|r| {
                let (i, v) = x.row(r);
                self.leaf_for(i, v).to_vec()
            })
            .collect())
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Split { left, right, .. } => 1 + walk(nodes, *left as usize).max(walk(nodes, *right as usize)),
                Node::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForestVariant {
    RandomForest,
    ExtraTrees,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_features: MaxFeatures,
    /// Defaults to on for random forests and off for extra trees.
    pub bootstrap: Option<bool>,
    /// Worker threads; 0 uses the available parallelism. Results do not depend on it.
    pub threads: usize,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self { n_trees: 100, max_features: MaxFeatures::Sqrt, bootstrap: None, threads: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    pub variant: ForestVariant,
    pub bootstrap: bool,
    pub features_per_split: Option<usize>,
    pub trees: Vec<DecisionTree>,
}

/// Seed of one member tree, independent of training order.
pub fn tree_seed(master: u64, index: usize) -> u64 {
    let mut z = master.wrapping_add((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn train_forest(
    x: &SparseMatrix,
    y: &[Vec<bool>],
    w: &[f64],
    variant: ForestVariant,
    tree_cfg: &TreeConfig,
    cfg: &ForestConfig,
    seed: u64,
) -> Result<Forest, ModelError> {
    check_shapes(x, y, w)?;
    if cfg.n_trees == 0 {
        return Err(ModelError::InvalidConfig("n_trees must be at least 1".into()));
    }
    let bootstrap = cfg.bootstrap.unwrap_or(variant == ForestVariant::RandomForest);
    let mode = match variant {
        ForestVariant::RandomForest => ThresholdMode::Best,
        ForestVariant::ExtraTrees => ThresholdMode::Random,
    };
    let features = cfg.max_features.resolve(x.cols());
    let labels = label_lists(y);
    let n = x.rows();
    let one = |i: usize| {
        let s = tree_seed(seed, i);
        let rows: Vec<u32> = if bootstrap {
            let mut rng = ChaCha8Rng::seed_from_u64(s ^ 0x5bd1_e995);
            let mut r: Vec<u32> = (0..n).map(|_| rng.gen_range(0..n as u32)).collect();
            r.sort_unstable();
            r
        } else {
            (0..n as u32).collect()
        };
        build_tree(x, labels.clone(), w, rows, *tree_cfg, mode, features, s)
    };
    let threads = match cfg.threads {
        0 => std::thread::available_parallelism().map_or(1, |p| p.get()),
        t => t,
    }
    .min(cfg.n_trees);
    let trees = if threads <= 1 {
        (0..cfg.n_trees).map(one).collect()
    } else {
        let mut slots: Vec<Option<DecisionTree>> = vec![None; cfg.n_trees];
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..threads)
                .map(|t| {
                    let one = &one;
                    s.spawn(move || (t..cfg.n_trees).step_by(threads).map(|i| (i, one(i))).collect::<Vec<_>>())
                })
                .collect();
            for h in handles {
                for (i, tree) in h.join().expect("tree worker panicked") {
                    slots[i] = Some(tree);
                }
            }
        });
        slots.into_iter().map(Option::unwrap).collect()
    };
    Ok(Forest { variant, bootstrap, features_per_split: features, trees })
}

impl Forest {
    pub fn n_features(&self) -> usize {
        self.trees[0].n_features
    }

    pub fn n_labels(&self) -> usize {
        self.trees[0].n_labels
    }

    /// Mean of the member trees' leaf fractions.
    pub fn predict_proba(&self, x: &SparseMatrix) -> Result<Vec<Vec<f64>>, ModelError> {
        super::check_dims(self.n_features(), x)?;
        let k = self.trees.len() as f64;
        Ok((0..x.rows())
            .map(|r| {
                let (i, v) = x.row(r);
                let mut sum = vec![0.0; self.n_labels()];
                for t in &self.trees {
                    for (s, f) in sum.iter_mut().zip(t.leaf_for(i, v)) {
                        *s += f;
                    }
                }
                sum.iter_mut().for_each(|s| *s /= k);
                sum
            })
            .collect())
    }
}
