//! Multi-label classifiers: decision tree, random forest, extra trees and MLP.

pub mod grid;
pub mod mlp;
pub mod tree;

use std::fmt;
use std::io::{self, Read, Write};
use std::str::FromStr;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sparse::SparseMatrix;
pub use grid::{sequential_grid_search, set_param, Grid, TraceRow};
pub use mlp::{adam_step, train_mlp, weighted_bce_loss, AdamConfig, AdamState, Mlp, MlpConfig};
pub use tree::{
    train_decision_tree, train_forest, DecisionTree, Forest, ForestConfig, ForestVariant, MaxFeatures, Node, TreeConfig,
};

const MAGIC: &[u8; 4] = b"RDCM";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("model expects {expected} features, input has {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("label {0} has zero frequency")]
    ZeroFrequency(usize),
    #[error("loss became {loss} at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize, loss: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown model family {0:?}")]
    UnknownFamily(String),
    #[error("corrupt model file: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub(crate) fn check_shapes(x: &SparseMatrix, y: &[Vec<bool>], w: &[f64]) -> Result<(), ModelError> {
    if x.rows() != y.len() {
        return Err(ModelError::ShapeMismatch(format!("{} feature rows, {} label rows", x.rows(), y.len())));
    }
    if let Some(r) = y.iter().position(|r| r.len() != w.len()) {
        return Err(ModelError::ShapeMismatch(format!(
            "label row {r} has {} columns, expected {}",
            y[r].len(),
            w.len()
        )));
    }
    Ok(())
}

pub(crate) fn check_dims(expected: usize, x: &SparseMatrix) -> Result<(), ModelError> {
    if x.cols() != expected {
        return Err(ModelError::DimensionMismatch { expected, got: x.cols() });
    }
    Ok(())
}

pub fn label_frequencies(y: &[Vec<bool>], n_labels: usize) -> Vec<u64> {
    let mut f = vec![0u64; n_labels];
    for row in y {
        for (l, b) in row.iter().enumerate() {
            if *b {
                f[l] += 1;
            }
        }
    }
    f
}

/// `max(freq) / freq[l]`: the most frequent label gets 1.0.
pub fn compute_label_weights(frequencies: &[u64]) -> Result<Vec<f64>, ModelError> {
    if let Some(l) = frequencies.iter().position(|&f| f == 0) {
        return Err(ModelError::ZeroFrequency(l));
    }
    let max = *frequencies.iter().max().unwrap_or(&1) as f64;
    Ok(frequencies.iter().map(|&f| max / f as f64).collect())
}

/// As [`compute_label_weights`], but labels without positives get weight 1.
/// Weights only scale positive terms, so the choice has no effect on training.
pub fn label_weights_allowing_absent(frequencies: &[u64]) -> Vec<f64> {
    let max = frequencies.iter().copied().max().unwrap_or(0).max(1) as f64;
    frequencies.iter().map(|&f| if f == 0 { 1.0 } else { max / f as f64 }).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelFamily {
    #[serde(rename = "dct")]
    DecisionTree,
    #[serde(rename = "rf")]
    RandomForest,
    #[serde(rename = "et")]
    ExtraTrees,
    #[serde(rename = "mlp")]
    Mlp,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 4] =
        [ModelFamily::DecisionTree, ModelFamily::RandomForest, ModelFamily::ExtraTrees, ModelFamily::Mlp];

    pub fn tag(self) -> &'static str {
        match self {
            ModelFamily::DecisionTree => "dct",
            ModelFamily::RandomForest => "rf",
            ModelFamily::ExtraTrees => "et",
            ModelFamily::Mlp => "mlp",
        }
    }

    fn code(self) -> u8 {
        match self {
            ModelFamily::DecisionTree => 0,
            ModelFamily::RandomForest => 1,
            ModelFamily::ExtraTrees => 2,
            ModelFamily::Mlp => 3,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.code() == c)
    }

    pub fn display_name(self) -> &'static str {
        match self {
            ModelFamily::DecisionTree => "DecisionTreeClassifier",
            ModelFamily::RandomForest => "RandomForestClassifier",
            ModelFamily::ExtraTrees => "ExtraTreesClassifier",
            ModelFamily::Mlp => "MLPClassifier",
        }
    }
}

impl FromStr for ModelFamily {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|f| f.tag() == s.to_ascii_lowercase())
            .ok_or_else(|| ModelError::UnknownFamily(s.into()))
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub seed: u64,
    pub threshold: f64,
    pub tree: TreeConfig,
    pub forest: ForestConfig,
    pub mlp: MlpConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            threshold: 0.5,
            tree: TreeConfig::default(),
            forest: ForestConfig::default(),
            mlp: MlpConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(ModelError::InvalidConfig(format!("threshold {} outside (0, 1)", self.threshold)));
        }
        if self.forest.n_trees == 0 {
            return Err(ModelError::InvalidConfig("n_trees must be at least 1".into()));
        }
        if self.mlp.batch_size == 0
            || self.mlp.hidden.contains(&0)
            || self.mlp.learning_rate.is_nan()
            || self.mlp.learning_rate <= 0.0
        {
            return Err(ModelError::InvalidConfig("mlp sizes and learning rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Classifier {
    Tree(DecisionTree),
    Forest(Forest),
    Mlp(Mlp),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub family: ModelFamily,
    pub config: TrainConfig,
    pub classifier: Classifier,
}

/// Element-wise `p >= threshold`.
pub fn apply_threshold(proba: &[Vec<f64>], threshold: f64) -> Vec<Vec<bool>> {
    proba.iter().map(|r| r.iter().map(|p| *p >= threshold).collect()).collect()
}

/// Trains one model; label weights come from the training labels.
pub fn train(
    family: ModelFamily,
    x: &SparseMatrix,
    y: &[Vec<bool>],
    validation: Option<(&SparseMatrix, &[Vec<bool>])>,
    n_labels: usize,
    cfg: &TrainConfig,
) -> Result<TrainedModel, ModelError> {
    cfg.validate()?;
    let w = label_weights_allowing_absent(&label_frequencies(y, n_labels));
    let classifier = match family {
        ModelFamily::DecisionTree => Classifier::Tree(train_decision_tree(x, y, &w, &cfg.tree)?),
        ModelFamily::RandomForest => {
            Classifier::Forest(train_forest(x, y, &w, ForestVariant::RandomForest, &cfg.tree, &cfg.forest, cfg.seed)?)
        }
        ModelFamily::ExtraTrees => {
            Classifier::Forest(train_forest(x, y, &w, ForestVariant::ExtraTrees, &cfg.tree, &cfg.forest, cfg.seed)?)
        }
        ModelFamily::Mlp => Classifier::Mlp(train_mlp(x, y, validation, &w, &cfg.mlp, cfg.threshold, cfg.seed)?.model),
    };
    Ok(TrainedModel { family, config: cfg.clone(), classifier })
}

impl TrainedModel {
    pub fn n_features(&self) -> usize {
        match &self.classifier {
            Classifier::Tree(t) => t.n_features,
            Classifier::Forest(f) => f.n_features(),
            Classifier::Mlp(m) => m.n_features(),
        }
    }

    pub fn n_labels(&self) -> usize {
        match &self.classifier {
            Classifier::Tree(t) => t.n_labels,
            Classifier::Forest(f) => f.n_labels(),
            Classifier::Mlp(m) => m.n_labels(),
        }
    }

    pub fn predict_proba(&self, x: &SparseMatrix) -> Result<Vec<Vec<f64>>, ModelError> {
        match &self.classifier {
            Classifier::Tree(t) => t.predict_proba(x),
            Classifier::Forest(f) => f.predict_proba(x),
            Classifier::Mlp(m) => m.predict_proba(x),
        }
    }

    pub fn predict(&self, x: &SparseMatrix, threshold: f64) -> Result<Vec<Vec<bool>>, ModelError> {
        Ok(apply_threshold(&self.predict_proba(x)?, threshold))
    }

    /// Layout: magic, version, family code, config as length-prefixed JSON, then
    /// parameters. All numbers little-endian.
    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(VERSION)?;
        w.write_u8(self.family.code())?;
        let config = serde_json::to_vec(&self.config).expect("config serializes");
        w.write_u32::<LittleEndian>(config.len() as u32)?;
        w.write_all(&config)?;
        match &self.classifier {
            Classifier::Tree(t) => write_tree(&mut w, t)?,
            Classifier::Forest(f) => {
                w.write_u8(f.bootstrap as u8)?;
                w.write_u64::<LittleEndian>(f.features_per_split.map_or(0, |k| k as u64))?;
                w.write_u32::<LittleEndian>(f.trees.len() as u32)?;
                for t in &f.trees {
                    write_tree(&mut w, t)?;
                }
            }
            Classifier::Mlp(m) => {
                w.write_u32::<LittleEndian>(m.dims.len() as u32)?;
                for d in &m.dims {
                    w.write_u64::<LittleEndian>(*d as u64)?;
                }
                for (wk, bk) in m.weights.iter().zip(&m.biases) {
                    write_f64s(&mut w, wk)?;
                    write_f64s(&mut w, bk)?;
                }
            }
        }
        w.flush()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory");
        buf
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, ModelError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(ModelError::Corrupt("bad magic".into()));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != VERSION {
            return Err(ModelError::Corrupt(format!("unsupported version {version}")));
        }
        let code = r.read_u8()?;
        let family = ModelFamily::from_code(code).ok_or_else(|| ModelError::Corrupt(format!("family code {code}")))?;
        let len = r.read_u32::<LittleEndian>()? as usize;
        let mut config = vec![0u8; len];
        r.read_exact(&mut config)?;
        let config: TrainConfig = serde_json::from_slice(&config).map_err(|e| ModelError::Corrupt(e.to_string()))?;
        let classifier = match family {
            ModelFamily::DecisionTree => Classifier::Tree(read_tree(&mut r)?),
            ModelFamily::RandomForest | ModelFamily::ExtraTrees => {
                let bootstrap = r.read_u8()? != 0;
                let k = r.read_u64::<LittleEndian>()? as usize;
                let n = r.read_u32::<LittleEndian>()?;
                if n == 0 {
                    return Err(ModelError::Corrupt("forest without trees".into()));
                }
                let trees = (0..n).map(|_| read_tree(&mut r)).collect::<Result<Vec<_>, _>>()?;
                let variant = if family == ModelFamily::RandomForest {
                    ForestVariant::RandomForest
                } else {
                    ForestVariant::ExtraTrees
                };
                Classifier::Forest(Forest { variant, bootstrap, features_per_split: (k > 0).then_some(k), trees })
            }
            ModelFamily::Mlp => {
                let n = r.read_u32::<LittleEndian>()? as usize;
                if !(2..=64).contains(&n) {
                    return Err(ModelError::Corrupt(format!("{n} layers")));
                }
                let dims =
                    (0..n).map(|_| r.read_u64::<LittleEndian>().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
                let mut weights = Vec::new();
                let mut biases = Vec::new();
                for k in 0..n - 1 {
                    weights.push(read_f64s(&mut r, dims[k] * dims[k + 1])?);
                    biases.push(read_f64s(&mut r, dims[k + 1])?);
                }
                Classifier::Mlp(Mlp { dims, weights, biases })
            }
        };
        Ok(Self { family, config, classifier })
    }

    pub fn save(&self, path: &std::path::Path) -> io::Result<()> {
        self.write_to(io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ModelError> {
        Self::read_from(io::BufReader::new(std::fs::File::open(path)?))
    }
}

fn write_f64s<W: Write>(w: &mut W, values: &[f64]) -> io::Result<()> {
    w.write_u64::<LittleEndian>(values.len() as u64)?;
    for v in values {
        w.write_f64::<LittleEndian>(*v)?;
    }
    Ok(())
}

fn read_f64s<R: Read>(r: &mut R, expected: usize) -> Result<Vec<f64>, ModelError> {
    let n = r.read_u64::<LittleEndian>()? as usize;
    if n != expected {
        return Err(ModelError::Corrupt(format!("tensor of {n} values, expected {expected}")));
    }
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let v = r.read_f64::<LittleEndian>()?;
        if !v.is_finite() {
            return Err(ModelError::Corrupt("non-finite parameter".into()));
        }
        out.push(v);
    }
    Ok(out)
}

fn write_tree<W: Write>(w: &mut W, t: &DecisionTree) -> io::Result<()> {
    w.write_u64::<LittleEndian>(t.n_features as u64)?;
    w.write_u32::<LittleEndian>(t.n_labels as u32)?;
    w.write_u32::<LittleEndian>(t.nodes.len() as u32)?;
    for node in &t.nodes {
        match node {
            Node::Split { feature, threshold, impurity, left, right } => {
                w.write_u8(0)?;
                w.write_u32::<LittleEndian>(*feature)?;
                w.write_f64::<LittleEndian>(*threshold)?;
                w.write_f64::<LittleEndian>(*impurity)?;
                w.write_u32::<LittleEndian>(*left)?;
                w.write_u32::<LittleEndian>(*right)?;
            }
            Node::Leaf { n, fractions } => {
                w.write_u8(1)?;
                w.write_f64::<LittleEndian>(*n)?;
                for f in fractions {
                    w.write_f64::<LittleEndian>(*f)?;
                }
            }
        }
    }
    Ok(())
}

fn read_tree<R: Read>(r: &mut R) -> Result<DecisionTree, ModelError> {
    let n_features = r.read_u64::<LittleEndian>()? as usize;
    let n_labels = r.read_u32::<LittleEndian>()? as usize;
    let n_nodes = r.read_u32::<LittleEndian>()? as usize;
    let mut nodes = Vec::with_capacity(n_nodes.min(1 << 20));
    for _ in 0..n_nodes {
        let node = match r.read_u8()? {
            0 => {
                let feature = r.read_u32::<LittleEndian>()?;
                let threshold = r.read_f64::<LittleEndian>()?;
                let impurity = r.read_f64::<LittleEndian>()?;
                let left = r.read_u32::<LittleEndian>()?;
                let right = r.read_u32::<LittleEndian>()?;
                if feature as usize >= n_features || left as usize >= n_nodes || right as usize >= n_nodes {
                    return Err(ModelError::Corrupt("split node out of range".into()));
                }
                Node::Split { feature, threshold, impurity, left, right }
            }
            1 => {
                let n = r.read_f64::<LittleEndian>()?;
                let fractions = (0..n_labels).map(|_| r.read_f64::<LittleEndian>()).collect::<Result<Vec<_>, _>>()?;
                if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
                    return Err(ModelError::Corrupt("leaf fraction outside [0, 1]".into()));
                }
                Node::Leaf { n, fractions }
            }
            t => return Err(ModelError::Corrupt(format!("node tag {t}"))),
        };
        nodes.push(node);
    }
    if nodes.is_empty() {
        return Err(ModelError::Corrupt("tree without nodes".into()));
    }
    Ok(DecisionTree { n_features, n_labels, nodes })
}
