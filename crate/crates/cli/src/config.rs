//! Pipeline configuration file.

use std::path::{Path, PathBuf};

use rdclass::clean::{CleanConfig, DedupKey, DEFAULT_ENGLISH_THRESHOLD};
use rdclass::models::{ModelFamily, TrainConfig};
use rdclass::vectorize::SizeClass;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Offsets added to the master seed for each stage.
pub const SPLIT_SEED_OFFSET: u64 = 1;
pub const TRAIN_SEED_OFFSET: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Holds the manifest, the lock file and anything not given its own path.
    pub workspace: PathBuf,
    pub raw: PathBuf,
    pub cleaned: PathBuf,
    pub splits: PathBuf,
    pub models: PathBuf,
    pub reports: PathBuf,
    /// Replacement subject mapping table.
    pub mapping: Option<PathBuf>,
    /// Replacement stop-word list.
    pub stop_words: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            workspace: "work".into(),
            raw: "work/raw.ndjson".into(),
            cleaned: "work/cleaned.ndjson".into(),
            splits: "work/splits".into(),
            models: "work/models".into(),
            reports: "work/reports".into(),
            mapping: None,
            stop_words: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarvestSection {
    pub endpoint: Option<String>,
    pub metadata_prefix: String,
    pub from: Option<String>,
    pub until: Option<String>,
    pub max_attempts: u32,
}

impl Default for HarvestSection {
    fn default() -> Self {
        Self { endpoint: None, metadata_prefix: "oai_datacite".into(), from: None, until: None, max_attempts: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub size_class: SizeClass,
    pub english_threshold: f64,
    pub dedup_key: DedupKey,
    pub holdout_ratio: f64,
    pub families: Vec<ModelFamily>,
    pub port: u16,
    pub paths: Paths,
    pub harvest: HarvestSection,
    /// Defaults for every model family; the seed is replaced by the stage seed.
    pub model: TrainConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            size_class: SizeClass::S,
            english_threshold: DEFAULT_ENGLISH_THRESHOLD,
            dedup_key: DedupKey::default(),
            holdout_ratio: 0.1,
            families: ModelFamily::ALL.to_vec(),
            port: 8080,
            paths: Paths::default(),
            harvest: HarvestSection::default(),
            model: TrainConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file. Relative paths inside it resolve against the
    /// directory holding the file.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        if let Some(dir) = path.parent() {
            cfg.rebase(dir);
        }
        Ok(cfg)
    }

    /// Prefixes every relative path with `dir`.
    pub fn rebase(&mut self, dir: &Path) {
        let p = &mut self.paths;
        for slot in [&mut p.workspace, &mut p.raw, &mut p.cleaned, &mut p.splits, &mut p.models, &mut p.reports] {
            if slot.is_relative() {
                *slot = dir.join(&*slot);
            }
        }
        for slot in [&mut p.mapping, &mut p.stop_words].into_iter().flatten() {
            if slot.is_relative() {
                *slot = dir.join(&*slot);
            }
        }
    }

    /// Defaults with every path placed under `dir`.
    pub fn in_workspace(dir: &Path) -> Self {
        Self {
            paths: Paths {
                workspace: dir.to_path_buf(),
                raw: dir.join("raw.ndjson"),
                cleaned: dir.join("cleaned.ndjson"),
                splits: dir.join("splits"),
                models: dir.join("models"),
                reports: dir.join("reports"),
                mapping: None,
                stop_words: None,
            },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.holdout_ratio > 0.0 && self.holdout_ratio < 1.0) {
            return Err(CliError::Config(format!("holdout_ratio must lie in (0, 1), got {}", self.holdout_ratio)));
        }
        if !(0.0..=1.0).contains(&self.english_threshold) {
            return Err(CliError::Config(format!(
                "english_threshold must lie in [0, 1], got {}",
                self.english_threshold
            )));
        }
        self.model.validate().map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn clean_config(&self) -> CleanConfig {
        CleanConfig { dedup_key: self.dedup_key, english_threshold: self.english_threshold }
    }

    pub fn split_seed(&self) -> u64 {
        self.seed.wrapping_add(SPLIT_SEED_OFFSET)
    }

    pub fn train_seed(&self) -> u64 {
        self.seed.wrapping_add(TRAIN_SEED_OFFSET)
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.paths.workspace.join("manifest.json")
    }

    pub fn lock_path(&self) -> PathBuf {
        self.paths.workspace.join(".lock")
    }

    pub fn cursor_path(&self) -> PathBuf {
        self.paths.workspace.join("harvest.cursor")
    }

    pub fn split_path(&self, part: &str) -> PathBuf {
        self.paths.splits.join(format!("{part}.ndjson"))
    }

    pub fn vectorizer_path(&self) -> PathBuf {
        self.paths.models.join("vectorizer.rdvz")
    }

    pub fn selection_path(&self, size: SizeClass) -> PathBuf {
        self.paths.models.join(format!("selection-{size}.json"))
    }

    pub fn matrix_path(&self, part: &str, size: SizeClass) -> PathBuf {
        self.paths.models.join(format!("{part}-{size}.csr"))
    }

    pub fn model_path(&self, family: ModelFamily, size: SizeClass) -> PathBuf {
        self.paths.models.join(format!("{family}-{size}.rdcm"))
    }

    pub fn grid_trace_path(&self, family: ModelFamily, size: SizeClass) -> PathBuf {
        self.paths.reports.join(format!("grid-{family}-{size}.json"))
    }
}
