//! Pipeline stages. Each reads its inputs from the paths in [`PipelineConfig`],
//! writes its outputs atomically and records them in the workspace manifest.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use rdclass::clean::{is_mostly_english, word_count, CleanStats, Cleaner, LabeledPayload, MIN_PAYLOAD_WORDS};
use rdclass::evaluate::{build_report, confusion, macro_scores, EvaluationReport, ModelScores, ZeroDivision};
use rdclass::ingest::{
    harvest as harvest_records, ingest_document, HarvestConfig, HarvestStats, HttpTransport, RawRecord,
};
use rdclass::models::grid::{sequential_grid_search, Grid, TraceRow};
use rdclass::models::{train as train_model, ModelError, ModelFamily, TrainConfig, TrainedModel};
use rdclass::recordio::{read_all, read_ndjson, NdjsonWriter};
use rdclass::sample::{
    assign_best_labels_for, dataset_stats, stratified_split, validation_split, DatasetStats, SplitConfig,
};
use rdclass::scheme_map::MappingTable;
use rdclass::sparse::SparseMatrix;
use rdclass::vectorize::{select_features, FeatureSelection, SizeClass, StopWords, VectorizerModel};
use rdclass::{Discipline, LabelSet, NUM_DISCIPLINES};
use serde::{Deserialize, Serialize};

use crate::artifacts::{atomic_write, atomic_write_with, manifest_key, require, Manifest, WorkspaceLock};
use crate::config::PipelineConfig;
use crate::CliError;

/// Split partitions written by [`split`].
pub const PARTS: [&str; 4] = ["train", "holdout", "fit", "validation"];

/// A locked workspace with its manifest.
pub struct Workspace<'a> {
    pub cfg: &'a PipelineConfig,
    manifest: Manifest,
    _lock: WorkspaceLock,
}

impl<'a> Workspace<'a> {
    pub fn open(cfg: &'a PipelineConfig) -> Result<Self, CliError> {
        cfg.validate()?;
        let lock = WorkspaceLock::acquire(&cfg.lock_path())?;
        let manifest = Manifest::load_or_default(&cfg.manifest_path())?;
        Ok(Self { cfg, manifest, _lock: lock })
    }

    fn record(&mut self, path: &Path, stage: &str, seed: u64) -> Result<(), CliError> {
        let key = manifest_key(&self.cfg.paths.workspace, path);
        self.manifest.record(key, path, stage, seed)?;
        self.manifest.config = serde_json::to_value(self.cfg).expect("config serializes");
        self.manifest.save(&self.cfg.manifest_path())?;
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, path: &Path, value: &T, stage: &str, seed: u64) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value).expect("value serializes");
        bytes.push(b'\n');
        self.write_bytes(path, &bytes, stage, seed)
    }

    fn write_bytes(&mut self, path: &Path, bytes: &[u8], stage: &str, seed: u64) -> Result<(), CliError> {
        atomic_write(path, bytes)?;
        self.record(path, stage, seed)
    }

    fn write_ndjson<'r, T, I>(&mut self, path: &Path, items: I, stage: &str, seed: u64) -> Result<(), CliError>
    where
        T: Serialize + 'r,
        I: IntoIterator<Item = &'r T>,
    {
        atomic_write_with(path, |w| {
            let mut out = NdjsonWriter::new(w);
            for item in items {
                out.write(item)?;
            }
            out.into_inner().map(|_| ())
        })?;
        self.record(path, stage, seed)
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }
}

fn mapping_table(cfg: &PipelineConfig) -> Result<MappingTable, CliError> {
    match &cfg.paths.mapping {
        Some(p) => {
            require(p)?;
            Ok(MappingTable::load(p)?)
        }
        None => Ok(MappingTable::builtin()),
    }
}

fn stop_words(cfg: &PipelineConfig) -> Result<StopWords, CliError> {
    match &cfg.paths.stop_words {
        Some(p) => {
            require(p)?;
            Ok(StopWords::parse(&fs::read_to_string(p)?))
        }
        None => Ok(StopWords::builtin()),
    }
}

fn read_payloads(path: &Path) -> Result<Vec<LabeledPayload>, CliError> {
    require(path)?;
    Ok(read_all(path)?)
}

fn indicators(payloads: &[LabeledPayload]) -> Vec<Vec<bool>> {
    payloads.iter().map(|p| p.labels.indicator().to_vec()).collect()
}

fn load_matrix(path: &Path) -> Result<SparseMatrix, CliError> {
    require(path)?;
    SparseMatrix::load(path).map_err(|e| CliError::Corrupt(format!("{}: {e}", path.display())))
}

/// Harvests from the configured endpoint into the raw record file. Records
/// are appended to a `.partial` file that becomes the raw file on completion;
/// an interrupted harvest resumes from the cursor file.
pub fn harvest(ws: &mut Workspace) -> Result<HarvestStats, CliError> {
    let cfg = ws.cfg;
    let endpoint =
        cfg.harvest.endpoint.clone().ok_or_else(|| CliError::Config("harvest.endpoint is not set".into()))?;
    let mut hc = HarvestConfig::new(endpoint);
    hc.metadata_prefix = cfg.harvest.metadata_prefix.clone();
    hc.from = cfg.harvest.from.clone();
    hc.until = cfg.harvest.until.clone();
    hc.max_attempts = cfg.harvest.max_attempts;
    hc.cursor_file = Some(cfg.cursor_path());
    let partial = cfg.paths.raw.with_extension("ndjson.partial");
    if let Some(dir) = partial.parent() {
        fs::create_dir_all(dir)?;
    }
    if !cfg.cursor_path().exists() && partial.exists() {
        fs::remove_file(&partial)?;
    }
    let mut out = NdjsonWriter::append(&partial)?;
    let mut transport = HttpTransport::new(std::time::Duration::from_secs(60));
    let stats = harvest_records(&mut transport, &hc, |r| out.write(&r))?;
    out.into_inner()?;
    fs::rename(&partial, &cfg.paths.raw)?;
    ws.record(&cfg.paths.raw, "harvest", cfg.seed)?;
    Ok(stats)
}

/// Parses saved ListRecords responses into the raw record file.
pub fn ingest_files(ws: &mut Workspace, files: &[PathBuf]) -> Result<HarvestStats, CliError> {
    let mut total = HarvestStats::default();
    let mut seen = HashSet::new();
    let mut records: Vec<RawRecord> = Vec::new();
    for f in files {
        require(f)?;
        let xml = fs::read_to_string(f)?;
        let stats = ingest_document(&xml, |r| {
            if seen.insert(r.identifier.clone()) {
                records.push(r);
            }
            Ok(())
        })?;
        total.requests_made += 1;
        total.records_seen += stats.records_seen;
        total.records_qualified += stats.records_qualified;
    }
    let path = ws.cfg.paths.raw.clone();
    ws.write_ndjson(&path, &records, "ingest", ws.cfg.seed)?;
    Ok(total)
}

pub fn clean(ws: &mut Workspace) -> Result<CleanStats, CliError> {
    let cfg = ws.cfg;
    require(&cfg.paths.raw)?;
    let table = mapping_table(cfg)?;
    let mut cleaner = Cleaner::new(&table, cfg.clean_config());
    let mut kept = Vec::new();
    for r in read_ndjson::<RawRecord>(&cfg.paths.raw)? {
        if let Some(p) = cleaner.push(&r?) {
            kept.push(p);
        }
    }
    let stats = cleaner.stats();
    ws.write_ndjson(&cfg.paths.cleaned, &kept, "clean", cfg.seed)?;
    ws.write_json(&cfg.paths.reports.join("clean_stats.json"), &stats, "clean", cfg.seed)?;
    Ok(stats)
}

pub fn stats(ws: &mut Workspace) -> Result<DatasetStats, CliError> {
    let cfg = ws.cfg;
    let payloads = read_payloads(&cfg.paths.cleaned)?;
    let st = dataset_stats(&payloads);
    ws.write_bytes(&cfg.paths.reports.join("dataset_stats.csv"), st.to_csv().as_bytes(), "stats", cfg.seed)?;
    ws.write_json(&cfg.paths.reports.join("dataset_stats.json"), &st, "stats", cfg.seed)?;
    Ok(st)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub holdout: usize,
    pub fit: usize,
    pub validation: usize,
}

/// Writes train/holdout and, inside train, fit/validation partitions.
pub fn split(ws: &mut Workspace) -> Result<SplitSizes, CliError> {
    let cfg = ws.cfg;
    let payloads = read_payloads(&cfg.paths.cleaned)?;
    let best = assign_best_labels_for(&payloads)?;
    let sc = SplitConfig { ratio: cfg.holdout_ratio, seed: cfg.split_seed(), second_split: true };
    let outer = stratified_split(&best, &sc);
    let train_best: Vec<Discipline> = outer.train.iter().map(|&i| best[i]).collect();
    let inner = validation_split(&train_best, &sc);
    let pick = |idx: &mut dyn Iterator<Item = usize>| idx.map(|i| &payloads[i]).collect::<Vec<_>>();
    let parts = [
        pick(&mut outer.train.iter().copied()),
        pick(&mut outer.holdout.iter().copied()),
        pick(&mut inner.train.iter().map(|&i| outer.train[i])),
        pick(&mut inner.holdout.iter().map(|&i| outer.train[i])),
    ];
    for (name, part) in PARTS.iter().zip(&parts) {
        ws.write_ndjson(&cfg.split_path(name), part.iter().copied(), "split", cfg.split_seed())?;
    }
    Ok(SplitSizes { train: parts[0].len(), holdout: parts[1].len(), fit: parts[2].len(), validation: parts[3].len() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorizeSummary {
    pub size_class: SizeClass,
    pub vocabulary: usize,
    pub selected: usize,
}

/// Fits tf-idf on the training partition, selects features for `size` and
/// writes the selected matrices of every partition.
pub fn vectorize(ws: &mut Workspace, size: SizeClass) -> Result<VectorizeSummary, CliError> {
    let cfg = ws.cfg;
    let train = read_payloads(&cfg.split_path("train"))?;
    let model = VectorizerModel::fit(train.iter().map(|p| p.payload.as_str()), stop_words(cfg)?)?;
    let mut bytes = Vec::new();
    model.write_to(&mut bytes)?;
    ws.write_bytes(&cfg.vectorizer_path(), &bytes, "vectorize", cfg.seed)?;

    let x_train = model.transform(train.iter().map(|p| p.payload.as_str()));
    let best = assign_best_labels_for(&train)?;
    let selection = select_features(&x_train, &best, size)?;
    ws.write_json(&cfg.selection_path(size), &selection, "vectorize", cfg.seed)?;
    for part in PARTS {
        let m = if part == "train" {
            selection.apply(&x_train)
        } else {
            let payloads = read_payloads(&cfg.split_path(part))?;
            selection.apply(&model.transform(payloads.iter().map(|p| p.payload.as_str())))
        };
        let mut bytes = Vec::new();
        m.write_to(&mut bytes)?;
        ws.write_bytes(&cfg.matrix_path(part, size), &bytes, "vectorize", cfg.seed)?;
    }
    Ok(VectorizeSummary { size_class: size, vocabulary: model.len(), selected: selection.len() })
}

/// Grid-search plan file: grids searched in order, scored on validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridPlan {
    /// Beta of the macro f-score used to rank candidates.
    #[serde(default = "one")]
    pub beta: f64,
    pub grid: Vec<Grid>,
}

fn one() -> f64 {
    1.0
}

impl GridPlan {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        require(path)?;
        let text = fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub family: ModelFamily,
    pub size_class: SizeClass,
    pub seed: u64,
    pub validation_macro_f1: Option<f64>,
    pub grid_candidates: usize,
    pub model: PathBuf,
}

fn validation_macro(model: &TrainedModel, x: &SparseMatrix, y: &[Vec<bool>], beta: f64) -> Result<f64, ModelError> {
    let pred = model.predict(x, model.config.threshold)?;
    let counts = confusion(y, &pred).map_err(|e| ModelError::ShapeMismatch(e.to_string()))?;
    Ok(macro_scores(&counts, beta).1)
}

/// Trains one family on the fit partition, optionally after a sequential
/// grid search scored on the validation partition.
pub fn train(
    ws: &mut Workspace,
    family: ModelFamily,
    size: SizeClass,
    seed: Option<u64>,
    plan: Option<&GridPlan>,
) -> Result<TrainSummary, CliError> {
    let cfg = ws.cfg;
    let x_fit = load_matrix(&cfg.matrix_path("fit", size))?;
    let x_val = load_matrix(&cfg.matrix_path("validation", size))?;
    let y_fit = indicators(&read_payloads(&cfg.split_path("fit"))?);
    let y_val = indicators(&read_payloads(&cfg.split_path("validation"))?);
    let seed = seed.unwrap_or_else(|| cfg.train_seed());
    let base = TrainConfig { seed, ..cfg.model.clone() };
    let validation = Some((&x_val, y_val.as_slice()));
    let fit = |c: &TrainConfig| train_model(family, &x_fit, &y_fit, validation, NUM_DISCIPLINES, c);

    let (best_cfg, trace) = match plan {
        Some(plan) => {
            sequential_grid_search(&base, &plan.grid, |c| validation_macro(&fit(c)?, &x_val, &y_val, plan.beta))?
        }
        None => (base, Vec::<TraceRow>::new()),
    };
    if plan.is_some() {
        ws.write_json(&cfg.grid_trace_path(family, size), &trace, "train", seed)?;
    }
    let model = fit(&best_cfg)?;
    let score = if x_val.rows() > 0 { Some(validation_macro(&model, &x_val, &y_val, 1.0)?) } else { None };
    let path = cfg.model_path(family, size);
    ws.write_bytes(&path, &model.to_bytes(), "train", seed)?;
    Ok(TrainSummary {
        family,
        size_class: size,
        seed,
        validation_macro_f1: score,
        grid_candidates: trace.len(),
        model: path,
    })
}

/// One model to evaluate against a feature matrix and its truth file.
#[derive(Debug, Clone)]
pub struct EvalInput {
    pub model: PathBuf,
    pub matrix: PathBuf,
    pub truth: PathBuf,
    pub size_class: String,
}

/// Holdout inputs for every configured family with a trained model of `size`.
pub fn default_eval_inputs(cfg: &PipelineConfig, size: SizeClass) -> Vec<EvalInput> {
    cfg.families
        .iter()
        .map(|f| cfg.model_path(*f, size))
        .filter(|p| p.is_file())
        .map(|model| EvalInput {
            model,
            matrix: cfg.matrix_path("holdout", size),
            truth: cfg.split_path("holdout"),
            size_class: size.to_string(),
        })
        .collect()
}

pub fn evaluate(
    ws: &mut Workspace,
    inputs: &[EvalInput],
    out_dir: Option<&Path>,
    zd: ZeroDivision,
) -> Result<EvaluationReport, CliError> {
    let cfg = ws.cfg;
    if inputs.is_empty() {
        return Err(CliError::MissingArtifact(cfg.paths.models.clone()));
    }
    let mut scores = Vec::new();
    for input in inputs {
        require(&input.model)?;
        let model = TrainedModel::load(&input.model)?;
        let x = load_matrix(&input.matrix)?;
        let truth: Vec<LabelSet> = read_payloads(&input.truth)?.into_iter().map(|p| p.labels).collect();
        let pred: Vec<LabelSet> = model
            .predict(&x, model.config.threshold)?
            .iter()
            .map(|row| row.iter().enumerate().filter(|(_, on)| **on).map(|(i, _)| Discipline::ALL[i]).collect())
            .collect();
        scores.push(ModelScores::compute(
            model.family.display_name(),
            &input.size_class,
            model.config.seed,
            &truth,
            &pred,
            zd,
        )?);
    }
    let stats =
        if cfg.paths.cleaned.is_file() { Some(dataset_stats(&read_payloads(&cfg.paths.cleaned)?)) } else { None };
    let report = build_report(scores, stats.as_ref());
    let dir = out_dir.map(Path::to_path_buf).unwrap_or_else(|| cfg.paths.reports.clone());
    let files = [
        ("aggregate.csv", report.aggregate_csv()),
        ("aggregate.md", report.aggregate_markdown()),
        ("per_label.csv", report.per_label_csv()),
        ("per_label.md", report.per_label_markdown()),
        ("annex.csv", report.annex_csv()),
    ];
    for (name, text) in files {
        ws.write_bytes(&dir.join(name), text.as_bytes(), "evaluate", cfg.seed)?;
    }
    ws.write_json(&dir.join("report.json"), &report, "evaluate", cfg.seed)?;
    Ok(report)
}

/// Runs every stage after harvesting. Raw records come from `xml` files when
/// given, otherwise from an existing raw file, otherwise from a harvest.
pub fn run_all(ws: &mut Workspace, xml: &[PathBuf], plan: Option<&GridPlan>) -> Result<EvaluationReport, CliError> {
    let cfg = ws.cfg;
    if !xml.is_empty() {
        ingest_files(ws, xml)?;
    } else if !cfg.paths.raw.is_file() {
        if cfg.harvest.endpoint.is_none() {
            return Err(CliError::MissingArtifact(cfg.paths.raw.clone()));
        }
        harvest(ws)?;
    }
    let cs = clean(ws)?;
    eprintln!("clean: {} in, {} out", cs.input, cs.output);
    stats(ws)?;
    let sizes = split(ws)?;
    eprintln!("split: {} train, {} holdout", sizes.train, sizes.holdout);
    let v = vectorize(ws, cfg.size_class)?;
    eprintln!("vectorize: {} terms, {} selected", v.vocabulary, v.selected);
    for family in &cfg.families {
        let t = train(ws, *family, cfg.size_class, None, plan)?;
        eprintln!("train {family}: validation macro f1 {:?}", t.validation_macro_f1);
    }
    let inputs = default_eval_inputs(cfg, cfg.size_class);
    evaluate(ws, &inputs, None, ZeroDivision::Zero)
}

/// Vectorizer, feature selection and model loaded together for inference.
pub struct Artifact {
    pub vectorizer: VectorizerModel,
    pub selection: FeatureSelection,
    pub model: TrainedModel,
}

impl Artifact {
    /// Loads the artifact for `family`/`size`, refusing files whose hash no
    /// longer matches the manifest.
    pub fn load(cfg: &PipelineConfig, family: ModelFamily, size: SizeClass) -> Result<Self, CliError> {
        let paths = [cfg.vectorizer_path(), cfg.selection_path(size), cfg.model_path(family, size)];
        for p in &paths {
            require(p)?;
        }
        let manifest = Manifest::load_or_default(&cfg.manifest_path())?;
        for p in &paths {
            let key = manifest_key(&cfg.paths.workspace, p);
            if let Some(entry) = manifest.artifacts.get(&key) {
                if crate::artifacts::sha256_file(p)? != entry.sha256 {
                    return Err(CliError::HashMismatch(key));
                }
            }
        }
        let vectorizer = VectorizerModel::load(&paths[0])?;
        let selection: FeatureSelection = serde_json::from_slice(&fs::read(&paths[1])?)
            .map_err(|e| CliError::Corrupt(format!("{}: {e}", paths[1].display())))?;
        let model = TrainedModel::load(&paths[2])?;
        if model.n_features() != selection.len() {
            return Err(CliError::Corrupt(format!(
                "model expects {} features, selection has {}",
                model.n_features(),
                selection.len()
            )));
        }
        Ok(Self { vectorizer, selection, model })
    }

    pub fn classify(&self, text: &str) -> Result<Prediction, CliError> {
        let row = self.selection.apply_row(&self.vectorizer.transform_one(text));
        let x = SparseMatrix::from_rows(self.selection.len(), [row]).map_err(|e| CliError::Corrupt(e.to_string()))?;
        let probabilities = self.model.predict_proba(&x)?.remove(0);
        let labels = probabilities
            .iter()
            .enumerate()
            .filter(|(_, p)| **p >= self.model.config.threshold)
            .map(|(i, _)| Discipline::ALL[i].code())
            .collect();
        let mut warnings = Vec::new();
        if word_count(text) < MIN_PAYLOAD_WORDS {
            warnings.push("below cleaning floor".to_string());
        }
        if !is_mostly_english(text) {
            warnings.push("not detected as English".to_string());
        }
        Ok(Prediction { probabilities, labels, warnings })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// One probability per discipline, in code order.
    pub probabilities: Vec<f64>,
    /// Codes whose probability reaches the model threshold.
    pub labels: Vec<u8>,
    pub warnings: Vec<String>,
}

impl Prediction {
    /// Tab-separated `code name probability` lines.
    pub fn table(&self) -> String {
        let mut out = String::new();
        for (d, p) in Discipline::ALL.iter().zip(&self.probabilities) {
            let mark = if self.labels.contains(&d.code()) { "*" } else { "" };
            out.push_str(&format!("{}\t{}\t{p:.4}{mark}\n", d.code(), d.name()));
        }
        out
    }
}
